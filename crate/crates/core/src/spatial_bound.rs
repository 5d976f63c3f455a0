//! Rigorous bounds on the error of truncating the bath chain to `L` sites.
//!
//! ```text
//! Δ²(t,L) ≤ 4‖O‖² (‖h‖/c) C (ct)^{n+1}/(n+1)! (e^{ct}+1) (‖γ0‖^{1/2} + ‖h‖ (e^{c′t}-1)/c′) e^{c′t}
//! C = ‖P_L‖ |X_{L-1,L}| / c² + |P_{L-1,L}| / c
//! ```
//!
//! with `n = L`, or `n = 2L` when `P ∝ 𝟙`. The limit `c′ → 0` is allowed
//! when `X = P` or `X, P > 0`.

use std::f64::consts::E;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadratic_dynamics::{bound_constants, BoundCase, BoundConstants};
use crate::spectral_chain::{chain_for, fmt17, mapping_constants, ChainMapping, MappingKind, SpectralDensity};

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialBoundInput {
    /// Chain with at least `l` sites; only its first `l` sites and the
    /// coupling to site `l` enter.
    pub chain: ChainMapping,
    pub constants: BoundConstants,
    pub gamma0_norm_sqrt: f64,
    /// `‖ĥ‖ = |h_coeff| ‖Â_S‖`.
    pub h_norm: f64,
    pub o_norm: f64,
    pub t: f64,
    pub l: usize,
}

impl SpatialBoundInput {
    /// Vacuum-state input for a chain, `‖Â_S‖ = a_s_norm`.
    pub fn vacuum(chain: ChainMapping, l: usize, o_norm: f64, a_s_norm: f64, t: f64) -> Self {
        let constants = bound_constants(&chain);
        let h_norm = chain.h_coeff.abs() * a_s_norm;
        Self { chain, constants, gamma0_norm_sqrt: 1.0, h_norm, o_norm, t, l }
    }

    fn validate(&self) -> Result<()> {
        let scalars = [
            ("gamma0_norm_sqrt", self.gamma0_norm_sqrt),
            ("h_norm", self.h_norm),
            ("o_norm", self.o_norm),
            ("t", self.t),
            ("c_prime", self.constants.c_prime),
        ];
        for (name, v) in scalars {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.constants.c > 0.0) || !self.constants.c.is_finite() {
            return Err(Error::InvalidInput(format!("c must be finite and > 0, got {}", self.constants.c)));
        }
        if self.l == 0 || self.l > self.chain.len() {
            return Err(Error::InvalidInput(format!("L={} outside 1..={}", self.l, self.chain.len())));
        }
        Ok(())
    }

    /// `C = ‖P_L‖ |X_{L-1,L}| / c² + |P_{L-1,L}| / c`.
    pub fn boundary_constant(&self) -> Result<f64> {
        let c = self.constants.c;
        let sub = self.chain.truncated(self.l)?;
        Ok(sub.p_norm() * sub.x_boundary().abs() / (c * c) + sub.p_boundary().abs() / c)
    }

    fn effective_length(&self) -> usize {
        if self.constants.p_is_identity {
            2 * self.l
        } else {
            self.l
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialBoundReport {
    pub t: f64,
    pub l: usize,
    pub c: f64,
    pub c_prime: f64,
    pub case: BoundCase,
    pub delta_squared_bound: f64,
    pub delta_bound: f64,
    pub lightcone_tau: f64,
    pub in_lightcone: bool,
    /// `e^{ct - L|ln(L/τ)|}`, only outside the light cone.
    pub decay_estimate: Option<f64>,
}

impl SpatialBoundReport {
    pub const CSV_HEADER: &'static str = "t,L,c,c_prime,case,delta_bound,tau,in_lightcone";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            fmt17(self.t),
            self.l,
            fmt17(self.c),
            fmt17(self.c_prime),
            self.case.as_str(),
            fmt17(self.delta_bound),
            fmt17(self.lightcone_tau),
            self.in_lightcone
        )
    }
}

pub fn reports_to_csv(reports: &[SpatialBoundReport]) -> String {
    let mut out = String::from(SpatialBoundReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// `ln n!`.
fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Exponentiate a log-space sum of `terms` pieces, nudged upward to cover
/// the rounding of the sum.
fn exp_upward(log_value: f64, terms: usize) -> f64 {
    let slack = 4.0 * f64::EPSILON * (terms as f64 + log_value.abs());
    (log_value + slack).exp() * (1.0 + 2.0 * f64::EPSILON)
}

struct Shape {
    o_norm: f64,
    h_norm: f64,
    c: f64,
    big_c: f64,
    n_eff: usize,
    t: f64,
    gamma0_norm_sqrt: f64,
    /// `‖h‖` in the last factor; the wrappers use `μ‖Â_S‖` here too.
    h_tail: f64,
    c_prime: f64,
}

fn evaluate(s: &Shape) -> f64 {
    if s.o_norm == 0.0 || s.h_norm == 0.0 || s.big_c == 0.0 || s.t == 0.0 {
        return 0.0;
    }
    let ct = s.c * s.t;
    let k = s.n_eff + 1;
    let growth = if s.c_prime == 0.0 { s.t } else { (s.c_prime * s.t).exp_m1() / s.c_prime };
    let last = s.gamma0_norm_sqrt + s.h_tail * growth;
    if last == 0.0 {
        return 0.0;
    }
    let log = 4f64.ln() + 2.0 * s.o_norm.ln() + s.h_norm.ln() - s.c.ln()
        + s.big_c.ln()
        + k as f64 * ct.ln()
        - ln_factorial(k)
        + ct
        + (-ct).exp().ln_1p()
        + last.ln()
        + s.c_prime * s.t;
    exp_upward(log, k + 12)
}

fn report(t: f64, l: usize, c: f64, c_prime: f64, case: BoundCase, d2: f64) -> SpatialBoundReport {
    let tau = E * c * t;
    let in_lightcone = tau >= l as f64;
    let decay_estimate = (!in_lightcone).then(|| {
        let lf = l as f64;
        let log_ratio = if tau > 0.0 { (lf / tau).ln().abs() } else { f64::INFINITY };
        (c * t - lf * log_ratio).exp()
    });
    SpatialBoundReport {
        t,
        l,
        c,
        c_prime,
        case,
        delta_squared_bound: d2,
        delta_bound: d2.sqrt(),
        lightcone_tau: tau,
        in_lightcone,
        decay_estimate,
    }
}

fn bound_with(input: &SpatialBoundInput, c_prime: f64) -> Result<SpatialBoundReport> {
    input.validate()?;
    let shape = Shape {
        o_norm: input.o_norm,
        h_norm: input.h_norm,
        c: input.constants.c,
        big_c: input.boundary_constant()?,
        n_eff: input.effective_length(),
        t: input.t,
        gamma0_norm_sqrt: input.gamma0_norm_sqrt,
        h_tail: input.h_norm,
        c_prime,
    };
    let d2 = evaluate(&shape);
    Ok(report(input.t, input.l, input.constants.c, c_prime, input.constants.case, d2))
}

/// Main-text form (`c′ → 0`); valid only when `X = P` or `X, P > 0`.
pub fn theorem1_bound(input: &SpatialBoundInput) -> Result<SpatialBoundReport> {
    if input.constants.case == BoundCase::General {
        return Err(Error::WrongCase(BoundCase::General.as_str()));
    }
    bound_with(input, 0.0)
}

/// Full bound with the `c′` factors, valid in every case.
pub fn general_bound(input: &SpatialBoundInput) -> Result<SpatialBoundReport> {
    bound_with(input, input.constants.c_prime)
}

/// The sharper of the two forms applicable to the input's case.
pub fn certified_bound(input: &SpatialBoundInput) -> Result<SpatialBoundReport> {
    match input.constants.case {
        BoundCase::General => general_bound(input),
        _ => theorem1_bound(input),
    }
}

/// Inputs of the closed-form wrappers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub o_norm: f64,
    pub a_s_norm: f64,
    pub gamma0_norm_sqrt: f64,
    pub t: f64,
    pub l: usize,
}

/// Particle mapping with `c = c′ = ω_max` and `C ≤ 2`:
/// `Δ² ≤ 8μ0‖O‖²(‖Â_S‖/ω)(ωt)^{L+1}/(L+1)!(e^{ωt}+1)(‖γ0‖^{1/2}+μ0‖Â_S‖t)`.
pub fn particle_bound(j: &SpectralDensity, p: &BoundParams) -> SpatialBoundReport {
    let mu0 = mapping_constants(j).mu0;
    let w = j.omega_max();
    let shape = Shape {
        o_norm: p.o_norm,
        h_norm: mu0 * p.a_s_norm,
        c: w,
        big_c: 2.0,
        n_eff: p.l,
        t: p.t,
        gamma0_norm_sqrt: p.gamma0_norm_sqrt,
        h_tail: mu0 * p.a_s_norm,
        c_prime: 0.0,
    };
    report(p.t, p.l, w, w, BoundCase::XequalsP, evaluate(&shape))
}

/// Phonon mapping with `C ≤ 1` and `L → 2L`. Massive densities
/// (`ω_min > 0`) use the `c′ → 0` form; massless ones keep the
/// `e^{ω_max t}` factors.
pub fn phonon_bound(j: &SpectralDensity, p: &BoundParams) -> SpatialBoundReport {
    let mu1 = mapping_constants(j).mu1;
    let w = j.omega_max();
    let massive = j.omega_min() > 0.0;
    let shape = Shape {
        o_norm: p.o_norm,
        h_norm: mu1 * p.a_s_norm,
        c: w,
        big_c: 1.0,
        n_eff: 2 * p.l,
        t: p.t,
        gamma0_norm_sqrt: p.gamma0_norm_sqrt,
        h_tail: mu1 * p.a_s_norm,
        c_prime: if massive { 0.0 } else { w },
    };
    let case = if massive { BoundCase::BothPositive } else { BoundCase::General };
    report(p.t, p.l, w, w, case, evaluate(&shape))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinChainLength {
    pub l_min: usize,
    pub bound_at_l_min: f64,
    /// Bound at `l_min - 1`, absent when `l_min = 1`.
    pub bound_below: Option<f64>,
}

/// Smallest `L` whose certified bound is `≤ epsilon`, scanning upward
/// from `L = 1` over the sites of `template.chain`.
pub fn min_chain_length(template: &SpatialBoundInput, epsilon: f64) -> Result<MinChainLength> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be > 0, got {epsilon}")));
    }
    let mut below = None;
    for l in 1..=template.chain.len() {
        let input = SpatialBoundInput { l, ..template.clone() };
        let d = certified_bound(&input)?.delta_bound;
        if d <= epsilon {
            return Ok(MinChainLength { l_min: l, bound_at_l_min: d, bound_below: below });
        }
        below = Some(d);
    }
    Err(Error::InvalidInput(format!(
        "no L <= {} reaches epsilon = {epsilon:e}; supply a longer chain",
        template.chain.len()
    )))
}

/// [`min_chain_length`] for a vacuum bath, growing the chain until the
/// target is met.
pub fn min_chain_length_for_density(
    j: &SpectralDensity,
    kind: MappingKind,
    o_norm: f64,
    a_s_norm: f64,
    t: f64,
    epsilon: f64,
) -> Result<MinChainLength> {
    let mut cap = 64usize;
    loop {
        let chain = chain_for(j, kind, cap)?;
        let template = SpatialBoundInput::vacuum(chain, 1, o_norm, a_s_norm, t);
        match min_chain_length(&template, epsilon) {
            Err(Error::InvalidInput(_)) if cap < 1 << 20 && epsilon > 0.0 => cap *= 4,
            other => return other,
        }
    }
}

/// `Δ(L⃗, t) ≤ Σ_m F_m` with `F_m` the general bound of bath `m`.
pub fn multi_bath_bound(baths: &[SpatialBoundInput]) -> Result<f64> {
    baths.iter().map(|b| general_bound(b).map(|r| r.delta_bound)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_chain::{particle_chain, phonon_chain};

    fn ohmic3() -> SpectralDensity {
        SpectralDensity::power_law(0.8, 3.0, 1.0).unwrap()
    }

    fn params(t: f64, l: usize) -> BoundParams {
        BoundParams { o_norm: 1.0, a_s_norm: 0.5, gamma0_norm_sqrt: 1.0, t, l }
    }

    #[test]
    fn particle_wrapper_reference_value() {
        let r = particle_bound(&ohmic3(), &params(1.0, 5));
        // 50-digit evaluation of the closed form
        let expect = 0.131_134_034_012_723_53;
        assert!((r.delta_bound - expect).abs() < 1e-13 * expect);
        assert!(r.delta_bound >= expect);
        assert!((r.delta_squared_bound.sqrt() - r.delta_bound).abs() == 0.0);
    }

    #[test]
    fn massless_phonon_wrapper_reference_value() {
        let r = phonon_bound(&ohmic3(), &params(1.0, 3));
        let expect = 0.058_065_147_339_882_04;
        assert!((r.delta_bound - expect).abs() < 1e-13 * expect);
        assert_eq!(r.case, BoundCase::General);
    }

    #[test]
    fn zero_time_and_zero_coupling() {
        assert_eq!(particle_bound(&ohmic3(), &params(0.0, 5)).delta_bound, 0.0);
        let free = SpectralDensity::power_law(0.0, 3.0, 1.0).unwrap();
        assert_eq!(particle_bound(&free, &params(1.0, 5)).delta_bound, 0.0);
        assert_eq!(phonon_bound(&free, &params(1.0, 5)).delta_bound, 0.0);
        let input = SpatialBoundInput::vacuum(particle_chain(&ohmic3(), 6).unwrap(), 5, 1.0, 0.5, 0.0);
        assert_eq!(general_bound(&input).unwrap().delta_bound, 0.0);
        assert_eq!(theorem1_bound(&input).unwrap().delta_bound, 0.0);
    }

    #[test]
    fn longer_chain_tightens() {
        let a = particle_bound(&ohmic3(), &params(1.0, 5)).delta_bound;
        let b = particle_bound(&ohmic3(), &params(1.0, 10)).delta_bound;
        assert!(b < a);
    }

    #[test]
    fn general_case_rejected_by_theorem() {
        let input = SpatialBoundInput::vacuum(phonon_chain(&ohmic3(), 6).unwrap(), 5, 1.0, 0.5, 1.0);
        assert_eq!(theorem1_bound(&input), Err(Error::WrongCase("General")));
        assert!(general_bound(&input).is_ok());
    }

    #[test]
    fn general_limit_matches_theorem() {
        let chain = particle_chain(&ohmic3(), 12).unwrap();
        let mut input = SpatialBoundInput::vacuum(chain, 8, 1.0, 0.5, 1.5);
        let th = theorem1_bound(&input).unwrap().delta_squared_bound;
        input.constants.c_prime = 1e-300;
        let g = general_bound(&input).unwrap().delta_squared_bound;
        assert!(((g - th) / th).abs() < 1e-12);
        input.constants.c_prime = 1e-12;
        let g = general_bound(&input).unwrap().delta_squared_bound;
        assert!(((g - th) / th).abs() < 1e-10);
    }

    #[test]
    fn huge_chains_do_not_overflow() {
        let r = particle_bound(&ohmic3(), &params(50.0, 300));
        assert!(r.delta_bound.is_finite() && r.delta_bound > 0.0);
        let r = particle_bound(&ohmic3(), &params(2.0, 300));
        assert!(r.delta_bound < 1e-200);
    }

    #[test]
    fn lightcone_flags() {
        let r = particle_bound(&ohmic3(), &params(1.0, 5));
        assert!((r.lightcone_tau - E).abs() < 1e-15);
        assert!(!r.in_lightcone);
        assert!(r.decay_estimate.is_some());
        let r = particle_bound(&ohmic3(), &params(3.0, 5));
        assert!(r.in_lightcone && r.decay_estimate.is_none());
    }

    #[test]
    fn min_length_scan() {
        let j = ohmic3();
        let m = min_chain_length_for_density(&j, MappingKind::Particle, 1.0, 0.5, 1.0, 1e-6).unwrap();
        let below = m.bound_below.unwrap();
        assert!(m.bound_at_l_min <= 1e-6 && below > 1e-6);
        let chain = particle_chain(&j, 40).unwrap();
        let check = SpatialBoundInput::vacuum(chain.clone(), m.l_min, 1.0, 0.5, 1.0);
        assert_eq!(certified_bound(&check).unwrap().delta_bound, m.bound_at_l_min);
        let zero = SpatialBoundInput::vacuum(chain.clone(), 1, 1.0, 0.5, 0.0);
        assert_eq!(min_chain_length(&zero, 1e-30).unwrap().l_min, 1);
        let one = SpatialBoundInput::vacuum(chain, 1, 1.0, 0.5, 1.0);
        let b1 = certified_bound(&one).unwrap().delta_bound;
        assert_eq!(min_chain_length(&one, b1).unwrap().l_min, 1);
    }

    #[test]
    fn multi_bath_sums() {
        let p = SpatialBoundInput::vacuum(particle_chain(&ohmic3(), 10).unwrap(), 4, 1.0, 0.5, 1.0);
        let single = general_bound(&p).unwrap().delta_bound;
        assert_eq!(multi_bath_bound(std::slice::from_ref(&p)).unwrap(), single);
        assert_eq!(multi_bath_bound(&[p.clone(), p.clone()]).unwrap(), 2.0 * single);
    }

    #[test]
    fn csv_rows() {
        let r = particle_bound(&ohmic3(), &params(1.0, 5));
        let csv = reports_to_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), SpatialBoundReport::CSV_HEADER);
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 8);
        assert_eq!(row[1], "5");
        assert_eq!(row[4], "XequalsP");
        assert_eq!(row[7], "false");
    }
}
