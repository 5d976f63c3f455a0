//! Fock-truncation error `ε_m(x)`, its integrated bound `Δ_m(t)`, and the
//! combined certificate `Δ(t,L) + Δ_m(t)`.
//!
//! With `ψ(x) = e^{-ixH_m}ψ0`, `φ = e^{ixH_B^m}ψ(x)` and
//! `A(x) = Σ_k c^{xx}_{0,k}(x) x_k^m + c^{xp}_{0,k}(x) p_k^m`,
//!
//! ```text
//! ε(x) = ‖ĥ (A(x)φ - e^{ixH_B^m} x_0^m ψ(x))‖² + ⟨φ| ĥ² ⊗ Σ_k Σ_{rs} c_r c_s K^{rs}_k |φ⟩
//! Δ_m(t) = 2‖O‖ (tail + 2∫_0^t √ε)^{1/2}
//! ```

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock_space::{
    apply_site_operator, apply_system_operator, build_bath_hamiltonian_capped, build_total_hamiltonian_capped,
    corner_corrections, site_operators, CornerCorrections, SparseHamiltonian, SpinSystem, TruncationSpec,
    DEFAULT_DIMENSION_CAP,
};
use crate::quadratic_dynamics::{
    bound_constants, gamma0_fock, gamma0_thermal, gamma0_vacuum, heisenberg_row, CorrelationMatrix, SymplecticGenerator,
};
use crate::spatial_bound::{certified_bound, SpatialBoundInput, SpatialBoundReport};
use crate::spectral_chain::{chain_for, fmt17, ChainMapping, MappingKind, PMatrix, SpectralDensity};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Hermitian operator acting on state vectors.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]);
}

impl LinearOperator for SparseHamiltonian {
    fn dim(&self) -> usize {
        SparseHamiltonian::dim(self)
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        SparseHamiltonian::apply(self, x, y)
    }
}

/// `𝟙_S ⊗ H_B` for a bath-only Hamiltonian.
pub struct BathEmbedded<'a> {
    pub bath: &'a SparseHamiltonian,
    pub dim_s: usize,
}

impl LinearOperator for BathEmbedded<'_> {
    fn dim(&self) -> usize {
        self.dim_s * self.bath.dim()
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let n = self.bath.dim();
        for (xs, ys) in x.chunks(n).zip(y.chunks_mut(n)) {
            self.bath.apply(xs, ys);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    data: Vec<Complex64>,
    norm: f64,
}

impl StateVector {
    pub fn new(data: Vec<Complex64>) -> Self {
        let norm = norm(&data);
        Self { data, norm }
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `Re⟨ψ|O_S ⊗ 𝟙|ψ⟩`.
    pub fn system_expectation(&self, op: &DMatrix<Complex64>) -> f64 {
        let bath = self.data.len() / op.nrows();
        dot(&self.data, &apply_system_operator(&self.data, bath, op)).re
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub const DEFAULT_KRYLOV_DIM: usize = 30;

/// `e^{-iHt}ψ` with `‖error‖ ≤ tol·‖ψ‖`, by Lanczos steps with full
/// reorthogonalization. Each step of length `τ` is accepted once the
/// a-posteriori estimate `‖ψ‖ β_k |[e^{-iτT}]_{k,1}|` is below `tol·|τ|/|t|`.
pub fn propagate<H: LinearOperator + ?Sized>(h: &H, psi: &StateVector, t: f64, tol: f64) -> Result<StateVector> {
    propagate_with(h, psi, t, tol, DEFAULT_KRYLOV_DIM)
}

pub fn propagate_with<H: LinearOperator + ?Sized>(
    h: &H,
    psi: &StateVector,
    t: f64,
    tol: f64,
    krylov_dim: usize,
) -> Result<StateVector> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be > 0, got {tol}")));
    }
    if !t.is_finite() {
        return Err(Error::InvalidInput(format!("propagation time must be finite, got {t}")));
    }
    let n = h.dim();
    if psi.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: psi.len() });
    }
    if t == 0.0 || psi.norm() == 0.0 {
        return Ok(psi.clone());
    }
    let kmax = krylov_dim.clamp(2, n.max(2)).min(n);
    let mut basis: Vec<Vec<Complex64>> = (0..=kmax).map(|_| vec![ZERO; n]).collect();
    let mut w = vec![ZERO; n];
    let mut current = psi.as_slice().to_vec();
    let sign = t.signum();
    let total = t.abs();
    let mut done = 0.0;
    let mut guess = total;
    let min_step = total * 1e-13;

    while done < total {
        let remaining = total - done;
        let beta0 = norm(&current);
        for (b, c) in basis[0].iter_mut().zip(&current) {
            *b = c / beta0;
        }
        let mut alpha = Vec::with_capacity(kmax);
        let mut beta: Vec<f64> = Vec::with_capacity(kmax);
        let mut k = 0;
        let mut breakdown = false;
        while k < kmax {
            h.apply(&basis[k], &mut w);
            let a = dot(&basis[k], &w).re;
            alpha.push(a);
            // two passes of classical Gram-Schmidt against the whole basis
            for _ in 0..2 {
                for v in basis.iter().take(k + 1) {
                    let c = dot(v, &w);
                    axpy(-c, v, &mut w);
                }
            }
            let b = norm(&w);
            k += 1;
            let scale = alpha.iter().map(|v| v.abs()).fold(b, f64::max).max(1.0);
            if b <= 1e-13 * scale {
                breakdown = true;
                beta.push(0.0);
                break;
            }
            beta.push(b);
            for (dst, src) in basis[k].iter_mut().zip(&w) {
                *dst = src / b;
            }
        }
        let mut tmat = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            tmat[(i, i)] = alpha[i];
            if i + 1 < k {
                tmat[(i, i + 1)] = beta[i];
                tmat[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(tmat);
        if eig.eigenvalues.iter().chain(eig.eigenvectors.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NoConvergence(format!("non-finite Lanczos eigensystem at dimension {k}")));
        }
        let coeffs = |tau: f64| -> Vec<Complex64> {
            (0..k)
                .map(|r| {
                    (0..k)
                        .map(|q| {
                            let phase = Complex64::new(0.0, -tau * eig.eigenvalues[q]).exp();
                            phase * (eig.eigenvectors[(r, q)] * eig.eigenvectors[(0, q)])
                        })
                        .sum()
                })
                .collect()
        };
        let last_beta = beta[k - 1];
        let mut tau = guess.min(remaining);
        let mut rejected = false;
        let u = loop {
            let u = coeffs(sign * tau);
            let err = if breakdown { 0.0 } else { beta0 * last_beta * u[k - 1].norm() };
            let allowed = tol * psi.norm() * tau / total;
            if err <= allowed {
                break u;
            }
            rejected = true;
            let shrink = (0.9 * (allowed / err).powf(1.0 / k as f64)).clamp(0.1, 0.9);
            tau *= shrink;
            if tau < min_step {
                return Err(Error::NoConvergence(format!(
                    "Krylov step fell below {min_step:.3e} at time {:.6e} of {t:.6e}",
                    done * sign
                )));
            }
        };
        current.iter_mut().for_each(|z| *z = ZERO);
        for (j, uj) in u.iter().enumerate() {
            axpy(uj * beta0, &basis[j], &mut current);
        }
        done += tau;
        if remaining - tau <= total * 1e-15 {
            done = total;
        }
        guess = if rejected { tau } else { 2.0 * tau };
    }
    Ok(StateVector::new(current))
}

/// Initial bath state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BathState {
    Vacuum,
    ProductFock(Vec<usize>),
    Thermal { beta: f64 },
}

/// `ψ0 = ψ_S ⊗ |n⃗⟩`; thermal states are rejected because they are not
/// supported on the truncated space.
pub fn initial_state(psi_s: &[Complex64], bath: &BathState, trunc: &TruncationSpec) -> Result<StateVector> {
    let occupations = match bath {
        BathState::Vacuum => vec![0; trunc.l()],
        BathState::ProductFock(n) => {
            if n.len() != trunc.l() {
                return Err(Error::DimensionMismatch { expected: trunc.l(), got: n.len() });
            }
            if n.iter().zip(trunc.m()).any(|(a, m)| a > m) {
                return Err(Error::UnsupportedState("Fock occupation above the cutoff".into()));
            }
            n.clone()
        }
        BathState::Thermal { .. } => {
            return Err(Error::UnsupportedState(
                "thermal bath states need a purification; only pure product states are propagated".into(),
            ))
        }
    };
    let bath_dim = trunc.bath_dim();
    let idx: usize = occupations.iter().zip(trunc.strides()).map(|(n, s)| n * s).sum();
    let mut data = vec![ZERO; psi_s.len() * bath_dim];
    for (s, a) in psi_s.iter().enumerate() {
        data[s * bath_dim + idx] = *a;
    }
    let state = StateVector::new(data);
    if (state.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("system state must be normalized, got norm {}", state.norm())));
    }
    Ok(state)
}

/// `γ0` of the bath state on all sites of `chain`.
pub fn initial_correlations(state: &BathState, chain: &ChainMapping) -> Result<CorrelationMatrix> {
    match state {
        BathState::Vacuum => gamma0_vacuum(chain.len()),
        BathState::ProductFock(n) => {
            if n.len() != chain.len() {
                return Err(Error::DimensionMismatch { expected: chain.len(), got: n.len() });
            }
            gamma0_fock(n)
        }
        BathState::Thermal { beta } => gamma0_thermal(chain, *beta),
    }
}

/// `(n̄/(1+n̄))^{m+1}`, the weight above level `m` of a thermal mode.
pub fn thermal_tail_single_mode(nbar: f64, m: usize) -> f64 {
    (nbar / (1.0 + nbar)).powi(m as i32 + 1)
}

/// Upper bound on `tr[(𝟙-𝟙_m)ρ0]`. Vacuum and product-Fock states are
/// exact. For thermal chains the union bound `Σ_i P[n_i > m_i]` is used; for
/// the particle mapping each site is itself thermal and the geometric tail
/// is exact, otherwise Markov's inequality `⟨n_i⟩/(m_i+1)` bounds each term.
pub fn tail_weight(state: &BathState, chain: &ChainMapping, trunc: &TruncationSpec) -> Result<f64> {
    match state {
        BathState::Vacuum => Ok(0.0),
        BathState::ProductFock(n) => {
            if n.len() != trunc.l() {
                return Err(Error::DimensionMismatch { expected: trunc.l(), got: n.len() });
            }
            Ok(if n.iter().zip(trunc.m()).any(|(a, m)| a > m) { 1.0 } else { 0.0 })
        }
        BathState::Thermal { beta } => {
            let sub = chain.truncated(trunc.l())?;
            let gamma = gamma0_thermal(&sub, *beta)?;
            let number_conserving = matches!(sub.p(), PMatrix::Tridiagonal { .. });
            let total: f64 = (0..trunc.l())
                .map(|i| {
                    let nbar = gamma.site_occupation(i).max(0.0);
                    if number_conserving {
                        thermal_tail_single_mode(nbar, trunc.m()[i])
                    } else {
                        nbar / (trunc.m()[i] + 1) as f64
                    }
                })
                .sum();
            Ok(total.min(1.0))
        }
    }
}

/// Everything needed to evaluate `ε_m(x)` for one `(chain, m⃗)`.
pub struct EpsilonProblem {
    pub sys: SpinSystem,
    pub chain: ChainMapping,
    pub trunc: TruncationSpec,
    h_total: SparseHamiltonian,
    h_bath: SparseHamiltonian,
    gen: SymplecticGenerator,
    x_ops: Vec<DMatrix<Complex64>>,
    p_ops: Vec<DMatrix<Complex64>>,
    corners: Vec<CornerCorrections>,
    h_op: DMatrix<Complex64>,
    h_sq: DMatrix<Complex64>,
}

impl EpsilonProblem {
    pub fn new(sys: &SpinSystem, chain: &ChainMapping, trunc: &TruncationSpec) -> Result<Self> {
        Self::with_cap(sys, chain, trunc, DEFAULT_DIMENSION_CAP)
    }

    pub fn with_cap(sys: &SpinSystem, chain: &ChainMapping, trunc: &TruncationSpec, cap: usize) -> Result<Self> {
        if chain.len() < trunc.l() {
            return Err(Error::DimensionMismatch { expected: trunc.l(), got: chain.len() });
        }
        let chain = chain.truncated(trunc.l())?;
        let h_total = build_total_hamiltonian_capped(sys, &chain, trunc, cap)?;
        let h_bath = build_bath_hamiltonian_capped(&chain, trunc, cap)?;
        let gen = SymplecticGenerator::from_chain(&chain);
        let ops: Vec<_> = trunc.m().iter().map(|&m| site_operators(m)).collect();
        let h_op = &sys.a_s * Complex64::new(chain.h_coeff, 0.0);
        let h_sq = &h_op * &h_op;
        Ok(Self {
            sys: sys.clone(),
            trunc: trunc.clone(),
            h_total,
            h_bath,
            gen,
            x_ops: ops.iter().map(|o| o.x.clone()).collect(),
            p_ops: ops.iter().map(|o| o.p.clone()).collect(),
            corners: trunc.m().iter().map(|&m| corner_corrections(m)).collect(),
            h_op,
            h_sq,
            chain,
        })
    }

    pub fn dim(&self) -> usize {
        self.h_total.dim()
    }

    pub fn total_hamiltonian(&self) -> &SparseHamiltonian {
        &self.h_total
    }

    pub fn bath_hamiltonian(&self) -> &SparseHamiltonian {
        &self.h_bath
    }

    fn bath_op(&self) -> BathEmbedded<'_> {
        BathEmbedded { bath: &self.h_bath, dim_s: self.sys.dim() }
    }

    /// `ε_m(x)` given the evolved state `ψ(x) = e^{-ixH_m}ψ0`.
    pub fn epsilon_at(&self, x: f64, psi_x: &StateVector, tol: f64) -> Result<f64> {
        let row = heisenberg_row(&self.gen, x);
        let bath = self.bath_op();
        let phi = propagate(&bath, psi_x, -x, tol)?;
        let x0psi = StateVector::new(apply_site_operator(psi_x.as_slice(), &self.trunc, 0, &self.x_ops[0]));
        let chi = propagate(&bath, &x0psi, -x, tol)?;

        let mut w: Vec<Complex64> = chi.as_slice().iter().map(|z| -z).collect();
        for k in 0..self.trunc.l() {
            for (c, op) in [(row.cxx[k], &self.x_ops[k]), (row.cxp[k], &self.p_ops[k])] {
                if c != 0.0 {
                    let v = apply_site_operator(phi.as_slice(), &self.trunc, k, op);
                    axpy(Complex64::new(c, 0.0), &v, &mut w);
                }
            }
        }
        let bath_dim = self.trunc.bath_dim();
        let hw = apply_system_operator(&w, bath_dim, &self.h_op);
        let term1 = dot(&hw, &hw).re;

        let hphi = apply_system_operator(phi.as_slice(), bath_dim, &self.h_sq);
        let mut term2 = 0.0;
        for k in 0..self.trunc.l() {
            let q = self.corners[k].quadratic_form(row.cxx[k], row.cxp[k]).re;
            if q != 0.0 {
                term2 += q * top_level_overlap(phi.as_slice(), &hphi, &self.trunc, k).re;
            }
        }
        Ok((term1 + term2).max(0.0))
    }

    /// `ε_m` on an ascending grid starting at or after 0.
    pub fn curve(&self, psi0: &StateVector, grid: &[f64], tol: f64) -> Result<EpsilonCurve> {
        if grid.iter().any(|x| !(*x >= 0.0)) || grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("epsilon grid must be ascending and non-negative".into()));
        }
        let batch = rayon::current_num_threads().max(1);
        let mut values = Vec::with_capacity(grid.len());
        let mut psi = psi0.clone();
        let mut at = 0.0;
        for chunk in grid.chunks(batch) {
            let mut states = Vec::with_capacity(chunk.len());
            for &x in chunk {
                psi = propagate(&self.h_total, &psi, x - at, tol)?;
                at = x;
                states.push(psi.clone());
            }
            let eps: Vec<Result<f64>> =
                chunk.par_iter().zip(states.par_iter()).map(|(&x, s)| self.epsilon_at(x, s, tol)).collect();
            for e in eps {
                values.push(e?);
            }
        }
        Ok(EpsilonCurve {
            x: grid.to_vec(),
            epsilon: values,
            l: self.trunc.l(),
            m: self.trunc.m().to_vec(),
            mapping: self.chain.kind,
        })
    }
}

fn top_level_overlap(a: &[Complex64], b: &[Complex64], trunc: &TruncationSpec, site: usize) -> Complex64 {
    let m = trunc.m()[site];
    let stride = trunc.strides()[site];
    let block = (m + 1) * stride;
    a.chunks(block).zip(b.chunks(block)).map(|(x, y)| dot(&x[m * stride..], &y[m * stride..])).sum()
}

/// One-off `ε_m(x)` from the initial state.
pub fn epsilon_m(
    x: f64,
    sys: &SpinSystem,
    chain: &ChainMapping,
    trunc: &TruncationSpec,
    psi0: &StateVector,
    tol: f64,
) -> Result<f64> {
    let problem = EpsilonProblem::new(sys, chain, trunc)?;
    let psi = propagate(problem.total_hamiltonian(), psi0, x, tol)?;
    problem.epsilon_at(x, &psi, tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCurve {
    pub x: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub l: usize,
    pub m: Vec<usize>,
    pub mapping: MappingKind,
}

impl EpsilonCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,epsilon\n");
        for (x, e) in self.x.iter().zip(&self.epsilon) {
            let _ = writeln!(out, "{},{}", fmt17(*x), fmt17(*e));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub points_per_unit_time: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { points_per_unit_time: 64 }
    }
}

impl QuadratureSpec {
    /// Simpson intervals for a segment of length `len`: a positive multiple
    /// of 4 so that the half-resolution rule is also available.
    pub fn intervals(&self, len: f64) -> usize {
        if len <= 0.0 {
            return 0;
        }
        let raw = (self.points_per_unit_time as f64 * len).ceil() as usize;
        raw.div_ceil(4).max(1) * 4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FockBound {
    pub t: f64,
    /// Simpson value of `∫_0^t √ε`.
    pub integral: f64,
    /// `|S_h - S_{2h}|/15`, added to the integral in `value`.
    pub quadrature_error: f64,
    pub intervals: usize,
    pub tail: f64,
    pub value: f64,
}

/// Segment-wise Simpson sums of `√ε` over a grid whose segment boundaries
/// are `breaks` (indices into `x`); each segment has a multiple of 4
/// uniform intervals.
fn simpson_segment(x: &[f64], sqrt_eps: &[f64]) -> (f64, f64) {
    let n = x.len() - 1;
    debug_assert!(n.is_multiple_of(4));
    let h = (x[n] - x[0]) / n as f64;
    let fine: f64 = crate::quadrature::simpson(sqrt_eps, h);
    let coarse_vals: Vec<f64> = sqrt_eps.iter().step_by(2).copied().collect();
    let coarse = crate::quadrature::simpson(&coarse_vals, 2.0 * h);
    (fine, (fine - coarse).abs() / 15.0)
}

fn fock_value(o_norm: f64, tail: f64, integral: f64, err: f64) -> f64 {
    2.0 * o_norm * (tail + 2.0 * (integral + err)).max(0.0).sqrt()
}

/// `Δ_m(t)` evaluated directly on its own grid.
pub fn delta_m_bound(
    problem: &EpsilonProblem,
    psi0: &StateVector,
    t: f64,
    o_norm: f64,
    tail: f64,
    quad: &QuadratureSpec,
    tol: f64,
) -> Result<FockBound> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("t must be >= 0, got {t}")));
    }
    let n = quad.intervals(t);
    if n == 0 {
        return Ok(FockBound { t, integral: 0.0, quadrature_error: 0.0, intervals: 0, tail, value: fock_value(o_norm, tail, 0.0, 0.0) });
    }
    let grid: Vec<f64> = (0..=n).map(|k| t * k as f64 / n as f64).collect();
    let curve = problem.curve(psi0, &grid, tol)?;
    let roots: Vec<f64> = curve.epsilon.iter().map(|e| e.sqrt()).collect();
    let (integral, err) = simpson_segment(&grid, &roots);
    Ok(FockBound { t, integral, quadrature_error: err, intervals: n, tail, value: fock_value(o_norm, tail, integral, err) })
}

/// Fine grid whose nodes include every report time; returns the grid and
/// the node index of each report time.
pub fn report_grid(times: &[f64], quad: &QuadratureSpec) -> Result<(Vec<f64>, Vec<usize>)> {
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("report times must be strictly ascending and non-negative".into()));
    }
    let mut grid = vec![0.0];
    let mut idx = Vec::with_capacity(times.len());
    let mut last = 0.0;
    for &t in times {
        let n = quad.intervals(t - last);
        for k in 1..=n {
            grid.push(if k == n { t } else { last + (t - last) * k as f64 / n as f64 });
        }
        idx.push(grid.len() - 1);
        last = t;
    }
    Ok((grid, idx))
}

/// Cumulative `Δ_m` at each report index of a curve built on [`report_grid`].
pub fn fock_bounds_on_curve(curve: &EpsilonCurve, report_idx: &[usize], o_norm: f64, tail: f64) -> Vec<FockBound> {
    let roots: Vec<f64> = curve.epsilon.iter().map(|e| e.sqrt()).collect();
    let mut out = Vec::with_capacity(report_idx.len());
    let (mut integral, mut err, mut start) = (0.0, 0.0, 0usize);
    for &end in report_idx {
        if end > start {
            let (i, e) = simpson_segment(&curve.x[start..=end], &roots[start..=end]);
            integral += i;
            err += e;
        }
        out.push(FockBound {
            t: curve.x[end],
            integral,
            quadrature_error: err,
            intervals: end,
            tail,
            value: fock_value(o_norm, tail, integral, err),
        });
        start = end;
    }
    out
}

/// `⟨O_S⟩(t)` on an ascending time grid for the chain truncated to `trunc`.
pub fn expectation_trajectory(
    sys: &SpinSystem,
    chain: &ChainMapping,
    trunc: &TruncationSpec,
    psi_s: &[Complex64],
    observable: &DMatrix<Complex64>,
    times: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let sub = chain.truncated(trunc.l())?;
    let h = build_total_hamiltonian_capped(sys, &sub, trunc, DEFAULT_DIMENSION_CAP)?;
    let mut psi = initial_state(psi_s, &BathState::Vacuum, trunc)?;
    let mut at = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        psi = propagate(&h, &psi, t - at, tol)?;
        at = t;
        out.push(psi.system_expectation(observable));
    }
    Ok(out)
}

/// `|⟨O⟩_ref(t) - ⟨O⟩_trunc(t)|` for a vacuum bath; `trunc` and
/// `trunc_ref` may differ in chain length as well as cutoffs.
#[allow(clippy::too_many_arguments)]
pub fn exact_truncation_error_oracle(
    sys: &SpinSystem,
    chain: &ChainMapping,
    trunc: &TruncationSpec,
    trunc_ref: &TruncationSpec,
    observable: &DMatrix<Complex64>,
    psi_s: &[Complex64],
    times: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let a = expectation_trajectory(sys, chain, trunc, psi_s, observable, times, tol)?;
    if trunc == trunc_ref {
        return Ok(vec![0.0; times.len()]);
    }
    let b = expectation_trajectory(sys, chain, trunc_ref, psi_s, observable, times, tol)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureDiagnostics {
    pub intervals: usize,
    pub points_per_unit_time: usize,
    pub error_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub t: f64,
    pub spatial: SpatialBoundReport,
    pub tail_weight: f64,
    pub epsilon: f64,
    pub fock_bound: f64,
    pub total: f64,
    pub quadrature: QuadratureDiagnostics,
}

impl CertificateReport {
    pub const CSV_HEADER: &'static str = "t,epsilon,tail,fock_bound,spatial_bound,total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            fmt17(self.t),
            fmt17(self.epsilon),
            fmt17(self.tail_weight),
            fmt17(self.fock_bound),
            fmt17(self.spatial.delta_bound),
            fmt17(self.total)
        )
    }
}

pub fn certificates_to_csv(reports: &[CertificateReport]) -> String {
    let mut out = String::from(CertificateReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

pub struct CertifyInput<'a> {
    pub sys: &'a SpinSystem,
    pub density: &'a SpectralDensity,
    pub kind: MappingKind,
    pub trunc: &'a TruncationSpec,
    pub o_norm: f64,
    pub psi_s: &'a [Complex64],
    pub bath_state: BathState,
    pub times: &'a [f64],
    pub quad: QuadratureSpec,
    pub tol: f64,
}

/// `Δ(t,L)` for truncating the semi-infinite chain at `L = trunc.l()` plus
/// `Δ_m(t)` for the Fock truncation of the `L`-site chain.
pub fn certify(input: &CertifyInput<'_>) -> Result<Vec<CertificateReport>> {
    let l = input.trunc.l();
    let chain = chain_for(input.density, input.kind, l)?;
    let gamma0_norm = initial_correlations(&input.bath_state, &chain)?.norm();
    let tail = tail_weight(&input.bath_state, &chain, input.trunc)?;
    let problem = EpsilonProblem::new(input.sys, &chain, input.trunc)?;
    let psi0 = initial_state(input.psi_s, &input.bath_state, input.trunc)?;
    let positive: Vec<f64> = input.times.iter().copied().filter(|t| *t > 0.0).collect();
    let (grid, idx) = report_grid(&positive, &input.quad)?;
    let curve = problem.curve(&psi0, &grid, input.tol)?;
    let fock = fock_bounds_on_curve(&curve, &idx, input.o_norm, tail);

    let constants = bound_constants(&chain);
    let h_norm = input.sys.h_norm(chain.h_coeff);
    let mut out = Vec::with_capacity(input.times.len());
    for &t in input.times {
        let spatial = certified_bound(&SpatialBoundInput {
            chain: chain.clone(),
            constants,
            gamma0_norm_sqrt: gamma0_norm.sqrt(),
            h_norm,
            o_norm: input.o_norm,
            t,
            l,
        })?;
        let (eps, fb) = match positive.iter().position(|p| *p == t) {
            Some(k) => (curve.epsilon[idx[k]], fock[k]),
            None => (
                curve.epsilon[0],
                FockBound { t, integral: 0.0, quadrature_error: 0.0, intervals: 0, tail, value: fock_value(input.o_norm, tail, 0.0, 0.0) },
            ),
        };
        out.push(CertificateReport {
            t,
            total: spatial.delta_bound + fb.value,
            spatial,
            tail_weight: tail,
            epsilon: eps,
            fock_bound: fb.value,
            quadrature: QuadratureDiagnostics {
                intervals: fb.intervals,
                points_per_unit_time: input.quad.points_per_unit_time,
                error_estimate: fb.quadrature_error,
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_chain::particle_chain;

    fn up() -> Vec<Complex64> {
        vec![Complex64::new(1.0, 0.0), ZERO]
    }

    fn model(l: usize, m: usize) -> (SpinSystem, ChainMapping, TruncationSpec) {
        let j = SpectralDensity::power_law(0.8, 3.0, 1.0).unwrap();
        (SpinSystem::spin_boson(1.0), particle_chain(&j, l).unwrap(), TruncationSpec::uniform(l, m).unwrap())
    }

    #[test]
    fn propagation_matches_dense_exponential() {
        let (sys, chain, trunc) = model(2, 3);
        let h = build_total_hamiltonian_capped(&sys, &chain, &trunc, 1 << 20).unwrap();
        let psi0 = initial_state(&up(), &BathState::Vacuum, &trunc).unwrap();
        let eig = SymmetricEigen::new(h.to_dense());
        for t in [0.3, 1.7, -2.5, 9.0] {
            let got = propagate(&h, &psi0, t, 1e-12).unwrap();
            let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| Complex64::new(0.0, -e * t).exp()));
            let u = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
            let want = u * nalgebra::DVector::from_column_slice(psi0.as_slice());
            let diff: f64 = got.as_slice().iter().zip(want.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(diff < 1e-11, "t={t}: {diff}");
            assert!((got.norm() - 1.0).abs() < 1e-11);
        }
        assert_eq!(propagate(&h, &psi0, 0.0, 1e-10).unwrap(), psi0);
    }

    #[test]
    fn small_krylov_space_still_converges() {
        let (sys, chain, trunc) = model(2, 4);
        let h = build_total_hamiltonian_capped(&sys, &chain, &trunc, 1 << 20).unwrap();
        let psi0 = initial_state(&up(), &BathState::Vacuum, &trunc).unwrap();
        let a = propagate_with(&h, &psi0, 3.0, 1e-11, 6).unwrap();
        let b = propagate_with(&h, &psi0, 3.0, 1e-11, 40).unwrap();
        let diff: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        assert!(diff < 5e-11);
    }

    #[test]
    fn epsilon_vanishes_at_zero() {
        let (sys, chain, trunc) = model(2, 3);
        let psi0 = initial_state(&up(), &BathState::Vacuum, &trunc).unwrap();
        assert_eq!(epsilon_m(0.0, &sys, &chain, &trunc, &psi0, 1e-10).unwrap(), 0.0);
        assert!(epsilon_m(1.0, &sys, &chain, &trunc, &psi0, 1e-10).unwrap() > 0.0);
    }

    #[test]
    fn tail_weights() {
        let (_, chain, trunc) = model(2, 3);
        assert_eq!(tail_weight(&BathState::Vacuum, &chain, &trunc).unwrap(), 0.0);
        let one = TruncationSpec::uniform(2, 1).unwrap();
        assert_eq!(tail_weight(&BathState::ProductFock(vec![2, 0]), &chain, &one).unwrap(), 1.0);
        assert_eq!(tail_weight(&BathState::ProductFock(vec![1, 0]), &chain, &one).unwrap(), 0.0);
        let hot = tail_weight(&BathState::Thermal { beta: 2.0 }, &chain, &trunc).unwrap();
        let hotter = tail_weight(&BathState::Thermal { beta: 0.5 }, &chain, &trunc).unwrap();
        assert!(hot > 0.0 && hotter > hot);
        assert!(matches!(
            initial_state(&up(), &BathState::Thermal { beta: 1.0 }, &trunc),
            Err(Error::UnsupportedState(_))
        ));
    }

    #[test]
    fn report_grid_hits_times() {
        let quad = QuadratureSpec::default();
        let (grid, idx) = report_grid(&[0.5, 1.0, 1.03], &quad).unwrap();
        assert_eq!(grid[idx[0]], 0.5);
        assert_eq!(grid[idx[1]], 1.0);
        assert_eq!(grid[idx[2]], 1.03);
        assert_eq!(idx[0] % 4, 0);
        assert_eq!((idx[2] - idx[1]) % 4, 0);
        assert!(report_grid(&[1.0, 0.5], &quad).is_err());
    }

    #[test]
    fn certificate_is_sum_of_parts() {
        let (sys, _, trunc) = model(2, 3);
        let j = SpectralDensity::power_law(0.8, 3.0, 1.0).unwrap();
        let times = [0.0, 0.5, 1.0];
        let input = CertifyInput {
            sys: &sys,
            density: &j,
            kind: MappingKind::Particle,
            trunc: &trunc,
            o_norm: 1.0,
            psi_s: &up(),
            bath_state: BathState::Vacuum,
            times: &times,
            quad: QuadratureSpec { points_per_unit_time: 16 },
            tol: 1e-10,
        };
        let reports = certify(&input).unwrap();
        assert_eq!(reports[0].total, 0.0);
        for r in &reports {
            assert_eq!(r.total, r.spatial.delta_bound + r.fock_bound);
            assert!(r.total >= r.fock_bound && r.total >= r.spatial.delta_bound);
        }
        assert!(reports[2].fock_bound >= reports[1].fock_bound);
        let csv = certificates_to_csv(&reports);
        assert_eq!(csv.lines().count(), 4);
    }
}
