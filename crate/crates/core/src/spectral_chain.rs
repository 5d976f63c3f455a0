//! Spectral densities and their chain-mapped representation.
//!
//! A bath with spectral density `J(ω)` supported on `[ω_min, ω_max]` is
//! unitarily equivalent to a semi-infinite nearest-neighbour chain
//!
//! ```text
//! H_B = ½ Σ_ij ( x_i X_ij x_j + p_i P_ij p_j ),   V = ĥ ⊗ x_0
//! ```
//!
//! Two mappings are supported: the particle mapping (`X = P`, `ĥ = μ0 Â_S`)
//! and the phonon mapping (`P = ω_max 𝟙`, `ĥ = μ1 Â_S`). Power-law
//! densities have closed-form Jacobi coefficients; anything else goes
//! through the discretized Stieltjes procedure.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre_on, integrate, MonotoneCubic};

/// Orthogonality tolerance of the Stieltjes procedure.
pub const STIELTJES_ORTHOGONALITY_LIMIT: f64 = 1e-8;

/// Spectral density sampled on a grid and interpolated with a monotone cubic.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    omega: Vec<f64>,
    values: Vec<f64>,
    interp: MonotoneCubic,
}

impl TabulatedDensity {
    pub fn new(omega: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if omega.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: omega.len(), got: values.len() });
        }
        if omega.len() < 3 {
            return Err(Error::GridTooCoarse { got: omega.len(), need: 3 });
        }
        if omega.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDensity("non-finite sample".into()));
        }
        if omega[0] < 0.0 {
            return Err(Error::InvalidDensity("support must lie in ω ≥ 0".into()));
        }
        if let Some(i) = omega.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidDensity(format!("frequency grid not increasing at sample {}", i + 1)));
        }
        if let Some(i) = values.iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidDensity(format!("negative J at sample {i}")));
        }
        let interp = MonotoneCubic::new(omega.clone(), values.clone());
        Ok(Self { omega, values, interp })
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralDensity {
    /// `J(ω) = π α ω_c^{1-s} ω^s Θ(ω_c - ω)`.
    PowerLaw { alpha: f64, s: f64, omega_c: f64 },
    Tabulated(TabulatedDensity),
}

impl SpectralDensity {
    pub fn power_law(alpha: f64, s: f64, omega_c: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidDensity(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidDensity(format!("s must be > 0, got {s}")));
        }
        if !(omega_c > 0.0 && omega_c.is_finite()) {
            return Err(Error::InvalidDensity(format!("omega_c must be finite and > 0, got {omega_c}")));
        }
        Ok(Self::PowerLaw { alpha, s, omega_c })
    }

    pub fn tabulated(omega: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        TabulatedDensity::new(omega, values).map(Self::Tabulated)
    }

    /// `[ω_min, ω_max]`.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::PowerLaw { omega_c, .. } => (0.0, *omega_c),
            Self::Tabulated(t) => (t.omega[0], t.omega[t.omega.len() - 1]),
        }
    }

    pub fn omega_min(&self) -> f64 {
        self.support().0
    }

    pub fn omega_max(&self) -> f64 {
        self.support().1
    }

    pub fn eval(&self, omega: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(omega >= lo && omega <= hi) {
            return 0.0;
        }
        match self {
            Self::PowerLaw { alpha, s, omega_c } => PI * alpha * omega_c.powf(1.0 - s) * omega.powf(*s),
            Self::Tabulated(t) => t.interp.eval(omega).max(0.0),
        }
    }

    /// Break points inside the support where the density may be non-smooth.
    fn pieces(&self) -> Vec<f64> {
        match self {
            Self::PowerLaw { omega_c, .. } => vec![0.0, *omega_c],
            Self::Tabulated(t) => t.omega.clone(),
        }
    }
}

/// Sampled dispersion relation `g(k)` and coupling `h(k)` of a scalar-momentum bath.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionSpec {
    pub k: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

/// Builds `J(ω) = π h²(g⁻¹(ω)) |d g⁻¹/dω|` on the frequency grid `ω_i = g(k_i)`.
///
/// The derivative `g'(k_i)` is the exact derivative of the local quadratic
/// interpolant through neighbouring samples (second-order centred
/// differences, one-sided at the ends).
pub fn spectral_density_from_dispersion(d: &DispersionSpec) -> Result<SpectralDensity> {
    let n = d.k.len();
    if n < 3 {
        return Err(Error::GridTooCoarse { got: n, need: 3 });
    }
    if d.g.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: d.g.len() });
    }
    if d.h.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: d.h.len() });
    }
    if let Some(i) = d.k.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(format!("momentum grid not increasing at sample {}", i + 1)));
    }
    let sign = (d.g[1] - d.g[0]).signum();
    if sign == 0.0 {
        return Err(Error::NonMonotoneDispersion { index: 1 });
    }
    if let Some(i) = d.g.windows(2).position(|w| (w[1] - w[0]) * sign <= 0.0) {
        return Err(Error::NonMonotoneDispersion { index: i + 1 });
    }

    let slope = |i: usize| -> f64 {
        let (a, b, c) = match i {
            0 => (0, 1, 2),
            i if i == n - 1 => (n - 3, n - 2, n - 1),
            i => (i - 1, i, i + 1),
        };
        quadratic_derivative([d.k[a], d.k[b], d.k[c]], [d.g[a], d.g[b], d.g[c]], d.k[i])
    };

    let mut samples: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let dg = slope(i).abs();
            (d.g[i], PI * d.h[i] * d.h[i] / dg)
        })
        .collect();
    if sign < 0.0 {
        samples.reverse();
    }
    // 0/0 at stationary end points: continue linearly from the interior
    for i in 0..n {
        if !samples[i].1.is_finite() {
            let (a, b) = if i < 2 { (i + 1, i + 2) } else { (i - 1, i - 2) };
            let (wa, ja) = samples[a];
            let (wb, jb) = samples[b];
            if !(ja.is_finite() && jb.is_finite()) {
                return Err(Error::InvalidDensity(format!("singular dispersion derivative near sample {i}")));
            }
            let w = samples[i].0;
            samples[i].1 = (ja + (jb - ja) * (w - wa) / (wb - wa)).max(0.0);
        }
    }
    let (omega, values) = samples.into_iter().unzip();
    SpectralDensity::tabulated(omega, values)
}

fn quadratic_derivative(x: [f64; 3], y: [f64; 3], at: f64) -> f64 {
    // derivative of the Lagrange interpolant through three points
    let [x0, x1, x2] = x;
    let [y0, y1, y2] = y;
    y0 * ((at - x1) + (at - x2)) / ((x0 - x1) * (x0 - x2))
        + y1 * ((at - x0) + (at - x2)) / ((x1 - x0) * (x1 - x2))
        + y2 * ((at - x0) + (at - x1)) / ((x2 - x0) * (x2 - x1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingConstants {
    pub mu0: f64,
    pub mu1: f64,
}

/// `μ0² = (2/π)∫J(ω)dω`, `μ1² = (1/(π ω_max))∫J(√ω)dω`; closed form for power laws.
pub fn mapping_constants(j: &SpectralDensity) -> MappingConstants {
    match j {
        SpectralDensity::PowerLaw { alpha, s, omega_c } => MappingConstants {
            mu0: omega_c * (2.0 * alpha / (s + 1.0)).sqrt(),
            mu1: omega_c * (2.0 * alpha / (s + 2.0)).sqrt(),
        },
        SpectralDensity::Tabulated(_) => mapping_constants_by_quadrature(j),
    }
}

/// Adaptive Gauss–Kronrod evaluation of the μ integrals (relative tolerance 1e-12).
///
/// The second integral is taken in the variable `u = √ω`, i.e. as
/// `∫ 2u J(u) du` over `[ω_min, ω_max]`.
pub fn mapping_constants_by_quadrature(j: &SpectralDensity) -> MappingConstants {
    let breaks = j.pieces();
    let mut int0 = 0.0;
    let mut int1 = 0.0;
    for w in breaks.windows(2) {
        int0 += integrate(|x| j.eval(x), w[0], w[1], 1e-13, 0.0).value;
        int1 += integrate(|u| 2.0 * u * j.eval(u), w[0], w[1], 1e-13, 0.0).value;
    }
    MappingConstants {
        mu0: (2.0 / PI * int0).max(0.0).sqrt(),
        mu1: (int1 / (PI * j.omega_max())).max(0.0).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingKind {
    Particle,
    Phonon,
}

impl MappingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Particle => "particle",
            Self::Phonon => "phonon",
        }
    }
}

/// The `P` block of the bath quadratic form.
#[derive(Debug, Clone, PartialEq)]
pub enum PMatrix {
    Tridiagonal { diag: Vec<f64>, off: Vec<f64>, boundary: f64 },
    ScalarIdentity(f64),
}

/// Chain-mapped bath truncated to `L` modes, remembering the coupling to
/// mode `L` (the first discarded one).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainMapping {
    pub kind: MappingKind,
    x_diag: Vec<f64>,
    x_off: Vec<f64>,
    x_boundary: f64,
    p: PMatrix,
    pub h_coeff: f64,
    pub omega_min: f64,
    pub omega_max: f64,
}

impl ChainMapping {
    /// Assemble a chain from Jacobi data. `x_off` holds `L` entries: the
    /// `L-1` in-chain couplings followed by the boundary coupling `X_{L-1,L}`.
    pub fn from_parts(
        kind: MappingKind,
        x_diag: Vec<f64>,
        mut x_off: Vec<f64>,
        h_coeff: f64,
        omega_min: f64,
        omega_max: f64,
    ) -> Result<Self> {
        let l = x_diag.len();
        if l == 0 {
            return Err(Error::InvalidInput("chain length must be >= 1".into()));
        }
        if x_off.len() != l {
            return Err(Error::DimensionMismatch { expected: l, got: x_off.len() });
        }
        let x_boundary = x_off.pop().expect("length checked");
        let p = match kind {
            MappingKind::Particle => {
                PMatrix::Tridiagonal { diag: x_diag.clone(), off: x_off.clone(), boundary: x_boundary }
            }
            MappingKind::Phonon => PMatrix::ScalarIdentity(omega_max),
        };
        Ok(Self { kind, x_diag, x_off, x_boundary, p, h_coeff, omega_min, omega_max })
    }

    pub fn len(&self) -> usize {
        self.x_diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_diag.is_empty()
    }

    pub fn x_diag(&self) -> &[f64] {
        &self.x_diag
    }

    pub fn x_off(&self) -> &[f64] {
        &self.x_off
    }

    pub fn x_boundary(&self) -> f64 {
        self.x_boundary
    }

    pub fn p(&self) -> &PMatrix {
        &self.p
    }

    pub fn p_boundary(&self) -> f64 {
        match &self.p {
            PMatrix::Tridiagonal { boundary, .. } => *boundary,
            PMatrix::ScalarIdentity(_) => 0.0,
        }
    }

    pub fn p_diag(&self, i: usize) -> f64 {
        match &self.p {
            PMatrix::Tridiagonal { diag, .. } => diag[i],
            PMatrix::ScalarIdentity(w) => *w,
        }
    }

    pub fn p_off(&self, i: usize) -> f64 {
        match &self.p {
            PMatrix::Tridiagonal { off, .. } => off[i],
            PMatrix::ScalarIdentity(_) => 0.0,
        }
    }

    pub fn is_massive(&self) -> bool {
        self.omega_min > 0.0
    }

    /// Principal `L × L` sub-chain; the boundary becomes the coupling to site `L`.
    pub fn truncated(&self, l: usize) -> Result<Self> {
        if l == 0 || l > self.len() {
            return Err(Error::InvalidInput(format!("cannot truncate a {}-site chain to {l} sites", self.len())));
        }
        let mut x_off: Vec<f64> = self.x_off.iter().copied().chain(std::iter::once(self.x_boundary)).collect();
        x_off.truncate(l);
        Self::from_parts(self.kind, self.x_diag[..l].to_vec(), x_off, self.h_coeff, self.omega_min, self.omega_max)
    }

    /// `‖X_L‖`, from the extreme eigenvalues of the tridiagonal block.
    pub fn x_norm(&self) -> f64 {
        tridiagonal_norm(&self.x_diag, &self.x_off)
    }

    /// `‖P_L‖`.
    pub fn p_norm(&self) -> f64 {
        match &self.p {
            PMatrix::Tridiagonal { diag, off, .. } => tridiagonal_norm(diag, off),
            PMatrix::ScalarIdentity(w) => w.abs(),
        }
    }

    pub fn x_dense(&self) -> DMatrix<f64> {
        tridiagonal_dense(&self.x_diag, &self.x_off)
    }

    pub fn p_dense(&self) -> DMatrix<f64> {
        match &self.p {
            PMatrix::Tridiagonal { diag, off, .. } => tridiagonal_dense(diag, off),
            PMatrix::ScalarIdentity(w) => DMatrix::from_diagonal_element(self.len(), self.len(), *w),
        }
    }

    /// Ascending eigenvalues of `X`.
    pub fn x_eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.x_dense()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// CSV with columns `site_index,diag_X,offdiag_X,diag_P,offdiag_P`; the
    /// off-diagonal of row `j` is the coupling between sites `j` and `j+1`
    /// (the last row holds the boundary coupling).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("site_index,diag_X,offdiag_X,diag_P,offdiag_P\n");
        let l = self.len();
        for j in 0..l {
            let xo = if j + 1 < l { self.x_off[j] } else { self.x_boundary };
            let po = if j + 1 < l { self.p_off(j) } else { self.p_boundary() };
            let _ = writeln!(
                out,
                "{j},{},{},{},{}",
                fmt17(self.x_diag[j]),
                fmt17(xo),
                fmt17(self.p_diag(j)),
                fmt17(po)
            );
        }
        out
    }
}

/// Spectral norm of a symmetric tridiagonal matrix by Sturm-count bisection
/// on the Gershgorin interval. The result is rounded outward.
pub fn tridiagonal_norm(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    if n == 0 {
        return 0.0;
    }
    let radius = |i: usize| {
        let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let r = if i + 1 < n { off[i].abs() } else { 0.0 };
        l + r
    };
    let lo0 = (0..n).map(|i| diag[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let hi0 = (0..n).map(|i| diag[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    // number of eigenvalues strictly below x
    let count_below = |x: f64| {
        let mut count = 0;
        let mut q = 1.0f64;
        for i in 0..n {
            let o2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
            q = diag[i] - x - if i > 0 { o2 / q } else { 0.0 };
            if q == 0.0 {
                q = -f64::EPSILON * (x.abs() + 1.0);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    let bisect = |k: usize| {
        // k-th smallest eigenvalue (0-based)
        let (mut lo, mut hi) = (lo0, hi0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (lo, hi)
    };
    let (min_lo, _) = bisect(0);
    let (_, max_hi) = bisect(n - 1);
    let scale = 4.0 * f64::EPSILON * (lo0.abs().max(hi0.abs()));
    min_lo.abs().max(max_hi.abs()) + scale
}

/// 17 significant digits, round-trip exact.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn tridiagonal_dense(diag: &[f64], off: &[f64]) -> DMatrix<f64> {
    let n = diag.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
        if i + 1 < n {
            m[(i, i + 1)] = off[i];
            m[(i + 1, i)] = off[i];
        }
    }
    m
}

fn require_power_law(j: &SpectralDensity) -> Result<(f64, f64, f64)> {
    match j {
        SpectralDensity::PowerLaw { alpha, s, omega_c } => Ok((*alpha, *s, *omega_c)),
        SpectralDensity::Tabulated(_) => Err(Error::InvalidDensity(
            "closed-form chain coefficients exist only for power-law densities".into(),
        )),
    }
}

fn require_length(l: usize) -> Result<()> {
    if l == 0 {
        Err(Error::InvalidInput("chain length must be >= 1".into()))
    } else {
        Ok(())
    }
}

/// Closed-form particle-mapping chain (`X = P`) for a power-law density.
pub fn particle_chain(j: &SpectralDensity, l: usize) -> Result<ChainMapping> {
    let (alpha, s, wc) = require_power_law(j)?;
    require_length(l)?;
    let diag = (0..l)
        .map(|n| {
            let n = n as f64;
            0.5 * wc * (1.0 + s * s / ((s + 2.0 * n) * (2.0 + s + 2.0 * n)))
        })
        .collect();
    let off = (0..l)
        .map(|n| {
            let n = n as f64;
            wc * (1.0 + n) * (1.0 + s + n) / ((s + 2.0 + 2.0 * n) * (3.0 + s + 2.0 * n))
                * ((3.0 + s + 2.0 * n) / (1.0 + s + 2.0 * n)).sqrt()
        })
        .collect();
    let h = wc * (2.0 * alpha / (s + 1.0)).sqrt();
    ChainMapping::from_parts(MappingKind::Particle, diag, off, h, 0.0, wc)
}

/// Closed-form phonon-mapping chain (`P = ω_c 𝟙`) for a power-law density.
pub fn phonon_chain(j: &SpectralDensity, l: usize) -> Result<ChainMapping> {
    let (alpha, s, wc) = require_power_law(j)?;
    require_length(l)?;
    let diag = (0..l)
        .map(|n| {
            let n = n as f64;
            0.5 * wc * (1.0 + s * s / ((s + 4.0 * n) * (4.0 + s + 4.0 * n)))
        })
        .collect();
    let off = (0..l)
        .map(|n| {
            let n = n as f64;
            wc * 2.0 * (1.0 + n) * (2.0 + s + 2.0 * n) / ((s + 4.0 + 4.0 * n) * (6.0 + s + 4.0 * n))
                * ((6.0 + s + 4.0 * n) / (2.0 + s + 4.0 * n)).sqrt()
        })
        .collect();
    let h = wc * (2.0 * alpha / (s + 2.0)).sqrt();
    ChainMapping::from_parts(MappingKind::Phonon, diag, off, h, 0.0, wc)
}

/// Chain for any density: closed forms for power laws, Stieltjes otherwise.
pub fn chain_for(j: &SpectralDensity, kind: MappingKind, l: usize) -> Result<ChainMapping> {
    match (j, kind) {
        (SpectralDensity::PowerLaw { .. }, MappingKind::Particle) => particle_chain(j, l),
        (SpectralDensity::PowerLaw { .. }, MappingKind::Phonon) => phonon_chain(j, l),
        (SpectralDensity::Tabulated(_), _) => stieltjes_recurrence_oracle(j, kind, l),
    }
}

/// Discrete measure (nodes, weights) approximating `dλ^0 = J(x)dx/π`
/// (particle) or `dλ^1 = J(√x)dx/π` (phonon, integrated in `u = √x`).
fn discretize_measure(j: &SpectralDensity, kind: MappingKind, l: usize) -> (Vec<f64>, Vec<f64>) {
    let breaks = j.pieces();
    let per_piece = match j {
        SpectralDensity::PowerLaw { .. } => 4 * l + 100,
        SpectralDensity::Tabulated(_) => 24,
    };
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for w in breaks.windows(2) {
        let (u, gw) = gauss_legendre_on(per_piece, w[0], w[1]);
        for (ui, wi) in u.into_iter().zip(gw) {
            let ju = j.eval(ui) / PI;
            match kind {
                MappingKind::Particle => {
                    nodes.push(ui);
                    weights.push(wi * ju);
                }
                MappingKind::Phonon => {
                    nodes.push(ui * ui);
                    weights.push(wi * 2.0 * ui * ju);
                }
            }
        }
    }
    (nodes, weights)
}

/// Jacobi coefficients by the discretized Stieltjes procedure.
///
/// Returns the chain of the requested mapping built from `α_0..α_{L-1}` and
/// `√β_1..√β_L`; fails with [`Error::QuadratureUnstable`] when the computed
/// orthonormal polynomials deviate from orthonormality by more than 1e-8.
pub fn stieltjes_recurrence_oracle(j: &SpectralDensity, kind: MappingKind, l: usize) -> Result<ChainMapping> {
    require_length(l)?;
    let (nodes, weights) = discretize_measure(j, kind, l);
    let m0: f64 = weights.iter().sum();
    if m0 <= 0.0 {
        return Err(Error::InvalidDensity("measure has zero mass".into()));
    }
    let npts = nodes.len();
    let mut polys: Vec<Vec<f64>> = Vec::with_capacity(l + 1);
    let mut p = vec![1.0 / m0.sqrt(); npts];
    let mut p_prev = vec![0.0; npts];
    let mut b_prev = 0.0;
    let mut diag = Vec::with_capacity(l);
    let mut off = Vec::with_capacity(l);
    for _ in 0..l {
        let a: f64 = (0..npts).map(|i| weights[i] * nodes[i] * p[i] * p[i]).sum();
        let q: Vec<f64> = (0..npts).map(|i| (nodes[i] - a) * p[i] - b_prev * p_prev[i]).collect();
        let b = (0..npts).map(|i| weights[i] * q[i] * q[i]).sum::<f64>().sqrt();
        if !(b > 0.0) {
            return Err(Error::QuadratureUnstable { loss: f64::INFINITY, limit: STIELTJES_ORTHOGONALITY_LIMIT });
        }
        diag.push(a);
        off.push(b);
        polys.push(std::mem::replace(&mut p, q.iter().map(|v| v / b).collect()));
        p_prev = polys.last().expect("pushed").clone();
        b_prev = b;
    }
    polys.push(p);

    let mut loss: f64 = 0.0;
    for a in 0..polys.len() {
        for b in 0..=a {
            let g: f64 = (0..npts).map(|i| weights[i] * polys[a][i] * polys[b][i]).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            loss = loss.max((g - target).abs());
        }
    }
    if !(loss <= STIELTJES_ORTHOGONALITY_LIMIT) {
        return Err(Error::QuadratureUnstable { loss, limit: STIELTJES_ORTHOGONALITY_LIMIT });
    }

    let (wmin, wmax) = j.support();
    match kind {
        MappingKind::Particle => {
            ChainMapping::from_parts(kind, diag, off, (2.0 * m0).sqrt(), wmin, wmax)
        }
        MappingKind::Phonon => {
            let diag = diag.into_iter().map(|d| d / wmax).collect();
            let off = off.into_iter().map(|o| o / wmax).collect();
            ChainMapping::from_parts(kind, diag, off, (m0 / wmax).sqrt(), wmin, wmax)
        }
    }
}
