//! Exact Heisenberg dynamics of the quadratic bath.
//!
//! For `H_B = ½(xᵀXx + pᵀPp)` the canonical vector `r = (x, p)` evolves as
//! `r(y) = M(y) r` with `M(y) = exp(-σ(X⊕P) y)`, `σ = [[0,-𝟙],[𝟙,0]]`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral_chain::{ChainMapping, MappingKind, PMatrix};

/// The dense generator `-σ(X⊕P) = [[0, P], [-X, 0]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticGenerator {
    modes: usize,
    matrix: DMatrix<f64>,
    x_equals_p: bool,
}

impl SymplecticGenerator {
    pub fn new(x: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<Self> {
        let l = x.nrows();
        if x.ncols() != l || p.nrows() != l || p.ncols() != l {
            return Err(Error::DimensionMismatch { expected: l, got: p.nrows() });
        }
        let mut g = DMatrix::zeros(2 * l, 2 * l);
        g.view_mut((0, l), (l, l)).copy_from(p);
        g.view_mut((l, 0), (l, l)).copy_from(&(-x));
        Ok(Self { modes: l, matrix: g, x_equals_p: x == p })
    }

    pub fn from_chain(chain: &ChainMapping) -> Self {
        Self::new(&chain.x_dense(), &chain.p_dense()).expect("chain blocks are square and equal-sized")
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn is_skew_symmetric(&self) -> bool {
        self.x_equals_p
    }
}

/// `M(y) = exp(-σ H_B y)`.
pub fn symplectic_exponential(gen: &SymplecticGenerator, y: f64) -> DMatrix<f64> {
    expm(&(gen.matrix() * y))
}

/// Row 0 of the position block of `M(y)`: `x_0(y) = Σ_k cxx_k x_k + cxp_k p_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeisenbergCoefficients {
    pub y: f64,
    pub cxx: Vec<f64>,
    pub cxp: Vec<f64>,
}

pub fn heisenberg_row(gen: &SymplecticGenerator, y: f64) -> HeisenbergCoefficients {
    let m = symplectic_exponential(gen, y);
    let l = gen.modes();
    HeisenbergCoefficients {
        y,
        cxx: (0..l).map(|k| m[(0, k)]).collect(),
        cxp: (0..l).map(|k| m[(0, l + k)]).collect(),
    }
}

/// Two-point correlations `γ_ab[i,j] = tr[a_i b_j ρ]` for `a, b ∈ {x, p}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    gamma: DMatrix<Complex64>,
    norm: f64,
}

impl CorrelationMatrix {
    pub fn new(gamma: DMatrix<Complex64>) -> Result<Self> {
        let n = gamma.nrows();
        if gamma.ncols() != n || !n.is_multiple_of(2) {
            return Err(Error::DimensionMismatch { expected: n, got: gamma.ncols() });
        }
        let norm = hermitian_norm(&gamma);
        Ok(Self { gamma, norm })
    }

    pub fn from_blocks(
        xx: &DMatrix<Complex64>,
        xp: &DMatrix<Complex64>,
        px: &DMatrix<Complex64>,
        pp: &DMatrix<Complex64>,
    ) -> Result<Self> {
        let l = xx.nrows();
        for b in [xx, xp, px, pp] {
            if b.nrows() != l || b.ncols() != l {
                return Err(Error::DimensionMismatch { expected: l, got: b.nrows() });
            }
        }
        let mut g = DMatrix::zeros(2 * l, 2 * l);
        g.view_mut((0, 0), (l, l)).copy_from(xx);
        g.view_mut((0, l), (l, l)).copy_from(xp);
        g.view_mut((l, 0), (l, l)).copy_from(px);
        g.view_mut((l, l), (l, l)).copy_from(pp);
        Self::new(g)
    }

    pub fn modes(&self) -> usize {
        self.gamma.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.gamma
    }

    /// Operator norm `‖γ‖`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn block(&self, row: usize, col: usize) -> DMatrix<Complex64> {
        let l = self.modes();
        self.gamma.view((row * l, col * l), (l, l)).into_owned()
    }

    /// Mean occupation `⟨n_i⟩ = (⟨x_i²⟩ + ⟨p_i²⟩ - 1)/2` of site `i`.
    pub fn site_occupation(&self, i: usize) -> f64 {
        let l = self.modes();
        0.5 * (self.gamma[(i, i)].re + self.gamma[(l + i, l + i)].re - 1.0)
    }
}

fn hermitian_norm(g: &DMatrix<Complex64>) -> f64 {
    // γ is Hermitian for any state; symmetrize to absorb roundoff
    crate::fock_space::hermitian_norm(g)
}

/// `γ(y) = M(y) γ0 M(y)ᵀ`.
pub fn propagate_gamma(gamma0: &CorrelationMatrix, gen: &SymplecticGenerator, y: f64) -> Result<CorrelationMatrix> {
    if gamma0.modes() != gen.modes() {
        return Err(Error::DimensionMismatch { expected: gen.modes(), got: gamma0.modes() });
    }
    let m = symplectic_exponential(gen, y).map(|v| Complex64::new(v, 0.0));
    CorrelationMatrix::new(&m * gamma0.matrix() * m.transpose())
}

/// Chain vacuum: `γ_xx = γ_pp = 𝟙/2`, `γ_xp = i𝟙/2`, `γ_px = -i𝟙/2`.
pub fn gamma0_vacuum(l: usize) -> Result<CorrelationMatrix> {
    if l == 0 {
        return Err(Error::InvalidInput("need at least one mode".into()));
    }
    let half = DMatrix::from_diagonal_element(l, l, Complex64::new(0.5, 0.0));
    let ihalf = DMatrix::from_diagonal_element(l, l, Complex64::new(0.0, 0.5));
    CorrelationMatrix::from_blocks(&half, &ihalf, &(-&ihalf), &half)
}

/// Product Fock state `|n_0, n_1, …⟩`: `γ_xx = γ_pp = diag(n + ½)`, so
/// `‖γ0‖ = max n_i + 1`.
pub fn gamma0_fock(occupations: &[usize]) -> Result<CorrelationMatrix> {
    if occupations.is_empty() {
        return Err(Error::InvalidInput("need at least one mode".into()));
    }
    let l = occupations.len();
    let diag = DMatrix::from_fn(l, l, |r, k| {
        Complex64::new(if r == k { occupations[r] as f64 + 0.5 } else { 0.0 }, 0.0)
    });
    let ihalf = DMatrix::from_diagonal_element(l, l, Complex64::new(0.0, 0.5));
    CorrelationMatrix::from_blocks(&diag, &ihalf, &(-&ihalf), &diag)
}

/// Correlations in the rescaled phonon coordinates, given blocks in the
/// original chain coordinates: `[[ω γ_xx, γ_xp], [γ_px, γ_pp/ω]]`.
pub fn gamma0_phonon_rescaled(
    xx: &DMatrix<Complex64>,
    xp: &DMatrix<Complex64>,
    px: &DMatrix<Complex64>,
    pp: &DMatrix<Complex64>,
    omega_max: f64,
) -> Result<CorrelationMatrix> {
    if !(omega_max > 0.0) {
        return Err(Error::InvalidInput(format!("omega_max must be > 0, got {omega_max}")));
    }
    CorrelationMatrix::from_blocks(
        &(xx * Complex64::new(omega_max, 0.0)),
        xp,
        px,
        &(pp * Complex64::new(1.0 / omega_max, 0.0)),
    )
}

/// Thermal state of the chain `H_B = ½(xᵀXx + pᵀPp)` at inverse temperature
/// `beta` (`f64::INFINITY` gives the ground state). Requires `X, P > 0`.
///
/// With `Ω = (P^{1/2} X P^{1/2})^{1/2}` the normal-mode frequencies,
/// `γ_xx = ½ P^{1/2} Ω⁻¹ coth(βΩ/2) P^{1/2}`, `γ_pp = ½ P^{-1/2} Ω coth(βΩ/2) P^{-1/2}`
/// and `γ_xp = i𝟙/2`.
pub fn gamma0_thermal(chain: &ChainMapping, beta: f64) -> Result<CorrelationMatrix> {
    if !(beta > 0.0) {
        return Err(Error::InvalidInput(format!("beta must be > 0, got {beta}")));
    }
    let l = chain.len();
    let p_sqrt = sym_function(&chain.p_dense(), |v| v.sqrt())?;
    let p_isqrt = sym_function(&chain.p_dense(), |v| 1.0 / v.sqrt())?;
    let inner = &p_sqrt * chain.x_dense() * &p_sqrt;
    let coth = |w: f64| if beta.is_infinite() { 1.0 } else { 1.0 / (0.5 * beta * w).tanh() };
    let omega_inv_coth = sym_function(&inner, |v| coth(v.sqrt()) / v.sqrt())?;
    let omega_coth = sym_function(&inner, |v| coth(v.sqrt()) * v.sqrt())?;
    let xx = (&p_sqrt * omega_inv_coth * &p_sqrt) * 0.5;
    let pp = (&p_isqrt * omega_coth * &p_isqrt) * 0.5;
    let c = |m: DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
    let ihalf = DMatrix::from_diagonal_element(l, l, Complex64::new(0.0, 0.5));
    CorrelationMatrix::from_blocks(&c(xx), &ihalf, &(-&ihalf), &c(pp))
}

/// Mean occupations of the normal modes at inverse temperature `beta`.
pub fn normal_mode_occupations(chain: &ChainMapping, beta: f64) -> Result<Vec<f64>> {
    let p_sqrt = sym_function(&chain.p_dense(), |v| v.sqrt())?;
    let inner = &p_sqrt * chain.x_dense() * &p_sqrt;
    let eig = SymmetricEigen::new(inner).eigenvalues;
    Ok(eig.iter().map(|v| 1.0 / ((beta * v.max(0.0).sqrt()).exp() - 1.0)).collect())
}

fn sym_function(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|v| *v <= 0.0) {
        return Err(Error::UnsupportedState("thermal correlations need X, P > 0".into()));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundCase {
    XequalsP,
    BothPositive,
    General,
}

impl BoundCase {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::XequalsP => "XequalsP",
            Self::BothPositive => "BothPositive",
            Self::General => "General",
        }
    }
}

/// Constants entering the chain-length bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// Constant used in the bound; always `≥ ‖P_L X_L‖^{1/2}`.
    pub c: f64,
    /// `‖P_L X_L‖^{1/2}` from the tridiagonal norms, rounded outward.
    pub c_computed: f64,
    /// Upper bound on `max{‖X‖, ‖P‖}` of the full chain.
    pub c_prime: f64,
    pub case: BoundCase,
    /// `P ∝ 𝟙`, which doubles the effective chain length.
    pub p_is_identity: bool,
}

impl BoundConstants {
    /// Use the computed `‖P_L X_L‖^{1/2}` instead of the analytic `ω_max`.
    pub fn with_computed_c(mut self) -> Self {
        self.c = self.c_computed;
        self
    }
}

/// Constants for a chain mapping: `c = ω_max` (the analytic value, never
/// below the computed norm), `c' = ω_max`.
pub fn bound_constants(chain: &ChainMapping) -> BoundConstants {
    // P = X or P = ω𝟙, so ‖P_L X_L‖ follows from the tridiagonal norms
    let c_computed = match chain.p() {
        PMatrix::Tridiagonal { .. } => chain.x_norm().max(chain.p_norm()),
        PMatrix::ScalarIdentity(w) => (w.abs() * chain.x_norm()).sqrt(),
    };
    let case = match chain.kind {
        MappingKind::Particle => BoundCase::XequalsP,
        MappingKind::Phonon if chain.is_massive() => BoundCase::BothPositive,
        MappingKind::Phonon => BoundCase::General,
    };
    BoundConstants {
        c: chain.omega_max.max(c_computed),
        c_computed,
        c_prime: chain.omega_max,
        case,
        p_is_identity: chain.kind == MappingKind::Phonon,
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.iter().fold(0.0f64, |a, &v| a.max(v))
}

/// `σ̃ = [[0, 𝟙], [-𝟙, 0]]` of size `2L`.
pub fn canonical_form(l: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(2 * l, 2 * l);
    for i in 0..l {
        s[(i, l + i)] = 1.0;
        s[(l + i, i)] = -1.0;
    }
    s
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [f64; 5] = [
    1.495_585_217_958_292e-2,
    2.539_398_330_063_23e-1,
    9.504_178_996_162_932e-1,
    2.097_847_961_257_068,
    5.371_920_351_148_152,
];

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé
/// approximant of degree 3, 5, 7, 9 or 13 chosen from the 1-norm.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let norm = one_norm(a);
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let low: [(&[f64], f64); 4] = [(&PADE3, THETA[0]), (&PADE5, THETA[1]), (&PADE7, THETA[2]), (&PADE9, THETA[3])];
    for (b, theta) in low {
        if norm <= theta {
            // U = A Σ b_{2k+1} A^{2k},  V = Σ b_{2k} A^{2k}
            let mut u = DMatrix::zeros(n, n);
            let mut v = DMatrix::zeros(n, n);
            let mut pow = ident.clone();
            for k in 0..b.len() / 2 {
                u += &pow * b[2 * k + 1];
                v += &pow * b[2 * k];
                pow = &pow * &a2;
            }
            return pade_solve(a * u, v);
        }
    }
    let squarings = if norm > THETA[4] { (norm / THETA[4]).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(squarings);
    let a1 = a * scale;
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = &PADE13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = &a1 * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    let mut r = pade_solve(u, v);
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

fn pade_solve(u: DMatrix<f64>, v: DMatrix<f64>) -> DMatrix<f64> {
    let num = &v + &u;
    let den = v - u;
    den.lu().solve(&num).expect("Padé denominator is nonsingular for admissible norms")
}
