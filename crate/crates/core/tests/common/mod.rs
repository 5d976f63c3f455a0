//! Dense reference computations shared by the integration tests.
#![allow(dead_code)]

use bathcert::fock_space::{ladder_operators, SpinSystem};
use bathcert::spectral_chain::ChainMapping;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

pub fn c(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

pub fn spin_up() -> Vec<Complex64> {
    vec![c(1.0), c(0.0)]
}

pub fn sigma_z() -> CMat {
    DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

pub fn expi(h: &CMat, t: f64) -> CMat {
    // e^{-iHt} by nalgebra's scaling-and-squaring Padé
    (h * Complex64::new(0.0, -t)).exp()
}

/// Operators of an `L`-site bath with `n_ref` levels per site.
pub struct DenseBath {
    pub n_ref: usize,
    pub l: usize,
    pub x: Vec<CMat>,
    pub p: Vec<CMat>,
}

impl DenseBath {
    pub fn new(l: usize, n_ref: usize) -> Self {
        let (x1, p1) = ladder_operators(n_ref);
        let embed = |op: &CMat, site: usize| {
            let mut acc = DMatrix::from_element(1, 1, c(1.0));
            for i in 0..l {
                let f = if i == site { op.clone() } else { DMatrix::identity(n_ref, n_ref) };
                acc = acc.kronecker(&f);
            }
            acc
        };
        Self { n_ref, l, x: (0..l).map(|i| embed(&x1, i)).collect(), p: (0..l).map(|i| embed(&p1, i)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.n_ref.pow(self.l as u32)
    }

    pub fn occupations(&self, mut idx: usize) -> Vec<usize> {
        let mut n = vec![0; self.l];
        for i in (0..self.l).rev() {
            n[i] = idx % self.n_ref;
            idx /= self.n_ref;
        }
        n
    }

    /// Diagonal projector onto occupations `n_i ≤ m_i`.
    pub fn projector(&self, m: &[usize]) -> CMat {
        DMatrix::from_fn(self.dim(), self.dim(), |r, col| {
            if r == col && self.occupations(r).iter().zip(m).all(|(a, b)| a <= b) {
                c(1.0)
            } else {
                c(0.0)
            }
        })
    }

    /// `½Σ X_ij x_i x_j + P_ij p_i p_j` with the reference operators.
    pub fn hamiltonian(&self, chain: &ChainMapping) -> CMat {
        let (xm, pm) = (chain.x_dense(), chain.p_dense());
        let mut h = DMatrix::from_element(self.dim(), self.dim(), c(0.0));
        for a in 0..self.l {
            for b in 0..self.l {
                if xm[(a, b)] != 0.0 {
                    h += (&self.x[a] * &self.x[b]) * c(0.5 * xm[(a, b)]);
                }
                if pm[(a, b)] != 0.0 {
                    h += (&self.p[a] * &self.p[b]) * c(0.5 * pm[(a, b)]);
                }
            }
        }
        h
    }
}

pub fn kron_sys(sys: &CMat, bath: &CMat) -> CMat {
    sys.kronecker(bath)
}

/// Literal `ε_m(x) = tr[ĥ² e^{-ixH_B^m} W²(x) e^{ixH_B^m} ρ_m(x)]` in a
/// reference space with `n_ref` levels per site, where
/// `W = e^{ixH_B} x_0 e^{-ixH_B} - e^{ixH_B^m} x_0^m e^{-ixH_B^m}`.
pub fn dense_epsilon(sys: &SpinSystem, chain: &ChainMapping, m: &[usize], n_ref: usize, psi_s: &[Complex64], x: f64) -> f64 {
    let l = m.len();
    let chain = chain.truncated(l).unwrap();
    let bath = DenseBath::new(l, n_ref);
    let d = bath.dim();
    let ds = sys.dim();
    let id_s = DMatrix::<Complex64>::identity(ds, ds);
    let id_b = DMatrix::<Complex64>::identity(d, d);
    let proj = bath.projector(m);
    let hb_full = bath.hamiltonian(&chain);
    let hb_m = &proj * &hb_full * &proj;
    let x0 = bath.x[0].clone();
    let x0_m = &proj * &x0 * &proj;
    let h_op = &sys.a_s * c(chain.h_coeff);
    let h_m = kron_sys(&sys.h_s, &(&id_b * &proj)) + kron_sys(&id_s, &hb_m) + kron_sys(&h_op, &x0_m);

    let mut psi0 = DVector::from_element(ds * d, c(0.0));
    for (s, a) in psi_s.iter().enumerate() {
        psi0[s * d] = *a;
    }
    let psi_x = expi(&h_m, x) * psi0;
    let rho = &psi_x * psi_x.adjoint();

    let heis_full = expi(&hb_full, -x) * &x0 * expi(&hb_full, x);
    let heis_m = expi(&hb_m, -x) * &x0_m * expi(&hb_m, x);
    let w = heis_full - heis_m;
    let inner = expi(&hb_m, x) * (&w * &w) * expi(&hb_m, -x);
    let op = kron_sys(&(&h_op * &h_op), &inner);
    (op * rho).trace().re
}
