//! Fock-truncated operators and sparse Hamiltonians.
//!
//! Basis order: the system factor is slowest, then bath sites in chain
//! order; within a site the Fock index runs fastest. A basis index is
//! `s·Π(m_i+1) + Σ_i n_i·stride_i` with `stride_{L-1} = 1`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral_chain::ChainMapping;

pub const DEFAULT_DIMENSION_CAP: usize = 1 << 24;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Per-site Fock cutoffs; site `i` keeps levels `0..=m[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncationSpec {
    m: Vec<usize>,
}

impl TruncationSpec {
    pub fn new(m: Vec<usize>) -> Result<Self> {
        if m.is_empty() {
            return Err(Error::InvalidInput("truncation needs at least one site".into()));
        }
        if let Some(i) = m.iter().position(|&v| v < 1) {
            return Err(Error::InvalidInput(format!("Fock cutoff of site {i} must be >= 1")));
        }
        Ok(Self { m })
    }

    pub fn uniform(l: usize, m: usize) -> Result<Self> {
        Self::new(vec![m; l])
    }

    pub fn l(&self) -> usize {
        self.m.len()
    }

    pub fn m(&self) -> &[usize] {
        &self.m
    }

    pub fn local_dims(&self) -> Vec<usize> {
        self.m.iter().map(|m| m + 1).collect()
    }

    /// `Π(m_i+1)` in exact arithmetic.
    pub fn bath_dim_exact(&self) -> u128 {
        self.m.iter().fold(1u128, |acc, &m| acc.saturating_mul(m as u128 + 1))
    }

    /// Full dimension `dim_s·Π(m_i+1)`, rejected above `cap`.
    pub fn checked_dim(&self, dim_s: usize, cap: usize) -> Result<usize> {
        let dim = self.bath_dim_exact().saturating_mul(dim_s as u128);
        if dim > cap as u128 {
            return Err(Error::DimensionOverflow { dim, cap });
        }
        Ok(dim as usize)
    }

    pub fn bath_dim(&self) -> usize {
        self.bath_dim_exact() as usize
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.l()];
        for i in (0..self.l().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * (self.m[i + 1] + 1);
        }
        s
    }

    /// Fock occupations of a bath basis index.
    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut n = vec![0; self.l()];
        for i in (0..self.l()).rev() {
            let d = self.m[i] + 1;
            n[i] = index % d;
            index /= d;
        }
        n
    }
}

/// Single-site operators projected onto levels `0..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteOperators {
    pub m: usize,
    pub x: DMatrix<Complex64>,
    pub p: DMatrix<Complex64>,
    /// `𝟙_m x² 𝟙_m`.
    pub xx: DMatrix<Complex64>,
    /// `𝟙_m p² 𝟙_m`.
    pub pp: DMatrix<Complex64>,
    /// `𝟙_m x p 𝟙_m`.
    pub xp: DMatrix<Complex64>,
    /// `𝟙_m p x 𝟙_m`.
    pub px: DMatrix<Complex64>,
}

/// Unprojected `x = (a†+a)/√2` and `p = i(a†-a)/√2` on levels `0..n`.
pub fn ladder_operators(n: usize) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let mut x = DMatrix::from_element(n, n, ZERO);
    let mut p = DMatrix::from_element(n, n, ZERO);
    for k in 0..n.saturating_sub(1) {
        let v = ((k + 1) as f64 / 2.0).sqrt();
        x[(k, k + 1)] = Complex64::new(v, 0.0);
        x[(k + 1, k)] = Complex64::new(v, 0.0);
        p[(k, k + 1)] = Complex64::new(0.0, -v);
        p[(k + 1, k)] = Complex64::new(0.0, v);
    }
    (x, p)
}

pub fn site_operators(m: usize) -> SiteOperators {
    // products formed one level above the cutoff, then projected
    let (x, p) = ladder_operators(m + 2);
    let keep = |a: DMatrix<Complex64>| a.view((0, 0), (m + 1, m + 1)).into_owned();
    SiteOperators {
        m,
        xx: keep(&x * &x),
        pp: keep(&p * &p),
        xp: keep(&x * &p),
        px: keep(&p * &x),
        x: keep(x),
        p: keep(p),
    }
}

/// `K^{rs} = 𝟙_m r s 𝟙_m - r^m s^m`, each a multiple of `|m⟩⟨m|`; fields
/// hold the multipliers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerCorrections {
    pub m: usize,
    pub xx: Complex64,
    pub pp: Complex64,
    pub xp: Complex64,
    pub px: Complex64,
}

impl CornerCorrections {
    pub fn matrix(&self, value: Complex64) -> DMatrix<Complex64> {
        let mut k = DMatrix::from_element(self.m + 1, self.m + 1, ZERO);
        k[(self.m, self.m)] = value;
        k
    }

    /// `Σ_{r,s} c_r c_s K^{rs}` multiplier for real coefficients `c_x, c_p`.
    pub fn quadratic_form(&self, cx: f64, cp: f64) -> Complex64 {
        self.xx * (cx * cx) + self.pp * (cp * cp) + self.xp * (cx * cp) + self.px * (cp * cx)
    }
}

pub fn corner_corrections(m: usize) -> CornerCorrections {
    let top = (m + 1) as f64 / 2.0;
    CornerCorrections {
        m,
        xx: Complex64::new(top, 0.0),
        pp: Complex64::new(top, 0.0),
        xp: Complex64::new(0.0, top),
        px: Complex64::new(0.0, -top),
    }
}

/// Finite-dimensional system with coupling operator `A_S`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    pub delta: f64,
    pub h_s: DMatrix<Complex64>,
    pub a_s: DMatrix<Complex64>,
}

impl SpinSystem {
    /// `H_S = -Δσ_x/2`, `A_S = σ_z/2`.
    pub fn spin_boson(delta: f64) -> Self {
        let c = |v: f64| Complex64::new(v, 0.0);
        Self {
            delta,
            h_s: DMatrix::from_row_slice(2, 2, &[ZERO, c(-delta / 2.0), c(-delta / 2.0), ZERO]),
            a_s: DMatrix::from_row_slice(2, 2, &[c(0.5), ZERO, ZERO, c(-0.5)]),
        }
    }

    /// Arbitrary Hermitian `H_S` and `A_S` of equal size.
    pub fn general(h_s: DMatrix<Complex64>, a_s: DMatrix<Complex64>) -> Result<Self> {
        let d = h_s.nrows();
        if h_s.ncols() != d || a_s.nrows() != d || a_s.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: a_s.nrows() });
        }
        Ok(Self { delta: f64::NAN, h_s, a_s })
    }

    pub fn dim(&self) -> usize {
        self.h_s.nrows()
    }

    pub fn a_s_norm(&self) -> f64 {
        hermitian_norm(&self.a_s)
    }

    /// `‖ĥ‖ = |h_coeff|·‖A_S‖`.
    pub fn h_norm(&self, h_coeff: f64) -> f64 {
        h_coeff.abs() * self.a_s_norm()
    }
}

/// Operator norm of the Hermitian part of `a`. Uses the SVD: the symmetric
/// eigensolver can return NaN on block-sparse Hermitian input.
pub fn hermitian_norm(a: &DMatrix<Complex64>) -> f64 {
    let h = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    h.singular_values().iter().fold(0.0f64, |acc, v| if v.is_nan() { f64::NAN } else { acc.max(*v) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HamiltonianParts {
    pub system: bool,
    pub bath: bool,
    pub coupling: bool,
}

/// Hermitian matrix in compressed row storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHamiltonian {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<Complex64>,
    pub parts: HamiltonianParts,
}

impl SparseHamiltonian {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[range.clone()].iter().zip(&self.vals[range]).map(|(&c, &v)| (c as usize, v))
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        y.par_chunks_mut(4096).enumerate().for_each(|(chunk, ys)| {
            let base = chunk * 4096;
            for (k, yk) in ys.iter_mut().enumerate() {
                let r = base + k;
                let mut acc = ZERO;
                for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.vals[idx] * x[self.cols[idx] as usize];
                }
                *yk = acc;
            }
        });
    }

    /// Upper bound on `‖H‖` from the largest absolute row sum.
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim).map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn max_hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                let back = self.row(c).find(|&(cc, _)| cc == r).map(|(_, w)| w).unwrap_or(ZERO);
                worst = worst.max((v - back.conj()).norm());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut d = DMatrix::from_element(self.dim, self.dim, ZERO);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                d[(r, c)] = v;
            }
        }
        d
    }

    /// One line `row col re im` per stored entry, 17 significant digits.
    pub fn to_triplets(&self) -> String {
        let mut out = String::new();
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                let _ = writeln!(out, "{r} {c} {:.16e} {:.16e}", v.re, v.im);
            }
        }
        out
    }
}

type SparseRows = Vec<Vec<(usize, Complex64)>>;

fn sparse_rows(a: &DMatrix<Complex64>) -> SparseRows {
    (0..a.nrows())
        .map(|r| (0..a.ncols()).filter(|&c| a[(r, c)] != ZERO).map(|c| (c, a[(r, c)])).collect())
        .collect()
}

struct LocalTerms {
    /// Per-site single-site matrix `½X_ii xx + ½P_ii pp`, row-sparse.
    onsite: Vec<SparseRows>,
    x: Vec<SparseRows>,
    p: Vec<SparseRows>,
    bonds: Vec<(f64, f64)>,
}

fn local_terms(chain: &ChainMapping, trunc: &TruncationSpec) -> Result<LocalTerms> {
    let l = trunc.l();
    if chain.len() < l {
        return Err(Error::DimensionMismatch { expected: l, got: chain.len() });
    }
    let mut onsite = Vec::with_capacity(l);
    let mut x = Vec::with_capacity(l);
    let mut p = Vec::with_capacity(l);
    for i in 0..l {
        let ops = site_operators(trunc.m()[i]);
        let h = &ops.xx * Complex64::new(0.5 * chain.x_diag()[i], 0.0) + &ops.pp * Complex64::new(0.5 * chain.p_diag(i), 0.0);
        onsite.push(sparse_rows(&h));
        x.push(sparse_rows(&ops.x));
        p.push(sparse_rows(&ops.p));
    }
    let bonds = (0..l.saturating_sub(1)).map(|i| (chain.x_off()[i], chain.p_off(i))).collect();
    Ok(LocalTerms { onsite, x, p, bonds })
}

/// Terms of one row, accumulated in a fixed order and merged by column.
struct RowBuilder {
    entries: Vec<(usize, Complex64)>,
}

impl RowBuilder {
    fn finish(&mut self, cols: &mut Vec<u32>, vals: &mut Vec<Complex64>) {
        self.entries.sort_by_key(|e| e.0);
        let mut k = 0;
        while k < self.entries.len() {
            let c = self.entries[k].0;
            let mut acc = ZERO;
            while k < self.entries.len() && self.entries[k].0 == c {
                acc += self.entries[k].1;
                k += 1;
            }
            if acc != ZERO {
                cols.push(c as u32);
                vals.push(acc);
            }
        }
        self.entries.clear();
    }
}

fn assemble(
    sys: Option<&SpinSystem>,
    dim_s: usize,
    chain: &ChainMapping,
    trunc: &TruncationSpec,
    coupling: bool,
    cap: usize,
) -> Result<SparseHamiltonian> {
    let dim = trunc.checked_dim(dim_s, cap)?;
    if dim > u32::MAX as usize {
        return Err(Error::DimensionOverflow { dim: dim as u128, cap: u32::MAX as usize });
    }
    let terms = local_terms(chain, trunc)?;
    let bath_dim = trunc.bath_dim();
    let strides = trunc.strides();
    let l = trunc.l();
    let sys_rows = sys.map(|s| sparse_rows(&s.h_s));
    let a_rows = sys.map(|s| sparse_rows(&(&s.a_s * Complex64::new(chain.h_coeff, 0.0))));

    let mut row_ptr = Vec::with_capacity(dim + 1);
    row_ptr.push(0);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut rb = RowBuilder { entries: Vec::with_capacity(64) };
    let mut n = vec![0usize; l];
    for s in 0..dim_s {
        n.iter_mut().for_each(|v| *v = 0);
        for b in 0..bath_dim {
            let base = s * bath_dim;
            if let Some(rows) = &sys_rows {
                for &(s2, v) in &rows[s] {
                    rb.entries.push((s2 * bath_dim + b, v));
                }
            }
            for i in 0..l {
                for &(n2, v) in &terms.onsite[i][n[i]] {
                    rb.entries.push((base + b - n[i] * strides[i] + n2 * strides[i], v));
                }
            }
            for (i, &(xo, po)) in terms.bonds.iter().enumerate() {
                let j = i + 1;
                let b0 = b - n[i] * strides[i] - n[j] * strides[j];
                for (rows, coeff) in [(&terms.x, xo), (&terms.p, po)] {
                    if coeff == 0.0 {
                        continue;
                    }
                    for &(ni, vi) in &rows[i][n[i]] {
                        for &(nj, vj) in &rows[j][n[j]] {
                            rb.entries.push((base + b0 + ni * strides[i] + nj * strides[j], vi * vj * coeff));
                        }
                    }
                }
            }
            if coupling {
                if let Some(rows) = &a_rows {
                    let b0 = b - n[0] * strides[0];
                    for &(s2, a) in &rows[s] {
                        for &(n0, v) in &terms.x[0][n[0]] {
                            rb.entries.push((s2 * bath_dim + b0 + n0 * strides[0], a * v));
                        }
                    }
                }
            }
            rb.finish(&mut cols, &mut vals);
            row_ptr.push(vals.len());
            // advance the mixed-radix counter
            for i in (0..l).rev() {
                n[i] += 1;
                if n[i] <= trunc.m()[i] {
                    break;
                }
                n[i] = 0;
            }
        }
    }
    Ok(SparseHamiltonian {
        dim,
        row_ptr,
        cols,
        vals,
        parts: HamiltonianParts { system: sys.is_some(), bath: true, coupling: coupling && sys.is_some() },
    })
}

/// `H_B^m = ½Σ_ij [X_ij 𝟙 x_i x_j 𝟙 + P_ij 𝟙 p_i p_j 𝟙]` on the bath space.
pub fn build_bath_hamiltonian(chain: &ChainMapping, trunc: &TruncationSpec) -> Result<SparseHamiltonian> {
    build_bath_hamiltonian_capped(chain, trunc, DEFAULT_DIMENSION_CAP)
}

pub fn build_bath_hamiltonian_capped(chain: &ChainMapping, trunc: &TruncationSpec, cap: usize) -> Result<SparseHamiltonian> {
    assemble(None, 1, chain, trunc, false, cap)
}

/// `H_m = H_S⊗𝟙 + 𝟙⊗H_B^m + h_coeff·A_S⊗x_0^m`.
pub fn build_total_hamiltonian(sys: &SpinSystem, chain: &ChainMapping, trunc: &TruncationSpec) -> Result<SparseHamiltonian> {
    build_total_hamiltonian_capped(sys, chain, trunc, DEFAULT_DIMENSION_CAP)
}

pub fn build_total_hamiltonian_capped(
    sys: &SpinSystem,
    chain: &ChainMapping,
    trunc: &TruncationSpec,
    cap: usize,
) -> Result<SparseHamiltonian> {
    assemble(Some(sys), sys.dim(), chain, trunc, true, cap)
}

/// `(𝟙_S ⊗ op_site) ψ` for a local `(m_i+1)×(m_i+1)` matrix.
pub fn apply_site_operator(
    psi: &[Complex64],
    trunc: &TruncationSpec,
    site: usize,
    op: &DMatrix<Complex64>,
) -> Vec<Complex64> {
    let d = trunc.m()[site] + 1;
    assert_eq!(op.nrows(), d);
    let stride = trunc.strides()[site];
    let block = d * stride;
    let mut out = vec![ZERO; psi.len()];
    let rows = sparse_rows(op);
    for (src, dst) in psi.chunks(block).zip(out.chunks_mut(block)) {
        for (a, row) in rows.iter().enumerate() {
            for &(b, v) in row {
                for k in 0..stride {
                    dst[a * stride + k] += v * src[b * stride + k];
                }
            }
        }
    }
    out
}

/// `(op_S ⊗ 𝟙_B) ψ`.
pub fn apply_system_operator(psi: &[Complex64], bath_dim: usize, op: &DMatrix<Complex64>) -> Vec<Complex64> {
    let d = op.nrows();
    assert_eq!(psi.len(), d * bath_dim);
    let mut out = vec![ZERO; psi.len()];
    for a in 0..d {
        for b in 0..d {
            let v = op[(a, b)];
            if v == ZERO {
                continue;
            }
            let src = &psi[b * bath_dim..(b + 1) * bath_dim];
            for (o, s) in out[a * bath_dim..(a + 1) * bath_dim].iter_mut().zip(src) {
                *o += v * s;
            }
        }
    }
    out
}

/// Weight of `ψ` on basis states with site `site` at its top level.
pub fn top_level_weight(psi: &[Complex64], trunc: &TruncationSpec, site: usize) -> f64 {
    let m = trunc.m()[site];
    let stride = trunc.strides()[site];
    let block = (m + 1) * stride;
    psi.chunks(block).map(|c| c[m * stride..].iter().map(|z| z.norm_sqr()).sum::<f64>()).sum()
}
