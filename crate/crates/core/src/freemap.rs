//! Pointwise jet operators of a map `u: M → R^q`.
//!
//! `P(u)(x)` stacks the first covariant derivatives `∇_a u` (`n` rows) over the
//! second covariant derivatives `∇_a∇_b u`, `a ≤ b` (`n(n+1)/2` rows), all in
//! the orthonormal frame at `x`. Second-order rows list the off-diagonal pairs
//! lexicographically, then the diagonal ones in ascending order. `P_c(u)`
//! replaces each diagonal row by its traceless part.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMap;
use crate::error::{Error, Result};
use crate::geometry::{self, MetricAtPoint};
use crate::spectrum::JetBatch;

/// Relative singular-value cutoff for rank decisions.
pub const RANK_TOL: f64 = 1e-8;

/// `n(n+3)/2`.
pub fn row_count(n: usize) -> usize {
    n * (n + 3) / 2
}

/// Frame index pairs of the second-order block, in row order.
pub fn h_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut v: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    v.extend((0..n).map(|a| (a, a)));
    v
}

/// Row of `∇_a∇_b` inside the second-order block.
pub fn h_index(n: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    if a == b {
        n * (n - 1) / 2 + a
    } else {
        a * n - a * (a + 1) / 2 + (b - a - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhsVector {
    pub f_part: Vec<f64>,
    pub h_part: Vec<f64>,
}

impl RhsVector {
    pub fn zeros(n: usize) -> Self {
        Self { f_part: vec![0.0; n], h_part: vec![0.0; n * (n + 1) / 2] }
    }

    /// From a 1-form and a symmetric tensor given in frame components.
    pub fn from_parts(f: &[f64], h: &DMatrix<f64>) -> Self {
        let n = f.len();
        Self { f_part: f.to_vec(), h_part: h_pairs(n).iter().map(|&(a, b)| h[(a, b)]).collect() }
    }

    /// `(0, g)` in frame components.
    pub fn metric(n: usize) -> Self {
        Self::from_parts(&vec![0.0; n], &DMatrix::identity(n, n))
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.f_part.len() + self.h_part.len(), self.f_part.iter().chain(&self.h_part).cloned())
    }

    pub fn from_vector(n: usize, v: &DVector<f64>) -> Self {
        Self { f_part: v.as_slice()[..n].to_vec(), h_part: v.as_slice()[n..].to_vec() }
    }

    /// Frame trace of the tensor block.
    pub fn h_trace(&self) -> f64 {
        let n = self.f_part.len();
        self.h_part[n * (n - 1) / 2..].iter().sum()
    }
}

/// `P(u)(x)`: `n(n+3)/2 × q`.
#[derive(Debug, Clone)]
pub struct JetMatrixP {
    pub n: usize,
    pub mat: DMatrix<f64>,
}

/// `P_c(u)(x)`: as [`JetMatrixP`] with traceless diagonal rows.
#[derive(Debug, Clone)]
pub struct JetMatrixPc {
    pub n: usize,
    pub mat: DMatrix<f64>,
}

/// `P` from coordinate jets, the metric data and the frame at the point.
pub fn p_from_jets(jets: &JetBatch, metric: &MetricAtPoint, frame: &DMatrix<f64>) -> DMatrix<f64> {
    let n = jets.n;
    let q = jets.len();
    let pairs = h_pairs(n);
    let mut p = DMatrix::zeros(row_count(n), q);
    let mut cov = vec![0.0; n * n];
    for j in 0..q {
        for a in 0..n {
            p[(a, j)] = (0..n).map(|i| frame[(i, a)] * jets.grad(j, i)).sum();
        }
        for i in 0..n {
            for k in 0..n {
                let gamma: f64 = (0..n).map(|l| metric.gamma(l, i, k) * jets.grad(j, l)).sum();
                cov[i * n + k] = jets.hess(j, i, k) - gamma;
            }
        }
        for (r, &(a, b)) in pairs.iter().enumerate() {
            let mut s = 0.0;
            for i in 0..n {
                for k in 0..n {
                    s += frame[(i, a)] * frame[(k, b)] * cov[i * n + k];
                }
            }
            p[(n + r, j)] = s;
        }
    }
    p
}

/// Replace diagonal second-order rows `r_k` by `r_k − (1/n) Σ_p r_p`.
pub fn pc_from_p(p: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let start = n + n * (n - 1) / 2;
    let mean = p.rows(start, n).row_sum() / n as f64;
    let mut pc = p.clone();
    for k in 0..n {
        let row = pc.row(start + k) - &mean;
        pc.set_row(start + k, &row);
    }
    pc
}

fn map_model(map: &EmbeddingMap) -> Result<&geometry::ManifoldModel> {
    map.provider()
        .model()
        .ok_or_else(|| Error::Spectrum("jet operators need a provider with a model".into()))
}

pub fn assemble_p(map: &EmbeddingMap, x: &[f64]) -> Result<JetMatrixP> {
    let model = map_model(map)?;
    let metric = geometry::metric_at(model, x)?;
    let frame = geometry::orthonormal_frame(model, x)?;
    Ok(JetMatrixP { n: model.dim(), mat: p_from_jets(&map.jets(x)?, &metric, &frame) })
}

pub fn assemble_pc(map: &EmbeddingMap, x: &[f64]) -> Result<JetMatrixPc> {
    let p = assemble_p(map, x)?;
    Ok(JetMatrixPc { n: p.n, mat: pc_from_p(&p.mat, p.n) })
}

pub fn gram(p: &DMatrix<f64>) -> DMatrix<f64> {
    p * p.transpose()
}

/// `D·G·D` with `D = diag(1, …, 1, √(2t), …, √(2t))`: both scale groups of
/// `gram(P)` brought to order one.
pub fn normalized_gram(g: &DMatrix<f64>, n: usize, t: f64) -> DMatrix<f64> {
    let s = (2.0 * t).sqrt();
    let d = DVector::from_fn(g.nrows(), |i, _| if i < n { 1.0 } else { s });
    DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| d[i] * g[(i, j)] * d[j])
}

fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let inv = m.clone().try_inverse().ok_or_else(|| Error::Singular(what.into()))?;
    if inv.iter().all(|v| v.is_finite()) {
        Ok(inv)
    } else {
        Err(Error::Singular(what.into()))
    }
}

/// Inverse of `[[A1, bᵀ], [b, A2]]` as `[[A1⁻¹, cᵀ], [c, A2⁻¹]] · diag((I + bᵀc)⁻¹, (I + bcᵀ)⁻¹)`
/// with `c = −A2⁻¹ b A1⁻¹`.
pub fn block_inverse(a1: &DMatrix<f64>, a2: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n1, n2) = (a1.nrows(), a2.nrows());
    if b.shape() != (n2, n1) {
        return Err(Error::InvalidArgument(format!("coupling block has shape {:?}, expected ({n2}, {n1})", b.shape())));
    }
    let a1i = invert(a1, "A1")?;
    let a2i = invert(a2, "A2")?;
    let c = -(&a2i * b * &a1i);
    let btc = b.transpose() * &c;
    let bct = b * c.transpose();
    if btc.clone().svd(false, false).singular_values.max() >= 1.0 {
        return Err(Error::Singular("coupling block is not contractive".into()));
    }
    let s1 = invert(&(DMatrix::identity(n1, n1) + btc), "I + bᵀc")?;
    let s2 = invert(&(DMatrix::identity(n2, n2) + bct), "I + bcᵀ")?;
    let mut out = DMatrix::zeros(n1 + n2, n1 + n2);
    out.view_mut((0, 0), (n1, n1)).copy_from(&(&a1i * &s1));
    out.view_mut((0, n1), (n1, n2)).copy_from(&(c.transpose() * &s2));
    out.view_mut((n1, 0), (n2, n1)).copy_from(&(&c * &s1));
    out.view_mut((n1, n1), (n2, n2)).copy_from(&(&a2i * &s2));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GramRoute {
    Dense,
    Block,
}

impl GramRoute {
    /// Block route below `t = 0.05`.
    pub fn for_t(t: f64) -> Self {
        if t < 0.05 {
            Self::Block
        } else {
            Self::Dense
        }
    }
}

/// `E = Pᵀ (P Pᵀ)⁻¹` at one point, applied without forming the `q × m` product.
#[derive(Debug, Clone)]
pub struct RightInverse {
    pub n: usize,
    pub p: DMatrix<f64>,
    pub gram_inv: DMatrix<f64>,
}

impl RightInverse {
    pub fn new(p: DMatrix<f64>, n: usize, route: GramRoute) -> Result<Self> {
        let g = gram(&p);
        let gram_inv = match route {
            GramRoute::Dense => invert(&g, "gram(P)")?,
            GramRoute::Block => {
                let m = g.nrows();
                let a1 = g.view((0, 0), (n, n)).into_owned();
                let a2 = g.view((n, n), (m - n, m - n)).into_owned();
                let b = g.view((n, 0), (m - n, n)).into_owned();
                block_inverse(&a1, &a2, &b)?
            }
        };
        Ok(Self { n, p, gram_inv })
    }

    pub fn at(map: &EmbeddingMap, x: &[f64]) -> Result<Self> {
        let p = assemble_p(map, x)?;
        Self::new(p.mat, p.n, GramRoute::for_t(map.t()))
    }

    pub fn q(&self) -> usize {
        self.p.ncols()
    }

    pub fn apply(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.p.tr_mul(&(&self.gram_inv * rhs))
    }

    pub fn apply_rhs(&self, rhs: &RhsVector) -> DVector<f64> {
        self.apply(&rhs.to_vector())
    }

    /// `w = E(0, g)`.
    pub fn kernel_generator(&self) -> DVector<f64> {
        self.apply_rhs(&RhsVector::metric(self.n))
    }

    /// `E_c(0, h) = E(0, h) + k·w` for a frame-traceless tensor block `h`.
    pub fn apply_ec(&self, h_part: &[f64], k: f64) -> Result<DVector<f64>> {
        let n = self.n;
        let rhs = RhsVector { f_part: vec![0.0; n], h_part: h_part.to_vec() };
        let scale = h_part.iter().map(|v| v.abs()).fold(1.0, f64::max);
        if rhs.h_trace().abs() > 1e-8 * scale {
            return Err(Error::Precondition(format!("tensor block has trace {:.3e}", rhs.h_trace())));
        }
        Ok(self.apply_rhs(&rhs) + self.kernel_generator() * k)
    }
}

pub fn apply_e(map: &EmbeddingMap, x: &[f64], rhs: &RhsVector) -> Result<DVector<f64>> {
    Ok(RightInverse::at(map, x)?.apply_rhs(rhs))
}

pub fn kernel_generator(map: &EmbeddingMap, x: &[f64]) -> Result<DVector<f64>> {
    Ok(RightInverse::at(map, x)?.kernel_generator())
}

pub fn apply_ec(map: &EmbeddingMap, x: &[f64], h_part: &[f64], k: f64) -> Result<DVector<f64>> {
    RightInverse::at(map, x)?.apply_ec(h_part, k)
}

/// `Ξ_n(σ)`: ones on the diagonal, `σ` elsewhere.
pub fn xi_matrix(n: usize, sigma: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { sigma })
}

/// All-ones `J_n`.
pub fn j_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_element(n, n, 1.0)
}

/// `Ξ_n(σ)⁻¹ = (1/(1−σ)) (I − σ/(1+(n−1)σ) J)` for `σ ∈ (−1/(n−1), 1)`.
pub fn xi_inverse(n: usize, sigma: f64) -> Result<DMatrix<f64>> {
    let lower = if n > 1 { -1.0 / (n as f64 - 1.0) } else { f64::NEG_INFINITY };
    if !(sigma > lower && sigma < 1.0) {
        return Err(Error::InvalidArgument(format!("σ = {sigma} outside ({lower}, 1) for n = {n}")));
    }
    let c = sigma / (1.0 + (n as f64 - 1.0) * sigma);
    Ok((DMatrix::identity(n, n) - j_matrix(n) * c) / (1.0 - sigma))
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let top = s.first().cloned().unwrap_or(0.0);
    s.iter().filter(|&&v| v > rel_tol * top).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_layout() {
        assert_eq!(h_pairs(3), vec![(0, 1), (0, 2), (1, 2), (0, 0), (1, 1), (2, 2)]);
        for n in 1..6 {
            for (r, &(a, b)) in h_pairs(n).iter().enumerate() {
                assert_eq!(h_index(n, a, b), r);
                assert_eq!(h_index(n, b, a), r);
            }
        }
    }

    #[test]
    fn xi_inverse_domain() {
        assert!(xi_inverse(3, -0.5).is_err());
        assert!(xi_inverse(3, 1.0).is_err());
        assert!(xi_inverse(1, -10.0).is_ok());
    }
}
