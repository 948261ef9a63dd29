//! Normalized truncated heat-kernel embeddings
//! `Ψ_t = c_norm · (e^{−λ_j t/2} φ_j)_{j=1..q}`, `c_norm = √2 (4π)^{n/4} t^{(n+2)/4}`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::error::{Error, Result};
use crate::geometry::{self, ManifoldModel, SampleGrid};
use crate::spectrum::{JetBatch, SpectrumProvider};

const CHUNK: usize = 8192;

/// `n(n+3)/2`, the number of rows of the jet operator `P`.
pub fn freeness_floor(n: usize) -> usize {
    n * (n + 3) / 2
}

pub fn c_norm(n: usize, t: f64) -> f64 {
    2f64.sqrt() * (4.0 * PI).powf(n as f64 / 4.0) * t.powf((n as f64 + 2.0) / 4.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub rho: f64,
    #[serde(default)]
    pub q_override: Option<usize>,
    /// Round `q` up to the end of the eigenspace it cuts (ignored with `q_override`).
    #[serde(default = "yes")]
    pub complete_shells: bool,
}

fn yes() -> bool {
    true
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self { rho: 1.0, q_override: None, complete_shells: true }
    }
}

impl TruncationPolicy {
    pub fn with_rho(rho: f64) -> Self {
        Self { rho, ..Self::default() }
    }

    pub fn fixed(q: usize) -> Self {
        Self { q_override: Some(q), ..Self::default() }
    }

    /// `q_override`, or `⌈t^{−n/2−ρ}⌉`, checked against the freeness floor.
    pub fn q_min(&self, t: f64, n: usize) -> Result<usize> {
        if !(self.rho > 0.0) {
            return Err(Error::Truncation(format!("rho must be positive, got {}", self.rho)));
        }
        check_t(t)?;
        let q = match self.q_override {
            Some(q) => q,
            None => {
                let q = t.powf(-(n as f64) / 2.0 - self.rho).ceil();
                if q > 1e9 {
                    return Err(Error::Truncation(format!("q = {q:e} is beyond reach")));
                }
                q as usize
            }
        };
        if q < freeness_floor(n) {
            return Err(Error::Truncation(format!(
                "q = {q} below the freeness floor n(n+3)/2 = {}",
                freeness_floor(n)
            )));
        }
        Ok(q)
    }

    /// Number of eigenpairs (including `φ_0`) a provider needs before shell completion.
    pub fn required_count(&self, t: f64, n: usize) -> Result<usize> {
        Ok(self.q_min(t, n)? + 1)
    }
}

fn check_t(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("t must be positive, got {t}")))
    }
}

/// Analytic provider large enough for `policy` at time `t`.
pub fn analytic_provider(model: &ManifoldModel, t: f64, policy: &TruncationPolicy) -> Result<Arc<SpectrumProvider>> {
    let count = policy.required_count(t, model.dim())?;
    Ok(Arc::new(SpectrumProvider::analytic_complete(model, count)?))
}

#[derive(Debug, Clone)]
pub struct EmbeddingMap {
    provider: Arc<SpectrumProvider>,
    t: f64,
    q: usize,
    c_norm: f64,
    /// `c_norm · e^{−λ_j t/2}` for `j = 1..=q`.
    weights: Vec<f64>,
}

pub fn build_embedding(provider: Arc<SpectrumProvider>, t: f64, policy: &TruncationPolicy) -> Result<EmbeddingMap> {
    let n = provider.dim();
    let q_min = policy.q_min(t, n)?;
    if provider.count() < q_min + 1 {
        return Err(Error::Spectrum(format!(
            "embedding needs {} eigenpairs, provider holds {}",
            q_min + 1,
            provider.count()
        )));
    }
    let q = if policy.q_override.is_none() && policy.complete_shells {
        provider.shell_end(q_min) - 1
    } else {
        q_min
    };
    Ok(EmbeddingMap::with_components(provider, t, q))
}

impl EmbeddingMap {
    fn with_components(provider: Arc<SpectrumProvider>, t: f64, q: usize) -> Self {
        let c = c_norm(provider.dim(), t);
        let weights = (1..=q).map(|j| c * (-provider.lambda(j) * t / 2.0).exp()).collect();
        Self { provider, t, q, c_norm: c, weights }
    }

    /// Same map restricted to its first `q` components, bypassing the policy.
    pub fn truncated(&self, q: usize) -> Self {
        Self::with_components(self.provider.clone(), self.t, q.min(self.q))
    }

    pub fn provider(&self) -> &Arc<SpectrumProvider> {
        &self.provider
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.provider.dim()
    }

    pub fn c_norm(&self) -> f64 {
        self.c_norm
    }

    pub fn component_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Jets of the `q` components of `Ψ` at `x`.
    pub fn jets(&self, x: &[f64]) -> Result<JetBatch> {
        let mut b = self.provider.eval_jets(x, 1..self.q + 1)?;
        b.scale(&self.weights);
        Ok(b)
    }

    pub fn grid_jets(&self, grid: &SampleGrid) -> Result<Vec<JetBatch>> {
        grid.points.par_iter().map(|x| self.jets(x)).collect()
    }

    /// `Σ_j ∂_iΨ^j ∂_kΨ^j` in chart components, summed chunkwise so that `q` can be large.
    pub fn pullback_metric(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut g = DMatrix::zeros(n, n);
        let mut start = 1;
        while start <= self.q {
            let end = (start + CHUNK).min(self.q + 1);
            let b = self.provider.eval_jets(x, start..end)?;
            for j in 0..b.len() {
                let w2 = self.weights[start - 1 + j].powi(2);
                for i in 0..n {
                    for k in i..n {
                        g[(i, k)] += w2 * b.grad(j, i) * b.grad(j, k);
                    }
                }
            }
            start = end;
        }
        for i in 0..n {
            for k in 0..i {
                g[(i, k)] = g[(k, i)];
            }
        }
        Ok(g)
    }
}

/// `G − (tr_g G / n) g`.
pub fn conformal_defect(big_g: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let g_inv = g.clone().try_inverse().ok_or_else(|| Error::Singular("metric".into()))?;
    Ok(big_g - g * trace_factor(big_g, &g_inv))
}

/// `tr_g T / n`.
pub fn trace_factor(t: &DMatrix<f64>, g_inv: &DMatrix<f64>) -> f64 {
    (g_inv * t).trace() / t.nrows() as f64
}

/// Pointwise g-norm of a covariant 2-tensor (Frobenius norm in an orthonormal frame).
pub fn tensor_norm(t: &DMatrix<f64>, g_inv: &DMatrix<f64>) -> f64 {
    let a = g_inv * t;
    (&a * &a).trace().max(0.0).sqrt()
}

#[derive(Debug, Clone)]
pub struct PullbackReport {
    pub pullback: Vec<DMatrix<f64>>,
    pub trace_factor: Vec<f64>,
    pub defect: Vec<DMatrix<f64>>,
    pub defect_sup: f64,
    pub defect_holder: f64,
}

/// Pullback, trace factor and defect of `map` on `grid`, measured against `reference`.
pub fn pullback_report(map: &EmbeddingMap, reference: &ManifoldModel, grid: &SampleGrid, alpha: f64) -> Result<PullbackReport> {
    let rows: Vec<(DMatrix<f64>, f64, DMatrix<f64>, DMatrix<f64>)> = grid
        .points
        .par_iter()
        .map(|x| {
            let m = geometry::metric_at(reference, x)?;
            let big = map.pullback_metric(x)?;
            let tf = trace_factor(&big, &m.g_inv);
            let d = &big - &m.g * tf;
            let frame = geometry::orthonormal_frame(reference, x)?;
            let df = geometry::to_frame(&frame, &d);
            Ok((big, tf, d, df))
        })
        .collect::<Result<_>>()?;
    let defect_sup = rows.iter().map(|r| r.3.norm()).fold(0.0, f64::max);
    let radius = 0.5 * reference.injectivity_radius();
    let defect_holder = analysis::holder_seminorm(
        grid.len(),
        |i, j| reference.distance(&grid.points[i], &grid.points[j]),
        |i, j| (&rows[i].3 - &rows[j].3).norm(),
        radius,
        alpha,
        analysis::MAX_PAIRS,
    );
    Ok(PullbackReport {
        pullback: rows.iter().map(|r| r.0.clone()).collect(),
        trace_factor: rows.iter().map(|r| r.1).collect(),
        defect: rows.into_iter().map(|r| r.2).collect(),
        defect_sup,
        defect_holder,
    })
}

/// `h₁ = −A₁ + (tr_g A₁ / n) g + η₁ g`.
pub fn h1_solve(a1: &DMatrix<f64>, eta1: f64, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let g_inv = g.clone().try_inverse().ok_or_else(|| Error::Singular("metric".into()))?;
    Ok(-a1 + g * (trace_factor(a1, &g_inv) + eta1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSpec {
    pub l: usize,
    /// Constant trace functions `η_1, …, η_l`.
    pub eta: Vec<f64>,
}

impl CorrectionSpec {
    pub fn first_order(eta1: f64) -> Self {
        Self { l: 1, eta: vec![eta1] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.eta.len() != self.l {
            return Err(Error::InvalidArgument(format!("correction l = {} with {} η values", self.l, self.eta.len())));
        }
        if self.l > 1 {
            return Err(Error::Unsupported("only the first-order correction h₁ is available natively".into()));
        }
        Ok(())
    }
}

/// `h₁` in orthonormal-frame components; checked to be the same at every probe point.
pub fn first_order_correction(model: &ManifoldModel, eta1: f64) -> Result<DMatrix<f64>> {
    let grid = geometry::sample_grid(model, 4)?;
    let mut first: Option<DMatrix<f64>> = None;
    for x in grid.points.iter().step_by(7) {
        let m = geometry::metric_at(model, x)?;
        let h = h1_solve(&geometry::a1_tensor(model, x)?, eta1, &m.g)?;
        let hf = geometry::to_frame(&geometry::orthonormal_frame(model, x)?, &h);
        match &first {
            None => first = Some(hf),
            Some(f) if (f - &hf).norm() > 1e-12 => {
                return Err(Error::Unsupported("h₁ is not constant in the orthonormal frame".into()))
            }
            _ => {}
        }
    }
    Ok(first.expect("grid is non-empty"))
}

/// Per-block metric factors `1 + t·h₁` realizing `g + t h₁`.
pub fn block_factors(model: &ManifoldModel, h1_frame: &DMatrix<f64>, t: f64) -> Result<Vec<f64>> {
    let n = model.dim();
    let blocks = model.blocks();
    let block_of = |i: usize| blocks.iter().position(|b| b.contains(&i)).expect("index in a block");
    for i in 0..n {
        for k in 0..n {
            if i != k && h1_frame[(i, k)].abs() > 1e-12 {
                return Err(Error::Unsupported("h₁ is not block-isotropic".into()));
            }
            if block_of(i) == block_of(k) && (h1_frame[(i, i)] - h1_frame[(k, k)]).abs() > 1e-12 {
                return Err(Error::Unsupported("h₁ is not block-isotropic".into()));
            }
        }
    }
    blocks
        .iter()
        .map(|b| {
            let f = 1.0 + t * h1_frame[(b.start, b.start)];
            if f > 0.0 {
                Ok(f)
            } else {
                Err(Error::Precondition(format!("degenerate metric scale {f} at t = {t}")))
            }
        })
        .collect()
}

/// Model and provider for `g(t) = g + t h₁`, in the chart of `model`.
pub fn corrected_model(
    model: &ManifoldModel,
    h1_frame: &DMatrix<f64>,
    t: f64,
    count: usize,
) -> Result<(ManifoldModel, SpectrumProvider)> {
    let factors = block_factors(model, h1_frame, t)?;
    let base = SpectrumProvider::analytic_complete(model, count)?;
    Ok((model.scaled(&factors)?, base.rescaled(&factors)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectRow {
    pub t: f64,
    pub q: usize,
    pub defect_sup: f64,
    pub defect_holder: f64,
    pub trace_min: f64,
    pub trace_max: f64,
}

pub fn defect_scan(
    model: &ManifoldModel,
    t_grid: &[f64],
    policy: &TruncationPolicy,
    correction: Option<&CorrectionSpec>,
    resolution: usize,
    alpha: f64,
) -> Result<Vec<DefectRow>> {
    if t_grid.is_empty() {
        return Err(Error::InvalidArgument("empty t grid".into()));
    }
    if t_grid.iter().any(|&t| !(t > 0.0 && t < 1.0)) || t_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("t grid must be strictly decreasing in (0, 1)".into()));
    }
    let h1 = match correction {
        Some(c) => {
            c.validate()?;
            Some(first_order_correction(model, c.eta[0])?)
        }
        None => None,
    };
    let grid = geometry::sample_grid(model, resolution)?;
    t_grid
        .iter()
        .map(|&t| {
            let count = policy.required_count(t, model.dim())?;
            let provider = match &h1 {
                Some(h) => corrected_model(model, h, t, count)?.1,
                None => SpectrumProvider::analytic_complete(model, count)?,
            };
            let map = build_embedding(Arc::new(provider), t, policy)?;
            let rep = pullback_report(&map, model, &grid, alpha)?;
            Ok(DefectRow {
                t,
                q: map.q(),
                defect_sup: rep.defect_sup,
                defect_holder: rep.defect_holder,
                trace_min: rep.trace_factor.iter().cloned().fold(f64::INFINITY, f64::min),
                trace_max: rep.trace_factor.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub t: f64,
    pub q: usize,
    pub extent: usize,
    pub tail: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `max_x c_norm² Σ_{j>q} e^{−λ_j t} |∇φ_j|²_g` over the provider's remaining pairs,
/// compared with `exp(−t^{−ρ/n})`.
pub fn tail_bound_check(provider: &SpectrumProvider, t: f64, policy: &TruncationPolicy, grid: &SampleGrid) -> Result<TailReport> {
    let model = provider
        .model()
        .ok_or_else(|| Error::Spectrum("tail check needs a provider with a model".into()))?;
    let n = model.dim();
    let bound = (-t.powf(-policy.rho / n as f64)).exp();
    let count = provider.count();
    let q_min = policy.q_min(t, n)?;
    let q = if policy.q_override.is_some() {
        q_min.min(count - 1)
    } else {
        if count < q_min + 1 {
            return Err(Error::Spectrum(format!("provider holds {count} pairs, q = {q_min}")));
        }
        if policy.complete_shells {
            provider.shell_end(q_min) - 1
        } else {
            q_min
        }
    };
    let extent = count - 1 - q;
    if extent > 0 && extent < 3 * q {
        return Err(Error::Spectrum(format!(
            "tail check needs the spectrum to extend to 4q = {}, provider holds {}",
            4 * q,
            count - 1
        )));
    }
    let c2 = c_norm(n, t).powi(2);
    let tail = if extent == 0 {
        0.0
    } else {
        grid.points
            .par_iter()
            .map(|x| {
                let m = geometry::metric_at(model, x)?;
                let b = provider.eval_jets(x, q + 1..count)?;
                let mut s = 0.0;
                for j in 0..b.len() {
                    let lam = provider.lambda(q + 1 + j);
                    let mut grad2 = 0.0;
                    for a in 0..n {
                        grad2 += m.g_inv[(a, a)] * b.grad(j, a).powi(2);
                    }
                    s += (-lam * t).exp() * grad2;
                }
                Ok(c2 * s)
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max)
    };
    Ok(TailReport { t, q, extent, tail, bound, pass: tail <= bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normalization_constant() {
        assert_relative_eq!(c_norm(1, 1.0), 2f64.sqrt() * (4.0 * PI).powf(0.25), epsilon = 1e-15);
    }

    #[test]
    fn policy_arithmetic() {
        assert_eq!(TruncationPolicy::default().q_min(0.1, 1).unwrap(), 32);
        assert!(TruncationPolicy::fixed(0).q_min(0.1, 1).is_err());
        assert!(TruncationPolicy::default().q_min(0.0, 1).is_err());
        assert!(TruncationPolicy::with_rho(-1.0).q_min(0.1, 1).is_err());
    }

    #[test]
    fn defect_formula() {
        let g = DMatrix::<f64>::identity(2, 2);
        let e = 1e-3;
        let d = conformal_defect(&DMatrix::from_diagonal(&nalgebra::dvector![1.0 + e, 1.0]), &g).unwrap();
        assert_relative_eq!(d[(0, 0)], e / 2.0, epsilon = 1e-15);
        assert_relative_eq!(d[(1, 1)], -e / 2.0, epsilon = 1e-15);
        assert!(conformal_defect(&g, &DMatrix::zeros(2, 2)).is_err());
    }
}
