//! Günther's fixed-point iteration for conformal perturbations of a free map.
//!
//! Given `u = Ψ_t` on a flat torus and a symmetric 2-tensor field `f`, find
//! `v: M → R^q` with
//!
//! ```text
//! tr⊥(∇u·∇v + ∇v·∇u + ∇v·∇v) = tr⊥ f
//! ```
//!
//! by iterating `v ← E(0, −½f + k g) + Q(v)`, where `Q(v)` is the row-space
//! solution of
//!
//! ```text
//! ∇u·Q  = −(Δ−e)⁻¹[Δv·∇v]
//! ∇∇u·Q =  (Δ−e)⁻¹ L(v),   L_ab = ∂_l∂_a v·∂_l∂_b v − Δv·∂_a∂_b v − (e/2) ∂_a v·∂_b v.
//! ```
//!
//! These signs come from `(Δ−e)(∂_a v·∂_b v) = 2L_ab + ∂_a(Δv·∂_b v) + ∂_b(Δv·∂_a v)`
//! on a flat metric; [`verify_conformal`] recomputes the equation directly.

pub mod field;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use field::{FieldRq, PeriodicGrid, Spectral};

use crate::analysis;
use crate::embedding::EmbeddingMap;
use crate::error::{Error, Result};
use crate::freemap::{self, GramRoute, RightInverse};
use crate::geometry;

/// Exponent `(s+α)/2` of the entry condition with `s = 2`, `α = 0.5`.
pub const THETA_EXPONENT: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventConfig {
    pub e: f64,
}

impl ResolventConfig {
    pub fn new(e: f64) -> Result<Self> {
        if e.is_finite() && e > 0.0 {
            Ok(Self { e })
        } else {
            Err(Error::InvalidArgument(format!("resolvent shift must be positive, got {e}")))
        }
    }
}

/// `(Δ − e)⁻¹` applied to every component of a field.
pub fn resolvent_apply(spectral: &Spectral, field: &FieldRq, cfg: ResolventConfig) -> Result<FieldRq> {
    let comps: Vec<Vec<f64>> =
        (0..field.q).into_par_iter().map(|c| spectral.resolvent(field.component(c), cfg.e)).collect::<Result<_>>()?;
    Ok(FieldRq { q: field.q, npts: field.npts, data: comps.concat() })
}

/// Symmetric 2-tensor field in frame components, rows in [`freemap::h_pairs`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymField {
    pub n: usize,
    pub comps: Vec<Vec<f64>>,
}

impl SymField {
    pub fn zeros(n: usize, npts: usize) -> Self {
        Self { n, comps: vec![vec![0.0; npts]; n * (n + 1) / 2] }
    }

    pub fn npts(&self) -> usize {
        self.comps.first().map_or(0, Vec::len)
    }

    pub fn get(&self, a: usize, b: usize) -> &[f64] {
        &self.comps[freemap::h_index(self.n, a, b)]
    }

    pub fn at(&self, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |a, b| self.get(a, b)[p])
    }

    /// `T − (tr T / n) I` pointwise.
    pub fn trace_free(&self) -> Self {
        let n = self.n;
        let npts = self.npts();
        let tr: Vec<f64> = (0..npts).map(|p| (0..n).map(|a| self.get(a, a)[p]).sum::<f64>() / n as f64).collect();
        let mut out = self.clone();
        for a in 0..n {
            let r = freemap::h_index(n, a, a);
            out.comps[r].iter_mut().zip(&tr).for_each(|(v, t)| *v -= t);
        }
        out
    }

    /// Pointwise Frobenius norms.
    pub fn pointwise_norms(&self) -> Vec<f64> {
        (0..self.npts()).map(|p| self.at(p).norm()).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.pointwise_norms().into_iter().fold(0.0, f64::max)
    }

    /// `ε cos(k·θ) · tr⊥(S)` on the points of `grid`.
    pub fn single_mode(grid: &PeriodicGrid, s: &DMatrix<f64>, k: &[i64], eps: f64) -> Result<Self> {
        let n = grid.dims();
        if s.shape() != (n, n) || k.len() != n {
            return Err(Error::InvalidArgument("mode tensor/wavevector dimension mismatch".into()));
        }
        let pts = grid.sample_grid().points;
        let amp: Vec<f64> = pts.iter().map(|x| eps * k.iter().zip(x).map(|(&k, &x)| k as f64 * x).sum::<f64>().cos()).collect();
        let comps = freemap::h_pairs(n)
            .iter()
            .map(|&(a, b)| amp.iter().map(|m| m * 0.5 * (s[(a, b)] + s[(b, a)])).collect())
            .collect();
        Ok(Self { n, comps }.trace_free())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect(),
        }
    }
}

/// Curvature terms `r_ij^n w_n` at one point, all data in one chart:
///
/// ```text
/// 2 R_i^k_j^n ∂_k w_n − R_i^k_j^m Γ^n_km w_n + ∇^k R_ikj^n w_n
///   − g^{kl} R_imj^n Γ^m_lk w_n − R_i^m Γ^n_mj w_n
/// ```
///
/// `riemann` is `R_{ijkl}` (index order as in [`geometry::riemann_at`]),
/// `grad_riemann` is `∇_a R_{ijkl}` at `a·n⁴ + …` (zero when omitted),
/// `dw[(k, n)] = ∂_k w_n`.
pub fn compute_r_terms(
    metric: &geometry::MetricAtPoint,
    riemann: &[f64],
    grad_riemann: Option<&[f64]>,
    w: &[f64],
    dw: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = metric.dim();
    let gi = &metric.g_inv;
    let r = |i: usize, j: usize, k: usize, l: usize| riemann[((i * n + j) * n + k) * n + l];
    // R_{ijk}^n
    let r3 = |i: usize, j: usize, k: usize, m: usize| (0..n).map(|b| r(i, j, k, b) * gi[(b, m)]).sum::<f64>();
    // R_i^k_j^n
    let r22 = |i: usize, k: usize, j: usize, m: usize| (0..n).map(|a| gi[(k, a)] * r3(i, a, j, m)).sum::<f64>();
    let ric_up = &metric.ricci * gi;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                for m in 0..n {
                    let rk = r22(i, k, j, m);
                    s += 2.0 * rk * dw[(k, m)];
                    for l in 0..n {
                        s -= rk * metric.gamma(l, k, m) * w[l];
                    }
                }
            }
            if let Some(dr) = grad_riemann {
                for k in 0..n {
                    for a in 0..n {
                        for m in 0..n {
                            let d: f64 = (0..n).map(|b| dr[(((a * n + i) * n + k) * n + j) * n + b] * gi[(b, m)]).sum();
                            s += gi[(k, a)] * d * w[m];
                        }
                    }
                }
            }
            for k in 0..n {
                for l in 0..n {
                    for m in 0..n {
                        for p in 0..n {
                            s -= gi[(k, l)] * r3(i, m, j, p) * metric.gamma(m, l, k) * w[p];
                        }
                    }
                }
            }
            for m in 0..n {
                for p in 0..n {
                    s -= ric_up[(i, m)] * metric.gamma(p, m, j) * w[p];
                }
            }
            out[(i, j)] = s;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub e: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Entry threshold on `t^{−(s+α)/2} ‖seed‖_sup`.
    pub theta: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { e: 1.0, tol: 1e-13, max_iter: 50, theta: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationState {
    pub l: usize,
    /// Conformal-equation residual of the iterate.
    pub residual: f64,
    pub step_norm: f64,
    pub contraction: Option<f64>,
    pub v_norm: f64,
    /// `‖v_l‖ < ‖seed‖ (1 + 1e−6)`.
    pub bound_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub sup: f64,
    pub holder: f64,
    /// Same equation evaluated as `tr⊥(pullback(u+v) − pullback(u) − f)`.
    pub pullback_sup: f64,
}

/// Solver context on a flat torus: per-point right inverses and the jets of `u`.
pub struct FlatProblem {
    map: EmbeddingMap,
    spectral: Spectral,
    points: Vec<Vec<f64>>,
    ops: Vec<RightInverse>,
    u: FieldRq,
    /// Padded frame derivatives `∂_a u`, `[a][c]`.
    du_padded: Vec<Vec<Vec<f64>>>,
    n: usize,
}

impl std::fmt::Debug for FlatProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlatProblem").field("t", &self.map.t()).field("q", &self.map.q()).field("grid", self.spectral.grid()).finish()
    }
}

impl FlatProblem {
    pub fn new(map: EmbeddingMap, grid_n: usize) -> Result<Self> {
        let model = map
            .provider()
            .model()
            .ok_or_else(|| Error::Spectrum("solver needs an analytic model".into()))?
            .clone();
        if !model.is_flat() {
            return Err(Error::Unsupported(format!("the fixed-point solver runs on flat tori, not {}", model.name())));
        }
        let grid = PeriodicGrid::for_model(&model, grid_n)?;
        let spectral = Spectral::new(&grid);
        let points = grid.sample_grid().points;
        let n = model.dim();
        let route = GramRoute::for_t(map.t());
        let per_point: Vec<(RightInverse, Vec<f64>, Vec<f64>)> = points
            .par_iter()
            .map(|x| {
                let jets = map.jets(x)?;
                let metric = geometry::metric_at(&model, x)?;
                let frame = geometry::orthonormal_frame(&model, x)?;
                let p = freemap::p_from_jets(&jets, &metric, &frame);
                let du: Vec<f64> = (0..n).flat_map(|a| p.row(a).iter().cloned().collect::<Vec<_>>()).collect();
                Ok((RightInverse::new(p, n, route)?, jets.values.clone(), du))
            })
            .collect::<Result<_>>()?;
        let q = map.q();
        let npts = points.len();
        let mut u = FieldRq::zeros(q, npts);
        let mut du: Vec<FieldRq> = (0..n).map(|_| FieldRq::zeros(q, npts)).collect();
        let mut ops = Vec::with_capacity(npts);
        for (p, (op, vals, d)) in per_point.into_iter().enumerate() {
            for c in 0..q {
                u.data[c * npts + p] = vals[c];
                for a in 0..n {
                    du[a].data[c * npts + p] = d[a * q + c];
                }
            }
            ops.push(op);
        }
        let du_padded = du
            .iter()
            .map(|f| (0..q).into_par_iter().map(|c| spectral.pad(&spectral.forward(f.component(c)))).collect())
            .collect();
        Ok(Self { map, spectral, points, ops, u, du_padded, n })
    }

    pub fn map(&self) -> &EmbeddingMap {
        &self.map
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn u(&self) -> &FieldRq {
        &self.u
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn npts(&self) -> usize {
        self.points.len()
    }

    pub fn right_inverse(&self, p: usize) -> &RightInverse {
        &self.ops[p]
    }

    /// `E` applied pointwise to right-hand-side fields (`n(n+3)/2` scalar fields).
    pub fn apply_e(&self, rhs: &[Vec<f64>]) -> FieldRq {
        let q = self.map.q();
        let npts = self.npts();
        let cols: Vec<DVector<f64>> = (0..npts)
            .into_par_iter()
            .map(|p| self.ops[p].apply(&DVector::from_iterator(rhs.len(), rhs.iter().map(|f| f[p]))))
            .collect();
        let mut out = FieldRq::zeros(q, npts);
        for (p, col) in cols.iter().enumerate() {
            for c in 0..q {
                out.data[c * npts + p] = col[c];
            }
        }
        out
    }

    /// `P(u)·v` pointwise, as `n(n+3)/2` scalar fields.
    pub fn apply_p(&self, v: &FieldRq) -> Vec<Vec<f64>> {
        let m = freemap::row_count(self.n);
        let npts = self.npts();
        let rows: Vec<DVector<f64>> = (0..npts).into_par_iter().map(|p| &self.ops[p].p * DVector::from_vec(v.at(p))).collect();
        (0..m).map(|r| rows.iter().map(|x| x[r]).collect()).collect()
    }

    /// `w = E(0, g)` as a field.
    pub fn kernel_generator_field(&self) -> FieldRq {
        let npts = self.npts();
        let mut rhs = vec![vec![0.0; npts]; freemap::row_count(self.n)];
        for a in 0..self.n {
            rhs[self.n + freemap::h_index(self.n, a, a)] = vec![1.0; npts];
        }
        self.apply_e(&rhs)
    }

    /// `E(0, −½f + k g)`.
    pub fn seed(&self, f: &SymField, k: f64) -> FieldRq {
        let n = self.n;
        let npts = self.npts();
        let mut rhs = vec![vec![0.0; npts]; n];
        for (r, &(a, b)) in freemap::h_pairs(n).iter().enumerate() {
            let kg = if a == b { k } else { 0.0 };
            rhs.push(f.comps[r].iter().map(|v| -0.5 * v + kg).collect());
        }
        self.apply_e(&rhs)
    }

    fn padded_derivatives(&self, v: &FieldRq) -> Derivs {
        padded_derivatives(&self.spectral, v)
    }

    pub fn compute_lij(&self, v: &FieldRq, e: f64) -> Result<SymField> {
        compute_lij(&self.spectral, v, e)
    }

    /// Right-hand side fields of `P(u)·Q = (−(Δ−e)⁻¹[Δv·∇v], (Δ−e)⁻¹L)`.
    pub fn q_rhs(&self, v: &FieldRq, e: f64) -> Result<Vec<Vec<f64>>> {
        ResolventConfig::new(e)?;
        let s = &self.spectral;
        let d = self.padded_derivatives(v);
        let mut rhs = Vec::with_capacity(freemap::row_count(self.n));
        for a in 0..self.n {
            let b = s.resolvent(&s.contract_padded(&d.lap, &d.d1[a]), e)?;
            rhs.push(b.into_iter().map(|x| -x).collect());
        }
        for c in lij_from(s, &d, e).comps {
            rhs.push(s.resolvent(&c, e)?);
        }
        Ok(rhs)
    }

    pub fn assemble_q(&self, v: &FieldRq, e: f64) -> Result<FieldRq> {
        Ok(self.apply_e(&self.q_rhs(v, e)?))
    }

    /// `tr⊥[∂_a u·∂_b v + ∂_b u·∂_a v + ∂_a v·∂_b v − f_ab]` and its pullback form.
    pub fn verify_conformal(&self, v: &FieldRq, f: &SymField) -> VerifyReport {
        let s = &self.spectral;
        let n = self.n;
        let d = self.padded_derivatives(v);
        let du = &self.du_padded;
        let sum: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|a| du[a].iter().zip(&d.d1[a]).map(|(x, y)| x.iter().zip(y).map(|(x, y)| x + y).collect()).collect())
            .collect();
        let mut direct = SymField::zeros(n, self.npts());
        let mut pull = SymField::zeros(n, self.npts());
        for (r, &(a, b)) in freemap::h_pairs(n).iter().enumerate() {
            let t1 = s.contract_padded(&du[a], &d.d1[b]);
            let t2 = s.contract_padded(&du[b], &d.d1[a]);
            let t3 = s.contract_padded(&d.d1[a], &d.d1[b]);
            direct.comps[r] = (0..self.npts()).map(|p| t1[p] + t2[p] + t3[p] - f.comps[r][p]).collect();
            let big = s.contract_padded(&sum[a], &sum[b]);
            let base = s.contract_padded(&du[a], &du[b]);
            pull.comps[r] = (0..self.npts()).map(|p| big[p] - base[p] - f.comps[r][p]).collect();
        }
        let direct = direct.trace_free();
        let pull = pull.trace_free();
        let norms: Vec<DMatrix<f64>> = (0..self.npts()).map(|p| direct.at(p)).collect();
        let grid = s.grid();
        let model = geometry::ManifoldModel::flat_torus(&grid.periods).expect("validated periods");
        let holder = analysis::holder_seminorm(
            self.npts(),
            |i, j| model.distance(&self.points[i], &self.points[j]),
            |i, j| (&norms[i] - &norms[j]).norm(),
            0.5 * model.injectivity_radius(),
            0.5,
            analysis::MAX_PAIRS,
        );
        VerifyReport { sup: direct.sup_norm(), holder, pullback_sup: pull.sup_norm() }
    }

    /// `−tr⊥(∇u·∇u)`: the tensor `f` whose solution makes `u + v` conformal.
    pub fn negated_defect(&self) -> SymField {
        let s = &self.spectral;
        let du = &self.du_padded;
        let comps = freemap::h_pairs(self.n)
            .iter()
            .map(|&(a, b)| s.contract_padded(&du[a], &du[b]).into_iter().map(|x| -x).collect())
            .collect();
        SymField { n: self.n, comps }.trace_free()
    }

    /// Iterate `v_{l+1} = E(0, −½f + k g) + Q(v_l)` from `start` (zero by default).
    pub fn fixed_point_solve(
        &self,
        f: &SymField,
        k: f64,
        cfg: &SolverConfig,
        start: Option<&FieldRq>,
    ) -> Result<(Vec<IterationState>, FieldRq)> {
        ResolventConfig::new(cfg.e)?;
        let seed = self.seed(f, k);
        let seed_norm = seed.sup_norm();
        let theta = self.map.t().powf(-THETA_EXPONENT) * seed_norm;
        if theta > cfg.theta {
            return Err(Error::Precondition(format!(
                "entry condition violated: t^(-{THETA_EXPONENT}) ‖seed‖ = {theta:.3e} > {}",
                cfg.theta
            )));
        }
        let mut v = start.cloned().unwrap_or_else(|| FieldRq::zeros(self.map.q(), self.npts()));
        let mut history: Vec<IterationState> = Vec::new();
        let mut prev_step: Option<f64> = None;
        let mut slow = 0;
        for l in 1..=cfg.max_iter {
            let next = seed.add(&self.assemble_q(&v, cfg.e)?);
            let step = next.sub(&v).sup_norm();
            let contraction = prev_step.map(|p| if p > 0.0 { step / p } else { 0.0 });
            let v_norm = next.sup_norm();
            let residual = self.verify_conformal(&next, f).sup;
            history.push(IterationState {
                l,
                residual,
                step_norm: step,
                contraction,
                v_norm,
                bound_ok: v_norm < seed_norm * (1.0 + 1e-6) || seed_norm == 0.0,
            });
            v = next;
            if step <= cfg.tol {
                return Ok((history, v));
            }
            slow = if contraction.is_some_and(|c| c > 0.95) { slow + 1 } else { 0 };
            if slow >= 3 {
                return Err(Error::Divergence(format!("contraction above 0.95 for 3 steps at iteration {l}")));
            }
            prev_step = Some(step);
        }
        Err(Error::MaxIter(cfg.max_iter))
    }

    /// `C = u + v` with its defect report and injectivity.
    pub fn assemble_c(&self, v: &FieldRq, k: f64, f: &SymField) -> ConformalResult {
        let c = self.u.add(v);
        let s = &self.spectral;
        let n = self.n;
        let d = self.padded_derivatives(&c);
        let mut g = SymField::zeros(n, self.npts());
        for (r, &(a, b)) in freemap::h_pairs(n).iter().enumerate() {
            g.comps[r] = s.contract_padded(&d.d1[a], &d.d1[b]);
        }
        let defect = g.trace_free();
        let verify = self.verify_conformal(v, f);
        let trace: Vec<f64> = (0..self.npts()).map(|p| (0..n).map(|a| g.get(a, a)[p]).sum::<f64>() / n as f64).collect();
        ConformalResult {
            k,
            defect_sup: defect.sup_norm(),
            equation_residual: verify.sup,
            trace_min: trace.iter().cloned().fold(f64::INFINITY, f64::min),
            trace_max: trace.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            injectivity: min_pairwise_distance(&c),
            c,
        }
    }
}

fn padded_derivatives(s: &Spectral, v: &FieldRq) -> Derivs {
    let n = s.grid().dims();
    let pairs = freemap::h_pairs(n);
    let spectra: Vec<_> = (0..v.q).into_par_iter().map(|c| s.forward(v.component(c))).collect();
    let build = |order: Vec<usize>| -> Vec<Vec<f64>> {
        spectra.par_iter().map(|f| s.pad(&s.multiply(f, Spectral::derivative_symbol(&order)))).collect()
    };
    let unit = |a: usize| -> Vec<usize> { (0..n).map(|i| usize::from(i == a)).collect() };
    let d1 = (0..n).map(|a| build(unit(a))).collect();
    let d2 = pairs
        .iter()
        .map(|&(a, b)| {
            let mut o = unit(a);
            o[b] += 1;
            build(o)
        })
        .collect();
    let lap = spectra
        .par_iter()
        .map(|f| s.pad(&s.multiply(f, |k| rustfft::num_complex::Complex64::new(-k.iter().map(|x| x * x).sum::<f64>(), 0.0))))
        .collect();
    Derivs { d1, d2, lap }
}

/// `L_ab(v)` in frame components on a flat periodic grid.
pub fn compute_lij(spectral: &Spectral, v: &FieldRq, e: f64) -> Result<SymField> {
    ResolventConfig::new(e)?;
    Ok(lij_from(spectral, &padded_derivatives(spectral, v), e))
}

fn lij_from(s: &Spectral, d: &Derivs, e: f64) -> SymField {
    let n = s.grid().dims();
    let comps = freemap::h_pairs(n)
        .iter()
        .map(|&(a, b)| {
            let mut acc = vec![0.0; s.len()];
            for l in 0..n {
                let x = s.contract_padded(&d.d2[freemap::h_index(n, l, a)], &d.d2[freemap::h_index(n, l, b)]);
                acc.iter_mut().zip(&x).for_each(|(u, v)| *u += v);
            }
            let y = s.contract_padded(&d.lap, &d.d2[freemap::h_index(n, a, b)]);
            let z = s.contract_padded(&d.d1[a], &d.d1[b]);
            acc.iter_mut().zip(y.iter().zip(&z)).for_each(|(u, (y, z))| *u -= y + 0.5 * e * z);
            acc
        })
        .collect();
    SymField { n, comps }
}

struct Derivs {
    d1: Vec<Vec<Vec<f64>>>,
    d2: Vec<Vec<Vec<f64>>>,
    lap: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ConformalResult {
    pub c: FieldRq,
    pub k: f64,
    /// `sup |tr⊥ pullback(C)|`; equals `sup |tr⊥(pullback u) + tr⊥ f|` at a solution.
    pub defect_sup: f64,
    /// `sup |tr⊥(pullback C − pullback u − f)|`.
    pub equation_residual: f64,
    pub trace_min: f64,
    pub trace_max: f64,
    pub injectivity: f64,
}

/// Smallest Euclidean distance between the images of distinct grid points.
pub fn min_pairwise_distance(c: &FieldRq) -> f64 {
    let pts: Vec<Vec<f64>> = (0..c.npts).map(|p| c.at(p)).collect();
    (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut best = f64::INFINITY;
            for j in i + 1..pts.len() {
                let d: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                best = best.min(d);
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min)
        .sqrt()
}
