//! Discrete norms, log–log order fits and scaling diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guenther::field::Spectral;

/// Cap on the number of point pairs a Hölder quotient inspects.
pub const MAX_PAIRS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub sup: f64,
    /// `derivative_sups[k − 1] = max_{|β| = k} sup |∂^β f|`.
    pub derivative_sups: Vec<f64>,
    pub holder: f64,
    pub s: usize,
    pub alpha: f64,
}

impl NormEstimate {
    /// `sup + Σ derivative sups + holder`.
    pub fn total(&self) -> f64 {
        self.sup + self.derivative_sups.iter().sum::<f64>() + self.holder
    }
}

/// `max |f(x_i) − f(x_j)| / d(x_i, x_j)^α` over pairs with `0 < d < radius`.
///
/// With more than `max_pairs` pairs, only every `stride`-th point is used as an
/// anchor (paired with all others), keeping the count under the cap.
pub fn holder_seminorm<D, F>(npts: usize, dist: D, diff: F, radius: f64, alpha: f64, max_pairs: usize) -> f64
where
    D: Fn(usize, usize) -> f64 + Sync,
    F: Fn(usize, usize) -> f64 + Sync,
{
    if npts < 2 {
        return 0.0;
    }
    let all = npts * (npts - 1) / 2;
    let (stride, symmetric) = if all <= max_pairs { (1, true) } else { (((npts * (npts - 1)) as f64 / max_pairs as f64).ceil() as usize, false) };
    (0..npts)
        .into_par_iter()
        .step_by(stride)
        .map(|i| {
            let mut best = 0.0f64;
            let others: Box<dyn Iterator<Item = usize>> = if symmetric { Box::new(i + 1..npts) } else { Box::new((0..npts).filter(move |&j| j != i)) };
            for j in others {
                let d = dist(i, j);
                if d > 0.0 && d < radius {
                    best = best.max(diff(i, j) / d.powf(alpha));
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

fn multi_indices(dims: usize, order: usize) -> Vec<Vec<usize>> {
    if dims == 1 {
        return vec![vec![order]];
    }
    (0..=order)
        .flat_map(|k| {
            multi_indices(dims - 1, order - k).into_iter().map(move |mut rest| {
                rest.insert(0, k);
                rest
            })
        })
        .collect()
}

fn periodic_distance(spectral: &Spectral) -> impl Fn(usize, usize) -> f64 + Sync + '_ {
    let grid = spectral.grid();
    move |i, j| {
        let (a, b) = (grid.unravel(i), grid.unravel(j));
        a.iter()
            .zip(&b)
            .zip(&grid.periods)
            .map(|((&x, &y), l)| {
                let d = (x as i64 - y as i64).unsigned_abs() as usize;
                let d = d.min(grid.n - d) as f64 * l / grid.n as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// `C^{s,α}` surrogate of an `R^q`-valued field on a periodic grid.
///
/// `components[c]` holds the grid values of component `c`; pointwise
/// magnitudes use the Euclidean norm over components. Pairs are restricted to
/// distances below half the injectivity radius.
pub fn holder_norm(spectral: &Spectral, components: &[Vec<f64>], s: usize, alpha: f64) -> Result<NormEstimate> {
    if s > 4 {
        return Err(Error::InvalidArgument(format!("derivative order {s} exceeds the supported 4")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("Hölder exponent must lie in (0, 1), got {alpha}")));
    }
    let grid = spectral.grid();
    let dims = grid.dims();
    let npts = grid.len();
    let pointwise_sup = |fields: &[Vec<f64>]| -> f64 {
        (0..npts)
            .map(|p| fields.iter().map(|f| f[p] * f[p]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    };
    let spectra: Vec<_> = components.par_iter().map(|c| spectral.forward(c)).collect();
    let deriv = |order: &[usize]| -> Vec<Vec<f64>> {
        spectra
            .par_iter()
            .map(|f| spectral.inverse(&spectral.multiply(f, Spectral::derivative_symbol(order))))
            .collect()
    };
    let sup = pointwise_sup(components);
    let mut derivative_sups = Vec::with_capacity(s);
    let mut top: Vec<Vec<Vec<f64>>> = Vec::new();
    for k in 1..=s {
        let mut m = 0.0f64;
        for beta in multi_indices(dims, k) {
            let d = deriv(&beta);
            m = m.max(pointwise_sup(&d));
            if k == s {
                top.push(d);
            }
        }
        derivative_sups.push(m);
    }
    if s == 0 {
        top.push(components.to_vec());
    }
    let radius = 0.5 * grid.periods.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0;
    let dist = periodic_distance(spectral);
    let holder = top
        .iter()
        .map(|d| {
            holder_seminorm(
                npts,
                &dist,
                |i, j| d.iter().map(|f| (f[i] - f[j]).powi(2)).sum::<f64>().sqrt(),
                radius,
                alpha,
                MAX_PAIRS,
            )
        })
        .fold(0.0, f64::max);
    Ok(NormEstimate { sup, derivative_sups, holder, s, alpha })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub t_values: Vec<f64>,
    pub y_values: Vec<f64>,
}

/// Least-squares fit of `log y = slope · log t + intercept`.
pub fn fit_order(t: &[f64], y: &[f64]) -> Result<OrderFit> {
    if t.len() != y.len() || t.len() < 3 {
        return Err(Error::InvalidArgument("fit needs at least 3 paired samples".into()));
    }
    if t.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidArgument("fit samples must be positive".into()));
    }
    let x: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let z: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let mz = z.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("fit needs distinct t values".into()));
    }
    let sxz: f64 = x.iter().zip(&z).map(|(a, b)| (a - mx) * (b - mz)).sum();
    let slope = sxz / sxx;
    let intercept = mz - slope * mx;
    let ss_res: f64 = x.iter().zip(&z).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let ss_tot: f64 = z.iter().map(|b| (b - mz).powi(2)).sum();
    let r_squared = if ss_tot <= f64::EPSILON * z.iter().map(|b| b * b).sum::<f64>().max(1.0) {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(OrderFit { slope, intercept, r_squared, t_values: t.to_vec(), y_values: y.to_vec() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    pub name: String,
    pub exponent: f64,
    pub fit: OrderFit,
    /// `slope ≥ −exponent − tolerance`.
    pub pass: bool,
}

/// Compare the fitted decay of measured norms with an upper-bound exponent.
pub fn scaling_check(name: &str, t: &[f64], norms: &[f64], exponent: f64, tolerance: f64) -> Result<ScalingCheck> {
    let fit = fit_order(t, norms)?;
    let pass = fit.slope >= -exponent - tolerance;
    Ok(ScalingCheck { name: name.to_string(), exponent, fit, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub t: f64,
    pub q: usize,
    pub psi_norm: f64,
    pub e_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub checks: Vec<ScalingCheck>,
}

/// Norm sweeps of `Ψ_t` (`C^{1,α}`) and of `E(Ψ_t)` (`C^{2,α}`, max over seeded
/// random probes) on a flat model, fitted against the exponents `α/2` and `(2+α)/2`.
pub fn scaling_diagnostics(
    model: &crate::geometry::ManifoldModel,
    t_grid: &[f64],
    policy: &crate::embedding::TruncationPolicy,
    grid_n: usize,
    alpha: f64,
    probes: usize,
    seed: u64,
) -> Result<ScalingReport> {
    use crate::embedding::{analytic_provider, build_embedding};
    use crate::guenther::FlatProblem;
    use rand::{Rng, SeedableRng};

    if !model.is_flat() {
        return Err(Error::Unsupported("scaling diagnostics need a flat model".into()));
    }
    let n = model.dim();
    let m = crate::freemap::row_count(n);
    let grid = crate::guenther::PeriodicGrid::for_model(model, grid_n)?;
    let spectral = Spectral::new(&grid);
    let pts = grid.sample_grid().points;
    // Low-mode trigonometric probes, identical for every t.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let probes: Vec<Vec<Vec<f64>>> = (0..probes.max(1))
        .map(|_| {
            (0..m)
                .map(|_| {
                    let modes: Vec<(Vec<f64>, f64, f64)> = (0..4)
                        .map(|_| {
                            let k: Vec<f64> = (0..n).map(|_| rng.gen_range(-2i32..=2) as f64).collect();
                            (k, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                        })
                        .collect();
                    pts.iter()
                        .map(|x| {
                            modes
                                .iter()
                                .map(|(k, a, b)| {
                                    let ph: f64 = k.iter().zip(&grid.periods).zip(x).map(|((k, l), x)| k * x * 2.0 * std::f64::consts::PI / l).sum();
                                    a * ph.cos() + b * ph.sin()
                                })
                                .sum()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let probe_norms: Vec<f64> = probes.iter().map(|r| holder_norm(&spectral, r, 2, alpha).map(|e| e.total())).collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let provider = analytic_provider(model, t, policy)?;
        let map = build_embedding(provider, t, policy)?;
        let q = map.q();
        let problem = FlatProblem::new(map, grid_n)?;
        let psi_norm = holder_norm(&spectral, &components(problem.u()), 1, alpha)?.total();
        let mut e_norm = 0.0f64;
        for (rhs, rn) in probes.iter().zip(&probe_norms) {
            let v = problem.apply_e(rhs);
            e_norm = e_norm.max(holder_norm(&spectral, &components(&v), 2, alpha)?.total() / rn);
        }
        rows.push(ScalingRow { t, q, psi_norm, e_norm });
    }
    let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let checks = vec![
        scaling_check("psi_c1_alpha", &ts, &rows.iter().map(|r| r.psi_norm).collect::<Vec<_>>(), alpha / 2.0, 0.25)?,
        scaling_check("e_c2_alpha", &ts, &rows.iter().map(|r| r.e_norm).collect::<Vec<_>>(), (2.0 + alpha) / 2.0, 0.25)?,
    ];
    Ok(ScalingReport { rows, checks })
}

fn components(f: &crate::guenther::FieldRq) -> Vec<Vec<f64>> {
    (0..f.q).map(|c| f.component(c).to_vec()).collect()
}
