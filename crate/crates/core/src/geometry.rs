//! Analytic testbed manifolds.
//!
//! Every model carries closed-form metric, Christoffel, Riemann and Ricci data
//! in a fixed chart:
//!
//! * `FlatTorus` and `Circle` use angle coordinates `θ_i ∈ [0, 2π)` with
//!   `g = diag((L_i / 2π)²)`, so the square torus of period `2π` has `g = I`.
//! * `RoundSphere2` uses polar coordinates `(θ, φ)`, `g = diag(R², R² sin²θ)`.
//!   The poles are outside the chart.
//! * `ProductSphereCircle` is the sphere chart followed by the circle angle `ψ`.
//!
//! Curvature follows `R_{ijkl} = K (g_il g_jk − g_ik g_jl)` on a constant
//! curvature factor, with `Ric_ik = g^{ab} R_{aikb}`.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum ManifoldKind {
    FlatTorus { periods: Vec<f64> },
    Circle { length: f64 },
    RoundSphere2 { radius: f64 },
    ProductSphereCircle { radius: f64, length: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ManifoldKind", into = "ManifoldKind")]
pub struct ManifoldModel {
    kind: ManifoldKind,
    dim: usize,
}

impl TryFrom<ManifoldKind> for ManifoldModel {
    type Error = Error;

    fn try_from(kind: ManifoldKind) -> Result<Self> {
        ManifoldModel::new(kind)
    }
}

impl From<ManifoldModel> for ManifoldKind {
    fn from(m: ManifoldModel) -> Self {
        m.kind
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{name} must be positive, got {v}")))
    }
}

impl ManifoldModel {
    pub fn new(kind: ManifoldKind) -> Result<Self> {
        let dim = match &kind {
            ManifoldKind::FlatTorus { periods } => {
                if periods.is_empty() {
                    return Err(Error::InvalidModel("torus needs at least one period".into()));
                }
                for &p in periods {
                    positive("period", p)?;
                }
                periods.len()
            }
            ManifoldKind::Circle { length } => {
                positive("length", *length)?;
                1
            }
            ManifoldKind::RoundSphere2 { radius } => {
                positive("radius", *radius)?;
                2
            }
            ManifoldKind::ProductSphereCircle { radius, length } => {
                positive("radius", *radius)?;
                positive("length", *length)?;
                3
            }
        };
        Ok(Self { kind, dim })
    }

    pub fn flat_torus(periods: &[f64]) -> Result<Self> {
        Self::new(ManifoldKind::FlatTorus { periods: periods.to_vec() })
    }

    /// Square torus `(R/2πZ)^n`, the standard flat testbed.
    pub fn square_torus(n: usize) -> Result<Self> {
        Self::flat_torus(&vec![2.0 * PI; n])
    }

    pub fn circle(length: f64) -> Result<Self> {
        Self::new(ManifoldKind::Circle { length })
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        Self::new(ManifoldKind::RoundSphere2 { radius })
    }

    pub fn product(radius: f64, length: f64) -> Result<Self> {
        Self::new(ManifoldKind::ProductSphereCircle { radius, length })
    }

    pub fn kind(&self) -> &ManifoldKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ManifoldKind::FlatTorus { .. } => "FlatTorus",
            ManifoldKind::Circle { .. } => "Circle",
            ManifoldKind::RoundSphere2 { .. } => "RoundSphere2",
            ManifoldKind::ProductSphereCircle { .. } => "ProductSphereCircle",
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.kind, ManifoldKind::FlatTorus { .. } | ManifoldKind::Circle { .. })
    }

    /// Coordinate ranges of the Riemannian product factors.
    pub fn blocks(&self) -> Vec<Range<usize>> {
        match self.kind {
            ManifoldKind::ProductSphereCircle { .. } => vec![0..2, 2..3],
            _ => vec![0..self.dim],
        }
    }

    /// Circle lengths of the periodic coordinates (tori and circles only).
    pub fn periods(&self) -> Option<Vec<f64>> {
        match &self.kind {
            ManifoldKind::FlatTorus { periods } => Some(periods.clone()),
            ManifoldKind::Circle { length } => Some(vec![*length]),
            _ => None,
        }
    }

    pub fn volume(&self) -> f64 {
        match &self.kind {
            ManifoldKind::FlatTorus { periods } => periods.iter().product(),
            ManifoldKind::Circle { length } => *length,
            ManifoldKind::RoundSphere2 { radius } => 4.0 * PI * radius * radius,
            ManifoldKind::ProductSphereCircle { radius, length } => 4.0 * PI * radius * radius * length,
        }
    }

    /// Injectivity radius of the model metric.
    pub fn injectivity_radius(&self) -> f64 {
        match &self.kind {
            ManifoldKind::FlatTorus { periods } => periods.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0,
            ManifoldKind::Circle { length } => length / 2.0,
            ManifoldKind::RoundSphere2 { radius } => PI * radius,
            ManifoldKind::ProductSphereCircle { radius, length } => (PI * radius).min(length / 2.0),
        }
    }

    /// Model whose metric is `factor_b · g` on block `b`, in the same chart.
    pub fn scaled(&self, factors: &[f64]) -> Result<Self> {
        let blocks = self.blocks().len();
        if factors.len() != blocks {
            return Err(Error::InvalidArgument(format!(
                "{} scale factors given for {} blocks",
                factors.len(),
                blocks
            )));
        }
        for &f in factors {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::InvalidArgument(format!("scale factor must be positive, got {f}")));
            }
        }
        let s = |i: usize| factors[i].sqrt();
        let kind = match &self.kind {
            ManifoldKind::FlatTorus { periods } => ManifoldKind::FlatTorus {
                periods: periods.iter().map(|p| p * s(0)).collect(),
            },
            ManifoldKind::Circle { length } => ManifoldKind::Circle { length: length * s(0) },
            ManifoldKind::RoundSphere2 { radius } => ManifoldKind::RoundSphere2 { radius: radius * s(0) },
            ManifoldKind::ProductSphereCircle { radius, length } => ManifoldKind::ProductSphereCircle {
                radius: radius * s(0),
                length: length * s(1),
            },
        };
        Self::new(kind)
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Domain(format!("expected {} coordinates, got {}", self.dim, x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite coordinate in {x:?}")));
        }
        if matches!(self.kind, ManifoldKind::RoundSphere2 { .. } | ManifoldKind::ProductSphereCircle { .. }) {
            let theta = x[0];
            if !(theta > 0.0 && theta < PI) || theta.sin() < 1e-12 {
                return Err(Error::Domain(format!("polar angle {theta} not in (0, π)")));
            }
        }
        Ok(())
    }

    /// Geodesic distance between chart points.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let wrap = |d: f64| {
            let r = d.rem_euclid(2.0 * PI);
            r.min(2.0 * PI - r)
        };
        let sphere = |r: f64| {
            let c = x[0].cos() * y[0].cos() + x[0].sin() * y[0].sin() * (x[1] - y[1]).cos();
            r * c.clamp(-1.0, 1.0).acos()
        };
        match &self.kind {
            ManifoldKind::FlatTorus { periods } => periods
                .iter()
                .enumerate()
                .map(|(i, p)| (p / (2.0 * PI) * wrap(x[i] - y[i])).powi(2))
                .sum::<f64>()
                .sqrt(),
            ManifoldKind::Circle { length } => length / (2.0 * PI) * wrap(x[0] - y[0]),
            ManifoldKind::RoundSphere2 { radius } => sphere(*radius),
            ManifoldKind::ProductSphereCircle { radius, length } => {
                let ds = sphere(*radius);
                let dc = length / (2.0 * PI) * wrap(x[2] - y[2]);
                (ds * ds + dc * dc).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct MetricAtPoint {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    /// `Γ^k_ij` stored at `k * n * n + i * n + j`.
    pub christoffel: Vec<f64>,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
}

impl MetricAtPoint {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn gamma(&self, k: usize, i: usize, j: usize) -> f64 {
        let n = self.dim();
        self.christoffel[k * n * n + i * n + j]
    }
}

fn diag_metric(model: &ManifoldModel, x: &[f64]) -> Vec<f64> {
    match model.kind() {
        ManifoldKind::FlatTorus { periods } => periods.iter().map(|p| (p / (2.0 * PI)).powi(2)).collect(),
        ManifoldKind::Circle { length } => vec![(length / (2.0 * PI)).powi(2)],
        ManifoldKind::RoundSphere2 { radius } => {
            let r2 = radius * radius;
            vec![r2, r2 * x[0].sin().powi(2)]
        }
        ManifoldKind::ProductSphereCircle { radius, length } => {
            let r2 = radius * radius;
            vec![r2, r2 * x[0].sin().powi(2), (length / (2.0 * PI)).powi(2)]
        }
    }
}

/// Metric components without the domain check, for finite-difference probes.
pub fn metric_components(model: &ManifoldModel, x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag_metric(model, x)))
}

pub fn metric_at(model: &ManifoldModel, x: &[f64]) -> Result<MetricAtPoint> {
    model.check_point(x)?;
    let n = model.dim();
    let d = diag_metric(model, x);
    let g = DMatrix::from_fn(n, n, |i, j| if i == j { d[i] } else { 0.0 });
    let g_inv = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / d[i] } else { 0.0 });
    let mut christoffel = vec![0.0; n * n * n];
    let mut ricci = DMatrix::zeros(n, n);
    let mut scalar = 0.0;
    if let ManifoldKind::RoundSphere2 { radius } | ManifoldKind::ProductSphereCircle { radius, .. } = model.kind() {
        let (s, c) = x[0].sin_cos();
        // Γ^θ_φφ and Γ^φ_θφ = Γ^φ_φθ
        christoffel[n + 1] = -s * c;
        christoffel[n * n + 1] = c / s;
        christoffel[n * n + n] = c / s;
        let k = 1.0 / (radius * radius);
        ricci[(0, 0)] = k * d[0];
        ricci[(1, 1)] = k * d[1];
        scalar = 2.0 * k;
    }
    Ok(MetricAtPoint { g, g_inv, christoffel, ricci, scalar })
}

/// Fully covariant Riemann tensor `R_{ijkl}` at `i*n³ + j*n² + k*n + l`.
pub fn riemann_at(model: &ManifoldModel, x: &[f64]) -> Result<Vec<f64>> {
    let m = metric_at(model, x)?;
    let n = model.dim();
    let mut r = vec![0.0; n.pow(4)];
    if let ManifoldKind::RoundSphere2 { radius } | ManifoldKind::ProductSphereCircle { radius, .. } = model.kind() {
        let k = 1.0 / (radius * radius);
        for i in 0..2 {
            for j in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        r[((i * n + j) * n + a) * n + b] = k * (m.g[(i, b)] * m.g[(j, a)] - m.g[(i, a)] * m.g[(j, b)]);
                    }
                }
            }
        }
    }
    Ok(r)
}

/// `A₁ = (1/3)(½ S g − Ric)` in chart components.
pub fn a1_tensor(model: &ManifoldModel, x: &[f64]) -> Result<DMatrix<f64>> {
    let m = metric_at(model, x)?;
    Ok((&m.g * (0.5 * m.scalar) - &m.ricci) / 3.0)
}

/// Columns are the chart components of an orthonormal frame `e_a`.
pub fn orthonormal_frame(model: &ManifoldModel, x: &[f64]) -> Result<DMatrix<f64>> {
    model.check_point(x)?;
    let d = diag_metric(model, x);
    let n = d.len();
    Ok(DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / d[i].sqrt() } else { 0.0 }))
}

/// Frame components `T(e_a, e_b)` of a covariant 2-tensor.
pub fn to_frame(frame: &DMatrix<f64>, t: &DMatrix<f64>) -> DMatrix<f64> {
    frame.transpose() * t * frame
}

/// Chart components of a covariant 2-tensor given in frame components.
pub fn from_frame(frame: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = frame
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("orthonormal frame".into()))?;
    Ok(inv.transpose() * t * inv)
}

#[derive(Debug, Clone)]
pub struct SampleGrid {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Tensor-product shape, first axis slowest.
    pub shape: Vec<usize>,
}

impl SampleGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = z;
        nodes[m - 1 - i] = -z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

fn periodic_axis(res: usize) -> Vec<f64> {
    (0..res).map(|i| 2.0 * PI * i as f64 / res as f64).collect()
}

/// Quadrature grid whose weights sum to the model volume.
///
/// Periodic axes are uniform with `res` points starting at 0. The sphere uses
/// `res` Gauss–Legendre nodes in `cos θ` times `2·res` uniform longitudes.
pub fn sample_grid(model: &ManifoldModel, res: usize) -> Result<SampleGrid> {
    if res < 4 {
        return Err(Error::Resolution(res));
    }
    let mut axes: Vec<Vec<f64>> = Vec::new();
    let mut axis_w: Vec<Vec<f64>> = Vec::new();
    let sphere_axes = |r: f64, axes: &mut Vec<Vec<f64>>, axis_w: &mut Vec<Vec<f64>>| {
        let (z, w) = gauss_legendre(res);
        // ascending θ
        axes.push(z.iter().map(|c| c.acos()).collect());
        axis_w.push(w.iter().map(|w| w * r * r).collect());
        axes.push(periodic_axis(2 * res));
        axis_w.push(vec![2.0 * PI / (2 * res) as f64; 2 * res]);
    };
    match model.kind() {
        ManifoldKind::FlatTorus { periods } => {
            for p in periods {
                axes.push(periodic_axis(res));
                axis_w.push(vec![p / res as f64; res]);
            }
        }
        ManifoldKind::Circle { length } => {
            axes.push(periodic_axis(res));
            axis_w.push(vec![length / res as f64; res]);
        }
        ManifoldKind::RoundSphere2 { radius } => sphere_axes(*radius, &mut axes, &mut axis_w),
        ManifoldKind::ProductSphereCircle { radius, length } => {
            sphere_axes(*radius, &mut axes, &mut axis_w);
            axes.push(periodic_axis(res));
            axis_w.push(vec![length / res as f64; res]);
        }
    }
    let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
    let total: usize = shape.iter().product();
    let mut points = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..total {
        points.push(idx.iter().enumerate().map(|(a, &i)| axes[a][i]).collect());
        weights.push(idx.iter().enumerate().map(|(a, &i)| axis_w[a][i]).product());
        for a in (0..shape.len()).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    Ok(SampleGrid { points, weights, shape })
}
