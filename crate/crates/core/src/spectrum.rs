//! Laplace–Beltrami eigenpairs with value/gradient/Hessian jets.
//!
//! Convention: `Δφ_j = −λ_j φ_j`, eigenvalues counted with multiplicity,
//! `L²(dvol_g)`-orthonormal real bases. Within an eigenspace the order is the
//! derived `Ord` of [`Mode`]: constant before cosine before sine, lattice
//! vectors lexicographic, spherical harmonics by `(l, m)` with `m = −l..=l`.
//! Real spherical harmonics are `√2 P̃_l^m cos(mφ)` for `m > 0` and
//! `√2 P̃_l^|m| sin(|m|φ)` for `m < 0`, with fully normalized `P̃`
//! (Condon–Shortley phase included).

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ManifoldKind, ManifoldModel, SampleGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Trig {
    Const,
    Cos,
    Sin,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    Torus { k: Vec<i64>, trig: Trig },
    Sphere { l: usize, m: i64 },
    Product { l: usize, m: i64, k: i64, trig: Trig },
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub j: usize,
    pub lambda: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JetEvaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

/// Jets of a contiguous run of eigenfunctions at one point.
#[derive(Debug, Clone)]
pub struct JetBatch {
    pub n: usize,
    pub values: Vec<f64>,
    /// `∂_i φ_j` at `j * n + i`.
    pub grads: Vec<f64>,
    /// `∂_i∂_k φ_j` at `(j * n + i) * n + k`.
    pub hess: Vec<f64>,
}

impl JetBatch {
    fn with_capacity(n: usize, q: usize) -> Self {
        Self {
            n,
            values: Vec::with_capacity(q),
            grads: Vec::with_capacity(q * n),
            hess: Vec::with_capacity(q * n * n),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn grad(&self, j: usize, i: usize) -> f64 {
        self.grads[j * self.n + i]
    }

    pub fn hess(&self, j: usize, i: usize, k: usize) -> f64 {
        self.hess[(j * self.n + i) * self.n + k]
    }

    pub fn jet(&self, j: usize) -> JetEvaluation {
        let n = self.n;
        JetEvaluation {
            value: self.values[j],
            gradient: self.grads[j * n..(j + 1) * n].to_vec(),
            hessian: DMatrix::from_row_slice(n, n, &self.hess[j * n * n..(j + 1) * n * n]),
        }
    }

    /// Multiply jet `j` by `s[j]`.
    pub fn scale(&mut self, s: &[f64]) {
        let n = self.n;
        for (j, &f) in s.iter().enumerate() {
            self.values[j] *= f;
            self.grads[j * n..(j + 1) * n].iter_mut().for_each(|v| *v *= f);
            self.hess[j * n * n..(j + 1) * n * n].iter_mut().for_each(|v| *v *= f);
        }
    }
}

/// Tabulated eigenfunctions on a fixed point set.
#[derive(Debug, Clone)]
pub struct ExternalTable {
    pub grid: SampleGrid,
    pub tolerance: f64,
    /// Per eigenpair: values (one per point), gradients (`n` per point),
    /// Hessians (`n²` per point, row-major).
    pub values: Vec<Vec<f64>>,
    pub gradients: Vec<Vec<f64>>,
    pub hessians: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub enum Backing {
    Analytic,
    External(Box<ExternalTable>),
}

#[derive(Debug, Clone)]
pub struct SpectrumProvider {
    model: Option<ManifoldModel>,
    n: usize,
    backing: Backing,
    pairs: Vec<EigenPair>,
}

fn same_shell(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-11 * a.abs().max(b.abs()).max(1.0)
}

fn torus_modes(scales: &[f64], lambda_max: f64, out: &mut Vec<(f64, Mode)>) {
    // scales[i] = 2π / L_i
    let n = scales.len();
    let bounds: Vec<i64> = scales.iter().map(|s| (lambda_max.sqrt() / s).floor() as i64).collect();
    let mut k: Vec<i64> = bounds.iter().map(|b| -b).collect();
    loop {
        let lambda: f64 = k.iter().zip(scales).map(|(&k, s)| (k as f64 * s).powi(2)).sum();
        let first = k.iter().find(|&&v| v != 0).copied();
        if lambda <= lambda_max {
            match first {
                None => out.push((0.0, Mode::Torus { k: k.clone(), trig: Trig::Const })),
                Some(f) if f > 0 => {
                    out.push((lambda, Mode::Torus { k: k.clone(), trig: Trig::Cos }));
                    out.push((lambda, Mode::Torus { k: k.clone(), trig: Trig::Sin }));
                }
                _ => {}
            }
        }
        let mut a = n;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            if k[a] < bounds[a] {
                k[a] += 1;
                break;
            }
            k[a] = -bounds[a];
        }
    }
}

fn sphere_modes(radius: f64, lambda_max: f64) -> Vec<(f64, usize, i64)> {
    let mut out = Vec::new();
    let mut l = 0usize;
    loop {
        let lam = (l * (l + 1)) as f64 / (radius * radius);
        if lam > lambda_max {
            return out;
        }
        for m in -(l as i64)..=(l as i64) {
            out.push((lam, l, m));
        }
        l += 1;
    }
}

/// All analytic modes with `λ ≤ lambda_max`, in provider order.
pub fn enumerate_modes(model: &ManifoldModel, lambda_max: f64) -> Vec<(f64, Mode)> {
    let mut out = Vec::new();
    match model.kind() {
        ManifoldKind::FlatTorus { periods } => {
            let s: Vec<f64> = periods.iter().map(|p| 2.0 * PI / p).collect();
            torus_modes(&s, lambda_max, &mut out);
        }
        ManifoldKind::Circle { length } => torus_modes(&[2.0 * PI / length], lambda_max, &mut out),
        ManifoldKind::RoundSphere2 { radius } => {
            out.extend(sphere_modes(*radius, lambda_max).into_iter().map(|(lam, l, m)| (lam, Mode::Sphere { l, m })));
        }
        ManifoldKind::ProductSphereCircle { radius, length } => {
            let s = 2.0 * PI / length;
            for (ls, l, m) in sphere_modes(*radius, lambda_max) {
                let mut k = 0i64;
                loop {
                    let lam = ls + (k as f64 * s).powi(2);
                    if lam > lambda_max {
                        break;
                    }
                    if k == 0 {
                        out.push((lam, Mode::Product { l, m, k, trig: Trig::Const }));
                    } else {
                        out.push((lam, Mode::Product { l, m, k, trig: Trig::Cos }));
                        out.push((lam, Mode::Product { l, m, k, trig: Trig::Sin }));
                    }
                    k += 1;
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut start = 0;
    while start < out.len() {
        let mut end = start + 1;
        while end < out.len() && same_shell(out[end - 1].0, out[end].0) {
            end += 1;
        }
        out[start..end].sort_by(|a, b| a.1.cmp(&b.1));
        start = end;
    }
    out
}

/// Fully normalized associated Legendre functions and θ-derivatives.
struct Legendre {
    p: Vec<f64>,
    dp: Vec<f64>,
    d2p: Vec<f64>,
}

impl Legendre {
    fn idx(l: usize, m: usize) -> usize {
        l * (l + 1) / 2 + m
    }

    fn new(lmax: usize, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let size = Self::idx(lmax, lmax) + 1;
        let mut p = vec![0.0; size];
        p[0] = 1.0 / (4.0 * PI).sqrt();
        for m in 1..=lmax {
            let mf = m as f64;
            p[Self::idx(m, m)] = -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * p[Self::idx(m - 1, m - 1)];
        }
        for m in 0..lmax {
            p[Self::idx(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * c * p[Self::idx(m, m)];
        }
        for m in 0..=lmax {
            for l in (m + 2)..=lmax {
                let (lf, mf) = (l as f64, m as f64);
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
                p[Self::idx(l, m)] = a * (c * p[Self::idx(l - 1, m)] - b * p[Self::idx(l - 2, m)]);
            }
        }
        let mut dp = vec![0.0; size];
        let mut d2p = vec![0.0; size];
        for l in 0..=lmax {
            for m in 0..=l {
                let (lf, mf) = (l as f64, m as f64);
                let prev = if l > m { p[Self::idx(l - 1, m)] } else { 0.0 };
                let coef = ((2.0 * lf + 1.0) * (lf * lf - mf * mf) / (2.0 * lf - 1.0)).sqrt();
                let cur = p[Self::idx(l, m)];
                let d = if l == 0 { 0.0 } else { (lf * c * cur - coef * prev) / s };
                dp[Self::idx(l, m)] = d;
                d2p[Self::idx(l, m)] = -(c / s) * d - (lf * (lf + 1.0) - mf * mf / (s * s)) * cur;
            }
        }
        Self { p, dp, d2p }
    }
}

/// Real spherical harmonic jets on the unit sphere in `(θ, φ)`:
/// value, `[∂θ, ∂φ]`, `[θθ, θφ, φφ]`.
type SphereJet = (f64, [f64; 2], [f64; 3]);

fn sphere_table(lmax: usize, theta: f64, phi: f64) -> Vec<SphereJet> {
    let leg = Legendre::new(lmax, theta);
    let mut out = Vec::with_capacity((lmax + 1) * (lmax + 1));
    for l in 0..=lmax {
        for m in -(l as i64)..=(l as i64) {
            let am = m.unsigned_abs() as usize;
            let i = Legendre::idx(l, am);
            let (p, dp, d2p) = (leg.p[i], leg.dp[i], leg.d2p[i]);
            if m == 0 {
                out.push((p, [dp, 0.0], [d2p, 0.0, 0.0]));
                continue;
            }
            let mf = am as f64;
            let r2 = std::f64::consts::SQRT_2;
            let (sn, cs) = (mf * phi).sin_cos();
            // f = cos or sin of mφ, f' and f''
            let (f, df, d2f) = if m > 0 { (cs, -mf * sn, -mf * mf * cs) } else { (sn, mf * cs, -mf * mf * sn) };
            out.push((r2 * p * f, [r2 * dp * f, r2 * p * df], [r2 * d2p * f, r2 * dp * df, r2 * p * d2f]));
        }
    }
    out
}

fn circle_jet(k: i64, trig: Trig, x: f64, length: f64) -> (f64, f64, f64) {
    let kf = k as f64;
    match trig {
        Trig::Const => (1.0 / length.sqrt(), 0.0, 0.0),
        Trig::Cos => {
            let a = (2.0 / length).sqrt();
            let (s, c) = (kf * x).sin_cos();
            (a * c, -a * kf * s, -a * kf * kf * c)
        }
        Trig::Sin => {
            let a = (2.0 / length).sqrt();
            let (s, c) = (kf * x).sin_cos();
            (a * s, a * kf * c, -a * kf * kf * s)
        }
    }
}

impl SpectrumProvider {
    /// First `count` analytic eigenpairs of `model`.
    pub fn analytic(model: &ManifoldModel, count: usize) -> Result<Self> {
        let mut p = Self::analytic_complete(model, count)?;
        p.pairs.truncate(count);
        Ok(p)
    }

    /// Analytic eigenpairs through the end of the eigenspace containing
    /// index `count − 1`.
    pub fn analytic_complete(model: &ManifoldModel, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Spectrum("count must be at least 1".into()));
        }
        let mut lambda_max = 1.0;
        let mut modes = loop {
            let modes = enumerate_modes(model, lambda_max);
            if modes.len() >= count {
                break modes;
            }
            lambda_max *= 2.0;
        };
        let last = modes[count - 1].0;
        let end = modes.iter().position(|m| m.0 > last && !same_shell(m.0, last)).unwrap_or(modes.len());
        modes.truncate(end);
        let pairs = modes
            .into_iter()
            .enumerate()
            .map(|(j, (lambda, mode))| EigenPair { j, lambda, mode })
            .collect();
        Ok(Self { model: Some(model.clone()), n: model.dim(), backing: Backing::Analytic, pairs })
    }

    pub fn model(&self) -> Option<&ManifoldModel> {
        self.model.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn backing(&self) -> &Backing {
        &self.backing
    }

    pub fn count(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[EigenPair] {
        &self.pairs
    }

    pub fn lambda(&self, j: usize) -> f64 {
        self.pairs[j].lambda
    }

    /// First index after the eigenspace containing `j`, capped at `count`.
    pub fn shell_end(&self, j: usize) -> usize {
        let mut e = j + 1;
        while e < self.pairs.len() && same_shell(self.pairs[e].lambda, self.pairs[j].lambda) {
            e += 1;
        }
        e
    }

    pub fn enumerate_eigenpairs(&self, count: usize) -> Result<Vec<EigenPair>> {
        if count == 0 {
            return Err(Error::Spectrum("count must be at least 1".into()));
        }
        if count > self.pairs.len() {
            return Err(Error::Spectrum(format!(
                "requested {count} eigenpairs, provider holds {}",
                self.pairs.len()
            )));
        }
        Ok(self.pairs[..count].to_vec())
    }

    pub fn eval_jet(&self, j: usize, x: &[f64]) -> Result<JetEvaluation> {
        Ok(self.eval_jets(x, j..j + 1)?.jet(0))
    }

    /// Jets of eigenfunctions `range` at chart point `x`.
    pub fn eval_jets(&self, x: &[f64], range: std::ops::Range<usize>) -> Result<JetBatch> {
        if range.end > self.pairs.len() {
            return Err(Error::OutOfRange { index: range.end - 1, count: self.pairs.len() });
        }
        match &self.backing {
            Backing::External(table) => self.eval_external(table, x, range),
            Backing::Analytic => {
                let model = self.model.as_ref().expect("analytic provider has a model");
                model.check_point(x)?;
                Ok(self.eval_analytic(model, x, range))
            }
        }
    }

    fn eval_analytic(&self, model: &ManifoldModel, x: &[f64], range: std::ops::Range<usize>) -> JetBatch {
        let n = self.n;
        let mut b = JetBatch::with_capacity(n, range.len());
        let pairs = &self.pairs[range];
        match model.kind() {
            ManifoldKind::FlatTorus { periods } => {
                let vol: f64 = periods.iter().product();
                torus_jets(pairs, x, vol, &mut b);
            }
            ManifoldKind::Circle { length } => torus_jets(pairs, x, *length, &mut b),
            ManifoldKind::RoundSphere2 { radius } => {
                let lmax = pairs.iter().map(|p| if let Mode::Sphere { l, .. } = p.mode { l } else { 0 }).max().unwrap_or(0);
                let table = sphere_table(lmax, x[0], x[1]);
                for p in pairs {
                    let Mode::Sphere { l, m } = p.mode else { unreachable!() };
                    let (v, d, h) = table[l * l + (m + l as i64) as usize];
                    b.values.push(v / radius);
                    b.grads.extend([d[0] / radius, d[1] / radius]);
                    b.hess.extend([h[0] / radius, h[1] / radius, h[1] / radius, h[2] / radius]);
                }
            }
            ManifoldKind::ProductSphereCircle { radius, length } => {
                let lmax = pairs
                    .iter()
                    .map(|p| if let Mode::Product { l, .. } = p.mode { l } else { 0 })
                    .max()
                    .unwrap_or(0);
                let table = sphere_table(lmax, x[0], x[1]);
                let kmax = pairs.iter().map(|p| if let Mode::Product { k, .. } = p.mode { k } else { 0 }).max().unwrap_or(0);
                let circ: Vec<[(f64, f64, f64); 3]> = (0..=kmax)
                    .map(|k| {
                        [
                            circle_jet(k, Trig::Const, x[2], *length),
                            circle_jet(k, Trig::Cos, x[2], *length),
                            circle_jet(k, Trig::Sin, x[2], *length),
                        ]
                    })
                    .collect();
                for p in pairs {
                    let Mode::Product { l, m, k, trig } = p.mode else { unreachable!() };
                    let (v, d, h) = table[l * l + (m + l as i64) as usize];
                    let (v, d, h) = (v / radius, [d[0] / radius, d[1] / radius], [h[0] / radius, h[1] / radius, h[2] / radius]);
                    let (c, dc, d2c) = circ[k as usize][trig as usize];
                    b.values.push(v * c);
                    b.grads.extend([d[0] * c, d[1] * c, v * dc]);
                    b.hess.extend([
                        h[0] * c,
                        h[1] * c,
                        d[0] * dc,
                        h[1] * c,
                        h[2] * c,
                        d[1] * dc,
                        d[0] * dc,
                        d[1] * dc,
                        v * d2c,
                    ]);
                }
            }
        }
        b
    }

    fn eval_external(&self, table: &ExternalTable, x: &[f64], range: std::ops::Range<usize>) -> Result<JetBatch> {
        let n = self.n;
        let pt = table
            .grid
            .points
            .iter()
            .position(|p| p.len() == x.len() && p.iter().zip(x).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs())))
            .ok_or_else(|| Error::Domain(format!("{x:?} is not a tabulated grid point")))?;
        let mut b = JetBatch::with_capacity(n, range.len());
        for j in range {
            b.values.push(table.values[j][pt]);
            b.grads.extend_from_slice(&table.gradients[j][pt * n..(pt + 1) * n]);
            b.hess.extend_from_slice(&table.hessians[j][pt * n * n..(pt + 1) * n * n]);
        }
        Ok(b)
    }

    /// Provider for the metric `factor_b · g` on each product block.
    ///
    /// Eigenvalues of block `b` are divided by `factor_b`; eigenfunctions are
    /// multiplied by `vol_factor^{−1/2}`, `vol_factor = Π factor_b^{dim_b/2}`.
    pub fn rescaled(&self, factors: &[f64]) -> Result<Self> {
        for &f in factors {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::InvalidArgument(format!("scale factor must be positive, got {f}")));
            }
        }
        match &self.backing {
            Backing::Analytic => {
                let model = self.model.as_ref().expect("analytic provider has a model");
                let scaled = model.scaled(factors)?;
                if factors.iter().all(|&f| f == 1.0) {
                    return Ok(self.clone());
                }
                Self::analytic_complete(&scaled, self.count())
            }
            Backing::External(table) => {
                if factors.len() != 1 {
                    return Err(Error::Unsupported("tabulated spectra rescale with a single factor".into()));
                }
                let a = factors[0];
                let s = a.powf(-(self.n as f64) / 4.0);
                let mut t = (**table).clone();
                for v in t.values.iter_mut().chain(t.gradients.iter_mut()).chain(t.hessians.iter_mut()) {
                    v.iter_mut().for_each(|x| *x *= s);
                }
                let vol = a.powf(self.n as f64 / 2.0);
                t.grid.weights.iter_mut().for_each(|w| *w *= vol);
                let pairs = self
                    .pairs
                    .iter()
                    .map(|p| EigenPair { j: p.j, lambda: p.lambda / a, mode: p.mode.clone() })
                    .collect();
                let model = match &self.model {
                    Some(m) => Some(m.scaled(factors)?),
                    None => None,
                };
                Ok(Self { model, n: self.n, backing: Backing::External(Box::new(t)), pairs })
            }
        }
    }

    /// Write the first `count` eigenpairs tabulated on `grid`.
    pub fn export(&self, grid: &SampleGrid, count: usize, tolerance: f64, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_records(grid, count, tolerance, &mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_records<W: Write>(&self, grid: &SampleGrid, count: usize, tolerance: f64, w: &mut W) -> Result<()> {
        let pairs = self.enumerate_eigenpairs(count)?;
        let header = FileHeader {
            n: self.n,
            grid: GridRecord { points: grid.points.clone(), weights: grid.weights.clone(), shape: grid.shape.clone() },
            tolerance,
            model: self.model.clone(),
        };
        serde_json::to_writer(&mut *w, &header)?;
        writeln!(w)?;
        let jets: Vec<JetBatch> = grid.points.iter().map(|x| self.eval_jets(x, 0..count)).collect::<Result<_>>()?;
        for p in &pairs {
            let rec = PairRecord {
                j: p.j,
                lambda: p.lambda,
                values: jets.iter().map(|b| b.values[p.j]).collect(),
                gradients: jets.iter().flat_map(|b| b.grads[p.j * self.n..(p.j + 1) * self.n].to_vec()).collect(),
                hessians: jets
                    .iter()
                    .flat_map(|b| b.hess[p.j * self.n * self.n..(p.j + 1) * self.n * self.n].to_vec())
                    .collect(),
            };
            serde_json::to_writer(&mut *w, &rec)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

fn torus_jets(pairs: &[EigenPair], x: &[f64], vol: f64, b: &mut JetBatch) {
    let c0 = 1.0 / vol.sqrt();
    let a = (2.0 / vol).sqrt();
    for p in pairs {
        let Mode::Torus { k, trig } = &p.mode else { unreachable!() };
        let phase: f64 = k.iter().zip(x).map(|(&k, &x)| k as f64 * x).sum();
        let (s, c) = phase.sin_cos();
        let (v, dv) = match trig {
            Trig::Const => (c0, 0.0),
            Trig::Cos => (a * c, -a * s),
            Trig::Sin => (a * s, a * c),
        };
        b.values.push(v);
        for &ki in k {
            b.grads.push(dv * ki as f64);
        }
        for &ki in k {
            for &kj in k {
                b.hess.push(-v * (ki * kj) as f64);
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GridRecord {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    #[serde(default)]
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FileHeader {
    n: usize,
    grid: GridRecord,
    tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<ManifoldModel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRecord {
    j: usize,
    lambda: f64,
    values: Vec<f64>,
    gradients: Vec<f64>,
    hessians: Vec<f64>,
}

/// Read an eigenpair file and check its invariants.
pub fn load_external_spectrum(path: &Path) -> Result<SpectrumProvider> {
    read_external(BufReader::new(File::open(path)?))
}

pub fn read_external<R: BufRead>(reader: R) -> Result<SpectrumProvider> {
    let mut lines = reader.lines();
    let first = lines.next().ok_or_else(|| Error::Schema("empty file".into()))??;
    let header: FileHeader = serde_json::from_str(&first).map_err(|e| Error::Schema(format!("header: {e}")))?;
    let n = header.n;
    let npts = header.grid.points.len();
    if n == 0 || npts == 0 || header.grid.weights.len() != npts {
        return Err(Error::Schema("grid points/weights inconsistent".into()));
    }
    if header.grid.points.iter().any(|p| p.len() != n) {
        return Err(Error::Schema(format!("grid points must have {n} coordinates")));
    }
    if header.grid.weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::Schema("weights must be positive".into()));
    }
    if let Some(m) = &header.model {
        if m.dim() != n {
            return Err(Error::Schema("model dimension differs from header n".into()));
        }
    }
    let mut pairs = Vec::new();
    let mut table = ExternalTable {
        grid: SampleGrid { points: header.grid.points, weights: header.grid.weights, shape: header.grid.shape },
        tolerance: header.tolerance,
        values: Vec::new(),
        gradients: Vec::new(),
        hessians: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(&line).map_err(|e| Error::Schema(format!("record {i}: {e}")))?;
        if rec.j != pairs.len() {
            return Err(Error::Schema(format!("record {i} has j = {}, expected {}", rec.j, pairs.len())));
        }
        if rec.values.len() != npts || rec.gradients.len() != npts * n || rec.hessians.len() != npts * n * n {
            return Err(Error::Schema(format!("record {i}: array lengths do not match the grid")));
        }
        if !(rec.lambda >= 0.0) {
            return Err(Error::Schema(format!("record {i}: negative eigenvalue {}", rec.lambda)));
        }
        if let Some(prev) = pairs.last().map(|p: &EigenPair| p.lambda) {
            if rec.lambda < prev {
                return Err(Error::Schema(format!(
                    "eigenvalues not monotone: λ_{} = {} after {}",
                    rec.j, rec.lambda, prev
                )));
            }
        }
        pairs.push(EigenPair { j: rec.j, lambda: rec.lambda, mode: Mode::Tabulated });
        table.values.push(rec.values);
        table.gradients.push(rec.gradients);
        table.hessians.push(rec.hessians);
    }
    if pairs.is_empty() {
        return Err(Error::Schema("no eigenpair records".into()));
    }
    let w = &table.grid.weights;
    for a in 0..pairs.len() {
        for b in a..pairs.len() {
            let ip: f64 = (0..npts).map(|p| w[p] * table.values[a][p] * table.values[b][p]).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            if (ip - target).abs() > table.tolerance {
                return Err(Error::Schema(format!(
                    "orthonormality fails for ({a}, {b}): {ip:.3e} (tolerance {:.1e})",
                    table.tolerance
                )));
            }
        }
    }
    Ok(SpectrumProvider { model: header.model, n, backing: Backing::External(Box::new(table)), pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_low_degrees() {
        let th = 0.8f64;
        let leg = Legendre::new(2, th);
        let c = th.cos();
        let s = th.sin();
        assert_relative_eq!(leg.p[Legendre::idx(2, 0)], (5.0 / (16.0 * PI)).sqrt() * (3.0 * c * c - 1.0), epsilon = 1e-14);
        assert_relative_eq!(leg.p[Legendre::idx(1, 1)], -(3.0 / (8.0 * PI)).sqrt() * s, epsilon = 1e-14);
        assert_relative_eq!(leg.dp[Legendre::idx(1, 0)], -(3.0 / (4.0 * PI)).sqrt() * s, epsilon = 1e-14);
    }

    #[test]
    fn shells_are_completed() {
        let m = ManifoldModel::square_torus(2).unwrap();
        let p = SpectrumProvider::analytic_complete(&m, 3).unwrap();
        assert_eq!(p.count(), 5);
        assert_eq!(p.shell_end(1), 5);
        let q = SpectrumProvider::analytic(&m, 3).unwrap();
        assert_eq!(q.count(), 3);
    }
}
