//! Pseudo-spectral fields on periodic grids.
//!
//! Grids are `N^d` tensor grids in the angle coordinates of a flat torus,
//! first axis slowest, matching [`crate::geometry::sample_grid`]. Derivatives
//! are taken along the orthonormal frame `(2π/L_a) ∂_{θ_a}`. The Nyquist
//! coefficient is dropped on every forward transform, and products are formed
//! on a `3N/2` grid before truncating back to `N`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::{self, ManifoldModel, SampleGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGrid {
    pub n: usize,
    pub periods: Vec<f64>,
}

impl PeriodicGrid {
    pub fn new(periods: &[f64], n: usize) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidArgument(format!("periodic grid size must be even and ≥ 4, got {n}")));
        }
        if periods.is_empty() || periods.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::InvalidArgument("periods must be positive".into()));
        }
        Ok(Self { n, periods: periods.to_vec() })
    }

    pub fn for_model(model: &ManifoldModel, n: usize) -> Result<Self> {
        let periods = model
            .periods()
            .ok_or_else(|| Error::Unsupported(format!("{} has no periodic spectral backend", model.name())))?;
        Self::new(&periods, n)
    }

    pub fn dims(&self) -> usize {
        self.periods.len()
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dims() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_grid(&self) -> SampleGrid {
        let model = ManifoldModel::flat_torus(&self.periods).expect("validated periods");
        geometry::sample_grid(&model, self.n).expect("validated size")
    }

    /// Multi-index of a flat point index.
    pub fn unravel(&self, mut p: usize) -> Vec<usize> {
        let d = self.dims();
        let mut idx = vec![0; d];
        for a in (0..d).rev() {
            idx[a] = p % self.n;
            p /= self.n;
        }
        idx
    }
}

fn signed(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

struct Plans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(planner: &mut FftPlanner<f64>, n: usize) -> Self {
        Self { fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }
}

/// Transforms and spectral multipliers on one [`PeriodicGrid`].
pub struct Spectral {
    grid: PeriodicGrid,
    m: usize,
    plans_n: Plans,
    plans_m: Plans,
    /// Physical wavevector of each coefficient, Nyquist set to zero.
    kvec: Vec<Vec<f64>>,
    nyquist: Vec<bool>,
    pad_map: Vec<usize>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).field("padded", &self.m).finish()
    }
}

fn fft_nd(data: &mut [Complex64], n: usize, dims: usize, fft: &Arc<dyn Fft<f64>>) {
    let total = data.len();
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut line = vec![Complex64::default(); n];
    for a in 0..dims {
        let stride = n.pow((dims - 1 - a) as u32);
        for base in 0..total {
            if (base / stride) % n != 0 {
                continue;
            }
            for i in 0..n {
                line[i] = data[base + i * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for i in 0..n {
                data[base + i * stride] = line[i];
            }
        }
    }
}

impl Spectral {
    pub fn new(grid: &PeriodicGrid) -> Self {
        let n = grid.n;
        let m = 3 * n / 2;
        let mut planner = FftPlanner::new();
        let plans_n = Plans::new(&mut planner, n);
        let plans_m = Plans::new(&mut planner, m);
        let mut kvec = Vec::with_capacity(grid.len());
        let mut nyquist = Vec::with_capacity(grid.len());
        let mut pad_map = Vec::with_capacity(grid.len());
        for p in 0..grid.len() {
            let idx = grid.unravel(p);
            nyquist.push(idx.iter().any(|&i| i == n / 2));
            kvec.push(
                idx.iter()
                    .zip(&grid.periods)
                    .map(|(&i, l)| if i == n / 2 { 0.0 } else { 2.0 * PI / l * signed(i, n) as f64 })
                    .collect(),
            );
            pad_map.push(idx.iter().fold(0, |q, &i| {
                let s = signed(i, n);
                q * m + if s >= 0 { s as usize } else { (m as i64 + s) as usize }
            }));
        }
        Self { grid: grid.clone(), m, plans_n, plans_m, kvec, nyquist, pad_map }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn padded_len(&self) -> usize {
        self.m.pow(self.grid.dims() as u32)
    }

    /// Unnormalized forward transform with Nyquist modes removed.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut data, self.grid.n, self.grid.dims(), &self.plans_n.fwd);
        for (c, &nyq) in data.iter_mut().zip(&self.nyquist) {
            if nyq {
                *c = Complex64::default();
            }
        }
        data
    }

    pub fn inverse(&self, spec: &[Complex64]) -> Vec<f64> {
        let mut data = spec.to_vec();
        fft_nd(&mut data, self.grid.n, self.grid.dims(), &self.plans_n.inv);
        let s = 1.0 / self.len() as f64;
        data.iter().map(|c| c.re * s).collect()
    }

    /// Multiply each coefficient by `f(k)`, `k` the physical wavevector.
    pub fn multiply<F: Fn(&[f64]) -> Complex64>(&self, spec: &[Complex64], f: F) -> Vec<Complex64> {
        spec.iter().enumerate().map(|(p, &c)| c * f(&self.kvec[p])).collect()
    }

    /// Multiplier of the frame derivative `∂^β`, `order[a]` = derivatives along axis `a`.
    pub fn derivative_symbol(order: &[usize]) -> impl Fn(&[f64]) -> Complex64 + '_ {
        move |k: &[f64]| {
            let mut z = Complex64::new(1.0, 0.0);
            for (a, &o) in order.iter().enumerate() {
                for _ in 0..o {
                    z *= Complex64::new(0.0, k[a]);
                }
            }
            z
        }
    }

    pub fn derivative(&self, values: &[f64], order: &[usize]) -> Vec<f64> {
        self.inverse(&self.multiply(&self.forward(values), Self::derivative_symbol(order)))
    }

    pub fn laplacian(&self, values: &[f64]) -> Vec<f64> {
        self.inverse(&self.multiply(&self.forward(values), |k| Complex64::new(-k.iter().map(|v| v * v).sum::<f64>(), 0.0)))
    }

    /// `(Δ − e)⁻¹` on a scalar field: `c_k ↦ c_k / (−|k|² − e)`.
    pub fn resolvent(&self, values: &[f64], e: f64) -> Result<Vec<f64>> {
        if !(e > 0.0) {
            return Err(Error::InvalidArgument(format!("resolvent shift must be positive, got {e}")));
        }
        Ok(self.inverse(&self.multiply(&self.forward(values), |k| {
            Complex64::new(1.0 / (-k.iter().map(|v| v * v).sum::<f64>() - e), 0.0)
        })))
    }

    /// Physical values on the `3N/2` grid of the band-limited field with spectrum `spec`.
    pub fn pad(&self, spec: &[Complex64]) -> Vec<f64> {
        let mut big = vec![Complex64::default(); self.padded_len()];
        for (p, &c) in spec.iter().enumerate() {
            big[self.pad_map[p]] = c;
        }
        fft_nd(&mut big, self.m, self.grid.dims(), &self.plans_m.inv);
        let s = 1.0 / self.len() as f64;
        big.iter().map(|c| c.re * s).collect()
    }

    /// Project padded physical values back to an `N`-grid spectrum.
    pub fn unpad(&self, values: &[f64]) -> Vec<Complex64> {
        let mut big: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut big, self.m, self.grid.dims(), &self.plans_m.fwd);
        let s = self.len() as f64 / self.padded_len() as f64;
        (0..self.len())
            .map(|p| {
                if self.nyquist[p] {
                    Complex64::default()
                } else {
                    big[self.pad_map[p]] * s
                }
            })
            .collect()
    }

    /// Dealiased `Σ_c a_c b_c` from padded component values.
    ///
    /// Parallel over blocks of grid points, so the summation order (and the
    /// result) does not depend on the thread count.
    pub fn contract_padded(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
        const BLOCK: usize = 512;
        let mut acc = vec![0.0; self.padded_len()];
        acc.par_chunks_mut(BLOCK).enumerate().for_each(|(blk, out)| {
            let off = blk * BLOCK;
            for (x, y) in a.iter().zip(b) {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += x[off + i] * y[off + i];
                }
            }
        });
        self.inverse(&self.unpad(&acc))
    }

    /// Dealiased product of two scalar fields.
    pub fn product(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        self.contract_padded(&[self.pad(&self.forward(a))], &[self.pad(&self.forward(b))])
    }
}

/// An `R^q`-valued field on a periodic grid, component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRq {
    pub q: usize,
    pub npts: usize,
    pub data: Vec<f64>,
}

impl FieldRq {
    pub fn zeros(q: usize, npts: usize) -> Self {
        Self { q, npts, data: vec![0.0; q * npts] }
    }

    /// Build from per-point vectors.
    pub fn from_points(points: &[Vec<f64>]) -> Self {
        let npts = points.len();
        let q = points.first().map_or(0, Vec::len);
        let mut data = vec![0.0; q * npts];
        for (p, v) in points.iter().enumerate() {
            for (c, &x) in v.iter().enumerate() {
                data[c * npts + p] = x;
            }
        }
        Self { q, npts, data }
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.data[c * self.npts..(c + 1) * self.npts]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.npts..(c + 1) * self.npts]
    }

    pub fn at(&self, p: usize) -> Vec<f64> {
        (0..self.q).map(|c| self.data[c * self.npts + p]).collect()
    }

    /// `max_x |v(x)|` with the Euclidean norm of `R^q`.
    pub fn sup_norm(&self) -> f64 {
        (0..self.npts)
            .into_par_iter()
            .map(|p| (0..self.q).map(|c| self.data[c * self.npts + p].powi(2)).sum::<f64>().sqrt())
            .reduce(|| 0.0, f64::max)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { q: self.q, npts: self.npts, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { q: self.q, npts: self.npts, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { q: self.q, npts: self.npts, data: self.data.iter().map(|a| a * s).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derivative_of_single_mode() {
        let g = PeriodicGrid::new(&[2.0 * PI, 4.0 * PI], 16).unwrap();
        let s = Spectral::new(&g);
        let pts = g.sample_grid().points;
        // cos(2θ₁ + θ₂), physical frame derivative along axis 1 carries 2π/L₁ = 1/2
        let f: Vec<f64> = pts.iter().map(|x| (2.0 * x[0] + x[1]).cos()).collect();
        let d = s.derivative(&f, &[0, 1]);
        for (x, v) in pts.iter().zip(&d) {
            assert_relative_eq!(*v, -0.5 * (2.0 * x[0] + x[1]).sin(), epsilon = 1e-13);
        }
    }

    #[test]
    fn dealiased_product_is_exact_for_band_limited_factors() {
        let g = PeriodicGrid::new(&[2.0 * PI], 16).unwrap();
        let s = Spectral::new(&g);
        let pts = g.sample_grid().points;
        let a: Vec<f64> = pts.iter().map(|x| (3.0 * x[0]).cos()).collect();
        let b: Vec<f64> = pts.iter().map(|x| (4.0 * x[0]).sin()).collect();
        let p = s.product(&a, &b);
        for (x, v) in pts.iter().zip(&p) {
            assert_relative_eq!(*v, (3.0 * x[0]).cos() * (4.0 * x[0]).sin(), epsilon = 1e-13);
        }
    }
}
