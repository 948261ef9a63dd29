use approx::assert_abs_diff_eq;
use hk_conformal::geometry::{self, gauss_legendre, sample_grid, ManifoldModel};
use proptest::prelude::*;
use std::f64::consts::PI;

fn models() -> Vec<ManifoldModel> {
    vec![
        ManifoldModel::flat_torus(&[2.0 * PI, 3.0]).unwrap(),
        ManifoldModel::circle(5.0).unwrap(),
        ManifoldModel::sphere(1.3).unwrap(),
        ManifoldModel::product(0.8, 2.0 * PI).unwrap(),
    ]
}

/// Christoffel symbols from central differences of the metric components.
fn fd_christoffel(model: &ManifoldModel, x: &[f64]) -> Vec<f64> {
    let n = model.dim();
    let h = 1e-5;
    let dg: Vec<nalgebra::DMatrix<f64>> = (0..n)
        .map(|l| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[l] += h;
            m[l] -= h;
            (geometry::metric_components(model, &p) - geometry::metric_components(model, &m)) / (2.0 * h)
        })
        .collect();
    let gi = geometry::metric_components(model, x).try_inverse().unwrap();
    let mut out = vec![0.0; n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                out[(k * n + i) * n + j] =
                    (0..n).map(|l| 0.5 * gi[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)])).sum();
            }
        }
    }
    out
}

#[test]
fn christoffel_symbols_match_finite_differences() {
    for model in models() {
        let x: Vec<f64> = (0..model.dim()).map(|i| 0.7 + 0.4 * i as f64).collect();
        let m = geometry::metric_at(&model, &x).unwrap();
        for (a, b) in m.christoffel.iter().zip(fd_christoffel(&model, &x)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-8);
        }
    }
}

#[test]
fn ricci_matches_finite_difference_curvature() {
    // Riemann from R^l_{ijk} = ∂_jΓ^l_ik − ∂_kΓ^l_ij + Γ^l_jm Γ^m_ik − Γ^l_km Γ^m_ij
    // and Ric_ik = R^j_{ijk}.
    for model in models() {
        let n = model.dim();
        let x: Vec<f64> = (0..n).map(|i| 1.1 - 0.2 * i as f64).collect();
        let h = 1e-4;
        let gam = |y: &[f64]| fd_christoffel(&model, y);
        let g0 = gam(&x);
        let dgam: Vec<Vec<f64>> = (0..n)
            .map(|l| {
                let mut p = x.clone();
                let mut m = x.clone();
                p[l] += h;
                m[l] -= h;
                gam(&p).iter().zip(gam(&m)).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            })
            .collect();
        let c = |k: usize, i: usize, j: usize| g0[(k * n + i) * n + j];
        let riem_up = |l: usize, i: usize, j: usize, k: usize| {
            let mut s = dgam[j][(l * n + i) * n + k] - dgam[k][(l * n + i) * n + j];
            for m in 0..n {
                s += c(l, j, m) * c(m, i, k) - c(l, k, m) * c(m, i, j);
            }
            s
        };
        let exact = geometry::metric_at(&model, &x).unwrap();
        let riemann = geometry::riemann_at(&model, &x).unwrap();
        for i in 0..n {
            for k in 0..n {
                let ric: f64 = (0..n).map(|j| riem_up(j, i, j, k)).sum();
                assert_abs_diff_eq!(ric, exact.ricci[(i, k)], epsilon = 1e-5);
                // Contracting the stored lowered tensor gives the same Ricci.
                let from_lowered: f64 = (0..n)
                    .flat_map(|a| (0..n).map(move |b| (a, b)))
                    .map(|(a, b)| exact.g_inv[(a, b)] * riemann[((a * n + i) * n + k) * n + b])
                    .sum();
                assert_abs_diff_eq!(from_lowered, exact.ricci[(i, k)], epsilon = 1e-12);
            }
        }
        let scalar: f64 = (0..n).map(|i| exact.g_inv[(i, i)] * exact.ricci[(i, i)]).sum();
        assert_abs_diff_eq!(scalar, exact.scalar, epsilon = 1e-12);
    }
}

#[test]
fn quadrature_weights_sum_to_volume() {
    for model in models() {
        let grid = sample_grid(&model, 12).unwrap();
        assert_abs_diff_eq!(grid.total_weight(), model.volume(), epsilon = 1e-10 * model.volume());
    }
}

#[test]
fn sphere_quadrature_integrates_cos_squared() {
    let model = ManifoldModel::sphere(1.0).unwrap();
    let grid = sample_grid(&model, 10).unwrap();
    let s: f64 = grid.points.iter().zip(&grid.weights).map(|(x, w)| w * x[0].cos().powi(2)).sum();
    assert_abs_diff_eq!(s, 4.0 * PI / 3.0, epsilon = 1e-12);
}

#[test]
fn gauss_legendre_is_exact_to_degree_2m_minus_1() {
    let (x, w) = gauss_legendre(6);
    for d in 0..12 {
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d)).sum();
        let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d as f64 + 1.0) };
        assert_abs_diff_eq!(s, exact, epsilon = 1e-13);
    }
}

#[test]
fn sphere_poles_are_rejected() {
    let model = ManifoldModel::sphere(1.0).unwrap();
    assert!(geometry::metric_at(&model, &[0.0, 1.0]).is_err());
    assert!(geometry::metric_at(&model, &[PI, 1.0]).is_err());
}

proptest! {
    #[test]
    fn distance_is_a_symmetric_bounded_metric(a in 0.01f64..3.1, b in 0.0f64..6.28, c in 0.01f64..3.1, d in 0.0f64..6.28) {
        for model in [ManifoldModel::sphere(2.0).unwrap(), ManifoldModel::square_torus(2).unwrap()] {
            let (x, y) = (vec![a, b], vec![c, d]);
            let dxy = model.distance(&x, &y);
            prop_assert!((dxy - model.distance(&y, &x)).abs() < 1e-12);
            prop_assert!(dxy >= 0.0);
            prop_assert!(dxy <= PI * 2.0 + 1e-12);
            prop_assert!(model.distance(&x, &x) < 1e-7);
        }
    }

    #[test]
    fn frame_is_orthonormal(th in 0.05f64..3.09, ph in 0.0f64..6.28, ps in 0.0f64..6.28) {
        let model = ManifoldModel::product(1.7, 4.0).unwrap();
        let x = [th, ph, ps];
        let f = geometry::orthonormal_frame(&model, &x).unwrap();
        let g = geometry::metric_at(&model, &x).unwrap().g;
        let id = geometry::to_frame(&f, &g);
        prop_assert!((id - nalgebra::DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn scaling_multiplies_metric(a in 0.2f64..5.0) {
        let model = ManifoldModel::product(1.0, 3.0).unwrap();
        let s = model.scaled(&[a, a]).unwrap();
        let x = [1.0, 2.0, 0.5];
        let g0 = geometry::metric_at(&model, &x).unwrap().g;
        let g1 = geometry::metric_at(&s, &x).unwrap().g;
        prop_assert!((g1 - g0 * a).norm() < 1e-12);
        prop_assert!((s.volume() - model.volume() * a.powf(1.5)).abs() < 1e-9 * s.volume());
    }
}
