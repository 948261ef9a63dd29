use approx::assert_abs_diff_eq;
use hk_conformal::geometry::{self, sample_grid, ManifoldModel};
use hk_conformal::spectrum::{enumerate_modes, read_external, Mode, SpectrumProvider};
use hk_conformal::Error;
use proptest::prelude::*;
use std::f64::consts::PI;

fn models() -> Vec<ManifoldModel> {
    vec![
        ManifoldModel::flat_torus(&[2.0 * PI, 4.0]).unwrap(),
        ManifoldModel::circle(3.0).unwrap(),
        ManifoldModel::sphere(1.4).unwrap(),
        ManifoldModel::product(0.9, 2.0 * PI).unwrap(),
    ]
}

fn laplacian(model: &ManifoldModel, p: &SpectrumProvider, j: usize, x: &[f64]) -> f64 {
    let m = geometry::metric_at(model, x).unwrap();
    let jet = p.eval_jet(j, x).unwrap();
    let n = model.dim();
    let mut s = 0.0;
    for i in 0..n {
        for k in 0..n {
            let gamma: f64 = (0..n).map(|l| m.gamma(l, i, k) * jet.gradient[l]).sum();
            s += m.g_inv[(i, k)] * (jet.hessian[(i, k)] - gamma);
        }
    }
    s
}

#[test]
fn circle_spectrum_counts_multiplicities() {
    let p = SpectrumProvider::analytic(&ManifoldModel::circle(2.0 * PI).unwrap(), 7).unwrap();
    let l: Vec<f64> = p.pairs().iter().map(|e| e.lambda).collect();
    assert_eq!(l, vec![0.0, 1.0, 1.0, 4.0, 4.0, 9.0, 9.0]);
}

#[test]
fn sphere_shells_have_odd_multiplicity() {
    let p = SpectrumProvider::analytic(&ManifoldModel::sphere(1.0).unwrap(), 36).unwrap();
    for l in 0..6usize {
        let count = p.pairs().iter().filter(|e| matches!(e.mode, Mode::Sphere { l: d, .. } if d == l)).count();
        assert_eq!(count, 2 * l + 1);
        let start = l * l;
        assert_abs_diff_eq!(p.lambda(start), (l * (l + 1)) as f64, epsilon = 1e-12);
        assert_eq!(p.shell_end(start), (l + 1) * (l + 1));
    }
}

#[test]
fn eigenfunctions_are_orthonormal_under_quadrature() {
    for model in models() {
        let p = SpectrumProvider::analytic(&model, 30).unwrap();
        let grid = sample_grid(&model, 32).unwrap();
        let vals: Vec<Vec<f64>> = grid.points.iter().map(|x| p.eval_jets(x, 0..30).unwrap().values).collect();
        for a in 0..30 {
            for b in a..30 {
                let ip: f64 = vals.iter().zip(&grid.weights).map(|(v, w)| w * v[a] * v[b]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((ip - target).abs() < 1e-11, "{} ({a}, {b}): {ip}", model.name());
            }
        }
    }
}

#[test]
fn eigen_relation_holds_pointwise() {
    for model in models() {
        let p = SpectrumProvider::analytic(&model, 40).unwrap();
        let x: Vec<f64> = (0..model.dim()).map(|i| 0.37 + 0.9 * i as f64).collect();
        for j in 0..40 {
            let v = p.eval_jet(j, &x).unwrap().value;
            let r = laplacian(&model, &p, j, &x) + p.lambda(j) * v;
            assert!(r.abs() <= 1e-9 * (1.0 + p.lambda(j)), "{} j={j}: residual {r}", model.name());
        }
    }
}

#[test]
fn jets_match_finite_differences() {
    let h = 1e-5;
    for model in models() {
        let p = SpectrumProvider::analytic(&model, 25).unwrap();
        let n = model.dim();
        let x: Vec<f64> = (0..n).map(|i| 1.2 - 0.3 * i as f64).collect();
        for j in 0..25 {
            let jet = p.eval_jet(j, &x).unwrap();
            for i in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fp = p.eval_jet(j, &xp).unwrap();
                let fm = p.eval_jet(j, &xm).unwrap();
                let d = (fp.value - fm.value) / (2.0 * h);
                assert_abs_diff_eq!(jet.gradient[i], d, epsilon = 1e-8 * (1.0 + d.abs()));
                for k in 0..n {
                    let d = (fp.gradient[k] - fm.gradient[k]) / (2.0 * h);
                    assert_abs_diff_eq!(jet.hessian[(i, k)], d, epsilon = 1e-8 * (1.0 + d.abs()));
                }
            }
        }
    }
}

#[test]
fn enumeration_is_sorted_and_bounded() {
    for model in models() {
        let modes = enumerate_modes(&model, 30.0);
        assert!(modes.windows(2).all(|w| w[0].0 <= w[1].0));
        assert!(modes.iter().all(|m| m.0 <= 30.0 + 1e-12));
        assert_eq!(modes[0].0, 0.0);
    }
}

#[test]
fn out_of_range_and_invalid_requests_error() {
    let p = SpectrumProvider::analytic(&ManifoldModel::circle(1.0).unwrap(), 5).unwrap();
    assert!(matches!(p.eval_jets(&[0.1], 0..6), Err(Error::OutOfRange { .. })));
    assert!(p.enumerate_eigenpairs(6).is_err());
    assert!(p.enumerate_eigenpairs(0).is_err());
    assert!(SpectrumProvider::analytic(&ManifoldModel::sphere(1.0).unwrap(), 4)
        .unwrap()
        .eval_jet(0, &[0.0, 0.0])
        .is_err());
}

#[test]
fn external_round_trip_reproduces_jets() {
    for model in [ManifoldModel::circle(2.0 * PI).unwrap(), ManifoldModel::sphere(1.0).unwrap()] {
        let p = SpectrumProvider::analytic(&model, 9).unwrap();
        let grid = sample_grid(&model, 12).unwrap();
        let mut buf = Vec::new();
        p.write_records(&grid, 9, 1e-10, &mut buf).unwrap();
        let q = read_external(buf.as_slice()).unwrap();
        assert_eq!(q.count(), 9);
        for (a, b) in p.pairs().iter().zip(q.pairs()) {
            assert_eq!(a.lambda, b.lambda);
        }
        for x in &grid.points {
            let ja = p.eval_jets(x, 0..9).unwrap();
            let jb = q.eval_jets(x, 0..9).unwrap();
            assert_eq!(ja.values, jb.values);
            assert_eq!(ja.grads, jb.grads);
            assert_eq!(ja.hess, jb.hess);
        }
        assert!(q.eval_jet(0, &vec![0.123; model.dim()]).is_err());
    }
}

#[test]
fn external_rejects_broken_files() {
    let model = ManifoldModel::circle(2.0 * PI).unwrap();
    let p = SpectrumProvider::analytic(&model, 5).unwrap();
    let grid = sample_grid(&model, 16).unwrap();
    let mut buf = Vec::new();
    p.write_records(&grid, 5, 1e-10, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();

    // Swap two records of different eigenvalue: monotonicity.
    let mut rec3: serde_json::Value = serde_json::from_str(lines[3]).unwrap();
    let mut rec1: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
    rec3["j"] = 0.into();
    rec1["j"] = 2.into();
    let swapped = [lines[0].to_string(), rec3.to_string(), lines[2].to_string(), rec1.to_string()].join("\n");
    assert!(matches!(read_external(swapped.as_bytes()), Err(Error::Schema(_))));

    // Scale one eigenfunction: orthonormality.
    let mut rec: serde_json::Value = serde_json::from_str(lines[2]).unwrap();
    let vals: Vec<f64> = serde_json::from_value(rec["values"].clone()).unwrap();
    rec["values"] = serde_json::to_value(vals.iter().map(|v| v * 1.1).collect::<Vec<_>>()).unwrap();
    let scaled = [lines[0].to_string(), lines[1].to_string(), rec.to_string()].join("\n");
    assert!(matches!(read_external(scaled.as_bytes()), Err(Error::Schema(_))));

    // Negative eigenvalue.
    let mut rec: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
    rec["lambda"] = (-1.0).into();
    let neg = [lines[0].to_string(), rec.to_string()].join("\n");
    assert!(read_external(neg.as_bytes()).is_err());

    assert!(read_external("".as_bytes()).is_err());
    assert!(read_external("{\"n\": 1}".as_bytes()).is_err());
}

#[test]
fn rescaling_follows_the_metric_scaling() {
    let model = ManifoldModel::product(1.0, 2.0 * PI).unwrap();
    let p = SpectrumProvider::analytic(&model, 40).unwrap();
    let (a, b) = (1.01, 0.98);
    let r = p.rescaled(&[a, b]).unwrap();
    for e in r.pairs().iter().take(40) {
        let Mode::Product { l, k, .. } = e.mode else { panic!() };
        let expect = (l * (l + 1)) as f64 / a + (k * k) as f64 / b;
        assert_abs_diff_eq!(e.lambda, expect, epsilon = 1e-12);
    }
    // Values pick up the volume factor (a · b^{1/2})^{−1/2}.
    let x = [0.8, 0.3, 1.9];
    let p0 = p.eval_jet(0, &x).unwrap().value;
    let r0 = r.eval_jet(0, &x).unwrap().value;
    assert_abs_diff_eq!(r0 / p0, (a * b.sqrt()).powf(-0.5), epsilon = 1e-12);

    let circle = ManifoldModel::circle(2.0 * PI).unwrap();
    let pc = SpectrumProvider::analytic(&circle, 7).unwrap();
    let grid = sample_grid(&circle, 16).unwrap();
    let mut buf = Vec::new();
    pc.write_records(&grid, 7, 1e-10, &mut buf).unwrap();
    let ext = read_external(buf.as_slice()).unwrap().rescaled(&[4.0]).unwrap();
    assert_abs_diff_eq!(ext.lambda(1), 0.25, epsilon = 1e-15);
    let x = &grid.points[3];
    assert_abs_diff_eq!(ext.eval_jet(1, x).unwrap().value, pc.eval_jet(1, x).unwrap().value / 2f64.sqrt(), epsilon = 1e-14);
    assert!(pc.rescaled(&[0.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sphere_eigen_relation_at_random_points(th in 0.05f64..3.09, ph in 0.0f64..6.28, j in 0usize..64) {
        let model = ManifoldModel::sphere(1.0).unwrap();
        let p = SpectrumProvider::analytic(&model, 64).unwrap();
        let x = [th, ph];
        let v = p.eval_jet(j, &x).unwrap().value;
        let r = laplacian(&model, &p, j, &x) + p.lambda(j) * v;
        prop_assert!(r.abs() < 1e-8 * (1.0 + p.lambda(j)));
    }

    #[test]
    fn addition_theorem_on_the_sphere(th in 0.05f64..3.09, ph in 0.0f64..6.28) {
        // Σ_m |Y_lm|² = (2l+1)/(4π) for every l.
        let p = SpectrumProvider::analytic(&ManifoldModel::sphere(1.0).unwrap(), 49).unwrap();
        let b = p.eval_jets(&[th, ph], 0..49).unwrap();
        for l in 0..7usize {
            let s: f64 = (l * l..(l + 1) * (l + 1)).map(|j| b.values[j].powi(2)).sum();
            prop_assert!((s - (2 * l + 1) as f64 / (4.0 * PI)).abs() < 1e-12);
        }
    }
}
