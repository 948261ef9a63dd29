use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_abs_diff_eq;
use hk_conformal::embedding::*;
use hk_conformal::geometry::{self, sample_grid, ManifoldModel};
use hk_conformal::spectrum::SpectrumProvider;
use hk_conformal::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn map_for(model: &ManifoldModel, t: f64, policy: &TruncationPolicy) -> EmbeddingMap {
    build_embedding(analytic_provider(model, t, policy).unwrap(), t, policy).unwrap()
}

/// Poisson summation of `Σ_{k∈Z} k² e^{−k²t}`: the circle pullback factor is
/// `1 + 2 Σ_{m≥1} (1 − 2π²m²/t) e^{−π²m²/t}` for length 2π.
fn circle_oracle(t: f64) -> f64 {
    1.0 + 2.0 * (1..20).map(|m| {
        let a = PI * PI * (m * m) as f64 / t;
        (1.0 - 2.0 * a) * (-a).exp()
    }).sum::<f64>()
}

#[test]
fn circle_pullback_matches_poisson_summation() {
    let model = ManifoldModel::circle(2.0 * PI).unwrap();
    for t in [0.5, 1.0, 2.0, 4.0] {
        let map = map_for(&model, t, &TruncationPolicy::fixed(120));
        for x in [0.0, 1.3, 4.0] {
            let g = map.pullback_metric(&[x]).unwrap()[(0, 0)];
            assert_abs_diff_eq!(g, circle_oracle(t), epsilon = 1e-12);
        }
    }
    // A non-2π length only rescales the chart.
    let model = ManifoldModel::circle(3.0).unwrap();
    let map = map_for(&model, 0.3, &TruncationPolicy::fixed(120));
    let g = map.pullback_metric(&[0.4]).unwrap()[(0, 0)];
    let s = 2.0 * PI / 3.0;
    assert_abs_diff_eq!(g / (3.0 / (2.0 * PI)).powi(2), circle_oracle(0.3 * s * s), epsilon = 1e-12);
}

#[test]
fn square_torus_is_homothetic() {
    let model = ManifoldModel::square_torus(2).unwrap();
    let grid = sample_grid(&model, 8).unwrap();
    for t in [0.2, 0.1, 0.05] {
        let map = map_for(&model, t, &TruncationPolicy::default());
        let rep = pullback_report(&map, &model, &grid, 0.5).unwrap();
        assert!(rep.defect_sup < 1e-12, "t = {t}: {}", rep.defect_sup);
        let tf = &rep.trace_factor;
        assert!(tf.iter().all(|v| (v - tf[0]).abs() < 1e-12));
    }
}

#[test]
fn cut_shells_break_homothety() {
    let model = ManifoldModel::square_torus(2).unwrap();
    let t = 0.1;
    let full = map_for(&model, t, &TruncationPolicy::default());
    let cut = full.truncated(full.q() - 1);
    let g = cut.pullback_metric(&[0.3, 1.1]).unwrap();
    assert!((g[(0, 0)] - g[(1, 1)]).abs() > 1e-8 || g[(0, 1)].abs() > 1e-8);
}

#[test]
fn sphere_pullback_is_conformal_with_complete_shells() {
    let model = ManifoldModel::sphere(1.5).unwrap();
    let grid = sample_grid(&model, 6).unwrap();
    let map = map_for(&model, 0.1, &TruncationPolicy::default());
    let rep = pullback_report(&map, &model, &grid, 0.5).unwrap();
    assert!(rep.defect_sup < 1e-11, "{}", rep.defect_sup);
    let tf = &rep.trace_factor;
    assert!(tf.iter().all(|v| (v - tf[0]).abs() < 1e-11));
}

/// Frame components of the product pullback summed shell by shell:
/// `G_SS = Σ c² e^{−λt} (2l+1) l(l+1) / (8πR²) μ_k` and
/// `G_CC = Σ c² e^{−λt} (2l+1)/(4πR²) (2πk/L)² μ_k`, `μ_0 = 1/L`, `μ_k = 2/L`.
#[test]
fn product_pullback_matches_shell_sums() {
    let (r, len) = (1.2, 5.0);
    let model = ManifoldModel::product(r, len).unwrap();
    let t = 0.08;
    let map = map_for(&model, t, &TruncationPolicy::with_rho(1.0));
    let provider = map.provider();
    let q = map.q();
    // Truncation must not cut a (l, k) shell for the oracle to apply.
    assert_eq!(provider.shell_end(q), q + 1);
    let lam_q = provider.lambda(q);
    let c2 = c_norm(3, t).powi(2);
    let (mut gss, mut gcc) = (0.0, 0.0);
    for l in 0..200usize {
        for k in 0..200i64 {
            let ls = (l * (l + 1)) as f64 / (r * r);
            let kc = 2.0 * PI * k as f64 / len;
            let lam = ls + kc * kc;
            if lam > lam_q + 1e-9 || (l == 0 && k == 0) {
                continue;
            }
            let mu = if k == 0 { 1.0 / len } else { 2.0 / len };
            let w = c2 * (-lam * t).exp() * (2 * l + 1) as f64 / (4.0 * PI * r * r) * mu;
            gss += w * ls / 2.0;
            gcc += w * kc * kc;
        }
    }
    let x = [0.9, 2.2, 1.4];
    let frame = geometry::orthonormal_frame(&model, &x).unwrap();
    let g = geometry::to_frame(&frame, &map.pullback_metric(&x).unwrap());
    assert_abs_diff_eq!(g[(0, 0)], gss, epsilon = 1e-10);
    assert_abs_diff_eq!(g[(1, 1)], gss, epsilon = 1e-10);
    assert_abs_diff_eq!(g[(2, 2)], gcc, epsilon = 1e-10);
    for (i, k) in [(0, 1), (0, 2), (1, 2)] {
        assert_abs_diff_eq!(g[(i, k)], 0.0, epsilon = 1e-10);
    }
}

#[test]
fn h1_on_the_product_is_block_constant() {
    let model = ManifoldModel::product(1.0, 2.0 * PI).unwrap();
    let h = first_order_correction(&model, 0.0).unwrap();
    // A₁ = (1/3)(½S g − Ric) with S = 2, Ric = g on the sphere block.
    // Frame A₁ = diag(0, 0, 1/3), trace part 1/9.
    let expect = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0 / 9.0, 1.0 / 9.0, -2.0 / 9.0]));
    assert!((h - &expect).norm() < 1e-12);
    let f = block_factors(&model, &expect, 0.1).unwrap();
    assert_abs_diff_eq!(f[0], 1.0 + 0.1 / 9.0, epsilon = 1e-15);
    assert_abs_diff_eq!(f[1], 1.0 - 0.2 / 9.0, epsilon = 1e-15);
    // Flat and round models need no correction.
    let z = first_order_correction(&ManifoldModel::square_torus(2).unwrap(), 0.0).unwrap();
    assert!(z.norm() < 1e-15);
    let s = first_order_correction(&ManifoldModel::sphere(2.0).unwrap(), 0.5).unwrap();
    assert!((s - DMatrix::identity(2, 2) * 0.5).norm() < 1e-12);
    assert!(matches!(CorrectionSpec { l: 2, eta: vec![0.0, 0.0] }.validate(), Err(Error::Unsupported(_))));
}

#[test]
fn corrected_model_rescales_blocks() {
    let model = ManifoldModel::product(1.0, 2.0 * PI).unwrap();
    let h = first_order_correction(&model, 0.0).unwrap();
    let (m, p) = corrected_model(&model, &h, 0.09, 50).unwrap();
    let x = [1.0, 0.5, 0.2];
    let g0 = geometry::metric_at(&model, &x).unwrap().g;
    let g1 = geometry::metric_at(&m, &x).unwrap().g;
    let expect = &g0 + geometry::from_frame(&geometry::orthonormal_frame(&model, &x).unwrap(), &h).unwrap() * 0.09;
    assert!((g1 - expect).norm() < 1e-12);
    assert_eq!(p.model(), Some(&m));
}

#[test]
fn product_defect_is_first_order_in_t() {
    let model = ManifoldModel::product(1.0, 2.0 * PI).unwrap();
    let t = [0.1, 0.07, 0.05];
    let rows = defect_scan(&model, &t, &TruncationPolicy::with_rho(2.0), None, 4, 0.5).unwrap();
    // Predicted leading defect: |tr⊥(t·A₁)| = t·√(1/81 + 1/81 + 4/81) = t·√6/9.
    for r in &rows {
        let lead = r.t * 6f64.sqrt() / 9.0;
        assert!((r.defect_sup / lead - 1.0).abs() < 0.15, "t = {}: {} vs {}", r.t, r.defect_sup, lead);
    }
    assert!(defect_scan(&model, &[0.05, 0.1], &TruncationPolicy::default(), None, 4, 0.5).is_err());
}

#[test]
fn truncation_policy_guards() {
    assert!(matches!(TruncationPolicy::fixed(4).q_min(0.1, 2), Err(Error::Truncation(_))));
    assert_eq!(TruncationPolicy::fixed(5).q_min(0.1, 2).unwrap(), 5);
    assert_eq!(TruncationPolicy::default().q_min(0.01, 2).unwrap(), 10000);
    assert!(TruncationPolicy::with_rho(0.0).q_min(0.1, 2).is_err());
    assert!(TruncationPolicy::default().q_min(-0.1, 2).is_err());
    let provider = Arc::new(SpectrumProvider::analytic(&ManifoldModel::circle(1.0).unwrap(), 10).unwrap());
    assert!(matches!(build_embedding(provider, 0.1, &TruncationPolicy::default()), Err(Error::Spectrum(_))));
}

#[test]
fn circle_tail_matches_direct_sum() {
    let model = ManifoldModel::circle(2.0 * PI).unwrap();
    let t = 0.1;
    let policy = TruncationPolicy::default();
    let q = policy.q_min(t, 1).unwrap();
    let provider = SpectrumProvider::analytic_complete(&model, 4 * q + 1).unwrap();
    let grid = sample_grid(&model, 32).unwrap();
    let rep = tail_bound_check(&provider, t, &policy, &grid).unwrap();
    let kq = (rep.q as f64 / 2.0).ceil() as i64;
    let kmax = ((provider.count() - 1) / 2) as i64;
    let c2 = c_norm(1, t).powi(2);
    let direct: f64 = (kq + 1..=kmax).map(|k| c2 / PI * (k * k) as f64 * (-((k * k) as f64) * t).exp()).sum();
    assert_abs_diff_eq!(rep.tail, direct, epsilon = 1e-14);
    assert!(rep.pass);
    // Too short a spectrum is refused.
    let short = SpectrumProvider::analytic_complete(&model, q + 5).unwrap();
    assert!(tail_bound_check(&short, t, &policy, &grid).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn defect_is_trace_free_and_scale_invariant(vals in prop::collection::vec(-2.0f64..2.0, 9), s in 0.1f64..10.0) {
        let a = DMatrix::from_row_slice(3, 3, &vals);
        let big = &a * a.transpose() + DMatrix::identity(3, 3) * 0.1;
        let g = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 0.5]));
        let d = conformal_defect(&big, &g).unwrap();
        let gi = g.clone().try_inverse().unwrap();
        prop_assert!(trace_factor(&d, &gi).abs() < 1e-12);
        let d2 = conformal_defect(&(&big * s), &g).unwrap();
        prop_assert!((d2 - d * s).norm() < 1e-10 * s.max(1.0));
        prop_assert!(tensor_norm(&(&g * 3.0), &gi) > 0.0);
    }

    #[test]
    fn c_norm_follows_its_power_law(t in 0.001f64..1.0, n in 1usize..4) {
        let ratio = c_norm(n, 2.0 * t) / c_norm(n, t);
        prop_assert!((ratio - 2f64.powf((n as f64 + 2.0) / 4.0)).abs() < 1e-12);
    }
}
