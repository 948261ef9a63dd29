//! The acceptance suite: nine criteria, each a list of quantitative checks.

use std::cell::OnceCell;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use hk_conformal::embedding::{
    analytic_provider, build_embedding, defect_scan, pullback_report, tail_bound_check, CorrectionSpec,
    TruncationPolicy,
};
use hk_conformal::freemap::{
    assemble_p, block_inverse, gram, j_matrix, normalized_gram, numerical_rank, pc_from_p, singular_values,
    xi_inverse, xi_matrix, RhsVector, RightInverse,
};
use hk_conformal::geometry::{sample_grid, ManifoldModel};
use hk_conformal::guenther::{FieldRq, FlatProblem, IterationState, SolverConfig, SymField};
use hk_conformal::spectrum::SpectrumProvider;
use hk_conformal::{analysis, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::report::Check;

/// Checks that fail with the current method, with the reason. Matched by name prefix.
pub const KNOWN_UNATTAINABLE: &[(&str, &str)] = &[(
    "tail FlatTorus",
    "the 2pi-torus tail fits 4.5 exp(-0.26/t) from t = 0.1, 0.05 and reaches exp(-t^(-1/2)) only near t = 0.04",
)];

pub fn known_reason(check: &str) -> Option<&'static str> {
    KNOWN_UNATTAINABLE.iter().find(|(p, _)| check.starts_with(p)).map(|(_, r)| *r)
}

pub const ALL: [u8; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Multiplies every absolute error tolerance.
    pub tolerance_scale: f64,
    pub criteria: Vec<u8>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seed: 0, tolerance_scale: 1.0, criteria: ALL.to_vec() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub runtime_limit_s: f64,
    /// Wall time; kept out of reports so they stay reproducible.
    #[serde(skip)]
    pub runtime_s: f64,
    pub pass: bool,
}

impl CriterionOutcome {
    pub fn within_runtime(&self) -> bool {
        self.runtime_s <= self.runtime_limit_s
    }

    /// Failing checks not covered by [`KNOWN_UNATTAINABLE`].
    pub fn unexpected_failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass && known_reason(&c.name).is_none()).collect()
    }

    pub fn line(&self) -> String {
        let mut s = format!(
            "{} [{}] {} ({:.1} s, limit {} s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.runtime_s,
            self.runtime_limit_s
        );
        if let Some(e) = &self.error {
            s.push_str(&format!("\n      error: {e}"));
        }
        for c in &self.checks {
            s.push_str(&format!("\n      {} {}", if c.pass { "ok  " } else { "FAIL" }, c.describe()));
            if !c.pass {
                if let Some(r) = known_reason(&c.name) {
                    s.push_str(&format!(" (known: {r})"));
                }
            }
        }
        s
    }
}

const TITLES: [(&str, f64); 9] = [
    ("homothety exactness on the square flat torus", 60.0),
    ("circle scale factor", 5.0),
    ("first-order defect law on S2 x S1", 600.0),
    ("rank laws of gram(P) and gram(P_c)", 30.0),
    ("right-inverse family", 30.0),
    ("fixed-point convergence", 300.0),
    ("conformal family in k", 300.0),
    ("linear-algebra layer", 10.0),
    ("tail bound", 30.0),
];

/// Flat-torus solver context shared by criteria 6 and 7.
struct Solved {
    problem: FlatProblem,
    f: SymField,
    history: Vec<IterationState>,
    v: FieldRq,
}

pub struct Suite {
    opts: SuiteOptions,
    solved: OnceCell<std::result::Result<Solved, String>>,
}

fn square_torus() -> Result<ManifoldModel> {
    ManifoldModel::flat_torus(&[2.0 * PI, 2.0 * PI])
}

fn torus_map(t: f64) -> Result<hk_conformal::embedding::EmbeddingMap> {
    let model = square_torus()?;
    let policy = TruncationPolicy::default();
    build_embedding(analytic_provider(&model, t, &policy)?, t, &policy)
}

/// `ε cos(θ₁)(e₁⊗e₂ + e₂⊗e₁)`, the manufactured traceless defect.
pub fn manufactured_defect(problem: &FlatProblem, eps: f64) -> Result<SymField> {
    let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    SymField::single_mode(problem.spectral().grid(), &s, &[1, 0], eps)
}

/// Smooth random kick: three random plane waves per component.
pub fn random_kick(rng: &mut ChaCha8Rng, q: usize, points: &[Vec<f64>], amp: f64) -> FieldRq {
    let mut out = FieldRq::zeros(q, points.len());
    for c in 0..q {
        let modes: Vec<([f64; 2], f64, f64)> = (0..3)
            .map(|_| {
                let k = [rng.gen_range(-3i32..=3) as f64, rng.gen_range(-3i32..=3) as f64];
                (k, amp * rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI))
            })
            .collect();
        for (o, x) in out.component_mut(c).iter_mut().zip(points) {
            *o = modes.iter().map(|(k, a, ph)| a * (k[0] * x[0] + k[1] * x[1] + ph).cos()).sum();
        }
    }
    out
}

impl Suite {
    pub fn new(opts: SuiteOptions) -> Self {
        Self { opts, solved: OnceCell::new() }
    }

    pub fn run(&self) -> Vec<CriterionOutcome> {
        let mut ids = self.opts.criteria.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter().map(|id| self.run_one(id)).collect()
    }

    pub fn run_one(&self, id: u8) -> CriterionOutcome {
        let (title, limit) = TITLES[(id - 1) as usize];
        let start = Instant::now();
        let res = match id {
            1 => self.homothety(),
            2 => self.circle(),
            3 => self.defect_law(),
            4 => self.rank_laws(),
            5 => self.right_inverse(),
            6 => self.convergence(),
            7 => self.family(),
            8 => self.linear_algebra(),
            9 => self.tail(),
            _ => Err(hk_conformal::Error::InvalidArgument(format!("no criterion {id}"))),
        };
        let runtime_s = start.elapsed().as_secs_f64();
        let (checks, error) = match res {
            Ok(c) => (c, None),
            Err(e) => (Vec::new(), Some(e.to_string())),
        };
        let pass = error.is_none() && checks.iter().all(|c| c.pass);
        CriterionOutcome { id, title, checks, error, runtime_limit_s: limit, runtime_s, pass }
    }

    fn tol(&self, v: f64) -> f64 {
        v * self.opts.tolerance_scale
    }

    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.opts.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt))
    }

    fn homothety(&self) -> Result<Vec<Check>> {
        let model = square_torus()?;
        let grid = sample_grid(&model, 32)?;
        let mut checks = Vec::new();
        for t in [0.05, 0.02, 0.01] {
            let map = torus_map(t)?;
            checks.push(Check::at_least(format!("q at t={t}"), map.q() as f64, (t * t).recip().ceil()));
            let rep = pullback_report(&map, &model, &grid, 0.5)?;
            checks.push(Check::at_most(format!("defect sup at t={t}"), rep.defect_sup, self.tol(1e-10)));
        }
        Ok(checks)
    }

    fn circle(&self) -> Result<Vec<Check>> {
        let model = ManifoldModel::circle(2.0 * PI)?;
        let t = 0.1;
        let policy = TruncationPolicy::default();
        let map = build_embedding(analytic_provider(&model, t, &policy)?, t, &policy)?;
        let grid = sample_grid(&model, 64)?;
        let mut dev = 0.0f64;
        for x in &grid.points {
            dev = dev.max((map.pullback_metric(x)?[(0, 0)] - 1.0).abs());
        }
        Ok(vec![
            Check::at_least("q", map.q() as f64, 32.0),
            Check::at_most("max |pullback - 1|", dev, self.tol(1e-8)),
        ])
    }

    fn defect_law(&self) -> Result<Vec<Check>> {
        let model = ManifoldModel::product(1.0, 2.0 * PI)?;
        let ts = [0.1, 0.07, 0.05, 0.035, 0.025];
        let policy = TruncationPolicy::with_rho(2.0);
        let plain = defect_scan(&model, &ts, &policy, None, 4, 0.5)?;
        let corrected = defect_scan(&model, &ts, &policy, Some(&CorrectionSpec::first_order(0.0)), 4, 0.5)?;
        let slope = |rows: &[hk_conformal::embedding::DefectRow]| -> Result<f64> {
            let y: Vec<f64> = rows.iter().map(|r| r.defect_sup).collect();
            Ok(analysis::fit_order(&ts, &y)?.slope)
        };
        Ok(vec![
            Check::within("uncorrected slope", slope(&plain)?, 0.85, 1.15),
            Check::at_least("corrected slope (eta1 = 0)", slope(&corrected)?, 1.8),
        ])
    }

    fn rank_laws(&self) -> Result<Vec<Check>> {
        let t = 0.02;
        let n = 2;
        let map = torus_map(t)?;
        let mut rng = self.rng(4);
        let nf = n as f64;
        let mut lim_p = DMatrix::<f64>::identity(3, 3);
        lim_p.view_mut((1, 1), (2, 2)).copy_from(&(xi_matrix(n, 1.0 / 3.0) * 3.0));
        let mut lim_pc = DMatrix::<f64>::identity(3, 3);
        lim_pc.view_mut((1, 1), (2, 2)).copy_from(&(xi_matrix(n, -1.0 / (nf - 1.0)) * ((2.0 * nf - 2.0) / nf)));
        let (mut p_ratio, mut pc_small, mut pc_second) = (f64::INFINITY, 0.0f64, f64::INFINITY);
        let (mut dev_p, mut dev_pc, mut rank_min) = (0.0f64, 0.0f64, usize::MAX);
        for _ in 0..20 {
            let x = [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)];
            let p = assemble_p(&map, &x)?.mat;
            rank_min = rank_min.min(numerical_rank(&p, hk_conformal::freemap::RANK_TOL));
            let g = normalized_gram(&gram(&p), n, t);
            let s = singular_values(&g);
            p_ratio = p_ratio.min(s[s.len() - 1] / s[0]);
            dev_p = dev_p.max((g.view((n, n), (3, 3)) - &lim_p).amax());
            let gc = normalized_gram(&gram(&pc_from_p(&p, n)), n, t);
            let s = singular_values(&gc);
            pc_small = pc_small.max(s[s.len() - 1] / s[0]);
            pc_second = pc_second.min(s[s.len() - 2] / s[0]);
            dev_pc = dev_pc.max((gc.view((n, n), (3, 3)) - &lim_pc).amax());
        }
        Ok(vec![
            Check::at_least("gram(P) s_min/s_max", p_ratio, 1e-3),
            Check::at_most("gram(P_c) s_min/s_max", pc_small, self.tol(1e-8)),
            Check::at_least("gram(P_c) s_second/s_max", pc_second, 1e-3),
            Check::at_most("gram(P) block vs I + 3 Xi(1/3)", dev_p, self.tol(5.0 * t)),
            Check::at_most("gram(P_c) block vs I + Xi(-1)", dev_pc, self.tol(5.0 * t)),
            Check::at_least("rank P", rank_min as f64, 5.0),
        ])
    }

    fn right_inverse(&self) -> Result<Vec<Check>> {
        let n = 2;
        let map = torus_map(0.05)?;
        let mut rng = self.rng(5);
        let metric_norm = RhsVector::metric(n).to_vector().norm();
        let (mut solve, mut kernel, mut family, mut shift) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for _ in 0..10 {
            let x = [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)];
            let op = RightInverse::at(&map, &x)?;
            let pc = pc_from_p(&op.p, n);
            for _ in 0..10 {
                let rhs = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
                solve = solve.max((&op.p * op.apply(&rhs) - &rhs).norm() / rhs.norm());
            }
            let w = op.kernel_generator();
            kernel = kernel.max((&pc * &w).norm() / metric_norm);
            let d: f64 = rng.gen_range(-1.0..1.0);
            let h = [rng.gen_range(-1.0..1.0), d, -d];
            let base = op.apply_ec(&h, 0.0)?;
            for k in [-1.0, 0.0, 0.5, 2.0] {
                let v = op.apply_ec(&h, k)?;
                family = family.max((&pc * &v - &pc * &base).amax());
                shift = shift.max((&v - &base - &w * k).amax());
            }
        }
        Ok(vec![
            Check::at_most("|P E(rhs) - rhs| / |rhs|", solve, self.tol(1e-9)),
            Check::at_most("|P_c w| / |(0, g)|", kernel, self.tol(1e-9)),
            Check::at_most("P_c E_c(h, k) spread over k", family, self.tol(1e-10)),
            Check::at_most("E_c(h, k) - E_c(h, 0) - k w", shift, self.tol(1e-12)),
        ])
    }

    fn solved(&self) -> Result<&Solved> {
        let s = self.solved.get_or_init(|| {
            let build = || -> Result<Solved> {
                let problem = FlatProblem::new(torus_map(0.05)?, 32)?;
                let f = manufactured_defect(&problem, 1e-3)?;
                let (history, v) = problem.fixed_point_solve(&f, 0.0, &SolverConfig::default(), None)?;
                Ok(Solved { problem, f, history, v })
            };
            build().map_err(|e| e.to_string())
        });
        s.as_ref().map_err(|e| hk_conformal::Error::Precondition(e.clone()))
    }

    fn convergence(&self) -> Result<Vec<Check>> {
        let s = self.solved()?;
        let pb = &s.problem;
        let cfg = SolverConfig::default();
        let seed_norm = pb.seed(&s.f, 0.0).sup_norm();
        let contraction = s.history.iter().filter_map(|h| h.contraction).fold(0.0f64, f64::max);
        let excess = s.history.iter().map(|h| h.v_norm / seed_norm - 1.0).fold(f64::NEG_INFINITY, f64::max);
        let residual = pb.verify_conformal(&s.v, &s.f).sup;
        let mut rng = self.rng(6);
        let kick = random_kick(&mut rng, pb.map().q(), pb.points(), 1e-6);
        let (_, again) = pb.fixed_point_solve(&s.f, 0.0, &cfg, Some(&s.v.add(&kick)))?;
        Ok(vec![
            Check::at_most("iterations", s.history.len() as f64, 20.0),
            Check::at_most("max contraction from step 2", contraction, 0.5),
            Check::at_most("max |v_l|/|seed| - 1", excess, 1e-6),
            Check::holds("iterate bound held at every step", s.history.iter().all(|h| h.bound_ok)),
            Check::at_most("verify residual", residual, self.tol(1e-8)),
            Check::at_most("reconvergence distance", again.sub(&s.v).sup_norm(), self.tol(1e-8)),
        ])
    }

    fn family(&self) -> Result<Vec<Check>> {
        let s = self.solved()?;
        let pb = &s.problem;
        let k1 = 1e-3;
        let (_, v1) = pb.fixed_point_solve(&s.f, k1, &SolverConfig::default(), None)?;
        let c0 = pb.assemble_c(&s.v, 0.0, &s.f);
        let c1 = pb.assemble_c(&v1, k1, &s.f);
        let w = pb.kernel_generator_field();
        let gap = c0.c.sub(&c1.c).sup_norm();
        Ok(vec![
            Check::at_most("verify residual k=0", c0.equation_residual, self.tol(1e-8)),
            Check::at_most("verify residual k=1e-3", c1.equation_residual, self.tol(1e-8)),
            Check::at_most("|C_0 - C_k| / (2 |E(0, k g)|)", gap / (2.0 * w.scaled(k1).sup_norm()), 1.0),
            Check::at_least("|C_0 - C_k| / (k |w| / 4)", gap / (0.25 * k1 * w.sup_norm()), 1.0),
            Check::positive("injectivity k=0", c0.injectivity),
            Check::positive("injectivity k=1e-3", c1.injectivity),
        ])
    }

    fn linear_algebra(&self) -> Result<Vec<Check>> {
        let (mut inv_err, mut ident_err, mut rank_ok) = (0.0f64, 0.0f64, true);
        for n in 2..=6usize {
            let nf = n as f64;
            let lower = -1.0 / (nf - 1.0);
            for sigma in [-0.2f64, 0.0, 1.0 / 3.0, 0.9] {
                let s = sigma.max(lower + 1e-3);
                inv_err = inv_err.max((xi_matrix(n, s) * xi_inverse(n, s)? - DMatrix::identity(n, n)).amax());
            }
            rank_ok &= numerical_rank(&xi_matrix(n, lower), 1e-10) == n - 1;
            let lhs = xi_matrix(n, 1.0 / 3.0) * 3.0 - j_matrix(n) * ((nf + 2.0) / nf);
            let rhs = xi_matrix(n, lower) * ((2.0 * nf - 2.0) / nf);
            ident_err = ident_err.max((lhs - rhs).amax());
        }
        let mut rng = self.rng(8);
        let mut block_err = 0.0f64;
        let random = |rng: &mut ChaCha8Rng, r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
        for _ in 0..100 {
            let (n1, n2) = (rng.gen_range(1..4), rng.gen_range(1..7));
            let spd = |rng: &mut ChaCha8Rng, n: usize| {
                let a = random(rng, n, n);
                &a * a.transpose() + DMatrix::identity(n, n) * n as f64
            };
            let a1 = spd(&mut rng, n1);
            let a2 = spd(&mut rng, n2);
            let b = random(&mut rng, n2, n1) * 0.3;
            let mut full = DMatrix::zeros(n1 + n2, n1 + n2);
            full.view_mut((0, 0), (n1, n1)).copy_from(&a1);
            full.view_mut((n1, n1), (n2, n2)).copy_from(&a2);
            full.view_mut((n1, 0), (n2, n1)).copy_from(&b);
            full.view_mut((0, n1), (n1, n2)).copy_from(&b.transpose());
            let dense = full
                .try_inverse()
                .ok_or_else(|| hk_conformal::Error::Singular("random draw".into()))?;
            block_err = block_err.max((block_inverse(&a1, &a2, &b)? - dense).amax());
        }
        Ok(vec![
            Check::at_most("Xi inverse error", inv_err, self.tol(1e-12)),
            Check::holds("rank Xi(-1/(n-1)) = n-1", rank_ok),
            Check::at_most("block inverse vs dense", block_err, self.tol(1e-10)),
            Check::at_most("3 Xi(1/3) identity", ident_err, self.tol(1e-14)),
        ])
    }

    fn tail(&self) -> Result<Vec<Check>> {
        let policy = TruncationPolicy::with_rho(1.0);
        let cases = [("Circle", ManifoldModel::circle(2.0 * PI)?, 64), ("FlatTorus", square_torus()?, 32)];
        let mut checks = Vec::new();
        for (name, model, res) in cases {
            let grid = sample_grid(&model, res)?;
            for t in [0.1, 0.05] {
                let q_min = policy.q_min(t, model.dim())?;
                let q = SpectrumProvider::analytic_complete(&model, q_min + 1)?.shell_end(q_min) - 1;
                let provider = Arc::new(SpectrumProvider::analytic_complete(&model, 4 * q + 1)?);
                let rep = tail_bound_check(&provider, t, &policy, &grid)?;
                checks.push(Check::at_most(format!("tail {name} t={t}"), rep.tail, rep.bound));
            }
        }
        Ok(checks)
    }
}

pub fn run_suite(opts: SuiteOptions) -> Vec<CriterionOutcome> {
    Suite::new(opts).run()
}
