use std::fs;
use std::path::{Path, PathBuf};

use hk_conformal::analysis;
use hk_conformal::embedding::{analytic_provider, build_embedding, defect_scan, DefectRow};
use hk_conformal::freemap::{
    assemble_p, gram, normalized_gram, numerical_rank, pc_from_p, singular_values, xi_matrix, RANK_TOL,
};
use hk_conformal::geometry::{sample_grid, ManifoldKind, ManifoldModel};
use hk_conformal::guenther::{FieldRq, FlatProblem};
use hk_conformal::spectrum::{load_external_spectrum, SpectrumProvider};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::acceptance::{self, SuiteOptions};
use crate::config::{RunConfig, Scenario};
use crate::report::{Check, Report};
use crate::CliError;

/// Effective configuration and output directory of one invocation.
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Context {
    fn tables(&self) -> Result<PathBuf, CliError> {
        let dir = self.out.join("tables");
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn finish(&self, command: &'static str, results: serde_json::Value, checks: Vec<Check>) -> Result<Report<'_>, CliError> {
        let report = Report::new(command, &self.config, results, checks);
        report.write(&self.out)?;
        Ok(report)
    }
}

fn model_slug(model: &ManifoldModel) -> String {
    match model.kind() {
        ManifoldKind::FlatTorus { periods } => format!("flat_torus_{}", periods.len()),
        ManifoldKind::Circle { .. } => "circle".into(),
        ManifoldKind::RoundSphere2 { .. } => "round_sphere2".into(),
        ManifoldKind::ProductSphereCircle { .. } => "product_sphere_circle".into(),
    }
}

/// Isometry group acts irreducibly on tangent spaces, so `Ψ_t` is a homothety.
fn is_isotropic(model: &ManifoldModel) -> bool {
    match model.kind() {
        ManifoldKind::FlatTorus { periods } => periods.len() <= 2 && periods.windows(2).all(|w| w[0] == w[1]),
        ManifoldKind::Circle { .. } | ManifoldKind::RoundSphere2 { .. } => true,
        ManifoldKind::ProductSphereCircle { .. } => false,
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn spectrum(ctx: &Context) -> Result<Report<'_>, CliError> {
    let cfg = &ctx.config;
    let sc = &cfg.spectrum;
    let provider = SpectrumProvider::analytic(&cfg.model, sc.count)?;
    let grid = sample_grid(&cfg.model, sc.grid)?;
    let dir = ctx.out.join("eigenpairs");
    fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{}.jsonl", model_slug(&cfg.model)));
    provider.export(&grid, sc.count, sc.tolerance, &path)?;
    let loaded = load_external_spectrum(&path)?;
    let lambdas: Vec<f64> = provider.pairs().iter().map(|p| p.lambda).collect();
    let reloaded: Vec<f64> = loaded.pairs().iter().map(|p| p.lambda).collect();
    let same = lambdas == reloaded;
    let results = json!({
        "file": format!("eigenpairs/{}.jsonl", model_slug(&cfg.model)),
        "count": sc.count,
        "grid_points": grid.len(),
        "lambdas": lambdas,
    });
    ctx.finish("spectrum", results, vec![Check::holds("round trip reproduces eigenvalues", same)])
}

pub fn defect_scan_cmd(ctx: &Context) -> Result<Report<'_>, CliError> {
    let cfg = &ctx.config;
    if cfg.t_grid.is_empty() {
        return Err(CliError::Config("defect-scan needs a non-empty t_grid".into()));
    }
    let rows = defect_scan(
        &cfg.model,
        &cfg.t_grid,
        &cfg.policy(),
        cfg.correction.as_ref(),
        cfg.scan.resolution,
        cfg.regularity.alpha,
    )?;
    write_csv(&ctx.tables()?.join("defect_scan.csv"), &rows)?;
    let mut checks = Vec::new();
    let sup_max = rows.iter().map(|r| r.defect_sup).fold(0.0f64, f64::max);
    let fit = if rows.len() >= 3 && rows.iter().all(|r| r.defect_sup > 0.0) {
        let y: Vec<f64> = rows.iter().map(|r| r.defect_sup).collect();
        Some(analysis::fit_order(&cfg.t_grid, &y)?)
    } else {
        None
    };
    if is_isotropic(&cfg.model) {
        checks.push(Check::at_most("max defect sup (homothety)", sup_max, 1e-10));
    } else if let Some(f) = &fit {
        if cfg.correction.is_some() {
            checks.push(Check::at_least("corrected slope", f.slope, 1.8));
        } else {
            checks.push(Check::within("uncorrected slope", f.slope, 0.85, 1.15));
        }
    }
    let results = json!({
        "table": "tables/defect_scan.csv",
        "rows": rows,
        "defect_sup_max": sup_max,
        "fit": fit,
    });
    ctx.finish("defect-scan", results, checks)
}

#[derive(Serialize)]
struct IterationRow {
    k: f64,
    l: usize,
    residual: f64,
    step_norm: f64,
    contraction: Option<f64>,
    v_norm: f64,
    bound_ok: bool,
}

#[derive(Serialize)]
struct FamilyMember {
    k: f64,
    iterations: usize,
    defect_sup: f64,
    equation_residual: f64,
    trace_min: f64,
    trace_max: f64,
    injectivity: f64,
}

pub fn perturb(ctx: &Context) -> Result<Report<'_>, CliError> {
    let cfg = &ctx.config;
    let s = &cfg.solver;
    let policy = cfg.policy();
    let map = build_embedding(analytic_provider(&cfg.model, s.t, &policy)?, s.t, &policy)?;
    let (problem, f) = match s.scenario {
        Scenario::Manufactured => {
            let pb = FlatProblem::new(map, s.grid)?;
            let f = acceptance::manufactured_defect(&pb, s.epsilon)?;
            (pb, f)
        }
        Scenario::SelfDefect => {
            let q = map.q();
            let pb = FlatProblem::new(map.truncated(q - 1), s.grid)?;
            let f = pb.negated_defect();
            (pb, f)
        }
    };
    let solver = s.solver_config();
    let w = problem.kernel_generator_field();
    let mut rows = Vec::new();
    let mut members = Vec::new();
    let mut maps: Vec<FieldRq> = Vec::new();
    let mut checks = Vec::new();
    for &k in &s.k {
        let (hist, v) = problem.fixed_point_solve(&f, k, &solver, None)?;
        rows.extend(hist.iter().map(|h| IterationRow {
            k,
            l: h.l,
            residual: h.residual,
            step_norm: h.step_norm,
            contraction: h.contraction,
            v_norm: h.v_norm,
            bound_ok: h.bound_ok,
        }));
        let c = problem.assemble_c(&v, k, &f);
        checks.push(Check::at_most(format!("verify residual k={k}"), c.equation_residual, 1e-8));
        checks.push(Check::positive(format!("injectivity k={k}"), c.injectivity));
        members.push(FamilyMember {
            k,
            iterations: hist.len(),
            defect_sup: c.defect_sup,
            equation_residual: c.equation_residual,
            trace_min: c.trace_min,
            trace_max: c.trace_max,
            injectivity: c.injectivity,
        });
        maps.push(c.c);
    }
    write_csv(&ctx.tables()?.join("iterations.csv"), &rows)?;
    let w_sup = w.sup_norm();
    let mut gaps = Vec::new();
    for (i, k) in s.k.iter().enumerate().skip(1) {
        let dk = (k - s.k[0]).abs();
        if dk == 0.0 {
            continue;
        }
        let gap = maps[0].sub(&maps[i]).sup_norm();
        checks.push(Check::at_most(format!("|C_k0 - C_k| / (2 |E(0, dk g)|) k={k}"), gap / (2.0 * dk * w_sup), 1.0));
        checks.push(Check::at_least(format!("|C_k0 - C_k| / (dk |w| / 4) k={k}"), gap / (0.25 * dk * w_sup), 1.0));
        gaps.push(json!({ "k": k, "gap_sup": gap }));
    }
    let results = json!({
        "table": "tables/iterations.csv",
        "t": s.t,
        "q": problem.map().q(),
        "grid": s.grid,
        "scenario": s.scenario,
        "f_sup": f.sup_norm(),
        "kernel_generator_sup": w_sup,
        "family": members,
        "gaps": gaps,
    });
    ctx.finish("perturb", results, checks)
}

pub fn verify(ctx: &Context) -> Result<Report<'_>, CliError> {
    let cfg = &ctx.config;
    let criteria = if cfg.verify.criteria.is_empty() { acceptance::ALL.to_vec() } else { cfg.verify.criteria.clone() };
    let outcomes =
        acceptance::run_suite(SuiteOptions { seed: cfg.seed, tolerance_scale: cfg.verify.tolerance_scale, criteria });
    for o in &outcomes {
        println!("{}", o.line());
    }
    let checks = outcomes
        .iter()
        .flat_map(|o| {
            let mut c: Vec<Check> = o.checks.iter().map(|c| Check { name: format!("[{}] {}", o.id, c.name), ..c.clone() }).collect();
            if o.error.is_some() {
                c.push(Check::at_most(format!("[{}] completed without error", o.id), 1.0, 0.0));
            }
            c
        })
        .collect();
    ctx.finish("verify", json!({ "criteria": outcomes }), checks)
}

#[derive(Serialize)]
struct GramRow {
    point: usize,
    x: String,
    rank_p: usize,
    p_smin_over_smax: f64,
    pc_smin_over_smax: f64,
    pc_second_over_smax: f64,
    p_block_dev: f64,
    pc_block_dev: f64,
}

pub fn gram_cmd(ctx: &Context) -> Result<Report<'_>, CliError> {
    let cfg = &ctx.config;
    let t = cfg.gram.t;
    let policy = cfg.policy();
    let map = build_embedding(analytic_provider(&cfg.model, t, &policy)?, t, &policy)?;
    let n = cfg.model.dim();
    let nf = n as f64;
    let m = n * (n + 1) / 2;
    let off = n * (n - 1) / 2;
    let limit = |diag: DMatrix<f64>| {
        let mut l = DMatrix::identity(m, m);
        l.view_mut((off, off), (n, n)).copy_from(&diag);
        l
    };
    let lim_p = limit(xi_matrix(n, 1.0 / 3.0) * 3.0);
    let lim_pc = limit(xi_matrix(n, if n > 1 { -1.0 / (nf - 1.0) } else { 0.0 }) * ((2.0 * nf - 2.0) / nf));
    // Random points drawn from the sample grid, which avoids chart boundaries.
    let grid = sample_grid(&cfg.model, 16)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    for point in 0..cfg.gram.points {
        let x = &grid.points[rng.gen_range(0..grid.len())];
        let p = assemble_p(&map, x)?.mat;
        let g = normalized_gram(&gram(&p), n, t);
        let gc = normalized_gram(&gram(&pc_from_p(&p, n)), n, t);
        let s = singular_values(&g);
        let sc = singular_values(&gc);
        rows.push(GramRow {
            point,
            x: x.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" "),
            rank_p: numerical_rank(&p, RANK_TOL),
            p_smin_over_smax: s[s.len() - 1] / s[0],
            pc_smin_over_smax: sc[sc.len() - 1] / sc[0],
            pc_second_over_smax: sc[sc.len() - 2] / sc[0],
            p_block_dev: (g.view((n, n), (m, m)) - &lim_p).amax(),
            pc_block_dev: (gc.view((n, n), (m, m)) - &lim_pc).amax(),
        });
    }
    write_csv(&ctx.tables()?.join("gram.csv"), &rows)?;
    let min = |f: fn(&GramRow) -> f64| rows.iter().map(f).fold(f64::INFINITY, f64::min);
    let max = |f: fn(&GramRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let checks = vec![
        Check::at_least("rank P", rows.iter().map(|r| r.rank_p).min().unwrap_or(0) as f64, (n * (n + 3) / 2) as f64),
        Check::at_least("gram(P) s_min/s_max", min(|r| r.p_smin_over_smax), 1e-3),
        Check::at_most("gram(P_c) s_min/s_max", max(|r| r.pc_smin_over_smax), 1e-8),
        Check::at_least("gram(P_c) s_second/s_max", min(|r| r.pc_second_over_smax), 1e-3),
        Check::at_most("gram(P) block deviation", max(|r| r.p_block_dev), 5.0 * t),
        Check::at_most("gram(P_c) block deviation", max(|r| r.pc_block_dev), 5.0 * t),
    ];
    let results = json!({ "table": "tables/gram.csv", "t": t, "q": map.q(), "points": rows.len() });
    ctx.finish("gram", results, checks)
}

pub fn scaling(ctx: &Context) -> Result<Report<'_>, CliError> {
    let cfg = &ctx.config;
    if cfg.t_grid.len() < 3 {
        return Err(CliError::Config("scaling needs at least 3 t_grid values".into()));
    }
    let rep = analysis::scaling_diagnostics(
        &cfg.model,
        &cfg.t_grid,
        &cfg.policy(),
        cfg.solver.grid,
        cfg.regularity.alpha,
        4,
        cfg.seed,
    )?;
    write_csv(&ctx.tables()?.join("scaling.csv"), &rep.rows)?;
    let checks = rep
        .checks
        .iter()
        .map(|c| Check::at_least(format!("{} slope", c.name), c.fit.slope, -c.exponent - 0.25))
        .collect();
    ctx.finish("scaling", json!({ "table": "tables/scaling.csv", "rows": rep.rows, "checks": rep.checks }), checks)
}

/// Rows of `defect_scan.csv`, for callers that post-process the table.
pub fn read_defect_table(path: &Path) -> Result<Vec<DefectRow>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
