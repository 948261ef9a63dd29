use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hk_conformal::spectrum::load_external_spectrum;

const TORUS: &str = r#"{ "kind": "FlatTorus", "params": { "periods": [6.283185307179586, 6.283185307179586] } }"#;
const CIRCLE: &str = r#"{ "kind": "Circle", "params": { "length": 6.283185307179586 } }"#;

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

fn hkconf(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hkconf"));
    cmd.args(args).env("RUST_BACKTRACE", "0").env_remove("HKCONF_OUT");
    if let Some(d) = env_out {
        cmd.env("HKCONF_OUT", d);
    }
    cmd.output().unwrap()
}

fn run(command: &str, config: &Path, out: &Path) -> Output {
    hkconf(&[command, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()], None)
}

fn without_timestamp(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.contains("\"timestamp\"")).collect::<Vec<_>>().join("\n")
}

#[test]
fn circle_spectrum_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!(r#"{{ "model": {CIRCLE}, "spectrum": {{ "count": 7, "grid": 16 }} }}"#));
    let out = dir.path().join("out");
    let o = run("spectrum", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let loaded = load_external_spectrum(&out.join("eigenpairs/circle.jsonl")).unwrap();
    let lambdas: Vec<f64> = loaded.pairs().iter().map(|p| p.lambda).collect();
    assert_eq!(lambdas, vec![0.0, 1.0, 1.0, 4.0, 4.0, 9.0, 9.0]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "spectrum");
    assert_eq!(report["pass"], true);
    assert_eq!(report["config"]["model"]["kind"], "Circle");
    assert!(report["conventions"]["eigen_indexing"].is_string());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad_kind = write_config(dir.path(), r#"{ "model": { "kind": "KleinBottle", "params": {} } }"#);
    assert_eq!(run("spectrum", &bad_kind, &out).status.code(), Some(2));
    let bad_reg = write_config(
        dir.path(),
        &format!(r#"{{ "model": {TORUS}, "regularity": {{ "s": 2, "alpha": 0.5, "l": 2 }} }}"#),
    );
    assert_eq!(run("spectrum", &bad_reg, &out).status.code(), Some(2));
    let no_grid = write_config(dir.path(), &format!(r#"{{ "model": {TORUS} }}"#));
    assert_eq!(run("defect-scan", &no_grid, &out).status.code(), Some(2));
    assert_eq!(run("spectrum", &dir.path().join("missing.json"), &out).status.code(), Some(2));
    assert!(!out.join("report.json").exists());
}

#[test]
fn entry_condition_violation_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!(r#"{{ "model": {TORUS}, "solver": {{ "epsilon": 5.0, "k": [0.0] }} }}"#));
    let o = run("perturb", &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("entry condition"));
    let curved = write_config(
        dir.path(),
        r#"{ "model": { "kind": "RoundSphere2", "params": { "radius": 1.0 } }, "solver": { "t": 0.2, "k": [0.0] } }"#,
    );
    assert_eq!(run("perturb", &curved, &dir.path().join("out")).status.code(), Some(3));
}

#[test]
fn iteration_budget_exhaustion_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!(r#"{{ "model": {TORUS}, "solver": {{ "max_iter": 2, "k": [0.0] }} }}"#));
    assert_eq!(run("perturb", &cfg, &dir.path().join("out")).status.code(), Some(4));
}

#[test]
fn perturb_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!(r#"{{ "model": {TORUS}, "solver": {{ "k": [0.0, 0.001] }}, "seed": 9 }}"#));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("perturb", &cfg, &a).status.code(), Some(0));
    let o = hkconf(&["perturb", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--threads", "1"], None);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(without_timestamp(&a.join("report.json")), without_timestamp(&b.join("report.json")));
    assert_eq!(
        fs::read(a.join("tables/iterations.csv")).unwrap(),
        fs::read(b.join("tables/iterations.csv")).unwrap()
    );
    let header = fs::read_to_string(a.join("tables/iterations.csv")).unwrap();
    assert!(header.starts_with("k,l,residual,step_norm,contraction,v_norm,bound_ok\n"));
}

#[test]
fn gram_probes_follow_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!(r#"{{ "model": {TORUS}, "gram": {{ "t": 0.05, "points": 5 }} }}"#));
    let c = cfg.to_str().unwrap();
    let outs: Vec<_> = ["1", "1", "2"].iter().enumerate().map(|(i, s)| {
        let out = dir.path().join(format!("o{i}"));
        let o = hkconf(&["gram", "--config", c, "--out", out.to_str().unwrap(), "--seed", s], None);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(out.join("tables/gram.csv")).unwrap()
    }).collect();
    assert_eq!(outs[0], outs[1]);
    assert_ne!(outs[0], outs[2]);
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_out = dir.path().join("from_config");
    let cfg = write_config(
        dir.path(),
        &format!(r#"{{ "model": {CIRCLE}, "spectrum": {{ "count": 3 }}, "output": {:?} }}"#, cfg_out.to_str().unwrap()),
    );
    let c = cfg.to_str().unwrap();
    let env_out = dir.path().join("from_env");
    let flag_out = dir.path().join("from_flag");
    assert_eq!(hkconf(&["spectrum", "--config", c], None).status.code(), Some(0));
    assert!(cfg_out.join("report.json").exists());
    assert_eq!(hkconf(&["spectrum", "--config", c], Some(&env_out)).status.code(), Some(0));
    assert!(env_out.join("report.json").exists());
    assert_eq!(hkconf(&["spectrum", "--config", c, "--out", flag_out.to_str().unwrap()], Some(&env_out)).status.code(), Some(0));
    assert!(flag_out.join("report.json").exists());
}

#[test]
fn defect_scan_writes_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!(r#"{{ "model": {TORUS}, "t_grid": [0.2, 0.1, 0.05], "scan": {{ "resolution": 8 }} }}"#));
    let out = dir.path().join("out");
    assert_eq!(run("defect-scan", &cfg, &out).status.code(), Some(0));
    let rows = hkconf::commands::read_defect_table(&out.join("tables/defect_scan.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.defect_sup <= 1e-10));
    let text = fs::read_to_string(out.join("tables/defect_scan.csv")).unwrap();
    assert!(text.starts_with("t,q,defect_sup,defect_holder,trace_min,trace_max\n"));
}

#[test]
fn verify_reports_selected_failures_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_config(dir.path(), &format!(r#"{{ "model": {TORUS}, "verify": {{ "criteria": [2, 8] }} }}"#));
    let o = run("verify", &ok, &dir.path().join("ok"));
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS [2]") && stdout.contains("PASS [8]"), "{stdout}");
    let strict = write_config(
        dir.path(),
        &format!(r#"{{ "model": {TORUS}, "verify": {{ "criteria": [2, 8], "tolerance_scale": 1e-9 }} }}"#),
    );
    let o = run("verify", &strict, &dir.path().join("strict"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL [2]"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("strict/report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], false);
    assert_eq!(report["results"]["criteria"].as_array().unwrap().len(), 2);
}
