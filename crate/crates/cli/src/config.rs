//! Run configuration: one JSON document per invocation.

use std::path::{Path, PathBuf};

use hk_conformal::embedding::{CorrectionSpec, TruncationPolicy};
use hk_conformal::geometry::ManifoldModel;
use hk_conformal::guenther::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable that overrides the output directory.
pub const OUT_ENV: &str = "HKCONF_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// `f = ε cos(θ₁)(e₁⊗e₂ + e₂⊗e₁)`.
    Manufactured,
    /// `f = −tr⊥(pullback Ψ)` with the last eigenspace cut by one component.
    SelfDefect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub t: f64,
    pub e: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub k: Vec<f64>,
    pub epsilon: f64,
    pub theta: f64,
    pub grid: usize,
    pub scenario: Scenario,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            t: 0.05,
            e: d.e,
            tol: d.tol,
            max_iter: d.max_iter,
            k: vec![0.0, 1e-3],
            epsilon: 1e-3,
            theta: d.theta,
            grid: 32,
            scenario: Scenario::Manufactured,
        }
    }
}

impl SolverSection {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { e: self.e, tol: self.tol, max_iter: self.max_iter, theta: self.theta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub count: usize,
    /// Sample-grid resolution of the dumped tables.
    pub grid: usize,
    pub tolerance: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { count: 16, grid: 16, tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub resolution: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self { resolution: 8 }
    }
}

/// Regularity indices; `s + α < l + ½` is enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Regularity {
    pub s: usize,
    pub alpha: f64,
    pub l: usize,
}

impl Default for Regularity {
    fn default() -> Self {
        Self { s: 2, alpha: 0.5, l: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Criterion numbers to run; empty runs all.
    pub criteria: Vec<u8>,
    /// Multiplies every absolute tolerance of the suite.
    pub tolerance_scale: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { criteria: Vec::new(), tolerance_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GramSection {
    pub t: f64,
    pub points: usize,
}

impl Default for GramSection {
    fn default() -> Self {
        Self { t: 0.02, points: 20 }
    }
}

fn default_rho() -> f64 {
    1.0
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ManifoldModel,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    #[serde(default)]
    pub correction: Option<CorrectionSpec>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub gram: GramSection,
    #[serde(default)]
    pub regularity: Regularity,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default = "default_out")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn check_t(name: &str, t: f64) -> Result<(), CliError> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(bad(format!("{name} must lie in (0, 1), got {t}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| bad(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn policy(&self) -> TruncationPolicy {
        TruncationPolicy::with_rho(self.rho)
    }

    /// Every cross-field constraint, before any computation starts.
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(bad(format!("rho must be positive, got {}", self.rho)));
        }
        for &t in &self.t_grid {
            check_t("t_grid entries", t)?;
        }
        if self.t_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(bad("t_grid must be strictly decreasing"));
        }
        if let Some(c) = &self.correction {
            c.validate().map_err(|e| bad(format!("correction: {e}")))?;
            if c.l > self.regularity.l {
                return Err(bad(format!("correction order {} exceeds l = {}", c.l, self.regularity.l)));
            }
        }
        let r = &self.regularity;
        if r.s < 2 {
            return Err(bad(format!("s must be at least 2, got {}", r.s)));
        }
        if !(r.alpha > 0.0 && r.alpha < 1.0) {
            return Err(bad(format!("alpha must lie in (0, 1), got {}", r.alpha)));
        }
        if !(r.s as f64 + r.alpha < r.l as f64 + 0.5) {
            return Err(bad(format!("need s + alpha < l + 1/2, got s = {}, alpha = {}, l = {}", r.s, r.alpha, r.l)));
        }
        let s = &self.solver;
        check_t("solver.t", s.t)?;
        if !(s.e > 0.0) {
            return Err(bad(format!("solver.e must be positive, got {}", s.e)));
        }
        if !(s.tol > 0.0) || s.max_iter == 0 || !(s.theta > 0.0) {
            return Err(bad("solver tol, max_iter and theta must be positive"));
        }
        if s.k.is_empty() || s.k.iter().any(|k| !k.is_finite()) {
            return Err(bad("solver.k needs at least one finite value"));
        }
        if !s.epsilon.is_finite() || s.grid < 4 || s.grid % 2 == 1 {
            return Err(bad("solver.epsilon must be finite and solver.grid even and at least 4"));
        }
        if self.spectrum.count == 0 || self.spectrum.grid < 4 || !(self.spectrum.tolerance > 0.0) {
            return Err(bad("spectrum count, grid (≥ 4) and tolerance must be positive"));
        }
        if self.scan.resolution < 4 {
            return Err(bad("scan.resolution must be at least 4"));
        }
        check_t("gram.t", self.gram.t)?;
        if self.gram.points == 0 {
            return Err(bad("gram.points must be positive"));
        }
        if self.verify.criteria.iter().any(|&c| !(1..=9).contains(&c)) {
            return Err(bad("verify.criteria entries must be 1..=9"));
        }
        if !(self.verify.tolerance_scale > 0.0) {
            return Err(bad("verify.tolerance_scale must be positive"));
        }
        Ok(())
    }
}
