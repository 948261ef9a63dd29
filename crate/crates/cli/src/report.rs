use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
    Within,
    Positive,
    Holds,
}

/// One quantitative check: `value` against `limit` (or `[limit, upper]`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub limit: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, relation: Relation::AtMost, limit, upper: None, pass: value <= limit }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, relation: Relation::AtLeast, limit, upper: None, pass: value >= limit }
    }

    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: Relation::Within,
            limit: lo,
            upper: Some(hi),
            pass: value >= lo && value <= hi,
        }
    }

    pub fn positive(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), value, relation: Relation::Positive, limit: 0.0, upper: None, pass: value > 0.0 }
    }

    /// A yes/no property, recorded as 1 or 0.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self { name: name.into(), value: f64::from(u8::from(ok)), relation: Relation::Holds, limit: 1.0, upper: None, pass: ok }
    }

    pub fn describe(&self) -> String {
        match self.relation {
            Relation::AtMost => format!("{} = {:.4e} <= {:.1e}", self.name, self.value, self.limit),
            Relation::AtLeast => format!("{} = {:.4e} >= {:.1e}", self.name, self.value, self.limit),
            Relation::Positive => format!("{} = {:.4e} > 0", self.name, self.value),
            Relation::Holds => format!("{}: {}", self.name, if self.pass { "yes" } else { "no" }),
            Relation::Within => {
                format!("{} = {:.4} in [{}, {}]", self.name, self.value, self.limit, self.upper.unwrap_or(f64::NAN))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Conventions {
    pub eigen_indexing: &'static str,
    pub components: &'static str,
    pub charts: &'static str,
    pub frame: &'static str,
    pub jet_rows: &'static str,
    pub normalization: &'static str,
}

pub const CONVENTIONS: Conventions = Conventions {
    eigen_indexing: "multiplicity-inclusive, ascending, phi_0 constant",
    components: "Psi_t uses j = 1..q; q rounded up to complete eigenspaces",
    charts: "tori and circles in angles [0, 2pi) with g = diag((L/2pi)^2); sphere polar (theta, phi)",
    frame: "orthonormal frame e_a = g_aa^(-1/2) d/dx^a (diagonal metrics)",
    jet_rows: "first derivatives, then second: off-diagonal pairs lexicographic, then diagonal",
    normalization: "c_norm = sqrt(2) (4 pi)^(n/4) t^((n+2)/4)",
};

#[derive(Debug, Clone, Serialize)]
pub struct Report<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: &'static str,
    /// The only field that differs between identical runs.
    pub timestamp: u64,
    pub conventions: Conventions,
    pub config: &'a RunConfig,
    pub results: Value,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl<'a> Report<'a> {
    pub fn new(command: &'static str, config: &'a RunConfig, results: Value, checks: Vec<Check>) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let pass = checks.iter().all(|c| c.pass);
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: hk_conformal::VERSION,
            command,
            timestamp,
            conventions: CONVENTIONS,
            config,
            results,
            checks,
            pass,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(dir.join("report.json"), text)?;
        Ok(())
    }
}
