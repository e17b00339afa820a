//! Run configuration: TOML on disk, `--set` overrides, strict key checking.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use fracsing::catalog;
use fracsing::stationary::{Continuation, TOL_CONT};
use fracsing::verify::Scale;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Eigen,
    Stationary,
    PureSingular,
    Semilinear,
    EvolveG,
    EvolveP,
    Stabilize,
    StudyGap,
    StudySeminorm,
    VerifyAll,
}

pub const SCENARIOS: [Scenario; 10] = [
    Scenario::Eigen,
    Scenario::Stationary,
    Scenario::PureSingular,
    Scenario::Semilinear,
    Scenario::EvolveG,
    Scenario::EvolveP,
    Scenario::Stabilize,
    Scenario::StudyGap,
    Scenario::StudySeminorm,
    Scenario::VerifyAll,
];

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Eigen => "eigen",
            Scenario::Stationary => "stationary",
            Scenario::PureSingular => "pure_singular",
            Scenario::Semilinear => "semilinear",
            Scenario::EvolveG => "evolve_g",
            Scenario::EvolveP => "evolve_p",
            Scenario::Stabilize => "stabilize",
            Scenario::StudyGap => "study_gap",
            Scenario::StudySeminorm => "study_seminorm",
            Scenario::VerifyAll => "verify_all",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SCENARIOS
            .iter()
            .copied()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SCENARIOS.iter().map(|s| s.as_str()).collect();
                format!("unknown scenario '{s}' (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Domain {
    pub a: f64,
    pub b: f64,
}

impl Default for Domain {
    fn default() -> Self {
        Self { a: -1.0, b: 1.0 }
    }
}

/// A catalog entry by name with parameter overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selection {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// `amplitude · φ₁`.
    Phi1,
    /// `amplitude · (1 − x̂²)^exponent` with `x̂` the point mapped to `(−1, 1)`.
    Profile,
    /// The stationary state of the run's data.
    Steady,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Initial {
    pub kind: InitialKind,
    pub amplitude: f64,
    pub exponent: f64,
}

impl Default for Initial {
    fn default() -> Self {
        Self {
            kind: InitialKind::Phi1,
            amplitude: 0.5,
            exponent: 0.3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationConfig {
    /// Starting ε; absent means the solver default.
    pub eps0: Option<f64>,
    pub ratio: f64,
    pub tol: f64,
    pub max_levels: usize,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        let d = Continuation::default();
        Self {
            eps0: d.eps0,
            ratio: d.ratio,
            tol: TOL_CONT,
            max_levels: d.max_levels,
        }
    }
}

impl ContinuationConfig {
    pub fn to_core(&self) -> Continuation {
        Continuation {
            eps0: self.eps0,
            ratio: self.ratio,
            tol: self.tol,
            max_levels: self.max_levels,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Study {
    /// Step counts of the dt family for `study_gap`.
    pub steps: Vec<usize>,
    /// Resolutions for `study_seminorm`.
    pub ns: Vec<usize>,
    /// Explicit β; when absent `beta_factor × threshold` is used.
    pub beta: Option<f64>,
    pub beta_factor: f64,
    /// Regularization kept fixed along the seminorm refinement family.
    pub epsilon: f64,
    /// Constant data `g` of the seminorm study.
    pub g: f64,
}

impl Default for Study {
    fn default() -> Self {
        Self {
            steps: vec![10, 20, 40, 80],
            ns: vec![128, 256, 512, 1024],
            beta: None,
            beta_factor: 1.1,
            epsilon: 1e-6,
            g: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyScale {
    Quick,
    Full,
}

impl VerifyScale {
    pub fn to_core(self) -> Scale {
        match self {
            VerifyScale::Quick => Scale::Quick,
            VerifyScale::Full => Scale::Full,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Verify {
    pub scale: VerifyScale,
    /// Criteria to run; empty means all.
    pub criteria: Vec<u32>,
}

impl Default for Verify {
    fn default() -> Self {
        Self {
            scale: VerifyScale::Full,
            criteria: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: Option<Scenario>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub domain: Domain,
    pub n: usize,
    pub s: f64,
    pub q: f64,
    pub lambda: f64,
    /// Regularization for `stationary`; 0 solves the limit problem.
    pub epsilon: f64,
    pub t_final: f64,
    pub n_steps: usize,
    /// Data `g(x) = h(0, x)` for `stationary`, `h(t, x)` for the G scheme.
    pub source: Selection,
    pub nonlinearity: Selection,
    pub initial: Initial,
    pub continuation: ContinuationConfig,
    pub study: Study,
    pub verify: Verify,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            seed: 7,
            out: None,
            domain: Domain::default(),
            n: 128,
            s: 0.4,
            q: 0.5,
            lambda: 1.0,
            epsilon: 0.0,
            t_final: 1.0,
            n_steps: 20,
            source: Selection {
                name: "constant".into(),
                params: BTreeMap::new(),
            },
            nonlinearity: Selection {
                name: "saturating".into(),
                params: BTreeMap::new(),
            },
            initial: Initial::default(),
            continuation: ContinuationConfig::default(),
            study: Study::default(),
            verify: Verify::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Reads a TOML config, or a JSON manifest written by an earlier run (its
/// `config` object), as a TOML table.
pub fn load_table(path: &Path) -> Result<toml::Table, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let cfg = json.get("config").cloned().unwrap_or(json);
        let rc: RunConfig = serde_json::from_value(cfg).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        return to_table(&rc);
    }
    text.parse::<toml::Table>()
        .map_err(|e| config_err(format!("{}: {}", path.display(), e.to_string().trim())))
}

fn to_table(rc: &RunConfig) -> Result<toml::Table, CliError> {
    toml::Table::try_from(rc).map_err(|e| config_err(e.to_string()))
}

/// Applies `key.path=value`; the value is parsed as a TOML literal and taken
/// as a bare string if that fails.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("--set expects key=value, got '{assignment}'")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(config_err("--set with an empty key"));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("'{part}' in '{key}' is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Overlays `user` onto `base`, recursing into nested tables.
fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Deserializes a user table layered over the defaults, so partial nested
/// tables such as `nonlinearity.params` keep the default entry name.
pub fn from_table(table: toml::Table) -> Result<RunConfig, CliError> {
    let mut full = to_table(&RunConfig::default())?;
    merge(&mut full, table);
    RunConfig::deserialize(toml::Value::Table(full)).map_err(|e| config_err(e.to_string().trim().replace('\n', " ")))
}

impl RunConfig {
    pub fn scenario(&self) -> Scenario {
        self.scenario.expect("scenario resolved before validation")
    }

    /// Range checks and catalog lookups; runs before any compute.
    pub fn validate(&self) -> Result<(), CliError> {
        let sc = self
            .scenario
            .ok_or_else(|| config_err("no scenario given (positional, --scenario or config key)"))?;
        let Domain { a, b } = self.domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(config_err(format!("domain needs a < b, got ({a}, {b})")));
        }
        if self.n < 3 {
            return Err(config_err(format!("n must be at least 3, got {}", self.n)));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(config_err(format!("s must lie in (0, 1), got {}", self.s)));
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(config_err(format!("q must be positive, got {}", self.q)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(config_err(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(config_err(format!("epsilon must be nonnegative, got {}", self.epsilon)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(config_err(format!("t_final must be positive, got {}", self.t_final)));
        }
        if self.n_steps == 0 {
            return Err(config_err("n_steps must be at least 1"));
        }
        if !(self.initial.amplitude > 0.0) {
            return Err(config_err("initial.amplitude must be positive"));
        }
        let c = &self.continuation;
        if !(c.ratio > 0.0 && c.ratio < 1.0) || !(c.tol > 0.0) || c.max_levels == 0 {
            return Err(config_err("continuation needs 0 < ratio < 1, tol > 0, max_levels >= 1"));
        }
        if c.eps0.is_some_and(|e| !(e > 0.0)) {
            return Err(config_err("continuation.eps0 must be positive"));
        }
        match sc {
            Scenario::Stationary | Scenario::EvolveG | Scenario::StudyGap => {
                catalog::source(&self.source.name, &self.source.params).map_err(|e| config_err(e.to_string()))?;
            }
            Scenario::Semilinear | Scenario::EvolveP | Scenario::Stabilize => {
                catalog::nonlinearity(&self.nonlinearity.name, &self.nonlinearity.params)
                    .map_err(|e| config_err(e.to_string()))?;
            }
            _ => {}
        }
        if sc == Scenario::StudyGap && self.study.steps.len() < 4 {
            return Err(config_err("study.steps needs at least 4 entries"));
        }
        if sc == Scenario::StudySeminorm {
            if self.study.ns.len() < 2 || self.study.ns.iter().any(|&n| n < 3) {
                return Err(config_err("study.ns needs at least two resolutions of 3 or more nodes"));
            }
            if !self.study.g.is_finite() {
                return Err(config_err("study.g must be finite"));
            }
            if !(self.study.epsilon > 0.0) {
                return Err(config_err("study.epsilon must be positive"));
            }
        }
        if sc == Scenario::VerifyAll {
            if let Some(bad) = self.verify.criteria.iter().find(|&&c| !(1..=14).contains(&c)) {
                return Err(config_err(format!("verify.criteria: no criterion {bad}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let rc = RunConfig {
            scenario: Some(Scenario::Eigen),
            ..Default::default()
        };
        let table = to_table(&rc).unwrap();
        let back = from_table(table).unwrap();
        assert_eq!(back.n, rc.n);
        assert_eq!(back.scenario, Some(Scenario::Eigen));
    }

    #[test]
    fn unknown_keys_are_errors() {
        let t: toml::Table = "nn = 5".parse().unwrap();
        assert!(from_table(t).is_err());
        let t: toml::Table = "[domain]\nc = 1.0".parse().unwrap();
        assert!(from_table(t).is_err());
    }

    #[test]
    fn overrides_nest_and_parse() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "n=64").unwrap();
        apply_override(&mut t, "nonlinearity.params.mu=2.5").unwrap();
        apply_override(&mut t, "nonlinearity.name=linear").unwrap();
        apply_override(&mut t, "study.steps=[4, 8, 16, 32]").unwrap();
        let rc = from_table(t).unwrap();
        assert_eq!(rc.n, 64);
        assert_eq!(rc.nonlinearity.name, "linear");
        assert_eq!(rc.nonlinearity.params["mu"], 2.5);
        assert_eq!(rc.study.steps, vec![4, 8, 16, 32]);
    }

    #[test]
    fn partial_selection_keeps_default_name() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "nonlinearity.params.mu=3").unwrap();
        let rc = from_table(t).unwrap();
        assert_eq!(rc.nonlinearity.name, "saturating");
        assert_eq!(rc.nonlinearity.params["mu"], 3.0);
    }

    #[test]
    fn validation_catches_ranges_and_names() {
        let mut rc = RunConfig {
            scenario: Some(Scenario::EvolveP),
            ..Default::default()
        };
        rc.validate().unwrap();
        rc.nonlinearity.name = "cubic".into();
        assert!(rc.validate().is_err());
        rc.nonlinearity.name = "saturating".into();
        rc.s = 1.5;
        assert!(rc.validate().is_err());
    }
}
