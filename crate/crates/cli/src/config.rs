//! The sectioned configuration document and its `--set` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use quadnmpc::benchmark::BenchmarkConfig;
use quadnmpc::delay::DelayConfig;
use quadnmpc::lqr::LqrConfig;
use quadnmpc::ocp::OcpConfig;
use quadnmpc::qp::{IpmSettings, SolverKind};
use quadnmpc::rti::RtiSettings;
use quadnmpc::sim::{HelixConfig, SimConfig, SimSetup, SmoothStepConfig};
use quadnmpc::QuadrotorParams;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QpConfig {
    pub solver: SolverKind,
    pub block_size: usize,
    /// Stationarity, feasibility and complementarity tolerance.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for QpConfig {
    fn default() -> Self {
        let rti = RtiSettings::default();
        Self {
            solver: rti.solver,
            block_size: rti.block_size,
            tol: rti.ipm.tol,
            max_iters: rti.ipm.max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RtiConfig {
    pub split: bool,
    pub normalize_guess: bool,
}

impl Default for RtiConfig {
    fn default() -> Self {
        let rti = RtiSettings::default();
        Self {
            split: rti.split,
            normalize_guess: rti.normalize_guess,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajConfig {
    pub smooth_step: SmoothStepConfig,
    pub helix: HelixConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub horizons: Vec<usize>,
    pub lambdas: Vec<u32>,
    pub block_sizes: Vec<usize>,
    pub condensing_tol: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            horizons: vec![10, 20, 30, 40, 50],
            lambdas: vec![0, 1, 2, 4],
            block_sizes: vec![1, 2, 5, 10, 25, 50],
            condensing_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub model: QuadrotorParams,
    pub nmpc: OcpConfig,
    pub lqr: LqrConfig,
    pub qp: QpConfig,
    pub rti: RtiConfig,
    pub delay: DelayConfig,
    pub sim: SimConfig,
    pub traj: TrajConfig,
    pub study: StudyConfig,
    pub benchmark: BenchmarkConfig,
}

impl Config {
    /// Reads `path` (defaults when `None`), applies `key=value` overrides in
    /// order and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut doc: toml::Table = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        // Round-trip through text so that errors point at the offending key.
        let merged = toml::to_string(&doc).map_err(|e| CliError::Config(e.to_string()))?;
        let cfg: Config = toml::from_str(&merged).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |e: quadnmpc::Error| CliError::Config(e.to_string());
        self.setup().validate().map_err(invalid)?;
        self.benchmark.validate().map_err(invalid)?;
        if self.qp.block_size == 0 || self.qp.block_size > self.nmpc.horizon {
            return Err(CliError::Config(format!(
                "qp.block_size = {} must lie in 1..=nmpc.N ({})",
                self.qp.block_size, self.nmpc.horizon
            )));
        }
        if !(self.qp.tol > 0.0) || self.qp.max_iters == 0 {
            return Err(CliError::Config("qp.tol and qp.max_iters must be positive".into()));
        }
        Ok(())
    }

    pub fn rti_settings(&self) -> RtiSettings {
        RtiSettings {
            solver: self.qp.solver,
            block_size: self.qp.block_size,
            ipm: IpmSettings {
                tol: self.qp.tol,
                comp_tol: self.qp.tol,
                max_iters: self.qp.max_iters,
                ..IpmSettings::default()
            },
            split: self.rti.split,
            normalize_guess: self.rti.normalize_guess,
        }
    }

    pub fn setup(&self) -> SimSetup {
        SimSetup {
            model: self.model,
            nmpc: self.nmpc.clone(),
            rti: self.rti_settings(),
            lqr: self.lqr.clone(),
            delay: self.delay,
            sim: self.sim.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }
}

/// `section.key=value`; the value is parsed as TOML and falls back to a bare
/// string.
fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects section.key=value, got '{spec}'")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.len() < 2 || path.iter().any(|s| s.is_empty()) {
        return Err(CliError::Usage(format!("--set key '{key}' must be section.key")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut table = doc;
    for seg in &path[..path.len() - 1] {
        let entry = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("'{seg}' in '{key}' is not a section")))?;
    }
    table.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}
