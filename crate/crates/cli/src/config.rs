//! Simulation settings resolved from defaults, an optional JSON file and flags.

use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use tclmix::harness::{ConfigFile, ExperimentSpec, SCHEMA_VERSION};
use tclmix::{DisorderKind, DisorderSpec, SimConfig};

use crate::{SimFlags, UsageError};

/// Flat settings file; every field is optional.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimFile {
    pub schema_version: Option<u32>,
    pub n_devices: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub r: Option<f64>,
    pub x_down: Option<f64>,
    pub x_up: Option<f64>,
    pub tau0: Option<f64>,
    pub delta: Option<f64>,
    pub kind: Option<DisorderKind>,
    pub seed: Option<u64>,
    pub record_stride: Option<usize>,
}

impl SimFile {
    fn from_sim(s: &SimConfig) -> Self {
        SimFile {
            schema_version: Some(SCHEMA_VERSION),
            n_devices: Some(s.n_devices),
            dt: Some(s.dt),
            t_end: Some(s.t_end),
            r: Some(s.r),
            x_down: Some(s.x_down),
            x_up: Some(s.x_up),
            tau0: Some(s.disorder.tau0),
            delta: Some(s.disorder.delta),
            kind: Some(s.disorder.kind),
            seed: Some(s.seed),
            record_stride: Some(s.record_stride),
        }
    }
}

fn usage(msg: String) -> anyhow::Error {
    UsageError(msg).into()
}

/// Load either a flat settings file or a run directory's `config.json`.
pub fn load(path: &Path) -> Result<SimFile> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let version = value.get("schema_version").and_then(|v| v.as_u64());
    if version != Some(SCHEMA_VERSION as u64) {
        return Err(usage(format!(
            "{}: schema_version must be {SCHEMA_VERSION}, found {version:?}",
            path.display()
        )));
    }
    if value.get("experiments").is_some() {
        let cfg: ConfigFile = tclmix::harness::read_json(path).map_err(|e| usage(e.to_string()))?;
        let sim = match cfg.experiments.as_slice() {
            [only] => only.sim.clone(),
            _ => None,
        }
        .ok_or_else(|| usage(format!("{}: expected exactly one simulated experiment", path.display())))?;
        return Ok(SimFile::from_sim(&sim));
    }
    serde_json::from_value(value).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Defaults follow the r = 10, tau0 = 3 figure; file values override them and flags override both.
pub fn resolve(flags: &SimFlags) -> Result<SimConfig> {
    let file = match &flags.config {
        Some(p) => load(p)?,
        None => SimFile::default(),
    };
    let kind = flags.kind.or(file.kind).unwrap_or(DisorderKind::Gaussian);
    let tau0 = flags.tau0.or(file.tau0).unwrap_or(3.0);
    let delta = flags.delta.or(file.delta).unwrap_or(0.1);
    let disorder = DisorderSpec::new(kind, tau0, delta)?;
    let r = flags.r.or(file.r).unwrap_or(10.0);
    let n = flags.n.or(file.n_devices).unwrap_or(100_000);
    let t_end = flags.t_end.or(file.t_end).unwrap_or(100.0 * tau0);
    let seed = flags.seed.or(file.seed).unwrap_or(1);
    let mut cfg = SimConfig::with_defaults(n, r, disorder, t_end, seed);
    cfg.x_down = file.x_down.unwrap_or(cfg.x_down);
    cfg.x_up = file.x_up.unwrap_or(cfg.x_up);
    if let Some(dt) = flags.dt.or(file.dt) {
        cfg.dt = dt;
        cfg.record_stride = cfg.default_stride();
    }
    if let Some(s) = flags.record_stride.or(file.record_stride) {
        cfg.record_stride = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn spec(name: &str, flags: &SimFlags) -> Result<ExperimentSpec> {
    Ok(ExperimentSpec::from_sim(name, resolve(flags)?)?)
}
