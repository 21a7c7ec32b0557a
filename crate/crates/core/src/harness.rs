//! Run configuration, seeded single and batch experiments, and summaries.
//!
//! Batch sub-seeds are the successive `u64` outputs of a ChaCha8 generator
//! seeded with the master seed: run `i` uses the `i`-th output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::SearchLimits;
use crate::sensing::SensorConfig;
use crate::sim::{
    Event, FailureCause, RunMetrics, SimConfig, Simulation, SpawnConfig, StopLimits, TraceSample,
};
use crate::world::Kinematics;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    /// Line-delimited JSON event log.
    pub events: Option<PathBuf>,
    /// Line-delimited JSON world samples.
    pub trace: Option<PathBuf>,
    /// Final metrics (single run) or summary (batch) as JSON.
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub trace_every: u32,
    pub limits: StopLimits,
    pub sensor: SensorConfig,
    pub spawn: SpawnConfig,
    pub search: SearchLimits,
    pub kinematics: Kinematics,
    pub output: OutputPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            trace_every: sim.trace_every,
            limits: sim.limits,
            sensor: sim.sensor,
            spawn: sim.spawn,
            search: sim.search,
            kinematics: sim.kinematics,
            output: OutputPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("RunConfig serialises to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema(self.schema_version));
        }
        self.sim_config().validate().map_err(ConfigError::Invalid)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            sensor: self.sensor,
            spawn: self.spawn.clone(),
            search: self.search,
            kinematics: self.kinematics,
            limits: self.limits,
            trace_every: self.trace_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub events: Vec<Event>,
    pub trace: Vec<TraceSample>,
}

pub fn run_single(cfg: &RunConfig) -> Result<RunOutput, ConfigError> {
    cfg.validate()?;
    run_seeded(&cfg.sim_config(), cfg.seed)
}

fn run_seeded(sim: &SimConfig, seed: u64) -> Result<RunOutput, ConfigError> {
    let mut simulation = Simulation::new(sim.clone(), seed).map_err(ConfigError::Invalid)?;
    let metrics = simulation.run();
    Ok(RunOutput {
        metrics,
        events: simulation.events().to_vec(),
        trace: simulation.trace().to_vec(),
    })
}

/// Per-run seeds for a batch.
pub fn derive_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..n).map(|_| rng.next_u64()).collect()
}

pub fn run_batch(cfg: &RunConfig, n_runs: usize) -> Result<BatchSummary, ConfigError> {
    if n_runs == 0 {
        return Err(ConfigError::Invalid("n_runs must be at least 1".into()));
    }
    cfg.validate()?;
    let sim = cfg.sim_config();
    let runs = derive_seeds(cfg.seed, n_runs)
        .into_par_iter()
        .map(|seed| run_seeded(&sim, seed).map(|o| o.metrics))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BatchSummary::from_runs(cfg.seed, runs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub master_seed: u64,
    pub runs: Vec<RunMetrics>,
    pub median_distance_km: f64,
    pub median_overtaken: f64,
    pub median_sim_time: f64,
    pub total_distance_km: f64,
    pub total_overtaken: u64,
    pub total_sim_time: f64,
    pub failure_causes: BTreeMap<FailureCause, u32>,
}

/// Middle value, or the mean of the two middle values.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty list");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

fn hours_minutes(seconds: f64) -> String {
    let minutes = (seconds / 60.0).round() as u64;
    format!("{}h {:02}m", minutes / 60, minutes % 60)
}

impl BatchSummary {
    pub fn from_runs(master_seed: u64, runs: Vec<RunMetrics>) -> Self {
        let distances: Vec<f64> = runs.iter().map(|r| r.distance_km).collect();
        let overtakes: Vec<f64> = runs.iter().map(|r| f64::from(r.overtaken_count)).collect();
        let times: Vec<f64> = runs.iter().map(|r| r.sim_time).collect();
        let mut failure_causes = BTreeMap::new();
        for r in &runs {
            *failure_causes.entry(r.failure_cause).or_insert(0) += 1;
        }
        BatchSummary {
            master_seed,
            median_distance_km: median(&distances),
            median_overtaken: median(&overtakes),
            median_sim_time: median(&times),
            total_distance_km: distances.iter().sum(),
            total_overtaken: runs.iter().map(|r| u64::from(r.overtaken_count)).sum(),
            total_sim_time: times.iter().sum(),
            failure_causes,
            runs,
        }
    }

    /// Aligned text table: one row per run, then totals and medians.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>4}  {:>9}  {:>18}  {:>13}  Failure cause",
            "Run", "Runtime", "Vehicles overtaken", "Distance (km)"
        );
        for (i, r) in self.runs.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:>4}  {:>9}  {:>18}  {:>13.2}  {}",
                i + 1,
                hours_minutes(r.sim_time),
                r.overtaken_count,
                r.distance_km,
                r.failure_cause
            );
        }
        let _ = writeln!(
            out,
            "{:>4}  {:>9}  {:>18}  {:>13.2}",
            "sum",
            hours_minutes(self.total_sim_time),
            self.total_overtaken,
            self.total_distance_km
        );
        let _ = writeln!(
            out,
            "{:>4}  {:>9}  {:>18}  {:>13.2}",
            "med",
            hours_minutes(self.median_sim_time),
            self.median_overtaken,
            self.median_distance_km
        );
        for (cause, n) in &self.failure_causes {
            let _ = writeln!(out, "{cause}: {n}");
        }
        out
    }
}

/// Writes one JSON record per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
