//! JSON run configuration for the command-line driver.
//!
//! Every section is optional and falls back to defaults; unknown keys are
//! rejected. Parse and validation errors carry the dotted path of the field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{EXP2_START, EXP1_STARTS};
use crate::flow::{AnalyticObjective, ChannelConfig, Objective, StokesObjective};
use crate::grid_mdp::ParameterGrid;
use crate::reduction::OptimizerConfig;
use crate::value::{CoolingSchedule, ScheduleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Stokes,
    Synthetic,
    Fictitious,
}

impl Backend {
    pub fn dim(self) -> usize {
        match self {
            Backend::Fictitious => 1,
            _ => 2,
        }
    }

    pub fn objective(self, channel: &ChannelConfig) -> Result<Box<dyn Objective>> {
        Ok(match self {
            Backend::Stokes => Box::new(StokesObjective::new(channel.clone())?),
            Backend::Synthetic => Box::new(AnalyticObjective::synthetic_valley()),
            Backend::Fictitious => Box::new(AnalyticObjective::fictitious()),
        })
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| Error::Config {
            path: "backend".into(),
            message: format!("unknown backend `{s}`, expected stokes, synthetic or fictitious"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub step: Vec<f64>,
}

impl GridSpec {
    fn new(min: &[f64], max: &[f64], step: &[f64]) -> Self {
        Self {
            min: min.to_vec(),
            max: max.to_vec(),
            step: step.to_vec(),
        }
    }

    pub fn build(&self) -> Result<ParameterGrid> {
        ParameterGrid::new(self.min.clone(), self.max.clone(), self.step.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    pub start: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkSection {
    pub start: Vec<f64>,
    pub n_walks: usize,
    pub max_steps: usize,
    pub schedule: CoolingSchedule,
    /// Number of individual walk paths written per mode.
    pub export_paths: usize,
}

impl Default for WalkSection {
    fn default() -> Self {
        Self {
            start: vec![3.5, 3.5],
            n_walks: 200,
            max_steps: 20_000,
            schedule: CoolingSchedule::new(ScheduleKind::StandardLog, 0.03),
            export_paths: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointSection {
    pub gamma: f64,
    pub schedule: CoolingSchedule,
    pub iterations: usize,
    pub tol_v: f64,
}

impl Default for FixedPointSection {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            schedule: CoolingSchedule::new(ScheduleKind::InverseLog, 7e-4),
            iterations: 30,
            tol_v: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp1Section {
    pub starts: Vec<Vec<f64>>,
}

impl Default for Exp1Section {
    fn default() -> Self {
        Self {
            starts: EXP1_STARTS.iter().map(|s| s.to_vec()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp2Section {
    pub start: Vec<f64>,
    pub radii: Vec<usize>,
    pub max_cycles: usize,
    /// Overrides the top-level grid for this experiment only.
    pub grid: Option<GridSpec>,
}

impl Default for Exp2Section {
    fn default() -> Self {
        Self {
            start: EXP2_START.to_vec(),
            radii: vec![1, 2, 3],
            max_cycles: 300,
            grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backend: Option<Backend>,
    pub seed: Option<u64>,
    pub grid: Option<GridSpec>,
    pub names: Option<Vec<String>>,
    pub channel: ChannelConfig,
    pub optimizer: OptimizerConfig,
    pub optimize: OptimizeSection,
    pub walk: WalkSection,
    pub fixedpoint: FixedPointSection,
    pub exp1: Exp1Section,
    pub exp2: Exp2Section,
}

fn field(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// Re-labels a validation error from a nested component with its section.
fn within(path: &str, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        other => field(path, other.to_string()),
    }
}

/// Subcommands, as far as configuration defaults are concerned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Optimize,
    Landscape,
    Walk,
    FixedPoint,
    Exp1,
    Exp2,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            field(&path, e.into_inner().to_string())
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| field("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn backend_for(&self, command: Command) -> Backend {
        self.backend.unwrap_or(match command {
            Command::Landscape => Backend::Stokes,
            Command::FixedPoint => Backend::Fictitious,
            _ => Backend::Synthetic,
        })
    }

    /// Grid for a command: the explicit one if given, else a per-backend default.
    pub fn grid_for(&self, command: Command, backend: Backend) -> Result<ParameterGrid> {
        let (spec, path) = match (command, &self.exp2.grid, &self.grid) {
            (Command::Exp2, Some(g), _) => (g.clone(), "exp2.grid"),
            (_, _, Some(g)) => (g.clone(), "grid"),
            _ => (default_grid(command, backend), "grid"),
        };
        if spec.min.len() != backend.dim() {
            return Err(field(
                path,
                format!("backend {backend:?} is {}-dimensional, grid has {} dimensions", backend.dim(), spec.min.len()),
            ));
        }
        spec.build().map_err(|e| within(path, e))
    }

    pub fn names(&self, d: usize) -> Result<Vec<String>> {
        match &self.names {
            Some(n) if n.len() != d => Err(field("names", format!("expected {d} names, got {}", n.len()))),
            Some(n) => Ok(n.clone()),
            None => Ok(crate::reduction::default_names(d)),
        }
    }

    pub fn optimize_start(&self, backend: Backend) -> Vec<f64> {
        self.optimize.start.clone().unwrap_or_else(|| match backend {
            Backend::Fictitious => vec![1.5],
            Backend::Stokes => vec![2.6, 3.6],
            Backend::Synthetic => EXP1_STARTS[4].to_vec(),
        })
    }

    /// Optimizer settings for a backend; a list of equal radii is broadcast
    /// to the backend dimension.
    pub fn optimizer_for(&self, backend: Backend) -> OptimizerConfig {
        let mut o = self.optimizer.clone();
        let r = &o.initial_radii;
        if r.len() != backend.dim() && !r.is_empty() && r.iter().all(|&x| x == r[0]) {
            o.initial_radii = vec![r[0]; backend.dim()];
        }
        if let Some(seed) = self.seed {
            o.seed = seed;
        }
        o
    }

    /// Semantic checks beyond what the types enforce.
    pub fn validate(&self, command: Command, backend: Backend) -> Result<()> {
        let d = backend.dim();
        let o = &self.optimizer_for(backend);
        if !(0.0..1.0).contains(&o.gamma) {
            return Err(field("optimizer.gamma", format!("{} is outside [0, 1)", o.gamma)));
        }
        if !(o.epsilon > 0.0) {
            return Err(field("optimizer.epsilon", "must be positive"));
        }
        if !(o.tol_v > 0.0) {
            return Err(field("optimizer.tol_v", "must be positive"));
        }
        if o.max_cycles == 0 {
            return Err(field("optimizer.max_cycles", "must be positive"));
        }
        if o.max_j == 0 {
            return Err(field("optimizer.max_j", "must be positive"));
        }
        o.schedule.validate().map_err(|e| within("optimizer.schedule.t0", e))?;
        if o.initial_radii.len() != d {
            return Err(field(
                "optimizer.initial_radii",
                format!("expected {d} radii for backend {backend:?}, got {}", o.initial_radii.len()),
            ));
        }
        if o.initial_radii.iter().all(|&r| r == 0) {
            return Err(field("optimizer.initial_radii", "at least one radius must be positive"));
        }
        if backend == Backend::Stokes {
            self.channel.validate().map_err(|e| within("channel", e))?;
        }
        match command {
            Command::Optimize => {
                let s = self.optimize_start(backend);
                if s.len() != d {
                    return Err(field("optimize.start", format!("expected {d} coordinates, got {}", s.len())));
                }
            }
            Command::Walk => {
                let w = &self.walk;
                if w.start.len() != d {
                    return Err(field("walk.start", format!("expected {d} coordinates, got {}", w.start.len())));
                }
                if w.n_walks == 0 {
                    return Err(field("walk.n_walks", "must be positive"));
                }
                if w.max_steps == 0 {
                    return Err(field("walk.max_steps", "must be positive"));
                }
                w.schedule.validate().map_err(|e| within("walk.schedule.t0", e))?;
            }
            Command::FixedPoint => {
                let f = &self.fixedpoint;
                if backend != Backend::Fictitious {
                    return Err(field("backend", "fixedpoint runs on the fictitious backend only"));
                }
                if !(0.0..1.0).contains(&f.gamma) {
                    return Err(field("fixedpoint.gamma", format!("{} is outside [0, 1)", f.gamma)));
                }
                if f.iterations == 0 {
                    return Err(field("fixedpoint.iterations", "must be positive"));
                }
                if !(f.tol_v > 0.0) {
                    return Err(field("fixedpoint.tol_v", "must be positive"));
                }
                f.schedule.validate().map_err(|e| within("fixedpoint.schedule.t0", e))?;
            }
            Command::Exp1 => {
                if self.exp1.starts.is_empty() {
                    return Err(field("exp1.starts", "at least one start is required"));
                }
                for (k, s) in self.exp1.starts.iter().enumerate() {
                    if s.len() != d {
                        return Err(field(&format!("exp1.starts[{k}]"), format!("expected {d} coordinates")));
                    }
                }
            }
            Command::Exp2 => {
                let e = &self.exp2;
                if e.start.len() != d {
                    return Err(field("exp2.start", format!("expected {d} coordinates, got {}", e.start.len())));
                }
                if e.radii.is_empty() || e.radii.contains(&0) {
                    return Err(field("exp2.radii", "radii must be a non-empty list of positive integers"));
                }
                if e.max_cycles == 0 {
                    return Err(field("exp2.max_cycles", "must be positive"));
                }
            }
            Command::Landscape => {}
        }
        Ok(())
    }
}

fn default_grid(command: Command, backend: Backend) -> GridSpec {
    match (command, backend) {
        (_, Backend::Fictitious) => GridSpec::new(&[-3.0], &[2.0], &[0.05]),
        (_, Backend::Stokes) => GridSpec::new(&[1.5, 2.0], &[2.8, 4.0], &[0.1, 0.2]),
        (Command::Exp2, Backend::Synthetic) => GridSpec::new(&[1.5, 1.5], &[10.0, 4.5], &[0.1, 0.1]),
        (_, Backend::Synthetic) => GridSpec::new(&[1.5, 1.5], &[4.0, 4.0], &[0.1, 0.1]),
    }
}
