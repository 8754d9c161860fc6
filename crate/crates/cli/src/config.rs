use std::path::{Path, PathBuf};

use orthant_games::costs::{CostConfig, RateGrid};
use orthant_games::geometry::GeometryConfig;
use orthant_games::presets::NetworkSpec;
use orthant_games::solver::{Extrapolation, FiniteOptions, MintimeOptions, OrthantGrid, StoppingProblem, TimeStride};
use orthant_games::{ConstraintGeometry, CostFamily};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// One JSON file describing a run: the network, the grid, the numerics and
/// where the artifacts go.
///
/// `geometry` and `cost` override what `network` would build; without a
/// `network` both must be given.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub network: Option<NetworkSpec>,
    #[serde(default)]
    pub geometry: Option<GeometryConfig>,
    #[serde(default)]
    pub cost: Option<CostConfig>,
    pub grid: GridConfig,
    /// Time steps `N` of the finite-horizon solve on `[0, 1]`.
    #[serde(default = "default_horizon_steps")]
    pub horizon_steps: usize,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub stopping: StoppingConfig,
    #[serde(default)]
    pub play: PlayConfig,
    /// Level of the exported level set.
    #[serde(default = "default_level")]
    pub level_set: f64,
    /// Relative paths are taken from the config file's directory.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub v_max: f64,
    pub max_sweeps: usize,
    /// Min-time step; `null` picks one cell per step at top speed.
    pub dt: Option<f64>,
    pub stride: TimeStride,
    pub extrapolation: Extrapolation,
    pub rate_grid: RateGrid,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let m = MintimeOptions::default();
        Self {
            tol: m.tol,
            v_max: m.v_max,
            max_sweeps: m.max_sweeps,
            dt: None,
            stride: TimeStride::default(),
            extrapolation: m.extrapolation,
            rate_grid: RateGrid::default(),
        }
    }
}

/// Stopping cost `scale·(1 − t) + offset` and terminal cost `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StoppingConfig {
    pub scale: f64,
    pub offset: f64,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        Self { scale: 1.0, offset: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlayConfig {
    pub dt: f64,
    /// Look-ahead steps of the value-greedy maximizer.
    pub depth: usize,
    /// Steps a heuristic adversary holds a candidate.
    pub hold: usize,
    /// Time limit of min-time plays.
    pub horizon: f64,
}

impl Default for PlayConfig {
    fn default() -> Self {
        Self { dt: 1e-3, depth: 1, hold: 20, horizon: 100.0 }
    }
}

fn default_horizon_steps() -> usize {
    400
}

fn default_level() -> f64 {
    1.0
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn positive(name: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::config(format!("{name} must be positive, got {v}")))
    }
}

impl RunConfig {
    /// Reads and validates a config file; unreadable or malformed files are
    /// config errors.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        if cfg.output_dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if self.network.is_none() && (self.geometry.is_none() || self.cost.is_none()) {
            return Err(Failure::config("need `network`, or both `geometry` and `cost`"));
        }
        positive("grid.x_max", self.grid.x_max)?;
        if self.grid.n < 3 {
            return Err(Failure::config(format!("grid.n must be at least 3, got {}", self.grid.n)));
        }
        if self.horizon_steps == 0 {
            return Err(Failure::config("horizon_steps must be positive"));
        }
        positive("solver.tol", self.solver.tol)?;
        positive("solver.v_max", self.solver.v_max)?;
        if let Some(dt) = self.solver.dt {
            positive("solver.dt", dt)?;
        }
        positive("stopping.scale", self.stopping.scale)?;
        positive("play.dt", self.play.dt)?;
        positive("play.horizon", self.play.horizon)?;
        if !self.level_set.is_finite() {
            return Err(Failure::config("level_set must be finite"));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<ConstraintGeometry, Failure> {
        match (&self.geometry, &self.network) {
            (Some(g), _) => ConstraintGeometry::try_from(g.clone()).map_err(|e| Failure::config(e.to_string())),
            (None, Some(n)) => {
                n.validate().map_err(|e| Failure::config(e.to_string()))?;
                Ok(n.geometry())
            }
            (None, None) => Err(Failure::config("no geometry")),
        }
    }

    pub fn costs(&self) -> Result<CostFamily, Failure> {
        match (&self.cost, &self.network) {
            (Some(c), _) => c.build().map_err(|e| Failure::config(e.to_string())),
            (None, Some(n)) => n.costs().map_err(|e| Failure::config(e.to_string())),
            (None, None) => Err(Failure::config("no cost family")),
        }
    }

    pub fn grid(&self, d: usize) -> Result<OrthantGrid, Failure> {
        OrthantGrid::new(d, self.grid.x_max, self.grid.n).map_err(|e| Failure::config(e.to_string()))
    }

    pub fn stopping_problem(&self) -> StoppingProblem {
        StoppingProblem::affine(self.stopping.scale, self.stopping.offset)
    }

    pub fn finite_options(&self) -> FiniteOptions {
        FiniteOptions { stride: self.solver.stride, rate_grid: self.solver.rate_grid, ..FiniteOptions::new(self.horizon_steps) }
    }

    pub fn mintime_options(&self) -> MintimeOptions {
        MintimeOptions {
            dt: self.solver.dt,
            v_max: self.solver.v_max,
            tol: self.solver.tol,
            max_sweeps: self.solver.max_sweeps,
            extrapolation: self.solver.extrapolation,
            ..MintimeOptions::default()
        }
    }
}
