//! Discrete-time play of the upper game.
//!
//! Within each step the minimizer announces a branch (or stops), then the
//! maximizer answers with a velocity for that branch. Strategies see only the
//! current time, state and branch, so they are nonanticipating by
//! construction.

use std::io::Write;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::{running_cost, Candidate, CostError, CostFamily, RateGrid};
use crate::dynamics::{DynamicsError, PiecewiseConstant, SampledPath, ABSORPTION_TOL};
use crate::geometry::{ConstraintGeometry, GeometryError};
use crate::linalg::norm1;
use crate::solver::{FieldKind, StoppingProblem, ValueField};

#[derive(Debug, Error)]
pub enum GameError {
    #[error("velocity {velocity:?} is not admissible for branch {branch}")]
    InadmissibleVelocity { branch: usize, velocity: Vec<f64> },
    #[error("branch {branch} does not exist (family has {n_branches})")]
    UnknownBranch { branch: usize, n_branches: usize },
    #[error("the min-time game has no stopping option")]
    StopUnavailable,
    #[error("invalid rollout: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The minimizer's move at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Stop,
    Continue(usize),
}

pub trait MinimizerPolicy {
    fn decide(&mut self, t: f64, x: &[f64]) -> Decision;
}

/// Response rule of the maximizer: a velocity for the announced branch.
pub trait MaximizerStrategy {
    fn respond(&mut self, t: f64, x: &[f64], branch: usize) -> Vec<f64>;
}

/// Open-loop minimizer control: a branch schedule plus an optional stop
/// time.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizerControl {
    pub schedule: PiecewiseConstant<usize>,
    pub stop_time: Option<f64>,
}

impl MinimizerControl {
    pub fn constant(branch: usize) -> Self {
        Self { schedule: PiecewiseConstant::constant(branch), stop_time: None }
    }

    pub fn stop_at(branch: usize, tau: f64) -> Self {
        Self { schedule: PiecewiseConstant::constant(branch), stop_time: Some(tau) }
    }

    /// Random schedule with up to four pieces on `[t0, horizon]` and, when
    /// `allow_stop`, a stop time drawn uniformly half of the time.
    pub fn random(seed: u64, n_branches: usize, t0: f64, horizon: f64, allow_stop: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pieces = rng.random_range(1..=4usize);
        let mut cuts: Vec<f64> = (1..pieces).map(|_| t0 + (horizon - t0) * rng.random::<f64>()).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut breakpoints = vec![t0];
        breakpoints.extend(cuts.into_iter().filter(|c| *c > t0));
        let values = breakpoints.iter().map(|_| rng.random_range(0..n_branches)).collect();
        let stop_time = (allow_stop && rng.random::<bool>()).then(|| t0 + (horizon - t0) * rng.random::<f64>());
        Self {
            schedule: PiecewiseConstant::new(breakpoints, values).expect("sorted, distinct breakpoints"),
            stop_time,
        }
    }
}

impl MinimizerPolicy for MinimizerControl {
    fn decide(&mut self, t: f64, _x: &[f64]) -> Decision {
        match self.stop_time {
            Some(tau) if t >= tau - 1e-12 => Decision::Stop,
            _ => Decision::Continue(*self.schedule.at(t)),
        }
    }
}

/// Index of the grid node nearest to `x`, clamped to the grid.
fn nearest_node(v: &ValueField, x: &[f64]) -> usize {
    let grid = v.grid();
    let multi: Vec<usize> =
        x.iter().map(|xi| ((xi / grid.spacing()).round().max(0.0) as usize).min(grid.n - 1)).collect();
    grid.index(&multi)
}

/// Feedback minimizer read from a solved field: branch and stop flag of the
/// nearest node in the nearest slice.
#[derive(Debug, Clone, Copy)]
pub struct FeedbackPolicy<'a> {
    field: &'a ValueField,
}

impl<'a> FeedbackPolicy<'a> {
    pub fn new(field: &'a ValueField) -> Self {
        Self { field }
    }
}

impl MinimizerPolicy for FeedbackPolicy<'_> {
    fn decide(&mut self, t: f64, x: &[f64]) -> Decision {
        let k = self.field.slice_index(t);
        let node = nearest_node(self.field, x);
        if self.field.stop_slice(k)[node] {
            Decision::Stop
        } else {
            Decision::Continue(self.field.branch_slice(k)[node] as usize)
        }
    }
}

/// Maximizer that, for the announced branch, picks the candidate maximizing
/// `depth·dt·reward + V(t + depth·dt, y)`, where `y` is reached by holding
/// the candidate for `depth` projected Euler steps. Ties go to the lowest
/// index.
pub struct ValueGreedy<'a> {
    field: &'a ValueField,
    geometry: &'a ConstraintGeometry,
    candidates: Vec<Vec<Candidate>>,
    dt: f64,
    depth: usize,
}

impl<'a> ValueGreedy<'a> {
    pub fn new(
        field: &'a ValueField,
        geometry: &'a ConstraintGeometry,
        costs: &CostFamily,
        rate_grid: &RateGrid,
        dt: f64,
        depth: usize,
    ) -> Self {
        Self {
            field,
            geometry,
            candidates: costs.branches().iter().map(|b| b.candidates(rate_grid)).collect(),
            dt,
            depth: depth.max(1),
        }
    }

    fn look_ahead(&self, t: f64, x: &[f64], c: &Candidate) -> f64 {
        let mut y = x.to_vec();
        for _ in 0..self.depth {
            let target: Vec<f64> = y.iter().zip(&c.velocity).map(|(a, b)| a + self.dt * b).collect();
            y = match self.geometry.project(&target) {
                Ok(p) => p.z,
                Err(_) => return f64::NEG_INFINITY,
            };
        }
        let span = self.depth as f64 * self.dt;
        let later = match self.field.kind() {
            FieldKind::Finite => self.field.value(t + span, &y),
            FieldKind::Stationary => self.field.interpolate(0, &y),
        };
        span * c.reward + later
    }
}

impl MaximizerStrategy for ValueGreedy<'_> {
    fn respond(&mut self, t: f64, x: &[f64], branch: usize) -> Vec<f64> {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, c) in self.candidates[branch].iter().enumerate() {
            let v = self.look_ahead(t, x, c);
            if v > best.0 {
                best = (v, i);
            }
        }
        self.candidates[branch][best.1].velocity.clone()
    }
}

/// Maximizer that replays the solver's recorded argmax candidate at the
/// nearest node.
pub struct RecordedResponse<'a> {
    field: &'a ValueField,
    candidates: Vec<Vec<Candidate>>,
}

impl<'a> RecordedResponse<'a> {
    pub fn new(field: &'a ValueField, costs: &CostFamily, rate_grid: &RateGrid) -> Self {
        Self { field, candidates: costs.branches().iter().map(|b| b.candidates(rate_grid)).collect() }
    }
}

impl MaximizerStrategy for RecordedResponse<'_> {
    fn respond(&mut self, t: f64, x: &[f64], branch: usize) -> Vec<f64> {
        let k = self.field.slice_index(t);
        let node = nearest_node(self.field, x);
        let i = self.field.response(k, node, branch).unwrap_or(0);
        self.candidates[branch][i].velocity.clone()
    }
}

/// Seeded heuristic maximizer: a uniformly drawn candidate of the announced
/// branch, held for `hold` steps or until the branch changes.
pub struct RandomCandidate {
    rng: ChaCha8Rng,
    candidates: Vec<Vec<Candidate>>,
    hold: usize,
    current: Option<(usize, usize, usize)>,
}

impl RandomCandidate {
    pub fn new(seed: u64, costs: &CostFamily, rate_grid: &RateGrid, hold: usize) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            candidates: costs.branches().iter().map(|b| b.candidates(rate_grid)).collect(),
            hold: hold.max(1),
            current: None,
        }
    }
}

impl MaximizerStrategy for RandomCandidate {
    fn respond(&mut self, _t: f64, _x: &[f64], branch: usize) -> Vec<f64> {
        let pick = match self.current {
            Some((j, i, left)) if j == branch && left > 0 => {
                self.current = Some((j, i, left - 1));
                i
            }
            _ => {
                let i = self.rng.random_range(0..self.candidates[branch].len());
                self.current = Some((branch, i, self.hold - 1));
                i
            }
        };
        self.candidates[branch][pick].velocity.clone()
    }
}

/// How a play ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    HitOrigin { sigma: f64 },
    Stopped { tau: f64 },
    Horizon { t: f64 },
}

/// The rules of one play: geometry, costs, stopping data and horizon.
/// Without stopping data the game is the min-time game: no stopping option
/// and no terminal cost.
#[derive(Debug, Clone, Copy)]
pub struct Game<'a> {
    pub geometry: &'a ConstraintGeometry,
    pub costs: &'a CostFamily,
    pub data: Option<&'a StoppingProblem>,
    pub horizon: f64,
}

impl<'a> Game<'a> {
    /// Finite-horizon game on `[0, 1]` with stopping cost `g` and terminal
    /// cost `f`.
    pub fn finite(geometry: &'a ConstraintGeometry, costs: &'a CostFamily, data: &'a StoppingProblem) -> Self {
        Self { geometry, costs, data: Some(data), horizon: 1.0 }
    }

    /// Min-time game played until the origin is hit or `horizon` passes.
    pub fn min_time(geometry: &'a ConstraintGeometry, costs: &'a CostFamily, horizon: f64) -> Self {
        Self { geometry, costs, data: None, horizon }
    }
}

/// One step of a play.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub t: f64,
    pub branch: usize,
    pub velocity: Vec<f64>,
    /// `−step·L_j(β)` accrued on this step.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameRollout {
    pub path: SampledPath,
    pub steps: Vec<StepEvent>,
    /// Stopping cost paid at `τ`, or terminal cost paid at the horizon.
    pub final_cost: f64,
    pub cost: f64,
    pub outcome: Outcome,
}

#[derive(Serialize)]
struct EventsFile<'a> {
    outcome: &'a Outcome,
    cost: f64,
    final_cost: f64,
    steps: &'a [StepEvent],
}

impl GameRollout {
    /// Running costs plus the final cost, summed in step order.
    pub fn recompute_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.cost).sum::<f64>() + self.final_cost
    }

    pub fn write_path_csv<W: Write>(&self, out: W) -> Result<(), GameError> {
        Ok(self.path.write_csv(out)?)
    }

    /// Side file with outcome, cost and per-step branch/velocity/cost events.
    pub fn write_events_json<W: Write>(&self, out: W) -> Result<(), GameError> {
        let events = EventsFile { outcome: &self.outcome, cost: self.cost, final_cost: self.final_cost, steps: &self.steps };
        serde_json::to_writer_pretty(out, &events)?;
        Ok(())
    }
}

/// Plays one game from `(t0, x0)` with time step `dt`.
///
/// Each step: stop if the state is within [`ABSORPTION_TOL`] of the origin;
/// pay the terminal cost at the horizon; otherwise ask the minimizer, then
/// the maximizer, charge `−step·L_j(β)` and move to `π(x + step·β)`.
pub fn rollout(
    game: &Game<'_>,
    strategy: &mut dyn MaximizerStrategy,
    control: &mut dyn MinimizerPolicy,
    x0: &[f64],
    t0: f64,
    dt: f64,
) -> Result<GameRollout, GameError> {
    let d = game.geometry.dim();
    if x0.len() != d || game.costs.dim() != d {
        return Err(GameError::Invalid(format!("state has {} coordinates, game has {d}", x0.len())));
    }
    if let Some(v) = x0.iter().find(|v| !(**v >= 0.0)) {
        return Err(GameError::Invalid(format!("start must lie in the orthant, found {v}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(GameError::Invalid(format!("dt must be positive, got {dt}")));
    }
    if !(t0 <= game.horizon) {
        return Err(GameError::Invalid(format!("t0 = {t0} lies past the horizon {}", game.horizon)));
    }
    let mut times = vec![t0];
    let mut points = vec![x0.to_vec()];
    let mut steps = Vec::new();
    let mut x = x0.to_vec();
    let mut k = 0usize;
    let (final_cost, outcome) = loop {
        let t = (t0 + k as f64 * dt).min(game.horizon);
        if norm1(&x) <= ABSORPTION_TOL {
            break (0.0, Outcome::HitOrigin { sigma: t });
        }
        if game.horizon - t <= 1e-12 {
            let terminal = game.data.map_or(0.0, |data| data.terminal_cost(&x));
            break (terminal, Outcome::Horizon { t });
        }
        let branch = match control.decide(t, &x) {
            Decision::Stop => {
                let data = game.data.ok_or(GameError::StopUnavailable)?;
                break (data.stopping_cost(t, &x), Outcome::Stopped { tau: t });
            }
            Decision::Continue(j) => j,
        };
        let b = game.costs.branches().get(branch).ok_or(GameError::UnknownBranch {
            branch,
            n_branches: game.costs.len(),
        })?;
        let beta = strategy.respond(t, &x, branch);
        let l = running_cost(b, &beta)?;
        if !l.is_finite() {
            return Err(GameError::InadmissibleVelocity { branch, velocity: beta });
        }
        let t_next = (t0 + (k + 1) as f64 * dt).min(game.horizon);
        let step = t_next - t;
        let target: Vec<f64> = x.iter().zip(&beta).map(|(a, v)| a + step * v).collect();
        x = game.geometry.project(&target)?.z;
        steps.push(StepEvent { t, branch, velocity: beta, cost: -step * l });
        times.push(t_next);
        points.push(x.clone());
        k += 1;
    };
    let mut rollout = GameRollout { path: SampledPath::new(times, points)?, steps, final_cost, cost: 0.0, outcome };
    rollout.cost = rollout.recompute_cost();
    Ok(rollout)
}

/// Per-node feedback read off a solved field.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTables {
    pub times: Vec<f64>,
    /// `[slice][node]`: minimizer's branch.
    pub branch: Vec<Vec<usize>>,
    /// `[slice][node]`: stop flag.
    pub stop: Vec<Vec<bool>>,
    /// `[slice][node][branch]`: maximizer's velocity, when recorded.
    pub response: Option<Vec<Vec<Vec<Vec<f64>>>>>,
}

/// Recorded argmin branch, stop region and argmax velocity per node.
pub fn extract_policy(v: &ValueField, f: &CostFamily, rate_grid: &RateGrid) -> PolicyTables {
    let cands: Vec<Vec<Candidate>> = f.branches().iter().map(|b| b.candidates(rate_grid)).collect();
    let n = v.n_slices();
    let nodes = v.grid().len();
    let recorded = v.response(0, 0, 0).is_some();
    let response = recorded.then(|| {
        (0..n)
            .map(|k| {
                (0..nodes)
                    .map(|node| {
                        (0..v.n_branches())
                            .map(|j| cands[j][v.response(k, node, j).unwrap_or(0)].velocity.clone())
                            .collect()
                    })
                    .collect()
            })
            .collect()
    });
    PolicyTables {
        times: v.times().to_vec(),
        branch: (0..n).map(|k| v.branch_slice(k).iter().map(|b| *b as usize).collect()).collect(),
        stop: (0..n).map(|k| v.stop_slice(k).to_vec()).collect(),
        response,
    }
}

/// Plays the field's feedback policy against the value-greedy maximizer of
/// the given look-ahead depth and returns the play.
pub fn evaluate_value_by_play(
    game: &Game<'_>,
    v: &ValueField,
    rate_grid: &RateGrid,
    x0: &[f64],
    t0: f64,
    dt: f64,
    depth: usize,
) -> Result<GameRollout, GameError> {
    let mut max = ValueGreedy::new(v, game.geometry, game.costs, rate_grid, dt, depth);
    let mut min = FeedbackPolicy::new(v);
    rollout(game, &mut max, &mut min, x0, t0, dt)
}
