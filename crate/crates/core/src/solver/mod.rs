//! Semi-Lagrangian solvers for the obstacle problem and the min-time game.
//!
//! Both solvers use the same one-step scheme. From node `x`, a velocity `β`
//! of branch `j` leads to the projected Euler target `π(x + Δβ)`, where the
//! value is read by multilinear interpolation. The minimizer picks the
//! branch (and, in the finite-horizon problem, whether to stop) before the
//! maximizer picks `β`:
//!
//! ```text
//! V_k(x) = min( g(t_k, x), min_j max_β [ −Δ L_j(β) + V_{k+1}(π(x + Δβ)) ] )
//! ```
//!
//! Interpolation weights are nonnegative and sum to one, so the scheme is
//! monotone: ordered data give ordered solutions.

mod export;
mod finite;
mod grid;
mod mintime;
mod verify;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::{Candidate, CostError, CostFamily, RateGrid};
use crate::geometry::{check_completely_s, ConstraintGeometry, GeometryError};

pub use export::{read_values_csv, write_level_set_csv, write_values_csv, level_set_points};
pub use finite::{solve_finite, FiniteOptions, StoppingProblem, TimeStride};
pub use grid::{OrthantGrid, Stencil, DEFAULT_NODE_BUDGET};
pub use mintime::{radial_extend, solve_mintime, MintimeOptions, SweepMethod, SweepStart};
pub use verify::{
    check_radial_linearity, scalar_hamiltonian_roots, verify_eq_4_2, verify_risk_slope, verify_thm_4_3,
    Eq42Report, RadialReport, RiskSlopeReport, Thm43Report,
};

/// Transition tables larger than this many stencil entries are refused.
pub const DEFAULT_TRANSITION_BUDGET: usize = 40_000_000;
/// Fraction of clamped Euler targets above which a solve is flagged.
pub const DOMAIN_ESCAPE_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid has {nodes} nodes, budget is {budget}")]
    GridBudgetExceeded { nodes: u128, budget: usize },
    #[error("transition table needs {entries} entries, budget is {budget}")]
    TransitionBudgetExceeded { entries: u128, budget: usize },
    #[error("geometry fails the completely-S condition")]
    GeometryUnverified,
    #[error("cost family does not satisfy the hard-constraint, unit-reward form required by the min-time solver: {0}")]
    NotCondition41(String),
    #[error("min-time iteration did not converge after {sweeps} sweeps (last change {change:e})")]
    NonConvergence { sweeps: usize, change: f64, field: Box<ValueField> },
    #[error("stopping and terminal data are incompatible: {0}")]
    IncompatibleData(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid value field: {0}")]
    InvalidField(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Finite,
    Stationary,
}

/// Solver telemetry carried alongside a value field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    /// Fraction of Euler targets that left `[0, x_max]^d` and were clamped.
    pub clamp_fraction: f64,
    pub domain_escape: bool,
    pub converged: bool,
    pub sweeps: usize,
    pub final_change: f64,
    /// Stationary nodes left at the cap: not stabilizable within it.
    pub capped_nodes: usize,
    pub v_max: Option<f64>,
    /// Time step of the scheme.
    pub dt: f64,
}

/// Values and feedback policy on an [`OrthantGrid`], one slice per time.
#[derive(Debug, Clone)]
pub struct ValueField {
    pub(crate) kind: FieldKind,
    pub(crate) grid: OrthantGrid,
    pub(crate) times: Vec<f64>,
    pub(crate) values: Vec<Vec<f64>>,
    pub(crate) branch: Vec<Vec<u32>>,
    pub(crate) stop: Vec<Vec<bool>>,
    /// `[slice][node * J + j]`: maximizer's candidate index per branch.
    pub(crate) response: Vec<Vec<u32>>,
    pub(crate) n_branches: usize,
    /// Per node: some Euler target from it was clamped.
    pub(crate) clamped: Vec<bool>,
    pub(crate) stats: SolveStats,
}

impl ValueField {
    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn grid(&self) -> &OrthantGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_slices(&self) -> usize {
        self.values.len()
    }

    pub fn n_branches(&self) -> usize {
        self.n_branches
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn branch_slice(&self, k: usize) -> &[u32] {
        &self.branch[k]
    }

    pub fn stop_slice(&self, k: usize) -> &[bool] {
        &self.stop[k]
    }

    /// Maximizer's recorded candidate for branch `j` at `node`, if the
    /// field carries responses.
    pub fn response(&self, k: usize, node: usize, j: usize) -> Option<usize> {
        self.response
            .get(k)
            .and_then(|r| r.get(node * self.n_branches + j))
            .map(|v| *v as usize)
    }

    pub fn clamped_nodes(&self) -> &[bool] {
        &self.clamped
    }

    pub fn stats(&self) -> &SolveStats {
        &self.stats
    }

    /// The stationary field's only slice, or slice `k` of a finite one.
    pub fn interpolate(&self, k: usize, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.values[k], x)
    }

    /// Slice whose time is closest to `t`.
    pub fn slice_index(&self, t: f64) -> usize {
        if self.times.len() == 1 {
            return 0;
        }
        let dt = self.times[1] - self.times[0];
        (((t - self.times[0]) / dt).round().max(0.0) as usize).min(self.times.len() - 1)
    }

    /// Value at an arbitrary time and point (nearest slice, interpolated in
    /// space).
    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        self.interpolate(self.slice_index(t), x)
    }
}

/// Largest `‖β‖∞` over every branch's candidates.
pub(crate) fn max_speed(f: &CostFamily, rate_grid: &RateGrid) -> f64 {
    f.branches()
        .iter()
        .flat_map(|b| b.candidates(rate_grid))
        .map(|c| crate::linalg::norm_inf(&c.velocity))
        .fold(0.0, f64::max)
}

/// How values are read beyond `x_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolation {
    /// The nearest boundary value.
    #[default]
    Constant,
    /// `V(z) = s·V(z/s)` with `s = ‖z‖∞ / x_max`; exact for radially linear
    /// values such as the min-time value.
    Radial,
}

/// Checks shared by both solvers.
pub(crate) fn check_inputs(
    g: &ConstraintGeometry,
    f: &CostFamily,
    grid: &OrthantGrid,
    node_budget: usize,
) -> Result<(), SolverError> {
    if g.dim() != f.dim() || g.dim() != grid.d {
        return Err(SolverError::DimensionMismatch(format!(
            "geometry {}, costs {}, grid {}",
            g.dim(),
            f.dim(),
            grid.d
        )));
    }
    grid.check_budget(node_budget)?;
    if !check_completely_s(g)? {
        return Err(SolverError::GeometryUnverified);
    }
    Ok(())
}

/// Precomputed one-step transitions: for every node and every
/// (branch, candidate) pair, the interpolation stencil of the projected
/// Euler target.
pub(crate) struct Transitions {
    /// `cands[j]` lists branch `j`'s candidates.
    pub cands: Vec<Vec<Candidate>>,
    /// Flat offsets of each branch's candidates within a node's block.
    pub branch_offsets: Vec<usize>,
    pub per_node: usize,
    starts: Vec<u32>,
    entries: Vec<(u32, f64)>,
    pub node_clamped: Vec<bool>,
    pub clamp_fraction: f64,
}

impl Transitions {
    pub fn build(
        g: &ConstraintGeometry,
        f: &CostFamily,
        grid: &OrthantGrid,
        dt: f64,
        rate_grid: &RateGrid,
        extrapolation: Extrapolation,
        budget: usize,
    ) -> Result<Self, SolverError> {
        let cands: Vec<Vec<Candidate>> = f.branches().iter().map(|b| b.candidates(rate_grid)).collect();
        let mut branch_offsets = Vec::with_capacity(cands.len() + 1);
        let mut acc = 0;
        for c in &cands {
            branch_offsets.push(acc);
            acc += c.len();
        }
        branch_offsets.push(acc);
        let per_node = acc;
        let worst = grid.len() as u128 * per_node as u128 * (1u128 << grid.d);
        if worst > budget as u128 {
            return Err(SolverError::TransitionBudgetExceeded { entries: worst, budget });
        }
        let flat: Vec<&Candidate> = cands.iter().flatten().collect();
        let blocks: Vec<Result<(Vec<Stencil>, bool), GeometryError>> = (0..grid.len())
            .into_par_iter()
            .map(|node| {
                let x = grid.node(node);
                let mut any = false;
                let mut out = Vec::with_capacity(per_node);
                for c in &flat {
                    let target: Vec<f64> = x.iter().zip(&c.velocity).map(|(a, b)| a + dt * b).collect();
                    let z = g.project(&target)?.z;
                    let mut s = grid.stencil(&z);
                    if s.clamped && extrapolation == Extrapolation::Radial {
                        let scale = crate::linalg::norm_inf(&z) / grid.x_max;
                        let pulled: Vec<f64> = z.iter().map(|zi| zi / scale).collect();
                        s.entries = grid.stencil(&pulled).entries;
                        s.entries.iter_mut().for_each(|e| e.1 *= scale);
                    }
                    any |= s.clamped;
                    out.push(s);
                }
                Ok((out, any))
            })
            .collect();

        let mut starts = Vec::with_capacity(grid.len() * per_node + 1);
        let mut entries = Vec::new();
        let mut node_clamped = Vec::with_capacity(grid.len());
        let mut clamped_count = 0usize;
        for block in blocks {
            let (stencils, any) = block?;
            node_clamped.push(any);
            for s in stencils {
                starts.push(entries.len() as u32);
                clamped_count += s.clamped as usize;
                entries.extend(s.entries);
            }
        }
        starts.push(entries.len() as u32);
        let total = (grid.len() * per_node).max(1);
        Ok(Self {
            cands,
            branch_offsets,
            per_node,
            starts,
            entries,
            node_clamped,
            clamp_fraction: clamped_count as f64 / total as f64,
        })
    }

    #[inline]
    pub fn expect(&self, node: usize, k: usize, values: &[f64]) -> f64 {
        let slot = node * self.per_node + k;
        let (a, b) = (self.starts[slot] as usize, self.starts[slot + 1] as usize);
        self.entries[a..b].iter().map(|(i, w)| w * values[*i as usize]).sum()
    }

    /// `min_j max_c [dt·reward + E V(target)]` with its argmin branch and
    /// each branch's argmax candidate. Ties go to the lowest index.
    pub fn minmax(&self, node: usize, dt: f64, values: &[f64], responses: &mut [u32]) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0usize);
        for (j, cands) in self.cands.iter().enumerate() {
            let base = self.branch_offsets[j];
            let mut top = (f64::NEG_INFINITY, 0usize);
            for (c, cand) in cands.iter().enumerate() {
                let v = dt * cand.reward + self.expect(node, base + c, values);
                if v > top.0 {
                    top = (v, c);
                }
            }
            responses[j] = top.1 as u32;
            if top.0 < best.0 {
                best = (top.0, j);
            }
        }
        best
    }
}
