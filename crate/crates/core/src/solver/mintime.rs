use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_inputs, Extrapolation, max_speed, FieldKind, OrthantGrid, SolveStats, SolverError, Transitions, ValueField};
use super::{DEFAULT_NODE_BUDGET, DEFAULT_TRANSITION_BUDGET, DOMAIN_ESCAPE_FRACTION};
use crate::costs::{CostFamily, RateGrid};
use crate::geometry::ConstraintGeometry;
use crate::linalg::norm_inf;

/// Which node ordering the first Gauss–Seidel sweep uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStart {
    #[default]
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMethod {
    /// In-place sweeps, cycling through all `2^d` axis-reversal orderings.
    #[default]
    GaussSeidel,
    /// Parallel sweeps that read only the previous iterate.
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MintimeOptions {
    /// Time step; defaults to `h / max ‖β‖∞` so every Euler target lands
    /// within one cell of its node.
    pub dt: Option<f64>,
    /// Cap on the value; nodes left at the cap are not stabilizable within it.
    pub v_max: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    pub start: SweepStart,
    pub method: SweepMethod,
    pub extrapolation: Extrapolation,
    pub node_budget: usize,
    pub transition_budget: usize,
}

impl Default for MintimeOptions {
    fn default() -> Self {
        Self {
            dt: None,
            v_max: 1e3,
            tol: 1e-9,
            max_sweeps: 20_000,
            start: SweepStart::Forward,
            method: SweepMethod::GaussSeidel,
            extrapolation: Extrapolation::Radial,
            node_budget: DEFAULT_NODE_BUDGET,
            transition_budget: DEFAULT_TRANSITION_BUDGET,
        }
    }
}

fn default_dt(f: &CostFamily, grid: &OrthantGrid) -> f64 {
    let speed = max_speed(f, &RateGrid::default());
    if speed > 0.0 {
        grid.spacing() / speed
    } else {
        grid.spacing()
    }
}

/// Node visiting order for one sweep: axis `i` runs backwards when bit `i`
/// of `mask` is set.
fn ordering(grid: &OrthantGrid, mask: usize) -> Vec<usize> {
    (0..grid.len())
        .map(|lin| {
            let mut multi = grid.multi_index(lin);
            for (axis, m) in multi.iter_mut().enumerate() {
                if mask >> axis & 1 == 1 {
                    *m = grid.n - 1 - *m;
                }
            }
            grid.index(&multi)
        })
        .collect()
}

/// Value iteration for the stationary min-time game
///
/// ```text
/// W(x) = min( V_max, min_j max_β [ dt + W(π(x + dt·β)) ] ),   W(0) = 0,
/// ```
///
/// started from `W ≡ V_max` away from the origin.
pub fn solve_mintime(
    g: &ConstraintGeometry,
    f: &CostFamily,
    grid: &OrthantGrid,
    opts: &MintimeOptions,
) -> Result<ValueField, SolverError> {
    if !f.is_min_time_family() {
        let reason = if f.has_risk_branch() {
            "risk-sensitive branches have no finite candidate set".to_string()
        } else {
            let c: Vec<f64> = f.branches().iter().map(|b| b.constant()).collect();
            format!("every branch constant must be 1, got {c:?}")
        };
        return Err(SolverError::NotCondition41(reason));
    }
    check_inputs(g, f, grid, opts.node_budget)?;
    if !(opts.v_max > 0.0 && opts.tol > 0.0) {
        return Err(SolverError::InvalidGrid("v_max and tol must be positive".into()));
    }
    let dt = opts.dt.unwrap_or_else(|| default_dt(f, grid));
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SolverError::InvalidGrid(format!("time step must be positive, got {dt}")));
    }
    let tr = Transitions::build(g, f, grid, dt, &RateGrid::default(), opts.extrapolation, opts.transition_budget)?;
    let nodes = grid.len();
    let n_branches = f.len();
    let mut w = vec![opts.v_max; nodes];
    w[0] = 0.0;

    let update = |node: usize, w: &[f64], scratch: &mut [u32]| -> f64 {
        let (cont, _) = tr.minmax(node, dt, w, scratch);
        cont.min(opts.v_max)
    };

    let n_orders = 1usize << grid.d;
    let orders: Vec<Vec<usize>> = match opts.method {
        SweepMethod::GaussSeidel => (0..n_orders).map(|m| ordering(grid, m)).collect(),
        SweepMethod::Jacobi => Vec::new(),
    };
    let flip = match opts.start {
        SweepStart::Forward => 0,
        SweepStart::Backward => n_orders - 1,
    };

    let mut sweeps = 0;
    let mut change = f64::INFINITY;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        change = match opts.method {
            SweepMethod::GaussSeidel => {
                let order = &orders[((sweeps - 1) % n_orders) ^ flip];
                let mut scratch = vec![0u32; n_branches];
                let mut delta: f64 = 0.0;
                for &node in order {
                    if node == 0 {
                        continue;
                    }
                    let new = update(node, &w, &mut scratch);
                    delta = delta.max((new - w[node]).abs());
                    w[node] = new;
                }
                delta
            }
            SweepMethod::Jacobi => {
                let next: Vec<f64> = (0..nodes)
                    .into_par_iter()
                    .map_init(
                        || vec![0u32; n_branches],
                        |scratch, node| if node == 0 { 0.0 } else { update(node, &w, scratch) },
                    )
                    .collect();
                let delta = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                w = next;
                delta
            }
        };
        if change < opts.tol {
            break;
        }
    }
    let converged = change < opts.tol;

    let mut branch = vec![0u32; nodes];
    let mut response = vec![0u32; nodes * n_branches];
    for node in 1..nodes {
        let (_, j) = tr.minmax(node, dt, &w, &mut response[node * n_branches..(node + 1) * n_branches]);
        branch[node] = j as u32;
    }
    let capped_nodes = w.iter().filter(|v| **v >= opts.v_max).count();
    let domain_escape = tr.clamp_fraction > DOMAIN_ESCAPE_FRACTION;
    if domain_escape {
        log::warn!(
            "{:.1}% of Euler targets left the truncated domain; enlarge x_max",
            100.0 * tr.clamp_fraction
        );
    }
    let field = ValueField {
        kind: FieldKind::Stationary,
        grid: *grid,
        times: vec![0.0],
        values: vec![w],
        branch: vec![branch],
        stop: vec![vec![false; nodes]],
        response: vec![response],
        n_branches,
        clamped: tr.node_clamped,
        stats: SolveStats {
            clamp_fraction: tr.clamp_fraction,
            domain_escape,
            converged,
            sweeps,
            final_change: change,
            capped_nodes,
            v_max: Some(opts.v_max),
            dt,
        },
    };
    if converged {
        Ok(field)
    } else {
        Err(SolverError::NonConvergence { sweeps, change, field: Box::new(field) })
    }
}

/// Stationary value at any orthant point, using radial linearity
/// `V(sx) = sV(x)` to pull far points back into the half-box `[0, x_max/2]^d`
/// where the grid resolves the value.
pub fn radial_extend(v: &ValueField, x: &[f64]) -> f64 {
    let half = 0.5 * v.grid.x_max;
    let s = norm_inf(x) / half;
    if s <= 1.0 {
        return v.interpolate(0, x);
    }
    let y: Vec<f64> = x.iter().map(|xi| xi / s).collect();
    s * v.interpolate(0, &y)
}
