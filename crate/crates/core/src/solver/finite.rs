use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_inputs, Extrapolation, max_speed, FieldKind, OrthantGrid, SolveStats, SolverError, Transitions, ValueField};
use super::{DEFAULT_NODE_BUDGET, DEFAULT_TRANSITION_BUDGET, DOMAIN_ESCAPE_FRACTION};
use crate::costs::{CostFamily, RateGrid};
use crate::geometry::ConstraintGeometry;

type StopFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;
type TerminalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Stopping cost `g(t, x)` and terminal cost `f(x)` of the finite-horizon
/// game on `[0, 1]`. The two must agree at `t = 1`.
pub struct StoppingProblem {
    label: String,
    stopping: Box<StopFn>,
    terminal: Box<TerminalFn>,
}

impl fmt::Debug for StoppingProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StoppingProblem").field("label", &self.label).finish()
    }
}

impl StoppingProblem {
    pub fn new(
        label: impl Into<String>,
        stopping: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        terminal: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { label: label.into(), stopping: Box::new(stopping), terminal: Box::new(terminal) }
    }

    /// `g(t, x) = 1 − t`, `f = 0`: the stopping problem whose value is the
    /// min-time value capped by the time left.
    pub fn time_to_go() -> Self {
        Self::affine(1.0, 0.0)
    }

    /// `g(t, x) = scale·(1 − t) + offset`, `f = offset`.
    pub fn affine(scale: f64, offset: f64) -> Self {
        Self::new(
            format!("{scale}*(1-t)+{offset}"),
            move |t, _| scale * (1.0 - t) + offset,
            move |_| offset,
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn stopping_cost(&self, t: f64, x: &[f64]) -> f64 {
        (self.stopping)(t, x)
    }

    pub fn terminal_cost(&self, x: &[f64]) -> f64 {
        (self.terminal)(x)
    }
}

/// How far back each slice looks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStride {
    /// Slice `k` reads slice `k + 1`.
    Single,
    /// Slice `k` reads slice `k + m`, with `m ≥ 1` the largest stride for
    /// which the fastest candidate moves at most one cell. Slices closer
    /// than `m` to the horizon fall back to a single step. With a small time
    /// step this keeps interpolation from smearing kinks of the value.
    #[default]
    Courant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteOptions {
    /// Number of time steps `N`; the slices sit at `t_k = k/N`.
    pub n_steps: usize,
    pub stride: TimeStride,
    pub rate_grid: RateGrid,
    pub node_budget: usize,
    pub transition_budget: usize,
}

impl FiniteOptions {
    pub fn new(n_steps: usize) -> Self {
        Self {
            n_steps,
            stride: TimeStride::default(),
            rate_grid: RateGrid::default(),
            node_budget: DEFAULT_NODE_BUDGET,
            transition_budget: DEFAULT_TRANSITION_BUDGET,
        }
    }
}

/// Backward recursion for the finite-horizon obstacle problem on `[0, 1]`.
///
/// `V_N = f` away from the origin, `V_k(0) = 0`, and every earlier slice is
/// the minimum of the stopping cost and the min–max continuation over the
/// configured [`TimeStride`].
pub fn solve_finite(
    g: &ConstraintGeometry,
    f: &CostFamily,
    grid: &OrthantGrid,
    data: &StoppingProblem,
    opts: &FiniteOptions,
) -> Result<ValueField, SolverError> {
    check_inputs(g, f, grid, opts.node_budget)?;
    if opts.n_steps == 0 {
        return Err(SolverError::InvalidGrid("need at least one time step".into()));
    }
    let nodes = grid.len();
    let coords: Vec<Vec<f64>> = (0..nodes).map(|i| grid.node(i)).collect();
    for x in &coords {
        let (gv, fv) = (data.stopping_cost(1.0, x), data.terminal_cost(x));
        if (gv - fv).abs() > 1e-12 * (1.0 + fv.abs()) {
            return Err(SolverError::IncompatibleData(format!("g(1, {x:?}) = {gv} but f = {fv}")));
        }
    }

    let n = opts.n_steps;
    let dt = 1.0 / n as f64;
    let m = match opts.stride {
        TimeStride::Single => 1,
        TimeStride::Courant => {
            let speed = max_speed(f, &opts.rate_grid);
            if speed > 0.0 {
                ((grid.spacing() / (speed * dt)).floor() as usize).clamp(1, n)
            } else {
                1
            }
        }
    };
    let tr = Transitions::build(g, f, grid, dt, &opts.rate_grid, Extrapolation::Constant, opts.transition_budget)?;
    let tr_long = if m > 1 {
        Some(Transitions::build(g, f, grid, m as f64 * dt, &opts.rate_grid, Extrapolation::Constant, opts.transition_budget)?)
    } else {
        None
    };
    let n_branches = f.len();
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();

    let mut values = vec![Vec::new(); n + 1];
    let mut branch = vec![Vec::new(); n + 1];
    let mut stop = vec![Vec::new(); n + 1];
    let mut response = vec![Vec::new(); n + 1];

    values[n] = coords
        .iter()
        .enumerate()
        .map(|(i, x)| if i == 0 { 0.0 } else { data.terminal_cost(x) })
        .collect();
    branch[n] = vec![0; nodes];
    stop[n] = vec![false; nodes];
    response[n] = vec![0; nodes * n_branches];

    for k in (0..n).rev() {
        let t = times[k];
        let (table, step, next) = match &tr_long {
            Some(long) if k + m <= n => (long, m as f64 * dt, &values[k + m]),
            _ => (&tr, dt, &values[k + 1]),
        };
        let rows: Vec<(f64, u32, bool, Vec<u32>)> = coords
            .par_iter()
            .enumerate()
            .map(|(node, x)| {
                let mut resp = vec![0u32; n_branches];
                if node == 0 {
                    return (0.0, 0, false, resp);
                }
                let (cont, j) = table.minmax(node, step, next, &mut resp);
                let gv = data.stopping_cost(t, x);
                if gv <= cont {
                    (gv, j as u32, true, resp)
                } else {
                    (cont, j as u32, false, resp)
                }
            })
            .collect();
        let mut v = Vec::with_capacity(nodes);
        let mut b = Vec::with_capacity(nodes);
        let mut s = Vec::with_capacity(nodes);
        let mut r = Vec::with_capacity(nodes * n_branches);
        for (vi, bi, si, ri) in rows {
            v.push(vi);
            b.push(bi);
            s.push(si);
            r.extend(ri);
        }
        values[k] = v;
        branch[k] = b;
        stop[k] = s;
        response[k] = r;
    }

    let clamp_fraction = tr_long.as_ref().map_or(tr.clamp_fraction, |t| t.clamp_fraction.max(tr.clamp_fraction));
    let mut clamped = tr.node_clamped;
    if let Some(long) = &tr_long {
        for (c, l) in clamped.iter_mut().zip(&long.node_clamped) {
            *c |= *l;
        }
    }
    let domain_escape = clamp_fraction > DOMAIN_ESCAPE_FRACTION;
    if domain_escape {
        log::warn!(
            "{:.1}% of Euler targets left the truncated domain; enlarge x_max",
            100.0 * clamp_fraction
        );
    }
    Ok(ValueField {
        kind: FieldKind::Finite,
        grid: *grid,
        times,
        values,
        branch,
        stop,
        response,
        n_branches,
        clamped,
        stats: SolveStats {
            clamp_fraction,
            domain_escape,
            converged: true,
            sweeps: n,
            final_change: 0.0,
            capped_nodes: 0,
            v_max: None,
            dt,
        },
    })
}
