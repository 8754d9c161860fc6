use serde::{Deserialize, Serialize};

use super::{FieldKind, SolverError, ValueField};
use crate::costs::{hamiltonian, hamiltonian_branch, CostBranch, CostFamily};
use crate::geometry::ConstraintGeometry;
use crate::linalg::dot;

/// Largest gap between the finite-horizon value and `min(V_∞, 1 − t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eq42Report {
    pub max_discrepancy: f64,
    pub worst_time: f64,
    pub worst_point: Vec<f64>,
    pub checked: usize,
    pub skipped_clamped: usize,
}

/// Compares a finite solve with data `g = 1 − t`, `f = 0` against a
/// stationary solve on the same grid, slice by slice, skipping nodes whose
/// Euler targets were clamped in either solve.
pub fn verify_eq_4_2(finite: &ValueField, stationary: &ValueField) -> Result<Eq42Report, SolverError> {
    if finite.kind != FieldKind::Finite || stationary.kind != FieldKind::Stationary {
        return Err(SolverError::InvalidField("expected a finite field and a stationary field".into()));
    }
    if finite.grid != stationary.grid {
        return Err(SolverError::InvalidField("fields live on different grids".into()));
    }
    let v_inf = &stationary.values[0];
    let mut report = Eq42Report {
        max_discrepancy: 0.0,
        worst_time: 0.0,
        worst_point: vec![0.0; finite.grid.d],
        checked: 0,
        skipped_clamped: 0,
    };
    for node in 0..finite.grid.len() {
        if finite.clamped[node] || stationary.clamped[node] {
            report.skipped_clamped += 1;
            continue;
        }
        for (k, t) in finite.times.iter().enumerate() {
            let gap = (finite.values[k][node] - v_inf[node].min(1.0 - t)).abs();
            report.checked += 1;
            if gap > report.max_discrepancy {
                report.max_discrepancy = gap;
                report.worst_time = *t;
                report.worst_point = finite.grid.node(node);
            }
        }
    }
    Ok(report)
}

/// Outcome of the differential checks on a stationary value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm43Report {
    pub tol_h: f64,
    /// Interior nodes whose one-sided differences agree within `3h`.
    pub smooth_nodes: usize,
    pub kink_nodes: usize,
    /// Smooth nodes with `|H(p)| ≤ tol_h`.
    pub residual_pass: usize,
    pub residual_pass_fraction: f64,
    pub worst_residual: f64,
    pub worst_residual_point: Vec<f64>,
    pub b_scan_points: usize,
    pub b_scan_violations: usize,
    /// Smallest `[H(bp) − (1 − b)] ∨ max_{i∈I(x)} ⟨bp, γ_i⟩` seen.
    pub worst_b_scan: f64,
    pub boundary_nodes: usize,
    pub boundary_violations: usize,
}

const B_STEPS: usize = 10;

/// Checks the sub- and supersolution inequalities of the stationary
/// equation on grid gradients.
///
/// At smooth interior nodes the central-difference gradient `p` must satisfy
/// `|H(p)| ≤ tol_h`. At every checked node, interior or boundary, the scan
/// `b ∈ {0, 0.1, …, 1}` of `[H(bp) − (1 − b)] ∨ max_{i∈I(x)} ⟨bp, γ_i⟩`
/// must stay above `−tol_h`, and on boundary faces
/// `H(p) ∧ min_{i∈I(x)} ⟨p, γ_i⟩ ≤ tol_h` must hold with one-sided
/// differences. Nodes on the outer faces `x_i = x_max`, nodes with clamped
/// Euler targets and nodes next to capped values are skipped.
pub fn verify_thm_4_3(
    stationary: &ValueField,
    g: &ConstraintGeometry,
    f: &CostFamily,
    tol_h: Option<f64>,
) -> Result<Thm43Report, SolverError> {
    if stationary.kind != FieldKind::Stationary {
        return Err(SolverError::InvalidField("expected a stationary field".into()));
    }
    let grid = &stationary.grid;
    if g.dim() != grid.d || f.dim() != grid.d {
        return Err(SolverError::DimensionMismatch("geometry, costs and field must share d".into()));
    }
    let h = grid.spacing();
    let tol = tol_h.unwrap_or(5.0 * h);
    let v = &stationary.values[0];
    let cap = stationary.stats.v_max.unwrap_or(f64::INFINITY);
    let usable = |i: usize| !stationary.clamped[i] && v[i] < cap;

    let mut r = Thm43Report {
        tol_h: tol,
        smooth_nodes: 0,
        kink_nodes: 0,
        residual_pass: 0,
        residual_pass_fraction: 1.0,
        worst_residual: 0.0,
        worst_residual_point: vec![0.0; grid.d],
        b_scan_points: 0,
        b_scan_violations: 0,
        worst_b_scan: f64::INFINITY,
        boundary_nodes: 0,
        boundary_violations: 0,
    };

    'nodes: for node in 1..grid.len() {
        let multi = grid.multi_index(node);
        if multi.iter().any(|m| *m + 1 == grid.n) || !usable(node) {
            continue;
        }
        let x = grid.node(node);
        let faces = g.active_faces(&x);
        let mut p = vec![0.0; grid.d];
        let mut smooth = true;
        for axis in 0..grid.d {
            let fwd = grid.neighbor(node, axis, 1).expect("interior of the upper face");
            if !usable(fwd) {
                continue 'nodes;
            }
            let d_plus = (v[fwd] - v[node]) / h;
            if multi[axis] == 0 {
                p[axis] = d_plus;
                continue;
            }
            let bwd = grid.neighbor(node, axis, -1).expect("positive index");
            if !usable(bwd) {
                continue 'nodes;
            }
            let d_minus = (v[node] - v[bwd]) / h;
            smooth &= (d_plus - d_minus).abs() <= 3.0 * h;
            p[axis] = 0.5 * (d_plus + d_minus);
        }
        let (h_p, _) = hamiltonian(f, &p)?;

        if faces.is_empty() {
            if !smooth {
                r.kink_nodes += 1;
                continue;
            }
            r.smooth_nodes += 1;
            if h_p.abs() <= tol {
                r.residual_pass += 1;
            }
            if h_p.abs() > r.worst_residual {
                r.worst_residual = h_p.abs();
                r.worst_residual_point = x.clone();
            }
        } else {
            r.boundary_nodes += 1;
            let oblique = faces.iter().map(|i| dot(&p, g.column(*i))).fold(f64::INFINITY, f64::min);
            if h_p.min(oblique) > tol {
                r.boundary_violations += 1;
            }
        }

        for step in 0..=B_STEPS {
            let b = step as f64 / B_STEPS as f64;
            let bp: Vec<f64> = p.iter().map(|pi| b * pi).collect();
            let (h_bp, _) = hamiltonian(f, &bp)?;
            let push = faces.iter().map(|i| dot(&bp, g.column(*i))).fold(f64::NEG_INFINITY, f64::max);
            let value = (h_bp - (1.0 - b)).max(push);
            r.b_scan_points += 1;
            if value < -tol {
                r.b_scan_violations += 1;
            }
            r.worst_b_scan = r.worst_b_scan.min(value);
        }
    }
    if r.smooth_nodes > 0 {
        r.residual_pass_fraction = r.residual_pass as f64 / r.smooth_nodes as f64;
    }
    Ok(r)
}

/// Largest `|V(αx) − αV(x)|` over grid nodes in the half-box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialReport {
    pub alpha: f64,
    pub max_error: f64,
    pub worst_point: Vec<f64>,
    pub checked: usize,
    pub spacing: f64,
    /// Nodes where the value sits at the cap, excluded from the check.
    pub skipped_capped: usize,
}

pub fn check_radial_linearity(v: &ValueField, alpha: f64) -> Result<RadialReport, SolverError> {
    if v.kind != FieldKind::Stationary {
        return Err(SolverError::InvalidField("expected a stationary field".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(SolverError::InvalidField(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let grid = &v.grid;
    let half = 0.5 * grid.x_max;
    let cap = v.stats.v_max.unwrap_or(f64::INFINITY);
    let mut r = RadialReport {
        alpha,
        max_error: 0.0,
        worst_point: vec![0.0; grid.d],
        checked: 0,
        spacing: grid.spacing(),
        skipped_capped: 0,
    };
    for node in 0..grid.len() {
        let x = grid.node(node);
        if x.iter().any(|xi| *xi > half + 1e-12) {
            continue;
        }
        if v.values[0][node] >= cap {
            r.skipped_capped += 1;
            continue;
        }
        let ax: Vec<f64> = x.iter().map(|xi| alpha * xi).collect();
        let err = (v.interpolate(0, &ax) - alpha * v.values[0][node]).abs();
        r.checked += 1;
        if err > r.max_error {
            r.max_error = err;
            r.worst_point = x;
        }
    }
    Ok(r)
}

/// Real roots of `ρ ↦ H_j(ρ)` for a one-dimensional branch, found by
/// scanning `[−bound, bound]` and bisecting each sign change.
pub fn scalar_hamiltonian_roots(branch: &CostBranch, bound: f64) -> Result<Vec<f64>, SolverError> {
    if branch.dim() != 1 {
        return Err(SolverError::DimensionMismatch(format!("expected d = 1, got {}", branch.dim())));
    }
    let hf = |rho: f64| hamiltonian_branch(branch, &[rho]);
    let steps = 4000;
    let mut roots = Vec::new();
    let mut a = -bound;
    let mut fa = hf(a)?;
    for i in 1..=steps {
        let b = -bound + 2.0 * bound * i as f64 / steps as f64;
        let fb = hf(b)?;
        if fa == 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = hf(mid)?;
                if fm == 0.0 || hi - lo < 1e-14 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if flo * fm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        a = b;
        fa = fb;
    }
    Ok(roots)
}

/// Slope of the value near the origin compared with the scalar
/// Hamiltonian's roots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSlopeReport {
    pub fitted_slope: f64,
    pub roots: Vec<f64>,
    pub nearest_root: Option<f64>,
    pub error: f64,
    pub fit_points: usize,
}

/// Least-squares slope through the origin of `V(0, x)` over continuation
/// nodes `0 < x ≤ x_fit` of a one-dimensional finite solve.
pub fn verify_risk_slope(finite: &ValueField, f: &CostFamily, x_fit: f64) -> Result<RiskSlopeReport, SolverError> {
    if finite.kind != FieldKind::Finite || finite.grid.d != 1 || f.len() != 1 {
        return Err(SolverError::InvalidField("expected a one-dimensional, single-branch finite field".into()));
    }
    let (mut sxy, mut sxx, mut count) = (0.0, 0.0, 0);
    for node in 1..finite.grid.len() {
        let x = finite.grid.coordinate(node);
        if x > x_fit + 1e-12 {
            break;
        }
        if finite.stop[0][node] || finite.clamped[node] {
            continue;
        }
        sxy += x * finite.values[0][node];
        sxx += x * x;
        count += 1;
    }
    if count == 0 {
        return Err(SolverError::InvalidField("no continuation nodes in the fit window".into()));
    }
    let slope = sxy / sxx;
    let roots = scalar_hamiltonian_roots(&f.branches()[0], 20.0)?;
    let nearest = roots.iter().copied().min_by(|a, b| (a - slope).abs().total_cmp(&(b - slope).abs()));
    Ok(RiskSlopeReport {
        fitted_slope: slope,
        error: nearest.map_or(f64::INFINITY, |r| (r - slope).abs()),
        nearest_root: nearest,
        roots,
        fit_points: count,
    })
}
