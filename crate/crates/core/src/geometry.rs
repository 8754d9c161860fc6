//! Constraint directions on the nonnegative orthant.
//!
//! A [`ConstraintGeometry`] holds one reflection direction `γ_i` per face
//! `{x_i = 0}`, normalized so that `(γ_i)_i = 1`. The discrete oblique
//! projection solves the linear complementarity problem
//!
//! ```text
//!     z = x + Γ a,   z ≥ 0,   a ≥ 0,   zᵀa = 0
//! ```
//!
//! by enumerating candidate active face sets in order of size. The dimensions
//! in scope are small (d ≤ 16), so exhaustive enumeration is cheap and never
//! misses a solution.

use std::sync::OnceLock;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{norm_inf, rank, solve_square};

/// Largest dimension accepted by the subset-enumeration routines.
pub const MAX_ENUMERATION_DIM: usize = 16;
/// Coordinates at or below this value count as lying on their face.
pub const FACE_TOL: f64 = 1e-12;
/// Complementarity tolerance for projection results.
pub const COMPLEMENTARITY_TOL: f64 = 1e-10;

const RANK_REL_TOL: f64 = 1e-10;
const COMPLETELY_S_MARGIN: f64 = 1e-10;
const POWER_ITERATIONS: usize = 500;
const POWER_TOL: f64 = 1e-10;
const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension {d} exceeds the enumeration bound {MAX_ENUMERATION_DIM}")]
    DimensionTooLarge { d: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid geometry: {0}")]
    Invalid(String),
    #[error("point is not in the orthant (coordinate {index} = {value})")]
    NotInOrthant { index: usize, value: f64 },
    #[error("no face subset yields a complementary solution")]
    NoSolution,
}

/// Reflection directions `γ_1, …, γ_d`, stored column-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GeometryConfig", into = "GeometryConfig")]
pub struct ConstraintGeometry {
    d: usize,
    gamma: Vec<f64>,
    #[serde(skip)]
    p_matrix: OnceLock<bool>,
}

impl PartialEq for ConstraintGeometry {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.gamma == other.gamma
    }
}

/// On-disk form of a geometry: `{"d": 2, "gamma_columns": [[1,-1],[0,1]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub d: usize,
    pub gamma_columns: Vec<Vec<f64>>,
}

impl TryFrom<GeometryConfig> for ConstraintGeometry {
    type Error = GeometryError;

    fn try_from(cfg: GeometryConfig) -> Result<Self, Self::Error> {
        if cfg.gamma_columns.len() != cfg.d {
            return Err(GeometryError::DimensionMismatch {
                expected: cfg.d,
                got: cfg.gamma_columns.len(),
            });
        }
        // Rescale each column so its own coordinate is 1.
        let mut columns = cfg.gamma_columns;
        for (i, col) in columns.iter_mut().enumerate() {
            let diag = col.get(i).copied().unwrap_or(f64::NAN);
            if !(diag > 0.0) {
                return Err(GeometryError::Invalid(format!(
                    "column {i} has non-positive own coordinate {diag}"
                )));
            }
            col.iter_mut().for_each(|v| *v /= diag);
        }
        ConstraintGeometry::new(columns)
    }
}

impl From<ConstraintGeometry> for GeometryConfig {
    fn from(g: ConstraintGeometry) -> Self {
        GeometryConfig {
            d: g.d,
            gamma_columns: (0..g.d).map(|i| g.column(i).to_vec()).collect(),
        }
    }
}

/// Outcome of the oblique projection of a point onto the orthant.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub z: Vec<f64>,
    /// Face multipliers; nonzero only on faces where `z` vanishes.
    pub a: Vec<f64>,
    /// Largest complementarity or sign violation seen before clean-up.
    pub residual: f64,
    /// Another face subset produced a different `z`. The first solution
    /// found (smallest active set) is returned.
    pub degenerate: bool,
}

/// Sufficient spectral test for the contraction condition on the Skorokhod
/// map. `verified == false` means "not verified", never "violated".
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionProxy {
    pub spectral_radius_estimate: f64,
    pub verified: bool,
}

impl ConstraintGeometry {
    /// Builds a geometry from its columns. Each column `i` must have
    /// `column[i] == 1` and all entries finite.
    pub fn new(columns: Vec<Vec<f64>>) -> Result<Self, GeometryError> {
        let d = columns.len();
        if d == 0 {
            return Err(GeometryError::Invalid("dimension must be at least 1".into()));
        }
        let mut gamma = Vec::with_capacity(d * d);
        for (i, col) in columns.iter().enumerate() {
            if col.len() != d {
                return Err(GeometryError::DimensionMismatch { expected: d, got: col.len() });
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(GeometryError::Invalid(format!("column {i} has a non-finite entry")));
            }
            if (col[i] - 1.0).abs() > 1e-12 {
                return Err(GeometryError::Invalid(format!(
                    "column {i} must have unit own coordinate, got {}",
                    col[i]
                )));
            }
            gamma.extend(col.iter().enumerate().map(|(k, v)| if k == i { 1.0 } else { *v }));
        }
        Ok(Self { d, gamma, p_matrix: OnceLock::new() })
    }

    /// Normal reflection: `γ_i = e_i`.
    pub fn identity(d: usize) -> Self {
        let cols = (0..d).map(|i| unit(d, i)).collect();
        Self::new(cols).expect("identity geometry is valid")
    }

    /// Single-class tandem line: `γ_i = e_i − e_{i+1}`, `γ_d = e_d`.
    pub fn tandem(d: usize) -> Self {
        let cols = (0..d)
            .map(|i| {
                let mut c = unit(d, i);
                if i + 1 < d {
                    c[i + 1] = -1.0;
                }
                c
            })
            .collect();
        Self::new(cols).expect("tandem geometry is valid")
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.gamma[i * self.d..(i + 1) * self.d]
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.gamma[col * self.d + row]
    }

    /// Column-major matrix with `γ_i` as column `i`.
    pub fn matrix(&self) -> &[f64] {
        &self.gamma
    }

    /// `Γ a` for a multiplier vector `a`.
    pub fn apply(&self, a: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for (i, ai) in a.iter().enumerate() {
            if *ai != 0.0 {
                for (o, g) in out.iter_mut().zip(self.column(i)) {
                    *o += ai * g;
                }
            }
        }
        out
    }

    /// Faces `{i : x_i ≤ FACE_TOL}` touched by `x`.
    pub fn active_faces(&self, x: &[f64]) -> Vec<usize> {
        x.iter()
            .enumerate()
            .filter(|(_, v)| **v <= FACE_TOL)
            .map(|(i, _)| i)
            .collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), GeometryError> {
        if x.len() != self.d {
            return Err(GeometryError::DimensionMismatch { expected: self.d, got: x.len() });
        }
        Ok(())
    }

    /// All principal minors positive, so every complementarity problem on
    /// this geometry has exactly one solution.
    fn is_p_matrix(&self) -> bool {
        *self.p_matrix.get_or_init(|| {
            if self.d > MAX_ENUMERATION_DIM {
                return false;
            }
            let all: Vec<usize> = (0..self.d).collect();
            let mut ok = true;
            for_each_subset(&all, |kappa| {
                if kappa.is_empty() {
                    return true;
                }
                let sub = self.principal_submatrix(kappa);
                let det = nalgebra::DMatrix::from_column_slice(kappa.len(), kappa.len(), &sub)
                    .determinant();
                if det <= 1e-12 {
                    ok = false;
                }
                ok
            });
            ok
        })
    }

    fn principal_submatrix(&self, kappa: &[usize]) -> Vec<f64> {
        let mut sub = Vec::with_capacity(kappa.len() * kappa.len());
        for &c in kappa {
            for &r in kappa {
                sub.push(self.entry(r, c));
            }
        }
        sub
    }

    /// Solves `w = q + Γ a` with `a` supported on `faces`, `a ≥ 0`,
    /// `w_i ≥ 0` and `a_i w_i = 0` for `i ∈ faces`. Coordinates outside
    /// `faces` are unconstrained.
    fn solve_face_lcp(&self, q: &[f64], faces: &[usize]) -> Result<ProjectionResult, GeometryError> {
        if faces.len() > MAX_ENUMERATION_DIM {
            return Err(GeometryError::DimensionTooLarge { d: faces.len() });
        }
        let tol = COMPLEMENTARITY_TOL * (1.0 + norm_inf(q));
        let unique = self.is_p_matrix();
        let mut first: Option<ProjectionResult> = None;
        let mut degenerate = false;

        for_each_subset(faces, |kappa| {
            if let Some(sol) = self.try_active_set(q, faces, kappa, tol) {
                match &first {
                    None => {
                        first = Some(sol);
                        if unique {
                            return false;
                        }
                    }
                    Some(f) => {
                        let diff = f.z.iter().zip(&sol.z).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                        if diff > DEGENERACY_TOL {
                            degenerate = true;
                            return false;
                        }
                    }
                }
            }
            true
        });

        let mut sol = first.ok_or(GeometryError::NoSolution)?;
        sol.degenerate = degenerate;
        Ok(sol)
    }

    fn try_active_set(
        &self,
        q: &[f64],
        faces: &[usize],
        kappa: &[usize],
        tol: f64,
    ) -> Option<ProjectionResult> {
        let k = kappa.len();
        let mut a = vec![0.0; self.d];
        let mut residual = 0.0_f64;
        if k > 0 {
            let sub = self.principal_submatrix(kappa);
            let rhs: Vec<f64> = kappa.iter().map(|&i| -q[i]).collect();
            let sol = solve_square(&sub, k, &rhs)?;
            for (&i, v) in kappa.iter().zip(&sol) {
                if *v < -tol {
                    return None;
                }
                residual = residual.max((-v).max(0.0));
                a[i] = v.max(0.0);
            }
        }
        let mut w = q.to_vec();
        for &i in kappa {
            for (wr, g) in w.iter_mut().zip(self.column(i)) {
                *wr += a[i] * g;
            }
        }
        for &i in kappa {
            residual = residual.max(w[i].abs() * a[i].max(1.0));
            w[i] = 0.0;
        }
        for &i in faces {
            if !kappa.contains(&i) {
                if w[i] < -tol {
                    return None;
                }
                residual = residual.max((-w[i]).max(0.0));
                w[i] = w[i].max(0.0);
            }
        }
        Some(ProjectionResult { z: w, a, residual, degenerate: false })
    }

    /// Oblique projection of `x` onto the orthant along the constraint
    /// directions. Points already in the orthant are returned unchanged.
    pub fn project(&self, x: &[f64]) -> Result<ProjectionResult, GeometryError> {
        self.check_dim(x)?;
        if x.iter().all(|v| *v >= 0.0) {
            return Ok(ProjectionResult {
                z: x.to_vec(),
                a: vec![0.0; self.d],
                residual: 0.0,
                degenerate: false,
            });
        }
        let all: Vec<usize> = (0..self.d).collect();
        self.solve_face_lcp(x, &all)
    }

    /// Directional derivative of the projection at an orthant point:
    /// `v` corrected along the directions of the faces `x` touches.
    pub fn projected_velocity(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.check_dim(x)?;
        self.check_dim(v)?;
        if let Some((index, value)) = x.iter().copied().enumerate().find(|(_, xi)| *xi < -FACE_TOL) {
            return Err(GeometryError::NotInOrthant { index, value });
        }
        let faces = self.active_faces(x);
        if faces.is_empty() {
            return Ok(v.to_vec());
        }
        Ok(self.solve_face_lcp(v, &faces)?.z)
    }

    /// Constant `M` with `‖π(x, v)‖∞ ≤ M (1 + ‖v‖∞)` for every orthant point.
    ///
    /// On an active set `κ` the corrected velocity is
    /// `v − Γ_{·κ} Γ_{κκ}⁻¹ v_κ`, so `M = 1 + max_κ ‖Γ_{·κ} Γ_{κκ}⁻¹‖∞`.
    pub fn velocity_growth_bound(&self) -> Result<f64, GeometryError> {
        if self.d > MAX_ENUMERATION_DIM {
            return Err(GeometryError::DimensionTooLarge { d: self.d });
        }
        let all: Vec<usize> = (0..self.d).collect();
        let mut worst = 0.0_f64;
        for_each_subset(&all, |kappa| {
            let k = kappa.len();
            if k == 0 {
                return true;
            }
            let sub = self.principal_submatrix(kappa);
            // columns of Γ_{κκ}⁻¹ via unit right-hand sides
            let mut inv = Vec::with_capacity(k * k);
            for c in 0..k {
                let mut e = vec![0.0; k];
                e[c] = 1.0;
                match solve_square(&sub, k, &e) {
                    Some(col) => inv.extend(col),
                    None => return true,
                }
            }
            for r in 0..self.d {
                let mut row_sum = 0.0;
                for c in 0..k {
                    let mut v = 0.0;
                    for (m, &i) in kappa.iter().enumerate() {
                        v += self.entry(r, i) * inv[c * k + m];
                    }
                    row_sum += v.abs();
                }
                worst = worst.max(row_sum);
            }
            true
        });
        Ok(1.0 + worst)
    }
}

fn unit(d: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[i] = 1.0;
    e
}

/// Visits every subset of `items`, smallest first and lexicographically
/// within a size. The visitor returns `false` to stop early.
pub(crate) fn for_each_subset(items: &[usize], mut visit: impl FnMut(&[usize]) -> bool) {
    let m = items.len();
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    for k in 0..=m {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            chosen.clear();
            chosen.extend(idx.iter().map(|&p| items[p]));
            if !visit(&chosen) {
                return;
            }
            // advance to the next k-combination
            let mut pos = k;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                if idx[pos] < m - k + pos {
                    idx[pos] += 1;
                    for j in pos + 1..k {
                        idx[j] = idx[j - 1] + 1;
                    }
                    pos = usize::MAX;
                    break;
                }
            }
            if pos != usize::MAX {
                break;
            }
        }
    }
}

/// Condition: the directions are linearly independent.
pub fn check_linear_independence(g: &ConstraintGeometry) -> bool {
    rank(g.matrix(), g.d, g.d, RANK_REL_TOL) == g.d
}

/// Completely-S test: every nonempty face set `κ` admits `b ≥ 0` with
/// `(Σ_{i∈κ} b_i γ_i)_k > 0` for all `k ∈ κ`.
///
/// Each subset is decided by the linear program
/// `max t  s.t.  Σ b_i = 1, b ≥ 0, (Σ b_i γ_i)_k ≥ t (k ∈ κ)`.
pub fn check_completely_s(g: &ConstraintGeometry) -> Result<bool, GeometryError> {
    if g.d > MAX_ENUMERATION_DIM {
        return Err(GeometryError::DimensionTooLarge { d: g.d });
    }
    let all: Vec<usize> = (0..g.d).collect();
    let mut ok = true;
    for_each_subset(&all, |kappa| {
        if kappa.is_empty() {
            return true;
        }
        if completely_s_margin(g, kappa) <= COMPLETELY_S_MARGIN {
            ok = false;
        }
        ok
    });
    Ok(ok)
}

/// Optimal value of the max–min program for one face subset.
pub(crate) fn completely_s_margin(g: &ConstraintGeometry, kappa: &[usize]) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let b: Vec<_> = kappa.iter().map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let t = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    lp.add_constraint(b.iter().map(|v| (*v, 1.0)), ComparisonOp::Eq, 1.0);
    for &k in kappa {
        let mut expr: Vec<_> = kappa.iter().zip(&b).map(|(&i, v)| (*v, g.entry(k, i))).collect();
        expr.push((t, -1.0));
        lp.add_constraint(expr, ComparisonOp::Ge, 0.0);
    }
    match lp.solve() {
        Ok(sol) => sol.objective(),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Spectral-radius estimate of `|Γ − I|` by power iteration.
///
/// Iterates on `|Γ − I| + I`, which shares the Perron vector and is
/// aperiodic. The Collatz–Wielandt ratio `max_i (Av)_i / v_i` is an upper
/// bound on the spectral radius for any positive `v`; once it drops below 1
/// the contraction condition is certified.
pub fn contraction_proxy(g: &ConstraintGeometry) -> ContractionProxy {
    let d = g.d;
    let abs_q: Vec<f64> = (0..d * d)
        .map(|idx| {
            let (col, row) = (idx / d, idx % d);
            if row == col {
                (g.gamma[idx] - 1.0).abs()
            } else {
                g.gamma[idx].abs()
            }
        })
        .collect();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d];
        for col in 0..d {
            for row in 0..d {
                out[row] += abs_q[col * d + row] * v[col];
            }
        }
        out
    };

    let mut v = vec![1.0; d];
    let mut upper = f64::INFINITY;
    let mut lower = 0.0_f64;
    let mut estimate = f64::NAN;
    for _ in 0..POWER_ITERATIONS {
        let qv = apply(&v);
        let ratio_max = qv.iter().zip(&v).map(|(a, b)| a / b).fold(0.0_f64, f64::max);
        let ratio_min = qv.iter().zip(&v).map(|(a, b)| a / b).fold(f64::INFINITY, f64::min);
        upper = upper.min(ratio_max);
        lower = lower.max(ratio_min);
        let next: Vec<f64> = qv.iter().zip(&v).map(|(a, b)| a + b).collect();
        let norm = norm_inf(&next);
        let v_norm = norm_inf(&v);
        estimate = norm / v_norm - 1.0;
        // keep strictly positive so the ratio bound stays meaningful
        v = next.iter().map(|x| x / norm + 1e-300).collect();
        if lower >= 1.0 {
            break;
        }
    }
    let spectral_radius_estimate = upper.min(estimate.max(lower));
    ContractionProxy { spectral_radius_estimate, verified: spectral_radius_estimate < 1.0 - POWER_TOL }
}

/// Sufficient proxy for the Skorokhod-map contraction condition.
pub fn check_contraction_proxy(g: &ConstraintGeometry) -> bool {
    contraction_proxy(g).verified
}
