//! Running costs `L_j`, branch Hamiltonians `H_j` and their lower envelope
//! `H = ∧_j H_j`.
//!
//! Three branch models are supported:
//!
//! * **velocity set**: `L_j = −c` on the convex hull of finitely many
//!   velocities and `+∞` elsewhere, so `H_j(α) = c + max_β ⟨α, β⟩`;
//! * **rate box**: velocities `Σ_k r_k f_k` for rates `r_k ∈ [lo_k, hi_k]`
//!   and flow vectors `f_k`; represented by the box vertices, where the
//!   linear functional attains its supremum;
//! * **risk sensitive**: `L_j(β) = −c + inf{ Σ_k n_k ℓ(r_k / n_k) : Σ_k r_k f_k = β }`
//!   with `ℓ(z) = z log z − z + 1`, whose transform is
//!   `H_j(α) = c + Σ_k n_k h(⟨f_k, α⟩)`, `h(a) = eᵃ − 1`.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, norm_inf};

const MEMBERSHIP_TOL: f64 = 1e-9;
const NEWTON_MAX_ITER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid branch {name:?}: {reason}")]
    InvalidBranch { name: String, reason: String },
    #[error("invalid cost family: {0}")]
    InvalidFamily(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    VelocitySet,
    RateBoxRobust,
    RiskSensitive,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchModel {
    VelocitySet { velocities: Vec<Vec<f64>> },
    RateBox { flows: Vec<Vec<f64>>, boxes: Vec<[f64; 2]> },
    RiskSensitive { flows: Vec<Vec<f64>>, nominal: Vec<f64> },
}

/// One velocity the maximizer may pick, with the reward `−L_j(β)` it earns
/// per unit time.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub velocity: Vec<f64>,
    pub reward: f64,
    /// Rates that realize the velocity, when the branch is rate based.
    pub rates: Option<Vec<f64>>,
}

/// Rate grid used for the inner supremum of risk-sensitive branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateGrid {
    pub points_per_axis: usize,
    pub lower: f64,
    /// Upper end of each axis as a multiple of the nominal rate.
    pub upper_factor: f64,
}

impl Default for RateGrid {
    fn default() -> Self {
        Self { points_per_axis: 21, lower: 0.01, upper_factor: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostBranch {
    name: String,
    constant: f64,
    model: BranchModel,
    candidates: Vec<Vec<f64>>,
}

/// `ℓ(z) = z log z − z + 1` on `z ≥ 0` (with `0 log 0 = 0`), `+∞` below.
pub fn ell(z: f64) -> f64 {
    if z < 0.0 {
        f64::INFINITY
    } else if z == 0.0 {
        1.0
    } else {
        z * z.ln() - z + 1.0
    }
}

/// `h(a) = eᵃ − 1`, the Legendre transform of [`ell`].
pub fn h(a: f64) -> f64 {
    a.exp_m1()
}

fn combine(flows: &[Vec<f64>], rates: &[f64], d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    for (f, r) in flows.iter().zip(rates) {
        for (vi, fi) in v.iter_mut().zip(f) {
            *vi += r * fi;
        }
    }
    v
}

fn push_unique(out: &mut Vec<Vec<f64>>, v: Vec<f64>) {
    if !out.iter().any(|w| w == &v) {
        out.push(v);
    }
}

impl CostBranch {
    fn invalid(name: &str, reason: impl Into<String>) -> CostError {
        CostError::InvalidBranch { name: name.to_string(), reason: reason.into() }
    }

    pub fn velocity_set(name: impl Into<String>, c: f64, velocities: Vec<Vec<f64>>) -> Result<Self, CostError> {
        let name = name.into();
        if velocities.is_empty() {
            return Err(Self::invalid(&name, "no velocities"));
        }
        let d = velocities[0].len();
        if d == 0 || velocities.iter().any(|v| v.len() != d || v.iter().any(|x| !x.is_finite())) {
            return Err(Self::invalid(&name, "velocities must be finite vectors of one dimension"));
        }
        if !c.is_finite() {
            return Err(Self::invalid(&name, "constant must be finite"));
        }
        let mut candidates = Vec::new();
        for v in &velocities {
            push_unique(&mut candidates, v.clone());
        }
        Ok(Self { name, constant: c, model: BranchModel::VelocitySet { velocities }, candidates })
    }

    pub fn rate_box(
        name: impl Into<String>,
        c: f64,
        flows: Vec<Vec<f64>>,
        boxes: Vec<[f64; 2]>,
    ) -> Result<Self, CostError> {
        let name = name.into();
        Self::check_flows(&name, &flows, boxes.len())?;
        if boxes.iter().any(|b| !(b[0] >= 0.0 && b[0] <= b[1] && b[1].is_finite())) {
            return Err(Self::invalid(&name, "boxes need 0 ≤ lower ≤ upper < ∞"));
        }
        let d = flows[0].len();
        // vertices: degenerate boxes contribute a single value
        let mut rate_vertices: Vec<Vec<f64>> = vec![Vec::new()];
        for b in &boxes {
            let ends: &[f64] = if b[0] == b[1] { &b[..1] } else { &b[..] };
            rate_vertices = rate_vertices
                .into_iter()
                .flat_map(|prefix| {
                    ends.iter().map(move |e| {
                        let mut p = prefix.clone();
                        p.push(*e);
                        p
                    })
                })
                .collect();
        }
        let candidates = rate_vertices.iter().map(|r| combine(&flows, r, d)).collect();
        Ok(Self { name, constant: c, model: BranchModel::RateBox { flows, boxes }, candidates })
    }

    pub fn risk_sensitive(
        name: impl Into<String>,
        c: f64,
        flows: Vec<Vec<f64>>,
        nominal: Vec<f64>,
    ) -> Result<Self, CostError> {
        let name = name.into();
        Self::check_flows(&name, &flows, nominal.len())?;
        if nominal.iter().any(|n| !(*n > 0.0 && n.is_finite())) {
            return Err(Self::invalid(&name, "nominal rates must be strictly positive"));
        }
        Ok(Self {
            name,
            constant: c,
            model: BranchModel::RiskSensitive { flows, nominal },
            candidates: Vec::new(),
        })
    }

    fn check_flows(name: &str, flows: &[Vec<f64>], rates: usize) -> Result<(), CostError> {
        if flows.is_empty() || flows.len() != rates {
            return Err(Self::invalid(name, "need one rate specification per flow"));
        }
        let d = flows[0].len();
        if d == 0 || flows.iter().any(|f| f.len() != d || f.iter().any(|x| !x.is_finite())) {
            return Err(Self::invalid(name, "flows must be finite vectors of one dimension"));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn model(&self) -> &BranchModel {
        &self.model
    }

    pub fn kind(&self) -> BranchKind {
        match self.model {
            BranchModel::VelocitySet { .. } => BranchKind::VelocitySet,
            BranchModel::RateBox { .. } => BranchKind::RateBoxRobust,
            BranchModel::RiskSensitive { .. } => BranchKind::RiskSensitive,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.model {
            BranchModel::VelocitySet { velocities } => velocities[0].len(),
            BranchModel::RateBox { flows, .. } | BranchModel::RiskSensitive { flows, .. } => flows[0].len(),
        }
    }

    /// Extreme-point velocities of the admissible set (empty for
    /// risk-sensitive branches, whose admissible set is unbounded).
    pub fn velocity_candidates(&self) -> &[Vec<f64>] {
        &self.candidates
    }

    /// Finite list of velocities and rewards for the maximizer's inner
    /// supremum. Risk-sensitive branches are sampled on `grid`.
    pub fn candidates(&self, grid: &RateGrid) -> Vec<Candidate> {
        match &self.model {
            BranchModel::VelocitySet { .. } | BranchModel::RateBox { .. } => self
                .candidates
                .iter()
                .map(|v| Candidate { velocity: v.clone(), reward: self.constant, rates: None })
                .collect(),
            BranchModel::RiskSensitive { flows, nominal } => {
                let n = grid.points_per_axis.max(2);
                let axes: Vec<Vec<f64>> = nominal
                    .iter()
                    .map(|nom| {
                        let hi = grid.upper_factor * nom;
                        (0..n).map(|i| grid.lower + (hi - grid.lower) * i as f64 / (n - 1) as f64).collect()
                    })
                    .collect();
                let d = self.dim();
                let total = n.pow(axes.len() as u32);
                let mut out = Vec::with_capacity(total);
                let mut idx = vec![0usize; axes.len()];
                for _ in 0..total {
                    let rates: Vec<f64> = idx.iter().zip(&axes).map(|(i, ax)| ax[*i]).collect();
                    let penalty: f64 = rates.iter().zip(nominal).map(|(r, nom)| nom * ell(r / nom)).sum();
                    out.push(Candidate {
                        velocity: combine(flows, &rates, d),
                        reward: self.constant - penalty,
                        rates: Some(rates),
                    });
                    for (i, ax) in idx.iter_mut().zip(&axes).rev() {
                        *i += 1;
                        if *i < ax.len() {
                            break;
                        }
                        *i = 0;
                    }
                }
                out
            }
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), CostError> {
        if x.len() != self.dim() {
            return Err(CostError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }
}

/// `H_j(α) = sup_β [⟨α, β⟩ − L_j(β)]`.
pub fn hamiltonian_branch(b: &CostBranch, alpha: &[f64]) -> Result<f64, CostError> {
    b.check_dim(alpha)?;
    Ok(match &b.model {
        BranchModel::VelocitySet { .. } | BranchModel::RateBox { .. } => {
            b.constant + b.candidates.iter().map(|v| dot(alpha, v)).fold(f64::NEG_INFINITY, f64::max)
        }
        BranchModel::RiskSensitive { flows, nominal } => {
            b.constant + flows.iter().zip(nominal).map(|(f, n)| n * h(dot(f, alpha))).sum::<f64>()
        }
    })
}

/// `L_j(β)`; `+∞` off the admissible set.
pub fn running_cost(b: &CostBranch, beta: &[f64]) -> Result<f64, CostError> {
    b.check_dim(beta)?;
    let c = b.constant;
    Ok(match &b.model {
        BranchModel::VelocitySet { velocities } => {
            let tol = MEMBERSHIP_TOL * (1.0 + norm_inf(beta));
            let hit = b.candidates.iter().any(|v| v.iter().zip(beta).all(|(a, x)| (a - x).abs() <= tol));
            if hit || (velocities.len() > 1 && in_convex_hull(velocities, beta)) {
                -c
            } else {
                f64::INFINITY
            }
        }
        BranchModel::RateBox { flows, boxes } => {
            let bounds: Vec<(f64, f64)> = boxes.iter().map(|b| (b[0], b[1])).collect();
            if affine_feasible(flows, &bounds, beta, false) {
                -c
            } else {
                f64::INFINITY
            }
        }
        BranchModel::RiskSensitive { flows, nominal } => -c + min_entropy_penalty(flows, nominal, beta),
    })
}

/// Is `β = Σ_k r_k f_k` solvable with `r` in the given bounds (and, with
/// `simplex`, `Σ r_k = 1`)? Decided by minimizing the ℓ¹ residual.
fn affine_feasible(flows: &[Vec<f64>], bounds: &[(f64, f64)], beta: &[f64], simplex: bool) -> bool {
    let d = beta.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let r: Vec<_> = bounds.iter().map(|b| lp.add_var(0.0, *b)).collect();
    let slack: Vec<_> = (0..d)
        .map(|_| (lp.add_var(1.0, (0.0, f64::INFINITY)), lp.add_var(1.0, (0.0, f64::INFINITY))))
        .collect();
    for i in 0..d {
        let mut expr: Vec<_> = r.iter().zip(flows).map(|(v, f)| (*v, f[i])).collect();
        expr.push((slack[i].0, 1.0));
        expr.push((slack[i].1, -1.0));
        lp.add_constraint(expr, ComparisonOp::Eq, beta[i]);
    }
    if simplex {
        lp.add_constraint(r.iter().map(|v| (*v, 1.0)), ComparisonOp::Eq, 1.0);
    }
    match lp.solve() {
        Ok(sol) => sol.objective() <= MEMBERSHIP_TOL * (1.0 + norm_inf(beta)),
        Err(_) => false,
    }
}

fn in_convex_hull(points: &[Vec<f64>], beta: &[f64]) -> bool {
    let bounds = vec![(0.0, 1.0); points.len()];
    affine_feasible(points, &bounds, beta, true)
}

/// `inf { Σ n_k ℓ(r_k/n_k) : Σ r_k f_k = β, r ≥ 0 }`, computed through the
/// concave dual `sup_p ⟨p, β⟩ − Σ n_k h(⟨f_k, p⟩)` by damped Newton.
pub fn min_entropy_penalty(flows: &[Vec<f64>], nominal: &[f64], beta: &[f64]) -> f64 {
    let bounds = vec![(0.0, f64::INFINITY); flows.len()];
    if !affine_feasible(flows, &bounds, beta, false) {
        return f64::INFINITY;
    }
    let d = beta.len();
    let dual = |p: &[f64]| -> f64 {
        dot(p, beta) - flows.iter().zip(nominal).map(|(f, n)| n * h(dot(f, p))).sum::<f64>()
    };
    let mut p = vec![0.0; d];
    let mut value = dual(&p);
    for _ in 0..NEWTON_MAX_ITER {
        let mut grad = DVector::from_column_slice(beta);
        let mut hess = DMatrix::<f64>::zeros(d, d);
        for (f, n) in flows.iter().zip(nominal) {
            let w = n * dot(f, &p).exp();
            let fv = DVector::from_column_slice(f);
            grad -= &fv * w;
            hess += &fv * fv.transpose() * w;
        }
        let step = match hess.clone().svd(true, true).solve(&grad, 1e-12 * hess.amax().max(1e-300)) {
            Ok(s) => s,
            Err(_) => break,
        };
        let decrement = grad.dot(&step);
        if !(decrement > 1e-15 * (1.0 + value.abs())) {
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let v = dual(&trial);
            if v.is_finite() && v >= value + 1e-4 * t * decrement {
                p = trial;
                value = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    value.max(0.0)
}

/// The branches `{1, …, J}` available to the minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct CostFamily {
    d: usize,
    branches: Vec<CostBranch>,
}

impl CostFamily {
    pub fn new(branches: Vec<CostBranch>) -> Result<Self, CostError> {
        let first = branches
            .first()
            .ok_or_else(|| CostError::InvalidFamily("at least one branch is required".into()))?;
        let d = first.dim();
        if let Some(b) = branches.iter().find(|b| b.dim() != d) {
            return Err(CostError::DimensionMismatch { expected: d, got: b.dim() });
        }
        Ok(Self { d, branches })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn branches(&self) -> &[CostBranch] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn has_risk_branch(&self) -> bool {
        self.branches.iter().any(|b| b.kind() == BranchKind::RiskSensitive)
    }

    /// Every branch is a hard velocity constraint with reward exactly 1, so
    /// the accumulated cost is elapsed time.
    pub fn is_min_time_family(&self) -> bool {
        self.branches
            .iter()
            .all(|b| b.kind() != BranchKind::RiskSensitive && (b.constant - 1.0).abs() < 1e-12)
    }
}

/// `H(α) = min_j H_j(α)` together with the minimizing branch (lowest index
/// on ties).
pub fn hamiltonian(f: &CostFamily, alpha: &[f64]) -> Result<(f64, usize), CostError> {
    let mut best = (f64::INFINITY, 0);
    for (j, b) in f.branches.iter().enumerate() {
        let v = hamiltonian_branch(b, alpha)?;
        if v < best.0 {
            best = (v, j);
        }
    }
    Ok(best)
}

/// Rate intervals of the four-queue network: arrival `[a, A]` and service
/// `[m_i, M_i]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBoxes {
    pub arrival: [f64; 2],
    pub service: [[f64; 2]; 4],
}

/// Closed-form Hamiltonian of the robust four-queue game:
///
/// ```text
/// c + aα₁ ∨ Aα₁ + [m₁(α₂−α₁) ∨ M₁(α₂−α₁)] ∧ [m₄(−α₄) ∨ M₄(−α₄)]
///               + [m₂(α₃−α₂) ∨ M₂(α₃−α₂)] ∧ [m₃(α₄−α₃) ∨ M₃(α₄−α₃)]
/// ```
pub fn build_example_hamiltonian_ex2(alpha: &[f64; 4], boxes: &RateBoxes, c: f64) -> f64 {
    let sup = |b: [f64; 2], x: f64| (b[0] * x).max(b[1] * x);
    let [a1, a2, a3, a4] = *alpha;
    let s = &boxes.service;
    c + sup(boxes.arrival, a1)
        + sup(s[0], a2 - a1).min(sup(s[3], -a4))
        + sup(s[1], a3 - a2).min(sup(s[2], a4 - a3))
}

/// JSON form of a cost family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostConfig {
    pub kind: BranchKind,
    #[serde(default = "default_c")]
    pub c: f64,
    pub branches: Vec<BranchConfig>,
}

fn default_c() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BranchConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocities: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flows: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal: Option<Vec<f64>>,
}

impl CostConfig {
    pub fn build(&self) -> Result<CostFamily, CostError> {
        let branches = self
            .branches
            .iter()
            .enumerate()
            .map(|(j, b)| {
                let name = b.name.clone().unwrap_or_else(|| format!("branch{}", j + 1));
                let missing = |what: &str| CostBranch::invalid(&name, format!("missing `{what}`"));
                match self.kind {
                    BranchKind::VelocitySet => {
                        CostBranch::velocity_set(name.clone(), self.c, b.velocities.clone().ok_or_else(|| missing("velocities"))?)
                    }
                    BranchKind::RateBoxRobust => CostBranch::rate_box(
                        name.clone(),
                        self.c,
                        b.flows.clone().ok_or_else(|| missing("flows"))?,
                        b.boxes.clone().ok_or_else(|| missing("boxes"))?,
                    ),
                    BranchKind::RiskSensitive => CostBranch::risk_sensitive(
                        name.clone(),
                        self.c,
                        b.flows.clone().ok_or_else(|| missing("flows"))?,
                        b.nominal.clone().ok_or_else(|| missing("nominal"))?,
                    ),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        CostFamily::new(branches)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1_velocities(lambda: f64, mu: [f64; 4]) -> Vec<Vec<f64>> {
        vec![
            vec![lambda - mu[0], mu[0] - mu[1], mu[1], 0.0],
            vec![lambda - mu[0], mu[0], -mu[2], mu[2]],
            vec![lambda, -mu[1], mu[1], -mu[3]],
            vec![lambda, 0.0, -mu[2], mu[2] - mu[3]],
        ]
    }

    fn ex1_family() -> CostFamily {
        let names = ["(1,2)", "(1,3)", "(4,2)", "(4,3)"];
        CostFamily::new(
            ex1_velocities(1.0, [2.0; 4])
                .into_iter()
                .zip(names)
                .map(|(v, n)| CostBranch::velocity_set(n, 1.0, vec![v]).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn single_risk() -> CostBranch {
        CostBranch::risk_sensitive("single", 0.05, vec![vec![1.0], vec![-1.0]], vec![0.5, 1.0]).unwrap()
    }

    #[test]
    fn ex1_branch_hamiltonians() {
        let f = ex1_family();
        let alpha = [1.0, 0.0, 0.0, 0.0];
        let hs: Vec<f64> = f.branches().iter().map(|b| hamiltonian_branch(b, &alpha).unwrap()).collect();
        assert_eq!(hs, vec![0.0, 0.0, 2.0, 2.0]);
        assert_eq!(hamiltonian(&f, &alpha).unwrap(), (0.0, 0));
        assert_eq!(hamiltonian(&f, &[0.0; 4]).unwrap().0, 1.0);
    }

    #[test]
    fn risk_hamiltonian_at_zero_is_c() {
        assert_eq!(hamiltonian_branch(&single_risk(), &[0.0]).unwrap(), 0.05);
    }

    #[test]
    fn running_cost_examples() {
        let f = ex1_family();
        let b = &f.branches()[0];
        assert_eq!(running_cost(b, &[-1.0, 0.0, 2.0, 0.0]).unwrap(), -1.0);
        assert_eq!(running_cost(b, &[0.0; 4]).unwrap(), f64::INFINITY);
        let r = running_cost(&single_risk(), &[-0.5]).unwrap();
        assert!((r + 0.05).abs() < 1e-12, "{r}");
    }

    #[test]
    fn risk_running_cost_matches_closed_form() {
        // λ − μ = β with λ = λ̄y, μ = μ̄/y and λ̄y² − βy − μ̄ = 0.
        let b = single_risk();
        for beta in [-2.0, -0.9, -0.5, -0.1, 0.0, 0.3, 1.5] {
            let y: f64 = (beta + (beta * beta + 4.0 * 0.5 * 1.0_f64).sqrt()) / (2.0 * 0.5);
            let exact = -0.05 + 0.5 * ell(y) + 1.0 * ell(1.0 / y);
            let got = running_cost(&b, &[beta]).unwrap();
            assert!((got - exact).abs() < 1e-9, "β={beta}: {got} vs {exact}");
        }
    }

    #[test]
    fn risk_running_cost_outside_cone_is_infinite() {
        let b = CostBranch::risk_sensitive("up", 0.1, vec![vec![1.0, 0.0]], vec![1.0]).unwrap();
        assert_eq!(running_cost(&b, &[-1.0, 0.0]).unwrap(), f64::INFINITY);
        assert_eq!(running_cost(&b, &[1.0, 1.0]).unwrap(), f64::INFINITY);
        assert!((running_cost(&b, &[2.0, 0.0]).unwrap() - (-0.1 + ell(2.0))).abs() < 1e-10);
    }

    #[test]
    fn rate_box_membership() {
        let b = CostBranch::rate_box("q", 1.0, vec![vec![1.0], vec![-1.0]], vec![[0.4, 0.6], [0.9, 1.1]]).unwrap();
        assert_eq!(b.velocity_candidates().len(), 4);
        assert_eq!(running_cost(&b, &[-0.3]).unwrap(), -1.0);
        assert_eq!(running_cost(&b, &[-0.7]).unwrap(), -1.0);
        assert_eq!(running_cost(&b, &[-0.2]).unwrap(), f64::INFINITY);
        assert!((hamiltonian_branch(&b, &[2.0]).unwrap() - (1.0 + 2.0 * -0.3)).abs() < 1e-15);
    }

    #[test]
    fn velocity_hull_membership() {
        let b = CostBranch::velocity_set("hull", 1.0, vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(running_cost(&b, &[0.25, 0.25]).unwrap(), -1.0);
        assert_eq!(running_cost(&b, &[0.75, 0.75]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let f = ex1_family();
        assert_eq!(
            hamiltonian(&f, &[1.0]),
            Err(CostError::DimensionMismatch { expected: 4, got: 1 })
        );
    }

    #[test]
    fn ex2_closed_form_at_zero() {
        let boxes = RateBoxes { arrival: [0.5, 1.0], service: [[1.0, 2.0]; 4] };
        assert_eq!(build_example_hamiltonian_ex2(&[0.0; 4], &boxes, 0.7), 0.7);
    }

    #[test]
    fn rate_grid_candidates_cover_nominal_penalty() {
        let grid = RateGrid { points_per_axis: 3, lower: 0.5, upper_factor: 1.0 };
        let cands = single_risk().candidates(&grid);
        assert_eq!(cands.len(), 9);
        // λ axis: 0.5 only hits the nominal at the first point
        let nominal = cands.iter().find(|c| c.rates.as_deref() == Some(&[0.5, 1.0][..])).unwrap();
        assert!((nominal.reward - 0.05).abs() < 1e-15);
        assert_eq!(nominal.velocity, vec![-0.5]);
    }

    #[test]
    fn cost_config_round_trip() {
        let json = r#"{"kind":"rate_box_robust","c":1.0,"branches":[{"name":"q","flows":[[1.0],[-1.0]],"boxes":[[0.4,0.6],[0.9,1.1]]}]}"#;
        let cfg: CostConfig = serde_json::from_str(json).unwrap();
        let f = cfg.build().unwrap();
        assert_eq!(f.len(), 1);
        assert!(f.is_min_time_family());
        let missing = r#"{"kind":"risk_sensitive","c":0.1,"branches":[{"flows":[[1.0]]}]}"#;
        let cfg: CostConfig = serde_json::from_str(missing).unwrap();
        assert!(matches!(cfg.build(), Err(CostError::InvalidBranch { .. })));
    }
}
