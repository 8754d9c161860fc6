//! Queueing networks as (geometry, cost family) pairs: a single queue, a
//! single-class tandem line and the four-queue, two-server network where
//! server A works on queue 1 or 4 and server B on queue 2 or 3.
//!
//! Every rate drives an affine flow: arrivals add `e_1`, service at queue
//! `i` moves work to the next queue (`e_{i+1} − e_i`) or out of the network
//! (`−e_i` at the last queue).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::{CostBranch, CostError, CostFamily};
use crate::geometry::{check_completely_s, check_linear_independence, contraction_proxy, ConstraintGeometry, GeometryError};

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("invalid network: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    Single,
    Tandem { stations: usize },
    LuKumar,
}

impl Topology {
    pub fn dim(&self) -> usize {
        match self {
            Topology::Single => 1,
            Topology::Tandem { stations } => *stations,
            Topology::LuKumar => 4,
        }
    }
}

/// Which cost model the branches use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Known rates: one velocity per branch.
    Fixed,
    /// Rates anywhere in their boxes, chosen by the maximizer.
    Robust,
    /// Nominal rates with entropy-penalized perturbations.
    Risk,
}

/// A rate given as a number or as an interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rate {
    Value(f64),
    Interval([f64; 2]),
}

impl Rate {
    fn interval(&self) -> [f64; 2] {
        match *self {
            Rate::Value(v) => [v, v],
            Rate::Interval(b) => b,
        }
    }
}

/// Top-level description of a network and its game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub topology: Topology,
    pub mode: Mode,
    pub arrival: Rate,
    /// One service rate per queue.
    pub service: Vec<Rate>,
    #[serde(default = "default_c")]
    pub c: f64,
}

fn default_c() -> f64 {
    1.0
}

/// A served queue and the flow it induces.
fn service_flow(d: usize, queue: usize) -> Vec<f64> {
    let mut f = vec![0.0; d];
    f[queue] = -1.0;
    if queue + 1 < d {
        f[queue + 1] = 1.0;
    }
    f
}

fn arrival_flow(d: usize) -> Vec<f64> {
    let mut f = vec![0.0; d];
    f[0] = 1.0;
    f
}

/// Assignments `(server A queue, server B queue)`, 1-based as in the usual
/// labeling: `(1,2), (1,3), (4,2), (4,3)`.
pub const LU_KUMAR_ASSIGNMENTS: [(usize, usize); 4] = [(1, 2), (1, 3), (4, 2), (4, 3)];

impl NetworkSpec {
    pub fn validate(&self) -> Result<(), PresetError> {
        let bad = |m: String| Err(PresetError::InvalidSpec(m));
        let d = self.topology.dim();
        if d == 0 {
            return bad("a tandem line needs at least one station".into());
        }
        if self.service.len() != d {
            return bad(format!("expected {d} service rates, got {}", self.service.len()));
        }
        if !self.c.is_finite() {
            return bad(format!("c must be finite, got {}", self.c));
        }
        for (name, r) in std::iter::once(("arrival".to_string(), &self.arrival))
            .chain(self.service.iter().enumerate().map(|(i, r)| (format!("service {}", i + 1), r)))
        {
            let [lo, hi] = r.interval();
            if !(lo > 0.0 && lo.is_finite() && hi.is_finite()) {
                return bad(format!("{name} rate must be positive, got {r:?}"));
            }
            if lo > hi {
                return bad(format!("{name} interval has lower end above upper end: {r:?}"));
            }
            if matches!(r, Rate::Interval(_)) && self.mode != Mode::Robust {
                return bad(format!("{name}: intervals are only meaningful in robust mode"));
            }
        }
        Ok(())
    }

    /// `(name, active flows, active rate indices)` per branch; rate index 0
    /// is the arrival rate and `i ≥ 1` the service rate of queue `i`.
    fn branch_layout(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.topology.dim();
        match self.topology {
            Topology::Single | Topology::Tandem { .. } => vec![("all".to_string(), (0..=d).collect())],
            Topology::LuKumar => LU_KUMAR_ASSIGNMENTS
                .iter()
                .map(|&(a, b)| (format!("({a},{b})"), vec![0, a, b]))
                .collect(),
        }
    }

    fn flow(&self, rate: usize) -> Vec<f64> {
        let d = self.topology.dim();
        if rate == 0 {
            arrival_flow(d)
        } else {
            service_flow(d, rate - 1)
        }
    }

    fn rate(&self, rate: usize) -> Rate {
        if rate == 0 {
            self.arrival
        } else {
            self.service[rate - 1]
        }
    }

    pub fn geometry(&self) -> ConstraintGeometry {
        ConstraintGeometry::tandem(self.topology.dim())
    }

    pub fn costs(&self) -> Result<CostFamily, PresetError> {
        self.validate()?;
        let branches = self
            .branch_layout()
            .into_iter()
            .map(|(name, rates)| {
                let flows: Vec<Vec<f64>> = rates.iter().map(|r| self.flow(*r)).collect();
                match self.mode {
                    Mode::Fixed => {
                        let d = self.topology.dim();
                        let mut v = vec![0.0; d];
                        for (r, f) in rates.iter().zip(&flows) {
                            let mu = self.rate(*r).interval()[0];
                            v.iter_mut().zip(f).for_each(|(vi, fi)| *vi += mu * fi);
                        }
                        CostBranch::velocity_set(name, self.c, vec![v])
                    }
                    Mode::Robust => {
                        let boxes = rates.iter().map(|r| self.rate(*r).interval()).collect();
                        CostBranch::rate_box(name, self.c, flows, boxes)
                    }
                    Mode::Risk => {
                        let nominal = rates.iter().map(|r| self.rate(*r).interval()[0]).collect();
                        CostBranch::risk_sensitive(name, self.c, flows, nominal)
                    }
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CostFamily::new(branches)?)
    }
}

/// Builds the reflection geometry and cost family of a network.
pub fn build(spec: &NetworkSpec) -> Result<(ConstraintGeometry, CostFamily), PresetError> {
    Ok((spec.geometry(), spec.costs()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// A sufficient test that did not certify the property.
    Inconclusive,
}

/// Outcome of the three geometry checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub d: usize,
    pub independent: CheckStatus,
    pub completely_s: CheckStatus,
    pub contraction_proxy: CheckStatus,
    pub spectral_radius_estimate: f64,
}

impl GeometryReport {
    /// Completely-S holds; the solvers refuse geometries without it.
    pub fn usable(&self) -> bool {
        self.completely_s == CheckStatus::Pass
    }
}

fn status(ok: bool) -> CheckStatus {
    if ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

pub fn verify_geometry(g: &ConstraintGeometry) -> Result<GeometryReport, GeometryError> {
    let proxy = contraction_proxy(g);
    Ok(GeometryReport {
        d: g.dim(),
        independent: status(check_linear_independence(g)),
        completely_s: status(check_completely_s(g)?),
        contraction_proxy: if proxy.verified { CheckStatus::Pass } else { CheckStatus::Inconclusive },
        spectral_radius_estimate: proxy.spectral_radius_estimate,
    })
}

pub fn verify_preset_geometry(spec: &NetworkSpec) -> Result<GeometryReport, PresetError> {
    spec.validate()?;
    Ok(verify_geometry(&spec.geometry())?)
}
