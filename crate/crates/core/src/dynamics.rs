//! Reflected paths: the Skorokhod map on sampled inputs and the constrained
//! ODE `φ̇ = π(φ, β)` driven by piecewise-constant controls.
//!
//! Both are discretized by projected Euler steps, `φ_{k+1} = π(φ_k + Δψ_k)`,
//! so the ODE with control `β` coincides with the Skorokhod map applied to
//! `ψ(t) = x + ∫₀ᵗ β`.

use std::io::{Read, Write};

use thiserror::Error;

use crate::geometry::{check_completely_s, ConstraintGeometry, GeometryError};
use crate::linalg::{norm1, norm2};

/// `‖φ‖₁` at or below this value counts as having reached the origin.
pub const ABSORPTION_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("geometry fails the completely-S condition")]
    GeometryUnverified,
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid control: {0}")]
    InvalidControl(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A time-stamped sequence of points in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    times: Vec<f64>,
    points: Vec<Vec<f64>>,
}

impl SampledPath {
    pub fn new(times: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self, DynamicsError> {
        if times.len() != points.len() {
            return Err(DynamicsError::InvalidPath(format!(
                "{} times but {} points",
                times.len(),
                points.len()
            )));
        }
        if times.is_empty() {
            return Err(DynamicsError::InvalidPath("need at least one sample".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DynamicsError::InvalidPath("times must be strictly increasing".into()));
        }
        let d = points[0].len();
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(DynamicsError::InvalidPath("inconsistent point dimension".into()));
        }
        if points.iter().flatten().chain(&times).any(|v| !v.is_finite()) {
            return Err(DynamicsError::InvalidPath("non-finite sample".into()));
        }
        Ok(Self { times, points })
    }

    /// Samples `f` at `n + 1` evenly spaced times on `[t0, t1]`.
    pub fn from_fn(t0: f64, t1: f64, n: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self, DynamicsError> {
        let times: Vec<f64> = (0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect();
        let points = times.iter().map(|&t| f(t)).collect();
        Self::new(times, points)
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Linear interpolation, constant outside the sampled range.
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        if t <= self.times[0] {
            return self.points[0].clone();
        }
        let last = self.times.len() - 1;
        if t >= self.times[last] {
            return self.points[last].clone();
        }
        let k = self.times.partition_point(|s| *s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        self.points[k]
            .iter()
            .zip(&self.points[k + 1])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// Splits every segment into `substeps` equal pieces.
    pub fn refine(&self, substeps: usize) -> Self {
        let substeps = substeps.max(1);
        let mut times = Vec::with_capacity((self.len() - 1) * substeps + 1);
        let mut points = Vec::with_capacity(times.capacity());
        for k in 0..self.len() - 1 {
            let (t0, t1) = (self.times[k], self.times[k + 1]);
            for s in 0..substeps {
                let w = s as f64 / substeps as f64;
                times.push(t0 + w * (t1 - t0));
                points.push(
                    self.points[k]
                        .iter()
                        .zip(&self.points[k + 1])
                        .map(|(a, b)| a + w * (b - a))
                        .collect(),
                );
            }
        }
        times.push(*self.times.last().unwrap());
        points.push(self.points.last().unwrap().clone());
        Self { times, points }
    }

    /// Writes `t,x1,...,xd` rows; floats use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DynamicsError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for (t, p) in self.times.iter().zip(&self.points) {
            let mut row = vec![t.to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, DynamicsError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.get(0) != Some("t") || header.len() < 2 {
            return Err(DynamicsError::InvalidPath("expected header t,x1,...,xd".into()));
        }
        let mut times = Vec::new();
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| DynamicsError::InvalidPath(format!("bad number {s:?}: {e}")))
            };
            times.push(parse(&rec[0])?);
            points.push(rec.iter().skip(1).map(parse).collect::<Result<Vec<_>, _>>()?);
        }
        Self::new(times, points)
    }
}

/// Output of the Skorokhod map: constrained path, pushing term and its
/// total variation, all on the refined time mesh.
#[derive(Debug, Clone)]
pub struct SkorokhodSolution {
    pub phi: SampledPath,
    pub eta: SampledPath,
    pub total_variation: Vec<f64>,
    /// Per-step face multipliers `a`; the increment of `η` on step `k` is
    /// `Γ a_k`.
    pub pushes: Vec<Vec<f64>>,
    pub degenerate_steps: usize,
}

/// Projected-Euler Skorokhod map.
pub fn skorokhod_map(
    g: &ConstraintGeometry,
    psi: &SampledPath,
    substeps: usize,
) -> Result<SkorokhodSolution, DynamicsError> {
    if psi.dim() != g.dim() {
        return Err(GeometryError::DimensionMismatch { expected: g.dim(), got: psi.dim() }.into());
    }
    if !check_completely_s(g)? {
        return Err(DynamicsError::GeometryUnverified);
    }
    if let Some(v) = psi.points[0].iter().find(|v| **v < 0.0) {
        return Err(DynamicsError::InvalidPath(format!("input must start in the orthant, found {v}")));
    }
    let fine = psi.refine(substeps);
    let n = fine.len();
    let d = g.dim();

    let mut phi = Vec::with_capacity(n);
    let mut eta = Vec::with_capacity(n);
    let mut tv = Vec::with_capacity(n);
    let mut pushes = Vec::with_capacity(n - 1);
    let mut degenerate_steps = 0;
    phi.push(fine.points[0].clone());
    eta.push(vec![0.0; d]);
    tv.push(0.0);

    for k in 0..n - 1 {
        let step: Vec<f64> = phi[k]
            .iter()
            .zip(fine.points[k + 1].iter().zip(&fine.points[k]))
            .map(|(p, (b, a))| p + (b - a))
            .collect();
        let proj = g.project(&step)?;
        if proj.degenerate {
            degenerate_steps += 1;
        }
        let push = g.apply(&proj.a);
        let e: Vec<f64> = eta[k].iter().zip(&push).map(|(a, b)| a + b).collect();
        tv.push(tv[k] + norm2(&push));
        eta.push(e);
        phi.push(proj.z);
        pushes.push(proj.a);
    }

    Ok(SkorokhodSolution {
        phi: SampledPath { times: fine.times.clone(), points: phi },
        eta: SampledPath { times: fine.times, points: eta },
        total_variation: tv,
        pushes,
        degenerate_steps,
    })
}

/// Right-continuous piecewise-constant function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant<T> {
    breakpoints: Vec<f64>,
    values: Vec<T>,
}

impl<T: Clone> PiecewiseConstant<T> {
    /// `values[i]` holds on `[breakpoints[i], breakpoints[i + 1])`; the last
    /// value extends indefinitely and the first also covers earlier times.
    pub fn new(breakpoints: Vec<f64>, values: Vec<T>) -> Result<Self, DynamicsError> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(DynamicsError::InvalidControl(
                "need one value per breakpoint and at least one piece".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DynamicsError::InvalidControl("breakpoints must increase".into()));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(value: T) -> Self {
        Self { breakpoints: vec![0.0], values: vec![value] }
    }

    pub fn at(&self, t: f64) -> &T {
        let k = self.breakpoints.partition_point(|s| *s <= t);
        &self.values[k.saturating_sub(1)]
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Constrained trajectory plus the first time it reached the origin.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub path: SampledPath,
    pub hit_time: Option<f64>,
}

/// Explicit projected Euler for `φ̇ = π(φ, β)` on `[0, t1]`.
///
/// The mesh is `t_k = k·dt`, with a shorter final step when `t1` is not a
/// multiple of `dt`.
pub fn integrate_ode(
    g: &ConstraintGeometry,
    x0: &[f64],
    beta: &PiecewiseConstant<Vec<f64>>,
    t1: f64,
    dt: f64,
) -> Result<OdeSolution, DynamicsError> {
    if !(dt > 0.0) || !(t1 > 0.0) {
        return Err(DynamicsError::InvalidControl("dt and t1 must be positive".into()));
    }
    if x0.len() != g.dim() {
        return Err(GeometryError::DimensionMismatch { expected: g.dim(), got: x0.len() }.into());
    }
    if let Some((index, value)) = x0.iter().copied().enumerate().find(|(_, v)| *v < 0.0) {
        return Err(GeometryError::NotInOrthant { index, value }.into());
    }
    if beta.values().iter().any(|v| v.len() != g.dim()) {
        return Err(DynamicsError::InvalidControl("velocity dimension mismatch".into()));
    }
    let full_steps = ((t1 / dt) * (1.0 + 1e-12)).floor() as usize;
    let mut times: Vec<f64> = (0..=full_steps).map(|k| k as f64 * dt).collect();
    if t1 - times[full_steps] > 1e-12 * t1 {
        times.push(t1);
    }

    let mut points = Vec::with_capacity(times.len());
    points.push(x0.to_vec());
    let mut hit_time = (norm1(x0) <= ABSORPTION_TOL).then_some(0.0);
    for k in 0..times.len() - 1 {
        let h = times[k + 1] - times[k];
        let v = beta.at(times[k]);
        let step: Vec<f64> = points[k].iter().zip(v).map(|(x, b)| x + h * b).collect();
        let z = g.project(&step)?.z;
        if hit_time.is_none() && norm1(&z) <= ABSORPTION_TOL {
            hit_time = Some(times[k + 1]);
        }
        points.push(z);
    }
    Ok(OdeSolution { path: SampledPath::new(times, points)?, hit_time })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tandem2() -> ConstraintGeometry {
        ConstraintGeometry::tandem(2)
    }

    #[test]
    fn one_dimensional_reflection() {
        let g = ConstraintGeometry::identity(1);
        let psi = SampledPath::new(vec![0.0, 1.0], vec![vec![1.0], vec![-1.0]]).unwrap();
        let sol = skorokhod_map(&g, &psi, 1000).unwrap();
        for (t, p) in sol.phi.times().iter().zip(sol.phi.points()) {
            let exact = (1.0 - 2.0 * t).max(0.0);
            assert!((p[0] - exact).abs() <= 4e-3);
        }
        assert!((sol.total_variation.last().unwrap() - 1.0).abs() <= 4e-3);
    }

    #[test]
    fn interior_paths_are_untouched() {
        let g = tandem2();
        let psi = SampledPath::from_fn(0.0, 1.0, 7, |t| vec![1.0 + t, 2.0 - t]).unwrap();
        let sol = skorokhod_map(&g, &psi, 10).unwrap();
        let fine = psi.refine(10);
        assert_eq!(sol.phi.points(), fine.points());
        assert!(sol.eta.points().iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn tandem_face_push_drains_second_queue() {
        let g = tandem2();
        let psi = SampledPath::new(vec![0.0, 1.0], vec![vec![0.5, 0.5], vec![-0.5, 0.5]]).unwrap();
        let sol = skorokhod_map(&g, &psi, 1000).unwrap();
        let at = sol.phi.value_at(0.75);
        assert!(at[0].abs() <= 4e-3 && (at[1] - 0.25).abs() <= 4e-3, "{at:?}");
    }

    #[test]
    fn skorokhod_rejects_input_outside_orthant() {
        let g = tandem2();
        let psi = SampledPath::new(vec![0.0, 1.0], vec![vec![-0.1, 0.5], vec![0.0, 0.5]]).unwrap();
        assert!(matches!(skorokhod_map(&g, &psi, 5), Err(DynamicsError::InvalidPath(_))));
    }

    #[test]
    fn ode_examples() {
        let g = tandem2();
        let straight = integrate_ode(&g, &[1.0, 1.0], &PiecewiseConstant::constant(vec![0.5, -0.25]), 0.5, 0.01)
            .unwrap();
        let end = straight.path.points().last().unwrap();
        assert!((end[0] - 1.25).abs() < 1e-12 && (end[1] - 0.875).abs() < 1e-12);
        assert_eq!(straight.hit_time, None);

        let g1 = ConstraintGeometry::identity(1);
        let stuck = integrate_ode(&g1, &[0.0], &PiecewiseConstant::constant(vec![-1.0]), 1.0, 0.1).unwrap();
        assert!(stuck.path.points().iter().all(|p| p[0] == 0.0));
        assert_eq!(stuck.hit_time, Some(0.0));

        let serve = integrate_ode(&g, &[1.0, 0.0], &PiecewiseConstant::constant(vec![-1.0, 1.0]), 2.0, 1e-3)
            .unwrap();
        let p1 = serve.path.value_at(1.0);
        let p2 = serve.path.value_at(2.0);
        assert!(p1[0].abs() <= 2e-3 && (p1[1] - 1.0).abs() <= 2e-3, "{p1:?}");
        assert!(p2[0].abs() <= 2e-3 && (p2[1] - 1.0).abs() <= 2e-3, "{p2:?}");
    }

    #[test]
    fn piecewise_constant_lookup() {
        let c = PiecewiseConstant::new(vec![0.0, 0.5], vec![1, 2]).unwrap();
        assert_eq!(*c.at(-1.0), 1);
        assert_eq!(*c.at(0.49), 1);
        assert_eq!(*c.at(0.5), 2);
        assert!(PiecewiseConstant::new(vec![0.0, 0.0], vec![1, 2]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let p = SampledPath::new(vec![0.0, 0.1, 1.0 / 3.0], vec![vec![1e-17, 2.5], vec![0.3, -7.0], vec![1.0 / 7.0, 0.0]])
            .unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x1,x2\n"));
        assert_eq!(SampledPath::read_csv(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn path_validation() {
        assert!(SampledPath::new(vec![], vec![]).is_err());
        assert_eq!(SampledPath::new(vec![0.0], vec![vec![1.0]]).unwrap().value_at(3.0), vec![1.0]);
        assert!(SampledPath::new(vec![0.0, 0.0], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(SampledPath::new(vec![0.0, 1.0], vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
