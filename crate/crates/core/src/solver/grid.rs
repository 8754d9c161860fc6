use serde::{Deserialize, Serialize};

use super::SolverError;

/// Default cap on the number of grid nodes.
pub const DEFAULT_NODE_BUDGET: usize = 2_000_000;

/// Uniform tensor grid on the truncated orthant `[0, x_max]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthantGrid {
    pub d: usize,
    pub x_max: f64,
    /// Nodes per axis.
    pub n: usize,
}

/// Multilinear interpolation weights for one evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub entries: Vec<(u32, f64)>,
    /// The point lay beyond `x_max` on some axis and was clamped.
    pub clamped: bool,
}

impl OrthantGrid {
    pub fn new(d: usize, x_max: f64, n: usize) -> Result<Self, SolverError> {
        if d == 0 {
            return Err(SolverError::InvalidGrid("dimension must be at least 1".into()));
        }
        if n < 3 {
            return Err(SolverError::InvalidGrid(format!("need at least 3 nodes per axis, got {n}")));
        }
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(SolverError::InvalidGrid(format!("x_max must be positive, got {x_max}")));
        }
        Ok(Self { d, x_max, n })
    }

    pub fn check_budget(&self, budget: usize) -> Result<(), SolverError> {
        let total = (self.n as f64).powi(self.d as i32);
        if total > budget as f64 {
            return Err(SolverError::GridBudgetExceeded { nodes: total as u128, budget });
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.x_max / (self.n - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Axis indices of a node; axis 0 varies fastest.
    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.d);
        for _ in 0..self.d {
            out.push(idx % self.n);
            idx /= self.n;
        }
        out
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().rev().fold(0, |acc, i| acc * self.n + i)
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.x_max
        } else {
            i as f64 * self.spacing()
        }
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).into_iter().map(|i| self.coordinate(i)).collect()
    }

    /// Node index offset by `delta` along `axis`, if it stays on the grid.
    pub fn neighbor(&self, idx: usize, axis: usize, delta: isize) -> Option<usize> {
        let stride = self.n.pow(axis as u32);
        let i = (idx / stride) % self.n;
        let j = i as isize + delta;
        (0..self.n as isize).contains(&j).then(|| (idx as isize + delta * stride as isize) as usize)
    }

    /// Multilinear weights at `x`, with constant extrapolation beyond
    /// `x_max` (and below 0, which projected points never reach).
    pub fn stencil(&self, x: &[f64]) -> Stencil {
        debug_assert_eq!(x.len(), self.d);
        let h = self.spacing();
        let mut clamped = false;
        let mut axes: Vec<[(usize, f64); 2]> = Vec::with_capacity(self.d);
        for &xi in x {
            if xi > self.x_max * (1.0 + 1e-12) {
                clamped = true;
            }
            let y = xi.clamp(0.0, self.x_max);
            let s = y / h;
            let mut j = s.floor() as usize;
            if j > self.n - 2 {
                j = self.n - 2;
            }
            let mut frac = (s - j as f64).clamp(0.0, 1.0);
            if frac < 1e-12 {
                frac = 0.0;
            } else if frac > 1.0 - 1e-12 {
                frac = 1.0;
            }
            axes.push([(j, 1.0 - frac), (j + 1, frac)]);
        }
        let mut entries: Vec<(u32, f64)> = vec![(0, 1.0)];
        let mut stride = 1usize;
        for pair in &axes {
            let mut next = Vec::with_capacity(entries.len() * 2);
            for &(base, w) in &entries {
                for &(j, wj) in pair {
                    if wj > 0.0 {
                        next.push((base + (j * stride) as u32, w * wj));
                    }
                }
            }
            entries = next;
            stride *= self.n;
        }
        Stencil { entries, clamped }
    }

    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        self.stencil(x).entries.iter().map(|(i, w)| w * values[*i as usize]).sum()
    }
}
