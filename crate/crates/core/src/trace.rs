//! Space-time fields on `(0, T) x Σ`, sampled at the time grid and at the
//! interior interface nodes (canonical order, two interleaved components).

use crate::error::{FsiError, Result};
use crate::mesh::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceRole {
    /// Nodal displacement values.
    Displacement,
    /// Load (dual) vectors: entry `i` is the pairing with the basis function of node `i`.
    TractionLoad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSeries {
    pub role: TraceRole,
    pub n_nodes: usize,
    /// `steps[n][2 * i + c]` is component `c` at node `i`, time `t_n`.
    pub steps: Vec<Vec<f64>>,
}

impl TraceSeries {
    pub fn zeros(role: TraceRole, n_times: usize, n_nodes: usize) -> Self {
        TraceSeries { role, n_nodes, steps: vec![vec![0.0; 2 * n_nodes]; n_times] }
    }

    pub fn from_fn(
        role: TraceRole,
        grid: &TimeGrid,
        n_nodes: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 2],
    ) -> Self {
        let steps = (0..=grid.n_steps)
            .map(|n| (0..n_nodes).flat_map(|i| f(n, i)).collect())
            .collect();
        TraceSeries { role, n_nodes, steps }
    }

    pub fn n_times(&self) -> usize {
        self.steps.len()
    }

    pub fn check_shape(&self, grid: &TimeGrid, n_nodes: usize) -> Result<()> {
        if self.steps.len() != grid.n_steps + 1 || self.n_nodes != n_nodes {
            return Err(FsiError::Shape(format!(
                "trace has {} times x {} nodes, expected {} x {n_nodes}",
                self.steps.len(),
                self.n_nodes,
                grid.n_steps + 1
            )));
        }
        if self.steps.iter().any(|s| s.len() != 2 * n_nodes) {
            return Err(FsiError::Shape("ragged trace series".into()));
        }
        Ok(())
    }

    /// Component `c` of step `n` as a nodal vector.
    pub fn component(&self, n: usize, c: usize) -> Vec<f64> {
        self.steps[n].iter().skip(c).step_by(2).copied().collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|x| s * x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        TraceSeries {
            role: self.role,
            n_nodes: self.n_nodes,
            steps: self.steps.iter().map(|s| s.iter().map(|&x| f(x)).collect()).collect(),
        }
    }

    /// `a * self + b * other`
    pub fn lin_comb(&self, a: f64, other: &TraceSeries, b: f64) -> Self {
        assert_eq!(self.steps.len(), other.steps.len());
        TraceSeries {
            role: self.role,
            n_nodes: self.n_nodes,
            steps: self
                .steps
                .iter()
                .zip(&other.steps)
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect())
                .collect(),
        }
    }

    pub fn sub(&self, other: &TraceSeries) -> Self {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.steps.iter().flatten().fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.steps.iter().flatten().all(|x| x.is_finite())
    }
}

/// Trapezoidal time integration of a velocity trace, starting from zero.
pub fn trapezoid_accumulate(grid: &TimeGrid, velocity: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dt = grid.dt();
    let mut out = Vec::with_capacity(velocity.len());
    let mut acc = vec![0.0; velocity.first().map_or(0, Vec::len)];
    out.push(acc.clone());
    for w in velocity.windows(2) {
        for ((a, p), q) in acc.iter_mut().zip(&w[0]).zip(&w[1]) {
            *a += 0.5 * dt * (p + q);
        }
        out.push(acc.clone());
    }
    out
}
