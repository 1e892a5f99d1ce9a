//! Uniform time grid on `[0, T]` and sampled paths on that grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_i = i * T / N` for `i = 0..=N`.
///
/// `T = 0` is allowed as a degenerate grid (all nodes at zero, empty
/// integrals); every other constructor input must be finite and positive
/// where required.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !t_end.is_finite() || t_end < 0.0 {
            return Err(Error::InvalidInput(format!(
                "horizon must be finite and >= 0, got {t_end}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidInput("grid needs at least one step".into()));
        }
        Ok(Self { t_end, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.t_end
    }

    /// Number of steps `N`; the grid has `N + 1` nodes.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n_nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    /// Node `t_i`, exact at both endpoints.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.steps);
        if i == self.steps {
            self.t_end
        } else {
            self.t_end * i as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |i| self.node(i))
    }
}

/// A real-valued function sampled at the nodes of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Path {
    /// Wraps node values; the length must be `N + 1` and every entry finite.
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "expected {} node values, got {}",
                grid.n_nodes(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "path construction",
                node: i,
                t: grid.node(i),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.n_nodes()],
        }
    }

    /// Samples `f(t_i)` at every node.
    pub fn sample(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: grid.nodes().map(f).collect(),
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("grid has at least two nodes")
    }

    /// Largest absolute node value.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest absolute node-wise difference against another path.
    pub fn sup_distance(&self, other: &Path) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Node-wise map, same grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Path {
        Path {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Node-wise combination of two paths on the same grid.
    pub fn zip_with(&self, other: &Path, f: impl Fn(f64, f64) -> f64) -> Result<Path> {
        self.check_same_grid(other)?;
        Ok(Path {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_same_grid(&self, other: &Path) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "paths on different grids: (T = {}, N = {}) vs (T = {}, N = {})",
                self.grid.t_end, self.grid.steps, other.grid.t_end, other.grid.steps
            )));
        }
        Ok(())
    }

    /// Linear interpolation between nodes; clamped outside `[0, T]`.
    /// Exact at the nodes.
    pub fn interpolate(&self, t: f64) -> f64 {
        let n = self.grid.steps;
        if self.grid.t_end == 0.0 {
            return self.values[0];
        }
        let u = t / self.grid.dt();
        if u <= 0.0 {
            return self.values[0];
        }
        if u >= n as f64 {
            return self.values[n];
        }
        let i = u.floor() as usize;
        let theta = u - i as f64;
        self.values[i] + theta * (self.values[i + 1] - self.values[i])
    }
}
