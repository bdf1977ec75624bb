//! Trading time grids.

use alloc::vec::Vec;

use crate::error::{invalid, Result};

/// Ordered trading times `t_0 = 0 < t_1 < ... < t_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    /// Builds a grid from explicit times. The first time must be zero and
    /// the sequence strictly increasing with at least two points.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(invalid!("a time grid needs at least two points, got {}", points.len()));
        }
        if points[0] != 0.0 {
            return Err(invalid!("time grid must start at 0, got {}", points[0]));
        }
        if let Some(bad) = points.iter().find(|t| !t.is_finite()) {
            return Err(invalid!("time grid contains a non-finite point {bad}"));
        }
        if let Some(k) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(invalid!(
                "time grid must be strictly increasing (t_{} = {} >= t_{} = {})",
                k,
                points[k],
                k + 1,
                points[k + 1]
            ));
        }
        Ok(Self { points })
    }

    /// Equidistant grid `{kT/N : k = 0..N}`.
    pub fn equidistant(steps: usize, horizon: f64) -> Result<Self> {
        if steps == 0 {
            return Err(invalid!("number of grid steps must be positive"));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(invalid!("grid horizon must be positive and finite, got {horizon}"));
        }
        let n = steps as f64;
        let points = (0..=steps).map(|k| k as f64 * horizon / n).collect();
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of trading times, `N + 1`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of intervals `N`.
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    /// Last trading time `t_N`.
    pub fn horizon(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn is_equidistant(&self, rel_tol: f64) -> bool {
        let h = self.horizon() / self.steps() as f64;
        self.points
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= rel_tol * h)
    }
}

/// Equidistant grid with `n` intervals on `[0, span]`.
pub fn make_equidistant_grid(n: usize, span: f64) -> Result<TimeGrid> {
    TimeGrid::equidistant(n, span)
}
