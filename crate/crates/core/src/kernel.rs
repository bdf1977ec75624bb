//! Decay kernels `G(t)` describing how the price impact of a trade fades.

use crate::error::{invalid, GameError, Result};
use crate::grid::TimeGrid;

/// Functional form of the kernel before scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelShape {
    /// `exp(-rate * t)`
    Exponential { rate: f64 },
    /// `(t + offset)^(-alpha)`; the offset keeps `G(0)` finite.
    PowerLaw { alpha: f64, offset: f64 },
}

/// A decay kernel `G(t) = scale * shape(t)`.
///
/// The scale carries uniform multipliers such as the `J^-beta` crowding
/// factor or the eigenvalue of a virtual asset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayKernel {
    shape: KernelShape,
    scale: f64,
}

impl DecayKernel {
    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(invalid!("exponential kernel rate must be positive, got {rate}"));
        }
        Ok(Self { shape: KernelShape::Exponential { rate }, scale: 1.0 })
    }

    pub fn power_law(alpha: f64, offset: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(invalid!("power-law exponent must be positive, got {alpha}"));
        }
        if !(offset > 0.0) || !offset.is_finite() {
            return Err(invalid!("power-law offset must be positive, got {offset}"));
        }
        Ok(Self { shape: KernelShape::PowerLaw { alpha, offset }, scale: 1.0 })
    }

    /// Multiplies the current scale by `factor`.
    pub fn scaled(self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(invalid!("kernel scale factor must be positive, got {factor}"));
        }
        Ok(Self { shape: self.shape, scale: self.scale * factor })
    }

    /// Applies the crowding factor `agents^-beta`.
    pub fn crowding_scaled(self, agents: usize, beta: f64) -> Result<Self> {
        if agents == 0 {
            return Err(invalid!("agent count must be positive"));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(invalid!("impact scaling exponent must be nonnegative, got {beta}"));
        }
        self.scaled(crowding_factor(agents, beta))
    }

    pub fn shape(&self) -> KernelShape {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `G(|t|)`.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.abs();
        let base = match self.shape {
            KernelShape::Exponential { rate } => libm::exp(-rate * t),
            KernelShape::PowerLaw { alpha, offset } => libm::pow(t + offset, -alpha),
        };
        self.scale * base
    }

    pub fn at_zero(&self) -> f64 {
        self.eval(0.0)
    }

    /// Checks that the kernel is strictly positive and nonincreasing on every
    /// lag that occurs between two points of `grid`.
    pub fn validate_on(&self, grid: &TimeGrid) -> Result<()> {
        let pts = grid.points();
        let mut lags: alloc::vec::Vec<f64> = alloc::vec::Vec::with_capacity(pts.len() * (pts.len() + 1) / 2);
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[..=i] {
                lags.push(a - b);
            }
        }
        lags.sort_by(f64::total_cmp);
        let mut prev = f64::INFINITY;
        for lag in lags {
            let g = self.eval(lag);
            if !(g > 0.0) || !g.is_finite() {
                return Err(GameError::Validation(alloc::format!(
                    "kernel is not strictly positive at lag {lag} (G = {g})"
                )));
            }
            if g > prev {
                return Err(GameError::Validation(alloc::format!(
                    "kernel increases at lag {lag} ({prev} -> {g})"
                )));
            }
            prev = g;
        }
        Ok(())
    }
}

/// `agents^-beta`.
pub fn crowding_factor(agents: usize, beta: f64) -> f64 {
    libm::pow(agents as f64, -beta)
}
