//! Dense storage for trading strategies indexed by (asset, agent, time).

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{invalid, Result};

/// `M x J x (N+1)` array of trade volumes. Entry `(i, j, k)` is the volume
/// agent `j` sells of asset `i` at time `t_k` (negative means buy).
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyArray {
    assets: usize,
    agents: usize,
    times: usize,
    data: Vec<f64>,
}

impl StrategyArray {
    pub fn zeros(assets: usize, agents: usize, times: usize) -> Self {
        Self { assets, agents, times, data: vec![0.0; assets * agents * times] }
    }

    /// Builds from a flat vector in `(asset, agent, time)` row-major order.
    pub fn from_vec(assets: usize, agents: usize, times: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != assets * agents * times {
            return Err(invalid!(
                "strategy data has {} entries, expected {}x{}x{}",
                data.len(),
                assets,
                agents,
                times
            ));
        }
        Ok(Self { assets, agents, times, data })
    }

    pub fn assets(&self) -> usize {
        self.assets
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn times(&self) -> usize {
        self.times
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn offset(&self, asset: usize, agent: usize) -> usize {
        (asset * self.agents + agent) * self.times
    }

    pub fn get(&self, asset: usize, agent: usize, time: usize) -> f64 {
        self.data[self.offset(asset, agent) + time]
    }

    pub fn set(&mut self, asset: usize, agent: usize, time: usize, value: f64) {
        let o = self.offset(asset, agent);
        self.data[o + time] = value;
    }

    /// Time series of one (asset, agent) pair.
    pub fn series(&self, asset: usize, agent: usize) -> &[f64] {
        let o = self.offset(asset, agent);
        &self.data[o..o + self.times]
    }

    pub fn series_mut(&mut self, asset: usize, agent: usize) -> &mut [f64] {
        let o = self.offset(asset, agent);
        &mut self.data[o..o + self.times]
    }

    /// Agent `j`'s strategy as an `M x (N+1)` matrix.
    pub fn agent_matrix(&self, agent: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.assets, self.times, |i, k| self.get(i, agent, k))
    }

    pub fn set_agent_matrix(&mut self, agent: usize, m: &DMatrix<f64>) {
        for i in 0..self.assets {
            for k in 0..self.times {
                self.set(i, agent, k, m[(i, k)]);
            }
        }
    }

    /// Total volume traded by agent `j` in asset `i`.
    pub fn total(&self, asset: usize, agent: usize) -> f64 {
        self.series(asset, agent).iter().sum()
    }

    /// Net order flow `sum_j scale_j * xi_{.,j,k}` as an `M x (N+1)` matrix.
    pub fn weighted_flow(&self, scales: &[f64]) -> DMatrix<f64> {
        let mut flow = DMatrix::zeros(self.assets, self.times);
        for i in 0..self.assets {
            for (j, s) in scales.iter().enumerate().take(self.agents) {
                for (k, x) in self.series(i, j).iter().enumerate() {
                    flow[(i, k)] += s * x;
                }
            }
        }
        flow
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { data: self.data.iter().map(|x| x * factor).collect(), ..self.clone() }
    }
}
