//! Price paths under the Bachelier model with transient impact.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::costs::MarketModel;
use crate::error::{invalid, Result};
use crate::linalg::psd_sqrt;
use crate::strategy::StrategyArray;

/// Identifies the random source recorded with every path.
pub const GENERATOR: &str = "ChaCha20 (rand_chacha, seed_from_u64) with StandardNormal increments (rand_distr)";

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOptions {
    /// Fine steps per trading interval.
    pub substeps: usize,
    /// End of the simulated window; defaults to the last trading time.
    pub horizon: Option<f64>,
    /// Explicit fine grid; must contain every trading time.
    pub fine_times: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { substeps: 10, horizon: None, fine_times: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    pub times: Vec<f64>,
    /// Rows are times, columns assets.
    pub unaffected: DMatrix<f64>,
    pub affected: DMatrix<f64>,
    pub drift: DMatrix<f64>,
    pub seed: u64,
    pub generator: &'static str,
}

fn fine_grid(trading: &[f64], options: &SimulationOptions) -> Result<Vec<f64>> {
    let t_end = trading[trading.len() - 1];
    if let Some(times) = &options.fine_times {
        if times.first() != Some(&0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid!("fine grid must start at 0 and be strictly increasing"));
        }
        let tol = 1e-12 * t_end;
        if let Some(t) = trading.iter().find(|t| !times.iter().any(|s| (s - **t).abs() <= tol)) {
            return Err(invalid!("fine grid does not contain trading time {t}"));
        }
        return Ok(times.clone());
    }
    if options.substeps == 0 {
        return Err(invalid!("number of substeps must be positive"));
    }
    let horizon = options.horizon.unwrap_or(t_end);
    if !(horizon >= t_end) || !horizon.is_finite() {
        return Err(invalid!("simulation horizon {horizon} ends before the last trade at {t_end}"));
    }
    let sub = options.substeps as f64;
    let mut out = Vec::with_capacity(trading.len() * options.substeps + 1);
    for w in trading.windows(2) {
        for s in 0..options.substeps {
            out.push(w[0] + (w[1] - w[0]) * s as f64 / sub);
        }
    }
    out.push(t_end);
    let n = trading.len();
    let h = (trading[n - 1] - trading[n - 2]) / sub;
    let extra = libm::ceil((horizon - t_end) / h - 1e-9) as usize;
    for s in 1..=extra {
        out.push((t_end + s as f64 * h).min(horizon));
    }
    if let Some(last) = out.last_mut() {
        if horizon > t_end {
            *last = horizon;
        }
    }
    Ok(out)
}

/// Scale-weighted net order flow pushed through `Q`, `M x (N+1)`.
fn impact_flow(model: &MarketModel, xi: &StrategyArray) -> Result<DMatrix<f64>> {
    model.validate()?;
    if xi.assets() != model.assets() || xi.agents() != model.agents() || xi.times() != model.grid.len() {
        return Err(invalid!("strategy array does not match the market model"));
    }
    Ok(&model.cross_impact * xi.weighted_flow(&model.scale))
}

/// Drift `-sum_{t_k < t} G(t - t_k) Q sum_j s_j xi_{.,j,k}`.
fn drift_at(model: &MarketModel, flow: &DMatrix<f64>, t: f64, inclusive: bool) -> DVector<f64> {
    let mut d = DVector::zeros(flow.nrows());
    for (k, &tk) in model.grid.points().iter().enumerate() {
        if tk < t || (inclusive && tk == t) {
            d -= flow.column(k) * model.kernel.eval(t - tk);
        }
    }
    d
}

/// Drift just after each trade, `D(t_k+)`, rows are trading times.
pub fn post_trade_drift(model: &MarketModel, xi: &StrategyArray) -> Result<DMatrix<f64>> {
    let flow = impact_flow(model, xi)?;
    let pts = model.grid.points();
    let mut out = DMatrix::zeros(pts.len(), model.assets());
    for (k, &t) in pts.iter().enumerate() {
        out.set_row(k, &drift_at(model, &flow, t, true).transpose());
    }
    Ok(out)
}

pub fn simulate_price(
    model: &MarketModel,
    xi: &StrategyArray,
    s0: &[f64],
    sigma: &DMatrix<f64>,
    options: &SimulationOptions,
) -> Result<PricePath> {
    let m = model.assets();
    if s0.len() != m {
        return Err(invalid!("got {} initial prices for {m} assets", s0.len()));
    }
    if sigma.shape() != (m, m) {
        return Err(invalid!("covariance must be {m}x{m}"));
    }
    let flow = impact_flow(model, xi)?;
    let times = fine_grid(model.grid.points(), options)?;
    let root = psd_sqrt(sigma)?;
    let mut rng = ChaCha20Rng::seed_from_u64(options.seed);
    let rows = times.len();
    let mut unaffected = DMatrix::zeros(rows, m);
    let mut drift = DMatrix::zeros(rows, m);
    let mut level = DVector::from_column_slice(s0);
    for (r, &t) in times.iter().enumerate() {
        if r > 0 {
            let dt = t - times[r - 1];
            let z = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
            level += &root * z * libm::sqrt(dt);
        }
        unaffected.set_row(r, &level.transpose());
        drift.set_row(r, &drift_at(model, &flow, t, false).transpose());
    }
    let affected = &unaffected + &drift;
    Ok(PricePath { times, unaffected, affected, drift, seed: options.seed, generator: GENERATOR })
}
