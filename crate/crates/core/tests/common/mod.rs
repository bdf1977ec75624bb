#![allow(dead_code)]

pub mod props;

use impact_game_core::{
    build_cross_impact, CrossImpactFamily, CrossImpactMatrix, DecayKernel, GameSpec, MarketModel, StrategyArray,
    TimeGrid,
};
use nalgebra::DMatrix;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub struct Rand(ChaCha20Rng);

impl Rand {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha20Rng::seed_from_u64(seed))
    }

    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Integer in `lo..=hi`.
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as usize
    }

    pub fn coin(&mut self) -> bool {
        self.0.next_u64() & 1 == 1
    }
}

pub fn random_kernel(r: &mut Rand) -> DecayKernel {
    if r.coin() {
        DecayKernel::exponential(r.uniform(0.3, 3.0)).unwrap()
    } else {
        DecayKernel::power_law(r.uniform(0.3, 1.5), r.uniform(0.05, 1.0)).unwrap()
    }
}

/// Positive definite cross impact with unit diagonal.
pub fn random_cross_impact(r: &mut Rand, assets: usize) -> CrossImpactMatrix {
    if assets == 1 {
        return CrossImpactMatrix::identity(1).unwrap();
    }
    let family = if r.coin() {
        CrossImpactFamily::OneFactor { assets, q: r.uniform(0.05, 0.9) }
    } else {
        CrossImpactFamily::RankOne { loadings: (0..assets).map(|_| r.uniform(-0.9, 0.9)).collect() }
    };
    build_cross_impact(&family).unwrap()
}

pub fn random_grid(r: &mut Rand, max_steps: usize) -> TimeGrid {
    let steps = r.int(1, max_steps);
    if r.coin() {
        TimeGrid::equidistant(steps, r.uniform(0.5, 2.0)).unwrap()
    } else {
        let mut t = vec![0.0];
        for _ in 0..steps {
            let last = *t.last().unwrap();
            t.push(last + r.uniform(0.02, 0.3));
        }
        TimeGrid::new(t).unwrap()
    }
}

pub fn random_inventories(r: &mut Rand, assets: usize, agents: usize) -> DMatrix<f64> {
    DMatrix::from_fn(assets, agents, |_, _| r.uniform(-1.0, 1.0))
}

/// Random homogeneous game with `Sigma = Q`.
pub fn random_spec(r: &mut Rand, max_assets: usize, max_agents: usize, max_steps: usize, risk_averse: bool) -> GameSpec {
    let m = r.int(1, max_assets);
    let j = r.int(1, max_agents);
    let grid = random_grid(r, max_steps);
    let q = random_cross_impact(r, m);
    let inv = random_inventories(r, m, j);
    let mut spec = GameSpec::new(grid, random_kernel(r), q, inv)
        .with_theta(r.uniform(0.0, 2.0))
        .with_beta(r.uniform(0.0, 1.0));
    if risk_averse {
        spec = spec.with_risk_aversion(r.uniform(0.0, 5.0));
    }
    spec
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Expected cost of agent `j` when the execution order at every trading
/// time is a uniformly random permutation of the agents, computed by
/// enumerating all orders. The agent pays the decayed impact of all earlier
/// trades, the full instantaneous impact of agents ahead of it and half of
/// its own instantaneous impact.
pub fn permutation_cost(model: &MarketModel, xi: &StrategyArray, agent: usize) -> f64 {
    let t = model.grid.points();
    let q = &model.cross_impact;
    let (m, jn, n) = (xi.assets(), xi.agents(), xi.times());
    let g0 = model.kernel.at_zero();
    let perms = permutations(jn);
    let mut total = 0.0;
    for perm in &perms {
        let pos = |a: usize| perm.iter().position(|&x| x == a).unwrap();
        let mut cost = 0.0;
        for k in 0..n {
            for i in 0..m {
                let mut price = 0.0;
                for a in 0..m {
                    for l in 0..jn {
                        for mm in 0..k {
                            price += model.scale[l] * model.kernel.eval(t[k] - t[mm]) * q[(i, a)] * xi.get(a, l, mm);
                        }
                        if l != agent && pos(l) < pos(agent) {
                            price += model.scale[l] * g0 * q[(i, a)] * xi.get(a, l, k);
                        }
                    }
                    price += 0.5 * model.scale[agent] * g0 * q[(i, a)] * xi.get(a, agent, k);
                }
                let x = xi.get(i, agent, k);
                cost += price * x + model.theta[agent] * x * x;
            }
        }
        total += cost;
    }
    total / perms.len() as f64
}

pub fn random_strategies(r: &mut Rand, assets: usize, agents: usize, times: usize) -> StrategyArray {
    let data = (0..assets * agents * times).map(|_| r.uniform(-1.0, 1.0)).collect();
    StrategyArray::from_vec(assets, agents, times, data).unwrap()
}
