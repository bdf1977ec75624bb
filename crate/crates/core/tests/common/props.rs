//! Randomized property checks. Each returns a short summary on success and
//! a description of the first violation on failure.

use impact_game_core::costs::mv_gradient;
use impact_game_core::{
    aggregate_flow_is_zero, analyze_cross_impact, arbitrageur_is_idle, closed_form_equilibrium, expected_cost,
    solve_hetero_nash, variance_and_mv, CrossImpactMatrix, DecayKernel, GameSpec, HeteroGameSpec, MarketModel,
    TimeGrid,
};
use nalgebra::DMatrix;

use super::*;

pub type Check = Result<String, String>;

pub fn inventory_conservation(seed: u64, count: usize) -> Check {
    let mut r = Rand::new(seed);
    let mut worst: f64 = 0.0;
    for case in 0..count {
        let spec = random_spec(&mut r, 3, 4, 20, case % 2 == 0);
        let eq = closed_form_equilibrium(&spec).map_err(|e| format!("case {case}: {e}"))?;
        for i in 0..spec.assets() {
            for j in 0..spec.agents() {
                let x = spec.inventories[(i, j)];
                let err = (eq.strategies.total(i, j) - x).abs() / x.abs().max(1.0);
                worst = worst.max(err);
            }
        }
    }
    if worst <= 1e-10 {
        Ok(format!("max relative error {worst:.1e} over {count} specs"))
    } else {
        Err(format!("relative conservation error {worst:.3e} > 1e-10"))
    }
}

pub fn fundamentals_normalized(seed: u64, count: usize) -> Check {
    let mut r = Rand::new(seed);
    let mut worst: f64 = 0.0;
    for case in 0..count {
        let spec = random_spec(&mut r, 3, 4, 20, case % 2 == 0);
        let eq = closed_form_equilibrium(&spec).map_err(|e| format!("case {case}: {e}"))?;
        for f in &eq.fundamentals {
            worst = worst.max((f.v.sum() - 1.0).abs()).max((f.w.sum() - 1.0).abs());
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max |e'v - 1|, |e'w - 1| = {worst:.1e}"))
    } else {
        Err(format!("normalization error {worst:.3e}"))
    }
}

pub fn closed_form_matches_kkt(seed: u64, count: usize) -> Check {
    let mut r = Rand::new(seed);
    let mut worst: f64 = 0.0;
    for case in 0..count {
        let spec = random_spec(&mut r, 3, 4, 20, false);
        let cf = closed_form_equilibrium(&spec).map_err(|e| format!("case {case}: {e}"))?;
        let hs = HeteroGameSpec::from_homogeneous(&spec).map_err(|e| format!("case {case}: {e}"))?;
        let kkt = solve_hetero_nash(&hs).map_err(|e| format!("case {case}: {e}"))?;
        worst = worst.max(cf.strategies.max_abs_diff(&kkt.strategies));
    }
    if worst <= 1e-8 {
        Ok(format!("max deviation {worst:.1e} over {count} specs"))
    } else {
        Err(format!("closed form and stacked system differ by {worst:.3e}"))
    }
}

/// Half of the specs have zero aggregate inventory; every spec has an agent
/// without inventory.
pub fn idle_iff_zero_aggregate(seed: u64, count: usize) -> Check {
    let mut r = Rand::new(seed);
    let mut zero_cases = 0;
    for case in 0..count {
        let mut spec = random_spec(&mut r, 3, 4, 20, case % 3 == 0);
        let (m, j) = (spec.assets(), spec.agents().max(2));
        let mut inv = random_inventories(&mut r, m, j);
        inv.column_mut(j - 1).fill(0.0);
        if case % 2 == 0 {
            for i in 0..m {
                let s: f64 = (0..j - 1).map(|a| inv[(i, a)]).sum();
                for a in 0..j - 1 {
                    inv[(i, a)] -= s / (j - 1) as f64;
                }
            }
        }
        spec.inventories = inv;
        let eq = closed_form_equilibrium(&spec).map_err(|e| format!("case {case}: {e}"))?;
        let zero = aggregate_flow_is_zero(&spec, 1e-12);
        let idle = arbitrageur_is_idle(&eq, j - 1, 1e-10);
        zero_cases += zero as usize;
        if zero != idle {
            return Err(format!("case {case}: zero aggregate = {zero} but idle = {idle}"));
        }
    }
    Ok(format!("{count} specs agree ({zero_cases} with zero aggregate flow)"))
}

pub fn identity_decouples(seed: u64, count: usize) -> Check {
    let mut r = Rand::new(seed);
    let mut worst: f64 = 0.0;
    for case in 0..count {
        let grid = random_grid(&mut r, 20);
        let kernel = random_kernel(&mut r);
        let j = r.int(1, 4);
        let inv = random_inventories(&mut r, 2, j);
        let sigma = DMatrix::from_row_slice(2, 2, &[r.uniform(0.1, 2.0), 0.0, 0.0, r.uniform(0.1, 2.0)]);
        let (theta, gamma, beta) = (r.uniform(0.0, 2.0), r.uniform(0.0, 3.0), r.uniform(0.0, 1.0));
        let joint = GameSpec::new(grid.clone(), kernel, CrossImpactMatrix::identity(2).unwrap(), inv.clone())
            .with_sigma(sigma.clone())
            .with_theta(theta)
            .with_risk_aversion(gamma)
            .with_beta(beta);
        let eq = closed_form_equilibrium(&joint).map_err(|e| format!("case {case}: {e}"))?;
        for i in 0..2 {
            let single = GameSpec::new(
                grid.clone(),
                kernel,
                CrossImpactMatrix::identity(1).unwrap(),
                inv.rows(i, 1).into_owned(),
            )
            .with_sigma(DMatrix::from_element(1, 1, sigma[(i, i)]))
            .with_theta(theta)
            .with_risk_aversion(gamma)
            .with_beta(beta);
            let s = closed_form_equilibrium(&single).map_err(|e| format!("case {case}: {e}"))?;
            for a in 0..j {
                for (x, y) in eq.strategies.series(i, a).iter().zip(s.strategies.series(0, a)) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
    }
    if worst <= 1e-10 {
        Ok(format!("max deviation {worst:.1e}"))
    } else {
        Err(format!("identity cross impact couples assets: deviation {worst:.3e}"))
    }
}

pub fn priority_permutations(seed: u64) -> Check {
    let mut r = Rand::new(seed);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for agents in 1..=4 {
        for steps in 1..=3 {
            for assets in 1..=2 {
                let grid = random_grid(&mut r, steps);
                let q = random_cross_impact(&mut r, assets);
                let mut model = MarketModel {
                    grid,
                    kernel: random_kernel(&mut r),
                    cross_impact: q.matrix().clone(),
                    theta: (0..agents).map(|_| r.uniform(0.0, 1.0)).collect(),
                    scale: (0..agents).map(|_| r.uniform(0.3, 1.5)).collect(),
                    priority: DMatrix::from_element(agents, agents, 0.5),
                };
                model.priority.fill_diagonal(0.5);
                let xi = random_strategies(&mut r, assets, agents, model.grid.len());
                for j in 0..agents {
                    let formula = expected_cost(&model, &xi, j).map_err(|e| e.to_string())?;
                    let brute = permutation_cost(&model, &xi, j);
                    worst = worst.max((formula - brute).abs() / brute.abs().max(1.0));
                }
                cases += 1;
            }
        }
    }
    if worst <= 1e-12 {
        Ok(format!("{cases} configurations, max relative deviation {worst:.1e}"))
    } else {
        Err(format!("fair-priority cost differs from permutation average by {worst:.3e}"))
    }
}

pub fn largest_eigenvalue_bound(seed: u64, count: usize) -> Check {
    let mut r = Rand::new(seed);
    let mut tightest = f64::INFINITY;
    for case in 0..count {
        let m = r.int(2, 8);
        let mut q = DMatrix::identity(m, m);
        for i in 0..m {
            for j in 0..i {
                let x = r.uniform(-1.0, 1.0);
                q[(i, j)] = x;
                q[(j, i)] = x;
            }
        }
        let q = CrossImpactMatrix::new(q).map_err(|e| e.to_string())?;
        let report = analyze_cross_impact(&q, None, 1e-9).map_err(|e| e.to_string())?;
        let bound = 1.0 + 2.0 * q.off_diagonal_sum() / m as f64;
        let gap = report.lambda_max - bound;
        tightest = tightest.min(gap);
        if gap < -1e-12 {
            return Err(format!("case {case}: lambda_1 = {} < {bound}", report.lambda_max));
        }
        if (report.one_factor_bound.unwrap() - bound).abs() > 1e-12 {
            return Err(format!("case {case}: reported bound differs"));
        }
    }
    Ok(format!("{count} samples, smallest margin {tightest:.2e}"))
}

/// Projected MV gradient of every agent vanishes at equilibrium, and random
/// inventory-preserving perturbations never lower the agent's MV.
pub fn best_response(seed: u64, count: usize) -> Check {
    let mut r = Rand::new(seed);
    let mut worst: f64 = 0.0;
    let mut worst_gain: f64 = 0.0;
    for case in 0..count {
        let spec = random_spec(&mut r, 3, 4, 15, true);
        let eq = closed_form_equilibrium(&spec).map_err(|e| format!("case {case}: {e}"))?;
        let model = MarketModel::homogeneous(&spec);
        let gamma = spec.risk_aversion;
        for j in 0..spec.agents() {
            let g = mv_gradient(&model, &spec.sigma, gamma, &eq.strategies, j).map_err(|e| e.to_string())?;
            for row in g.row_iter() {
                let mean = row.mean();
                worst = worst.max(row.iter().fold(0.0f64, |m, x| m.max((x - mean).abs())));
            }
            let (_, base) = variance_and_mv(&model, &spec.sigma, gamma, &eq.strategies, j).map_err(|e| e.to_string())?;
            for _ in 0..5 {
                let mut moved = eq.strategies.clone();
                for i in 0..spec.assets() {
                    let n = spec.grid.len();
                    let d: Vec<f64> = (0..n).map(|_| r.uniform(-0.1, 0.1)).collect();
                    let mean = d.iter().sum::<f64>() / n as f64;
                    for (k, x) in moved.series_mut(i, j).iter_mut().enumerate() {
                        *x += d[k] - mean;
                    }
                }
                let (_, mv) = variance_and_mv(&model, &spec.sigma, gamma, &moved, j).map_err(|e| e.to_string())?;
                worst_gain = worst_gain.max(base - mv);
            }
        }
    }
    if worst <= 1e-8 && worst_gain <= 1e-9 {
        Ok(format!("projected gradient {worst:.1e}, largest improvement {worst_gain:.1e}"))
    } else {
        Err(format!("projected gradient {worst:.3e}, improvement by deviation {worst_gain:.3e}"))
    }
}

/// Inventories along an eigenvector of Q produce trades along that
/// eigenvector with the fundamental solution as schedule.
pub fn eigenbasis(seed: u64, count: usize) -> Check {
    let mut r = Rand::new(seed);
    let mut worst: f64 = 0.0;
    for case in 0..count {
        let m = r.int(2, 3);
        let q = impact_game_core::build_cross_impact(&impact_game_core::CrossImpactFamily::RankOne {
            loadings: (0..m).map(|_| r.uniform(-0.9, 0.9)).collect(),
        })
        .unwrap();
        let grid = TimeGrid::equidistant(r.int(2, 15), 1.0).unwrap();
        let kernel = DecayKernel::exponential(r.uniform(0.5, 2.0)).unwrap();
        let agents = r.int(2, 4);
        let report = analyze_cross_impact(&q, None, 1e-9).unwrap();
        let mode = r.int(0, m - 1);
        let nu = report.eigenvectors.column(mode).into_owned();
        let (theta, gamma) = (r.uniform(0.0, 1.0), r.uniform(0.0, 3.0));
        let make = |inv: DMatrix<f64>| {
            GameSpec::new(grid.clone(), kernel, q.clone(), inv).with_theta(theta).with_risk_aversion(gamma)
        };
        let same = make(DMatrix::from_fn(m, agents, |i, _| nu[i]));
        let eq = closed_form_equilibrium(&same).map_err(|e| format!("case {case}: {e}"))?;
        let idx = closest_mode(&eq.spectral.eigenvectors, &nu);
        let v = &eq.fundamentals[idx].v;
        for j in 0..agents {
            for i in 0..m {
                for k in 0..grid.len() {
                    worst = worst.max((eq.strategies.get(i, j, k) - nu[i] * v[k]).abs());
                }
            }
        }
        let mut inv = DMatrix::zeros(m, agents);
        inv.set_column(0, &nu);
        inv.set_column(1, &(-&nu));
        let opposed = make(inv);
        let eq = closed_form_equilibrium(&opposed).map_err(|e| format!("case {case}: {e}"))?;
        let w = &eq.fundamentals[idx].w;
        for i in 0..m {
            for k in 0..grid.len() {
                worst = worst.max((eq.strategies.get(i, 0, k) - nu[i] * w[k]).abs());
            }
        }
    }
    if worst <= 1e-9 {
        Ok(format!("max deviation {worst:.1e} over {count} specs"))
    } else {
        Err(format!("eigenbasis characterization off by {worst:.3e}"))
    }
}

fn closest_mode(vectors: &DMatrix<f64>, nu: &nalgebra::DVector<f64>) -> usize {
    (0..vectors.ncols())
        .max_by(|&a, &b| vectors.column(a).dot(nu).abs().total_cmp(&vectors.column(b).dot(nu).abs()))
        .unwrap()
}
