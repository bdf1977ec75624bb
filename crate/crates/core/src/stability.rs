//! Oscillation detection and the critical transaction cost `theta*`.
//!
//! A market is unstable at `theta` when some fundamental solution of some
//! virtual asset changes sign between two consecutive trading times.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::cross_impact::{CrossImpactFamily, CrossImpactMatrix, build_cross_impact};
use crate::equilibrium::{virtual_assets, virtual_fundamentals, GameSpec, SolverOptions};
use crate::error::{invalid, GameError, Result};
use crate::grid::{make_equidistant_grid, TimeGrid};
use crate::kernel::{crowding_factor, DecayKernel};

/// Default relative tolerance for counting a sign flip.
pub const DEFAULT_FLIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OscillationFlags {
    pub flips: usize,
    pub unstable: bool,
}

/// Counts indices with `u_k u_{k+1} < -rel_tol max|u|^2`.
pub fn oscillation_flags(u: &[f64], rel_tol: f64) -> OscillationFlags {
    let peak = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak == 0.0 {
        return OscillationFlags { flips: 0, unstable: false };
    }
    let threshold = -rel_tol * peak * peak;
    let flips = u.windows(2).filter(|w| w[0] * w[1] < threshold).count();
    OscillationFlags { flips, unstable: flips > 0 }
}

/// A homogeneous game without its transaction cost.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityProblem {
    pub grid: TimeGrid,
    pub kernel: DecayKernel,
    pub agents: usize,
    pub risk_aversion: f64,
    pub beta: f64,
    /// Eigenvalues of the cross-impact matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Kernel scale `lambda_i J^-beta` of each virtual asset.
    pub scales: Vec<f64>,
    pub var_rates: Vec<f64>,
    pub flip_tol: f64,
    pub max_condition: f64,
}

impl StabilityProblem {
    pub fn from_spec(spec: &GameSpec) -> Result<Self> {
        spec.validate()?;
        let va = virtual_assets(spec)?;
        Ok(Self {
            grid: spec.grid.clone(),
            kernel: spec.kernel,
            agents: spec.agents(),
            risk_aversion: spec.risk_aversion,
            beta: spec.beta,
            eigenvalues: va.spectral.eigenvalues,
            scales: va.scales,
            var_rates: va.var_rates,
            flip_tol: DEFAULT_FLIP_TOL,
            max_condition: spec.options.max_condition,
        })
    }

    /// Builds the problem for `agents` agents on the game described by the
    /// grid, kernel and matrices; inventories are irrelevant for stability.
    pub fn new(
        grid: TimeGrid,
        kernel: DecayKernel,
        cross_impact: CrossImpactMatrix,
        sigma: DMatrix<f64>,
        agents: usize,
        risk_aversion: f64,
        beta: f64,
    ) -> Result<Self> {
        let m = cross_impact.assets();
        let spec = GameSpec::new(grid, kernel, cross_impact, DMatrix::zeros(m, agents))
            .with_sigma(sigma)
            .with_risk_aversion(risk_aversion)
            .with_beta(beta);
        Self::from_spec(&spec)
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Flags of `(v_i, w_i)` for every virtual asset at `theta`. For a single
    /// agent only `v` is meaningful and `w` is reported stable.
    pub fn flags_at(&self, theta: f64) -> Result<Vec<(OscillationFlags, OscillationFlags)>> {
        let fundamentals = virtual_fundamentals(
            &self.grid,
            &self.kernel,
            &self.scales,
            &self.var_rates,
            theta,
            self.risk_aversion,
            self.agents,
            self.max_condition,
        )?;
        let stable = OscillationFlags { flips: 0, unstable: false };
        Ok(fundamentals
            .iter()
            .map(|f| {
                let fv = oscillation_flags(f.v.as_slice(), self.flip_tol);
                let fw = if self.agents > 1 { oscillation_flags(f.w.as_slice(), self.flip_tol) } else { stable };
                (fv, fw)
            })
            .collect())
    }
}

/// True when any fundamental solution oscillates at `theta`.
pub fn is_unstable_at(problem: &StabilityProblem, theta: f64) -> Result<bool> {
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(invalid!("theta must be nonnegative, got {theta}"));
    }
    Ok(problem.flags_at(theta)?.iter().any(|(v, w)| v.unstable || w.unstable))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMethod {
    Bisection,
    /// Bisection disagreed with a verification scan; the estimate comes
    /// from a fine scan.
    Scan,
    /// Stable already at the lower end of the bracket.
    StableAtZero,
}

impl ThresholdMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Bisection => "bisection",
            Self::Scan => "scan",
            Self::StableAtZero => "stable-at-zero",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalTheta {
    pub estimate: f64,
    /// Final bracket `[unstable, stable]`.
    pub bracket: (f64, f64),
    /// Every tested `theta` with its verdict (true = unstable).
    pub trace: Vec<(f64, bool)>,
    pub method: ThresholdMethod,
    pub warnings: Vec<String>,
}

/// Points of the verification scan run after bisection.
const VERIFY_POINTS: usize = 16;
/// Points of the fallback scan.
const SCAN_POINTS: usize = 200;

fn bisect(
    problem: &StabilityProblem,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    trace: &mut Vec<(f64, bool)>,
) -> Result<(f64, f64)> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let unstable = is_unstable_at(problem, mid)?;
        trace.push((mid, unstable));
        if unstable {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

/// Estimates `theta*` by bisection on `[lo, hi]`.
///
/// Requires an unstable verdict at `lo` and a stable one at `hi`. Since
/// monotonicity in `theta` is not guaranteed in general, the result is
/// checked against a coarse scan of the bracket; on disagreement a fine scan
/// locates the largest unstable `theta` and the estimate is refined above
/// it.
pub fn critical_theta(problem: &StabilityProblem, bracket: (f64, f64), tol: f64) -> Result<CriticalTheta> {
    let (lo0, hi0) = bracket;
    if !(lo0 >= 0.0) || !(hi0 > lo0) || !hi0.is_finite() {
        return Err(GameError::Bracket(alloc::format!("need 0 <= lo < hi, got [{lo0}, {hi0}]")));
    }
    if !(tol > 0.0) {
        return Err(invalid!("bisection tolerance must be positive, got {tol}"));
    }
    let mut trace = Vec::new();
    let lo_unstable = is_unstable_at(problem, lo0)?;
    let hi_unstable = is_unstable_at(problem, hi0)?;
    trace.push((lo0, lo_unstable));
    trace.push((hi0, hi_unstable));
    if !lo_unstable || hi_unstable {
        return Err(GameError::Bracket(alloc::format!(
            "expected unstable at {lo0} and stable at {hi0}, got {} and {}",
            verdict(lo_unstable),
            verdict(hi_unstable)
        )));
    }
    let (lo, hi) = bisect(problem, lo0, hi0, tol, &mut trace)?;
    let estimate = 0.5 * (lo + hi);

    let step = (hi0 - lo0) / VERIFY_POINTS as f64;
    let mut consistent = true;
    for k in 1..VERIFY_POINTS {
        let theta = lo0 + k as f64 * step;
        if theta > lo && theta < hi {
            continue;
        }
        let unstable = is_unstable_at(problem, theta)?;
        trace.push((theta, unstable));
        if unstable != (theta <= lo) {
            consistent = false;
            break;
        }
    }
    if consistent {
        return Ok(CriticalTheta { estimate, bracket: (lo, hi), trace, method: ThresholdMethod::Bisection, warnings: Vec::new() });
    }

    let step = (hi0 - lo0) / SCAN_POINTS as f64;
    let mut last_unstable = lo0;
    for k in 1..SCAN_POINTS {
        let theta = lo0 + k as f64 * step;
        let unstable = is_unstable_at(problem, theta)?;
        trace.push((theta, unstable));
        if unstable {
            last_unstable = theta;
        }
    }
    let upper = (last_unstable + step).min(hi0);
    let (lo, hi) = if is_unstable_at(problem, upper)? {
        (upper, upper)
    } else {
        bisect(problem, last_unstable, upper, tol, &mut trace)?
    };
    Ok(CriticalTheta {
        estimate: 0.5 * (lo + hi),
        bracket: (lo, hi),
        trace,
        method: ThresholdMethod::Scan,
        warnings: alloc::vec![String::from(
            "instability is not monotone in theta on this bracket; estimate taken from a fine scan"
        )],
    })
}

fn verdict(unstable: bool) -> &'static str {
    if unstable {
        "unstable"
    } else {
        "stable"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionMode {
    /// `max_i G(0) lambda_i / 4`, proven for two risk-neutral agents.
    Theorem,
    /// `G(0) J^-beta (J - 1) lambda_max / 4`.
    Conjecture,
}

pub fn predicted_theta_star(eigenvalues: &[f64], g0: f64, agents: usize, beta: f64, mode: PredictionMode) -> f64 {
    let lambda_max = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match mode {
        PredictionMode::Theorem => g0 * lambda_max / 4.0,
        PredictionMode::Conjecture => {
            g0 * crowding_factor(agents, beta) * (agents as f64 - 1.0) * lambda_max / 4.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Flags of `(v_i, w_i)` per virtual asset at the spec's own theta.
    pub flags: Vec<(OscillationFlags, OscillationFlags)>,
    pub theta: f64,
    pub estimated: CriticalTheta,
    pub predicted_theorem: f64,
    pub predicted_conjecture: f64,
    pub assets: usize,
    pub agents: usize,
    pub steps: usize,
    pub risk_aversion: f64,
    pub beta: f64,
    pub lambda_max: f64,
    /// Operational definition of instability used for the verdicts.
    pub criterion: &'static str,
}

pub const CRITERION: &str = "at least one strict sign flip between consecutive entries of any fundamental solution";

/// Stability analysis of a homogeneous game. The default bracket is
/// `[0, 2 x conjectured theta*]`.
pub fn stability_report(spec: &GameSpec, bracket: Option<(f64, f64)>, tol: f64) -> Result<StabilityReport> {
    let problem = StabilityProblem::from_spec(spec)?;
    let g0 = spec.kernel.at_zero();
    let agents = spec.agents();
    let predicted_theorem = predicted_theta_star(&problem.eigenvalues, g0, agents, spec.beta, PredictionMode::Theorem);
    let predicted_conjecture =
        predicted_theta_star(&problem.eigenvalues, g0, agents, spec.beta, PredictionMode::Conjecture);
    let estimated = threshold_with_default(&problem, bracket, predicted_conjecture, tol)?;
    Ok(StabilityReport {
        flags: problem.flags_at(spec.theta)?,
        theta: spec.theta,
        estimated,
        predicted_theorem,
        predicted_conjecture,
        assets: spec.assets(),
        agents,
        steps: spec.grid.steps(),
        risk_aversion: spec.risk_aversion,
        beta: spec.beta,
        lambda_max: problem.lambda_max(),
        criterion: CRITERION,
    })
}

fn threshold_with_default(
    problem: &StabilityProblem,
    bracket: Option<(f64, f64)>,
    prediction: f64,
    tol: f64,
) -> Result<CriticalTheta> {
    let (lo, hi) = bracket.unwrap_or((0.0, 2.0 * prediction));
    if !is_unstable_at(problem, lo)? {
        return Ok(CriticalTheta {
            estimate: lo,
            bracket: (lo, lo),
            trace: alloc::vec![(lo, false)],
            method: ThresholdMethod::StableAtZero,
            warnings: Vec::new(),
        });
    }
    let mut hi = hi;
    let mut warnings = Vec::new();
    // Widen a default bracket whose upper end is still unstable.
    if bracket.is_none() {
        let mut doublings = 0;
        while is_unstable_at(problem, hi)? && doublings < 20 {
            hi = if hi > 0.0 { 2.0 * hi } else { 1.0 };
            doublings += 1;
        }
        if doublings > 0 {
            warnings.push(alloc::format!("default bracket widened to [{lo}, {hi}]"));
        }
    }
    let mut out = critical_theta(problem, (lo, hi), tol)?;
    out.warnings.extend(warnings);
    Ok(out)
}

/// One point of a stability sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub assets: usize,
    pub agents: usize,
    pub steps: usize,
    pub risk_aversion: f64,
    pub beta: f64,
}

/// Settings shared by all sweep points: one-factor cross impact with
/// coupling `q` (identity for a single asset) and `Sigma = Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepBase {
    pub kernel: DecayKernel,
    pub horizon: f64,
    pub q: f64,
    pub tol: f64,
    pub options: SolverOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub estimated: f64,
    pub predicted: f64,
    pub relative_discrepancy: f64,
    pub method: ThresholdMethod,
    pub lambda_max: f64,
}

pub fn sweep_row(base: &SweepBase, point: SweepPoint) -> Result<SweepRow> {
    let family = if point.assets == 1 {
        CrossImpactFamily::Identity { assets: 1 }
    } else {
        CrossImpactFamily::OneFactor { assets: point.assets, q: base.q }
    };
    let q = build_cross_impact(&family)?;
    let sigma = q.matrix().clone();
    let grid = make_equidistant_grid(point.steps, base.horizon)?;
    if point.agents == 0 {
        return Err(invalid!("agent count must be positive"));
    }
    let spec = GameSpec::new(grid, base.kernel, q, DMatrix::zeros(point.assets, point.agents))
        .with_sigma(sigma)
        .with_risk_aversion(point.risk_aversion)
        .with_beta(point.beta)
        .with_options(base.options);
    let problem = StabilityProblem::from_spec(&spec)?;
    let predicted = predicted_theta_star(
        &problem.eigenvalues,
        base.kernel.at_zero(),
        point.agents,
        point.beta,
        PredictionMode::Conjecture,
    );
    let found = threshold_with_default(&problem, None, predicted, base.tol)?;
    let relative_discrepancy = relative_discrepancy(found.estimate, predicted);
    Ok(SweepRow {
        point,
        estimated: found.estimate,
        predicted,
        relative_discrepancy,
        method: found.method,
        lambda_max: problem.lambda_max(),
    })
}

/// `|estimate - predicted| / predicted`, or `|estimate|` when the
/// prediction is zero.
pub fn relative_discrepancy(estimate: f64, predicted: f64) -> f64 {
    if predicted == 0.0 {
        estimate.abs()
    } else {
        (estimate - predicted).abs() / predicted.abs()
    }
}

/// Runs every point; a failing point does not stop the sweep.
pub fn stability_sweep(base: &SweepBase, points: &[SweepPoint]) -> Vec<Result<SweepRow>> {
    points.iter().map(|p| sweep_row(base, *p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(steps: usize, m: usize, q: f64, agents: usize, gamma: f64) -> StabilityProblem {
        let ci = if m == 1 { CrossImpactMatrix::identity(1) } else { CrossImpactMatrix::one_factor(m, q) }.unwrap();
        let sigma = ci.matrix().clone();
        StabilityProblem::new(
            make_equidistant_grid(steps, 1.0).unwrap(),
            DecayKernel::exponential(1.0).unwrap(),
            ci,
            sigma,
            agents,
            gamma,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn flag_examples() {
        assert_eq!(oscillation_flags(&[1.0, -1.0, 1.0, -1.0], 1e-9), OscillationFlags { flips: 3, unstable: true });
        assert_eq!(oscillation_flags(&[0.4, 0.1, 0.05, 0.1, 0.4], 1e-9).flips, 0);
        assert_eq!(oscillation_flags(&[0.0; 4], 1e-9), OscillationFlags { flips: 0, unstable: false });
        assert_eq!(oscillation_flags(&[1.0, -1e-12, 1.0], 1e-9).flips, 0);
    }

    #[test]
    fn w_oscillates_below_threshold() {
        let p = problem(50, 1, 0.0, 2, 0.0);
        let flags = p.flags_at(0.2).unwrap();
        assert!(flags[0].1.unstable);
        assert!(is_unstable_at(&p, 0.2).unwrap());
        assert!(!is_unstable_at(&p, 10.0).unwrap());
    }

    #[test]
    fn two_asset_verdicts() {
        let p = problem(50, 2, 0.9, 2, 0.0);
        assert!(is_unstable_at(&p, 0.3).unwrap());
        assert!(!is_unstable_at(&p, 0.6).unwrap());
    }

    #[test]
    fn base_threshold() {
        let p = problem(50, 1, 0.0, 2, 0.0);
        let c = critical_theta(&p, (0.0, 0.5), 1e-6).unwrap();
        assert!((c.estimate - 0.25).abs() <= 0.01, "{}", c.estimate);
        assert_eq!(c.method, ThresholdMethod::Bisection);
        assert!(c.bracket.1 - c.bracket.0 <= 1e-6);
        assert!(c.estimate >= c.bracket.0 && c.estimate <= c.bracket.1);
    }

    #[test]
    fn bad_brackets() {
        let p = problem(20, 1, 0.0, 2, 0.0);
        assert!(matches!(critical_theta(&p, (1.0, 2.0), 1e-6), Err(GameError::Bracket(_))));
        assert!(matches!(critical_theta(&p, (0.0, 0.01), 1e-6), Err(GameError::Bracket(_))));
        assert!(matches!(critical_theta(&p, (0.5, 0.1), 1e-6), Err(GameError::Bracket(_))));
    }

    #[test]
    fn single_agent_is_stable_at_zero() {
        let p = problem(20, 1, 0.0, 1, 0.0);
        assert!(!is_unstable_at(&p, 0.0).unwrap());
        let base = SweepBase {
            kernel: DecayKernel::exponential(1.0).unwrap(),
            horizon: 1.0,
            q: 0.5,
            tol: 1e-6,
            options: SolverOptions::default(),
        };
        let row = sweep_row(&base, SweepPoint { assets: 2, agents: 1, steps: 20, risk_aversion: 0.0, beta: 0.0 }).unwrap();
        assert_eq!(row.method, ThresholdMethod::StableAtZero);
        assert_eq!(row.estimated, 0.0);
        assert_eq!(row.predicted, 0.0);
    }

    #[test]
    fn predictions() {
        let q = CrossImpactMatrix::one_factor(2000, 0.2).unwrap();
        let lambda_max = 1.0 - 0.2 + 0.2 * 2000.0;
        let p = predicted_theta_star(&[lambda_max, 0.8], 1.0, 2, 0.0, PredictionMode::Theorem);
        assert!((p - 100.2).abs() < 1e-12);
        assert_eq!(q.assets(), 2000);
        assert_eq!(predicted_theta_star(&[1.0], 1.0, 2, 0.0, PredictionMode::Conjecture), 0.25);
        for (m, j) in [(3usize, 4usize), (5, 2)] {
            let lm = 1.0 + (m as f64 - 1.0) / 2.0;
            let p = predicted_theta_star(&[lm, 0.5], 1.0, j, 0.0, PredictionMode::Conjecture);
            assert!((p - (j as f64 - 1.0) * lm / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_scale_equivariance() {
        let base = problem(30, 1, 0.0, 2, 0.0);
        let t1 = critical_theta(&base, (0.0, 0.5), 1e-7).unwrap().estimate;
        for c in [0.5, 2.0] {
            let mut p = base.clone();
            p.kernel = p.kernel.scaled(c).unwrap();
            let tc = critical_theta(&p, (0.0, 0.5 * c), 1e-7).unwrap().estimate;
            assert!((tc - c * t1).abs() < 1e-5, "{tc} vs {}", c * t1);
        }
    }
}
