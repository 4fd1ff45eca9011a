//! Outer driver: alternate inner minimizations of the exterior distance
//! function with closed form multiplier updates, optionally moving the
//! center downhill as the objective level drops.
//!
//! One outer step is the relaxation operator
//!
//! ```text
//! x_bar      = argmin_x E(x; y, k, lambda)
//! lambda_i'  = lambda_i / (k c_i(x_bar) + 1)
//! ```
//!
//! whose fixed points are the saddle points of the transformed problem.
//! Multipliers stay strictly positive by construction: the update divides
//! by the shifted slack, which is positive on the domain.

use nalgebra::DVector;

use crate::diag::condition_number;
use crate::edf::{
    delta, edf_eval, merit, pull_into_level, Center, EdfParams, dual_value,
};
use crate::error::{Error, Result};
use crate::inner::{minimize_edf, InnerConfig, InnerResult};
use crate::problem::{evaluate, EvalOrder, ProblemInstance};

/// Closed form multiplier update at a point with shifted slacks
/// `k c_i + 1 > 0`.
pub fn multiplier_update(
    lambda: &DVector<f64>,
    k: f64,
    c_vals: &DVector<f64>,
) -> Result<DVector<f64>> {
    if lambda.len() != c_vals.len() {
        return Err(Error::DimensionMismatch {
            expected: c_vals.len(),
            got: lambda.len(),
        });
    }
    let mut out = DVector::zeros(lambda.len());
    for i in 0..lambda.len() {
        let s = k * c_vals[i] + 1.0;
        if s <= 0.0 {
            return Err(Error::Domain(format!(
                "shifted slack {s} for constraint {i} is not positive"
            )));
        }
        out[i] = lambda[i] / s;
    }
    Ok(out)
}

/// One application of the relaxation operator from `x0`: inner minimization
/// followed by the multiplier update. The returned `lambda_bar` field holds
/// the updated multipliers.
pub fn relaxation_operator(
    p: &ProblemInstance,
    center: &Center,
    params: &EdfParams,
    config: &InnerConfig,
    x0: &DVector<f64>,
) -> Result<InnerResult> {
    minimize_edf(p, center, params, config, x0)
}

/// Fraction of the segment from the center toward `x_bar` selected by the
/// grid line search, with the selected point.
#[derive(Debug, Clone)]
pub struct LinesearchResult {
    pub tau: f64,
    pub x: DVector<f64>,
}

/// Scans `tau = grid/grid, (grid-1)/grid, ...` and returns the largest
/// fraction whose point keeps every slack at least the center margin and
/// still descends toward `x_bar` (gradient of `f` not ascending along the
/// segment). Falls back to the center itself.
pub fn center_linesearch(
    p: &ProblemInstance,
    center: &Center,
    x_bar: &DVector<f64>,
    grid: usize,
) -> Result<LinesearchResult> {
    if grid == 0 {
        return Err(Error::InvalidConfig("grid must be at least 1".into()));
    }
    let dir = x_bar - &center.y;
    for j in (1..=grid).rev() {
        let tau = j as f64 / grid as f64;
        let x = &center.y + &dir * tau;
        let bundle = evaluate(p, &x, EvalOrder::Gradient)?;
        let feasible = bundle.c_vals.iter().all(|c| *c >= center.gamma);
        let descending = bundle.f_grad.as_ref().expect("gradient order").dot(&dir) <= 0.0;
        if feasible && descending {
            return Ok(LinesearchResult { tau, x });
        }
    }
    Ok(LinesearchResult {
        tau: 0.0,
        x: center.y.clone(),
    })
}

/// Proposes a new center halfway between the old one and the line search
/// point, provided the objective dropped by at least `delta_reduction` and the
/// midpoint keeps the feasibility margin. Returns `None` when the step is
/// declined.
pub fn center_update(
    p: &ProblemInstance,
    center: &Center,
    x_bar: &DVector<f64>,
    grid: usize,
    delta_reduction: f64,
) -> Result<Option<Center>> {
    let ls = center_linesearch(p, center, x_bar, grid)?;
    let f_ls = evaluate(p, &ls.x, EvalOrder::Value)?.f_val;
    if center.f_y - f_ls < delta_reduction {
        return Ok(None);
    }
    let mid = (&center.y + &ls.x) * 0.5;
    match Center::new(p, mid, center.gamma) {
        Ok(c) => Ok(Some(c)),
        Err(Error::Domain(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Full outer loop configuration.
#[derive(Debug, Clone)]
pub struct EpmConfig {
    /// Initial penalty level.
    pub k: f64,
    /// Multiplies the penalty level after each outer step; `1.0` keeps it
    /// fixed. Center updates shrink the level gap and the multiplier
    /// contraction rate behaves like `1/(1 + k * gap)`, so runs that move
    /// the center need growth here to keep the tail rate bounded away
    /// from one.
    pub k_growth: f64,
    /// Gap rule coefficient for the inner stop.
    pub alpha: f64,
    /// Feasibility margin required of any center.
    pub gamma: f64,
    /// Objective reduction required before the center moves. This is also
    /// the terminal level-gap floor: updates stop once the line search
    /// cannot drop the center value by this much, so the inner Hessian
    /// scale stays near `delta_reduction^-2` and the gradient tolerance
    /// remains resolvable in f64. Values much below 1e-2 let the gap
    /// collapse far enough that inner solves stall below their target.
    pub delta_reduction: f64,
    /// Outer merit tolerance.
    pub epsilon: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub inner_grad_tol: f64,
    pub use_gap_rule: bool,
    pub center_update_enabled: bool,
    /// Line search grid resolution for center updates.
    pub linesearch_grid: usize,
    /// Initial multipliers; all ones when absent.
    pub lambda0: Option<DVector<f64>>,
    /// Starting center; the problem's interior point when absent.
    pub center_override: Option<DVector<f64>>,
}

impl Default for EpmConfig {
    fn default() -> Self {
        Self {
            k: 10.0,
            k_growth: 1.25,
            alpha: 0.5,
            gamma: 1e-6,
            delta_reduction: 0.05,
            epsilon: 1e-8,
            max_outer: 100,
            max_inner: 200,
            inner_grad_tol: 1e-10,
            use_gap_rule: true,
            center_update_enabled: true,
            linesearch_grid: 64,
            lambda0: None,
            center_override: None,
        }
    }
}

impl EpmConfig {
    /// Defaults with the feasibility margin scaled to the problem's interior
    /// slack, so tightly constrained instances do not reject their own
    /// starting center.
    pub fn for_problem(p: &ProblemInstance) -> Self {
        let mut cfg = Self::default();
        if let Some(y) = p.interior_point() {
            if let Ok(bundle) = evaluate(p, y, EvalOrder::Value) {
                let min_slack = bundle.c_vals.min();
                if min_slack.is_finite() && min_slack > 0.0 {
                    cfg.gamma = (min_slack / 100.0).clamp(1e-9, 1e-3);
                }
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::InvalidConfig(format!("k must be positive, got {}", self.k)));
        }
        if !(self.k_growth >= 1.0 && self.k_growth.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "k_growth must be at least 1, got {}",
                self.k_growth
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.delta_reduction > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "delta_reduction must be positive, got {}",
                self.delta_reduction
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidConfig(
                "iteration caps must be at least 1".into(),
            ));
        }
        if !(self.inner_grad_tol > 0.0) {
            return Err(Error::InvalidConfig(
                "inner_grad_tol must be positive".into(),
            ));
        }
        if self.linesearch_grid == 0 {
            return Err(Error::InvalidConfig("linesearch_grid must be at least 1".into()));
        }
        if let Some(l) = &self.lambda0 {
            if l.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidConfig(
                    "initial multipliers must be strictly positive".into(),
                ));
            }
        }
        Ok(())
    }

    fn inner(&self) -> InnerConfig {
        InnerConfig {
            alpha: self.alpha,
            use_gap_rule: self.use_gap_rule,
            max_iters: self.max_inner,
            grad_tol_abs: self.inner_grad_tol,
            ..InnerConfig::default()
        }
    }
}

/// Live driver state after an outer step.
#[derive(Debug, Clone)]
pub struct EpmState {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub center: Center,
    pub k: f64,
    pub outer_index: usize,
}

/// Telemetry for one outer step, recorded before any center move taken in
/// the same step becomes effective.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub outer_index: usize,
    /// Dual function value at the updated multipliers; NaN when the dual
    /// subproblem did not resolve.
    pub dual_val: f64,
    /// Objective of the equivalent problem at the step minimizer,
    /// `-ln(f(y) - f(x))`; together with `dual_val` this exposes the
    /// per-step duality gap.
    pub primal_f: f64,
    pub merit: f64,
    /// `sum_i lambda_i |c_i|` at the step's minimizer.
    pub complementarity: f64,
    pub inner_iters: usize,
    /// Spectral condition number of the inner Hessian at the minimizer;
    /// absent for problems without Hessian oracles.
    pub edf_hessian_cond: Option<f64>,
    /// Whether this step moved the center (effective from the next step).
    pub center_updated: bool,
    pub k_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    IterCap,
    InnerFailure,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x_final: DVector<f64>,
    pub lambda_final: DVector<f64>,
    pub merit_final: f64,
    pub trajectory: Vec<IterationRecord>,
    /// Running average of the outer minimizers.
    pub ergodic_x: DVector<f64>,
    /// Indices with multipliers above `sqrt(eps)`.
    pub active_set_estimate: Vec<usize>,
    pub failure_detail: Option<String>,
}

struct StepOut {
    record: IterationRecord,
    x_bar: DVector<f64>,
    lambda_next: DVector<f64>,
    new_center: Option<Center>,
}

fn outer_step(
    p: &ProblemInstance,
    cfg: &EpmConfig,
    center: &Center,
    x_prev: Option<&DVector<f64>>,
    lambda: &DVector<f64>,
    k: f64,
    outer_index: usize,
) -> Result<StepOut> {
    let params = EdfParams::new(k, lambda.clone())?;
    let in_domain = |x: &DVector<f64>| -> Result<bool> {
        Ok(edf_eval(p, x, center, &params, EvalOrder::Value)?.in_domain())
    };
    // Warm start from the previous minimizer when it is still in domain;
    // otherwise step off the center, which sits on the level boundary.
    let start = match x_prev {
        Some(x) if in_domain(x)? => x.clone(),
        _ => pull_into_level(p, center, in_domain)?,
    };

    let inner = relaxation_operator(p, center, &params, &cfg.inner(), &start)?;
    let x_bar = inner.x.clone();
    let lambda_next = inner.lambda_bar.clone();

    let bundle = evaluate(p, &x_bar, EvalOrder::Value)?;
    let f_bar = bundle.f_val;
    let primal_f = -(center.f_y - f_bar).ln();
    let complementarity: f64 = lambda_next
        .iter()
        .zip(bundle.c_vals.iter())
        .map(|(l, c)| l * c.abs())
        .sum();
    let merit_val = merit(p, &x_bar, &lambda_next, center)?.value;
    let dual_val = dual_value(p, center, &lambda_next, Some(&x_bar))
        .map(|d| d.value)
        .unwrap_or(f64::NAN);
    let edf_hessian_cond = if p.has_hessians() {
        edf_eval(p, &x_bar, center, &params, EvalOrder::Hessian)?
            .hessian
            .as_ref()
            .map(condition_number)
    } else {
        None
    };

    let mut new_center = None;
    if cfg.center_update_enabled {
        if let Some(c) = center_update(p, center, &x_bar, cfg.linesearch_grid, cfg.delta_reduction)? {
            // Keep the minimizer strictly inside the new level set, else the
            // next warm start would be stranded on or above the boundary.
            if c.f_y - f_bar > 0.0 {
                new_center = Some(c);
            }
        }
    }

    Ok(StepOut {
        record: IterationRecord {
            outer_index,
            dual_val,
            primal_f,
            merit: merit_val,
            complementarity,
            inner_iters: inner.iterations,
            edf_hessian_cond,
            center_updated: new_center.is_some(),
            k_used: k,
        },
        x_bar,
        lambda_next,
        new_center,
    })
}

/// Runs the outer loop to the merit tolerance, the outer iteration cap, or
/// an unrecoverable numerical failure (reported in the result, not raised).
pub fn solve(p: &ProblemInstance, cfg: &EpmConfig) -> Result<SolveResult> {
    solve_with_observer(p, cfg, |_| {})
}

/// Like [`solve`] but streams each [`IterationRecord`] to the observer as
/// soon as it exists, so callers can log trajectories incrementally.
pub fn solve_with_observer<F>(
    p: &ProblemInstance,
    cfg: &EpmConfig,
    mut observer: F,
) -> Result<SolveResult>
where
    F: FnMut(&IterationRecord),
{
    cfg.validate()?;
    let y = match &cfg.center_override {
        Some(y) => y.clone(),
        None => p
            .interior_point()
            .ok_or_else(|| {
                Error::InvalidConfig(
                    "problem declares no interior point; provide a center".into(),
                )
            })?
            .clone(),
    };
    let mut center = Center::new(p, y, cfg.gamma)?;
    let mut lambda = match &cfg.lambda0 {
        Some(l) => {
            if l.len() != p.m() {
                return Err(Error::DimensionMismatch {
                    expected: p.m(),
                    got: l.len(),
                });
            }
            l.clone()
        }
        None => DVector::from_element(p.m(), 1.0),
    };
    let mut k = cfg.k;
    let mut x: Option<DVector<f64>> = None;
    let mut trajectory = Vec::new();
    let mut ergodic_sum = DVector::zeros(p.n());
    let mut steps = 0usize;
    let mut status = SolveStatus::IterCap;
    let mut failure_detail = None;

    for s in 0..cfg.max_outer {
        match outer_step(p, cfg, &center, x.as_ref(), &lambda, k, s) {
            Ok(out) => {
                let merit_now = out.record.merit;
                observer(&out.record);
                trajectory.push(out.record);
                ergodic_sum += &out.x_bar;
                steps += 1;
                x = Some(out.x_bar);
                if merit_now <= cfg.epsilon {
                    // The convergence certificate is the pair (x_bar,
                    // lambda_bar), so the update is applied even when this
                    // step also moved the center.
                    lambda = out.lambda_next;
                    status = SolveStatus::Converged;
                    break;
                }
                // A center move invalidates the multiplier scale (it tracks
                // 1/gap), so the step that moves the center keeps the old
                // multipliers and only the stationary steps apply the
                // rescaling update.
                if let Some(c) = out.new_center {
                    center = c;
                } else {
                    lambda = out.lambda_next;
                }
                k *= cfg.k_growth;
            }
            Err(e) => {
                status = SolveStatus::InnerFailure;
                failure_detail = Some(e.to_string());
                break;
            }
        }
    }

    let x_final = x.unwrap_or_else(|| center.y.clone());
    // The last record's merit is the one convergence was judged by; it is
    // measured against the center in effect during that step, which may
    // differ from the final center if the step also moved it.
    let merit_final = trajectory.last().map(|r: &IterationRecord| r.merit).unwrap_or(f64::NAN);
    let ergodic_x = if steps > 0 {
        ergodic_sum / steps as f64
    } else {
        x_final.clone()
    };
    let threshold = f64::EPSILON.sqrt();
    let active_set_estimate = lambda
        .iter()
        .enumerate()
        .filter(|(_, l)| **l > threshold)
        .map(|(i, _)| i)
        .collect();

    Ok(SolveResult {
        status,
        x_final,
        lambda_final: lambda,
        merit_final,
        trajectory,
        ergodic_x,
        active_set_estimate,
        failure_detail,
    })
}

/// Convenience wrapper for tests and oracles: level gap of `x` under the
/// problem's declared interior center.
pub fn level_gap_at_interior(p: &ProblemInstance, x: &DVector<f64>, gamma: f64) -> Result<f64> {
    let y = p
        .interior_point()
        .ok_or_else(|| Error::InvalidConfig("problem declares no interior point".into()))?
        .clone();
    let center = Center::new(p, y, gamma)?;
    delta(p, x, &center)
}
