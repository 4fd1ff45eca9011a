//! Interior distance baseline: the classical log barrier over the shrinking
//! level set, driven by the method of centers.
//!
//! With level `tau` and `m` constraints the interior distance function is
//!
//! ```text
//! H(x, tau) = -m ln(tau - f(x)) - sum_i ln c_i(x)
//! ```
//!
//! on `f(x) < tau`, `c(x) > 0`. The centering step minimizes `H`, reads off
//! multiplier estimates `lambda_i = (tau - f(x)) / (m c_i(x))`, and then
//! drops the level to `f(x)`. Because every new level touches the previous
//! minimizer, the barrier Hessian blows up as the level approaches the
//! optimum; the exterior method exists to avoid exactly that, and the
//! conditioning telemetry here is what the contrast is measured against.

use nalgebra::DVector;

use crate::diag::condition_number;
use crate::error::{Error, Result};
use crate::eval::{DomainViolation, PointEval, ViolationKind};
use crate::newton::{minimize_smooth, NewtonOptions, StopKind};
use crate::problem::{evaluate, EvalOrder, ProblemInstance};

/// Inner minimization settings for one centering step.
#[derive(Debug, Clone)]
pub struct IcmConfig {
    pub grad_tol: f64,
    pub max_inner: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    /// Relative level drop below which [`run_icm`] stops: the level sits at
    /// working precision and another step could not even open the gap. The
    /// multiplier estimates are quotients of vanishing quantities and turn
    /// to noise a few steps before this floor, which is why it is well
    /// above machine epsilon.
    pub level_drop_floor: f64,
}

impl Default for IcmConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_inner: 200,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            level_drop_floor: 1e3 * f64::EPSILON,
        }
    }
}

/// Current level, center and multiplier estimates of the method of centers.
#[derive(Debug, Clone)]
pub struct IdfState {
    pub x: DVector<f64>,
    pub tau: f64,
    /// Original problem multiplier estimates; zeros before the first step.
    pub lambda: DVector<f64>,
    pub step_index: usize,
}

impl IdfState {
    /// Starts at a strictly feasible point with the level at its objective
    /// value.
    pub fn start(p: &ProblemInstance, y: DVector<f64>) -> Result<Self> {
        let bundle = evaluate(p, &y, EvalOrder::Value)?;
        for i in 0..p.m() {
            if bundle.c_vals[i] <= 0.0 {
                return Err(Error::Domain(format!(
                    "starting point violates constraint {i}: c = {}",
                    bundle.c_vals[i]
                )));
            }
        }
        Ok(Self {
            x: y,
            tau: bundle.f_val,
            lambda: DVector::zeros(p.m()),
            step_index: 0,
        })
    }
}

/// Telemetry of one centering step.
#[derive(Debug, Clone)]
pub struct IdfStepRecord {
    pub step_index: usize,
    pub tau_before: f64,
    pub f_after: f64,
    pub lambda: DVector<f64>,
    pub grad_norm: f64,
    pub inner_iters: usize,
    /// Barrier Hessian condition number at the step minimizer.
    pub hessian_cond: Option<f64>,
    /// The inner iteration could not reach `grad_tol`; the point is still
    /// accepted because the barrier floor rises with its conditioning.
    pub stalled: bool,
}

/// Evaluates the interior distance function at level `tau`.
pub fn idf_eval(
    p: &ProblemInstance,
    x: &DVector<f64>,
    tau: f64,
    order: EvalOrder,
) -> Result<PointEval> {
    let bundle = evaluate(p, x, order)?;
    let gap = tau - bundle.f_val;
    if gap <= 0.0 {
        return Ok(PointEval::out_of_domain(DomainViolation {
            kind: ViolationKind::ObjectiveLevel,
            amount: -gap,
        }));
    }
    for i in 0..p.m() {
        if bundle.c_vals[i] <= 0.0 {
            return Ok(PointEval::out_of_domain(DomainViolation {
                kind: ViolationKind::Constraint(i),
                amount: -bundle.c_vals[i],
            }));
        }
    }
    let m = p.m() as f64;
    let mut value = -m * gap.ln();
    for i in 0..p.m() {
        value -= bundle.c_vals[i].ln();
    }

    let mut out = PointEval {
        value: Some(value),
        gradient: None,
        hessian: None,
        violation: None,
    };

    if order.wants_gradient() {
        let f_grad = bundle.f_grad.as_ref().expect("order");
        let jac = bundle.c_jac.as_ref().expect("order");
        let mut g = f_grad * (m / gap);
        for i in 0..p.m() {
            g -= jac.row(i).transpose() / bundle.c_vals[i];
        }
        out.gradient = Some(g);
    }

    if order.wants_hessian() {
        let f_grad = bundle.f_grad.as_ref().expect("order");
        let f_hess = bundle.f_hess.as_ref().expect("order");
        let jac = bundle.c_jac.as_ref().expect("order");
        let c_hess = bundle.c_hess.as_ref().expect("order");
        let mut h = (f_grad * f_grad.transpose()) * (m / (gap * gap)) + f_hess * (m / gap);
        for i in 0..p.m() {
            let ci = bundle.c_vals[i];
            let gi = jac.row(i).transpose();
            h -= &c_hess[i] / ci;
            h += (&gi * gi.transpose()) / (ci * ci);
        }
        out.hessian = Some(h);
    }

    Ok(out)
}

/// Steps off the level boundary along the objective descent direction. The
/// state's point always sits exactly on its own level after a step, so each
/// centering run has to open the gap first.
fn pull_below_level(
    p: &ProblemInstance,
    x: &DVector<f64>,
    tau: f64,
) -> Result<DVector<f64>> {
    if idf_eval(p, x, tau, EvalOrder::Value)?.in_domain() {
        return Ok(x.clone());
    }
    let g = evaluate(p, x, EvalOrder::Gradient)?
        .f_grad
        .expect("gradient order");
    let norm = g.norm();
    if norm == 0.0 {
        return Err(Error::Domain(
            "level touches an unconstrained minimizer; nothing below it".into(),
        ));
    }
    let d = -g / norm;
    let mut t = 1.0;
    for _ in 0..80 {
        let cand = x + &d * t;
        if idf_eval(p, &cand, tau, EvalOrder::Value)?.in_domain() {
            return Ok(cand);
        }
        t *= 0.5;
    }
    Err(Error::StartOutOfDomain(
        "no interior point found below the current level".into(),
    ))
}

/// One centering step: minimize the barrier at the current level, read the
/// multiplier estimates, drop the level to the minimizer's value.
pub fn icm_step(
    p: &ProblemInstance,
    state: &IdfState,
    cfg: &IcmConfig,
) -> Result<(IdfState, IdfStepRecord)> {
    if p.m() == 0 {
        return Err(Error::InvalidConfig(
            "the interior distance needs at least one constraint".into(),
        ));
    }
    let tau = state.tau;
    let start = pull_below_level(p, &state.x, tau)?;
    let order = if p.has_hessians() {
        EvalOrder::Hessian
    } else {
        EvalOrder::Gradient
    };
    let opts = NewtonOptions {
        max_iters: cfg.max_inner,
        armijo_c: cfg.armijo_c,
        backtrack_factor: cfg.backtrack_factor,
        initial_shift: 0.0,
    };
    let outcome = minimize_smooth(
        |x| idf_eval(p, x, tau, order),
        &start,
        &opts,
        |_, _, e| (e.gradient.as_ref().expect("in domain").amax() <= cfg.grad_tol).then_some(()),
    )?;
    // Stalls and iteration caps are accepted: near the optimum the barrier
    // Hessian condition number diverges and the achievable gradient floor
    // rises with it, which is precisely the phenomenon this baseline is
    // meant to exhibit.
    let stalled = !matches!(outcome.stop, StopKind::Requested(()));

    let x_hat = outcome.x;
    let bundle = evaluate(p, &x_hat, EvalOrder::Value)?;
    let f_hat = bundle.f_val;
    let gap = tau - f_hat;
    if gap <= 0.0 {
        return Err(Error::Domain(format!(
            "centering step failed to descend below the level: gap {gap}"
        )));
    }
    let m = p.m() as f64;
    let mut lambda = DVector::zeros(p.m());
    for i in 0..p.m() {
        lambda[i] = gap / (m * bundle.c_vals[i]);
    }
    let hessian_cond = if p.has_hessians() {
        idf_eval(p, &x_hat, tau, EvalOrder::Hessian)?
            .hessian
            .as_ref()
            .map(condition_number)
    } else {
        None
    };

    let record = IdfStepRecord {
        step_index: state.step_index,
        tau_before: tau,
        f_after: f_hat,
        lambda: lambda.clone(),
        grad_norm: outcome.grad_norm,
        inner_iters: outcome.iterations,
        hessian_cond,
        stalled,
    };
    let next = IdfState {
        x: x_hat,
        tau: f_hat,
        lambda,
        step_index: state.step_index + 1,
    };
    Ok((next, record))
}

/// Runs up to `steps` centering steps from `y`, stopping early once the
/// level drop falls under the configured floor (working precision reached).
pub fn run_icm(
    p: &ProblemInstance,
    y: DVector<f64>,
    steps: usize,
    cfg: &IcmConfig,
) -> Result<(IdfState, Vec<IdfStepRecord>)> {
    let mut state = IdfState::start(p, y)?;
    let mut records = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (next, record) = icm_step(p, &state, cfg)?;
        let progress = record.tau_before - record.f_after;
        let floor = cfg.level_drop_floor * record.tau_before.abs().max(1.0);
        records.push(record);
        state = next;
        if progress <= floor {
            break;
        }
    }
    Ok((state, records))
}
