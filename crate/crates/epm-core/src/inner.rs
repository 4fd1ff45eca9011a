//! Damped Newton minimization of the exterior distance function with the
//! multiplier gap stopping rule.
//!
//! The inner problem is smooth and convex on its open domain, so the
//! generic Newton core does the work; this module contributes the stopping
//! logic. The primary rule compares the gradient against the pending
//! multiplier change: with `lambda_bar_i = lambda_i / (k c_i(x) + 1)`, the
//! iteration stops once
//!
//! ```text
//! ||grad E(x)||_inf <= (alpha / k) * ||lambda_bar - lambda||_inf
//! ```
//!
//! which ties inner accuracy to the progress the next multiplier update can
//! make. An absolute gradient tolerance acts as a fallback so the rule
//! cannot spin near a fixed point where `lambda_bar == lambda`.

use nalgebra::DVector;

use crate::edf::{edf_eval, Center, EdfParams};
use crate::error::{Error, Result};
use crate::newton::{minimize_smooth, NewtonOptions, StopKind};
use crate::problem::{evaluate, EvalOrder, ProblemInstance};

/// Configuration of one inner minimization.
#[derive(Debug, Clone)]
pub struct InnerConfig {
    /// Gap rule coefficient in `(0, 1)`.
    pub alpha: f64,
    /// Disabling the gap rule leaves only the absolute tolerance; useful
    /// when a test needs the exact multiplier map rather than its truncation.
    pub use_gap_rule: bool,
    pub max_iters: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    /// Fallback stop `||grad||_inf <= grad_tol_abs`.
    pub grad_tol_abs: f64,
    /// Levenberg shift added before the first factorization attempt.
    pub hessian_regularization: f64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            use_gap_rule: true,
            max_iters: 200,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            grad_tol_abs: 1e-10,
            hessian_regularization: 0.0,
        }
    }
}

impl InnerConfig {
    /// Preset for oracle-grade solves: gap rule off, gradient pushed to
    /// near the floating point floor.
    pub fn tight() -> Self {
        Self {
            use_gap_rule: false,
            grad_tol_abs: 1e-12,
            max_iters: 400,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "armijo_c must lie in (0, 1), got {}",
                self.armijo_c
            )));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            )));
        }
        if !(self.grad_tol_abs > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "grad_tol_abs must be positive, got {}",
                self.grad_tol_abs
            )));
        }
        if !(self.hessian_regularization >= 0.0) {
            return Err(Error::InvalidConfig(
                "hessian_regularization must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Why the inner iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Gradient fell below the multiplier gap threshold.
    GapRule,
    /// Gradient fell below the absolute tolerance.
    AbsTol,
    /// Iteration budget exhausted; the caller decides whether the point is
    /// still usable.
    IterCap,
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub stop: StopReason,
    /// Pending multiplier update `lambda_i / (k c_i(x) + 1)` at the final
    /// iterate.
    pub lambda_bar: DVector<f64>,
}

fn lambda_bar_at(
    p: &ProblemInstance,
    x: &DVector<f64>,
    params: &EdfParams,
) -> Result<Option<DVector<f64>>> {
    let c_vals = evaluate(p, x, EvalOrder::Value)?.c_vals;
    let mut out = DVector::zeros(p.m());
    for i in 0..p.m() {
        let s = params.k * c_vals[i] + 1.0;
        if s <= 0.0 {
            return Ok(None);
        }
        out[i] = params.lambda[i] / s;
    }
    Ok(Some(out))
}

/// Minimizes the exterior distance function from `x0`, which must already
/// lie in its open domain.
pub fn minimize_edf(
    p: &ProblemInstance,
    center: &Center,
    params: &EdfParams,
    config: &InnerConfig,
    x0: &DVector<f64>,
) -> Result<InnerResult> {
    config.validate()?;
    let order = if p.has_hessians() {
        EvalOrder::Hessian
    } else {
        EvalOrder::Gradient
    };
    let opts = NewtonOptions {
        max_iters: config.max_iters,
        armijo_c: config.armijo_c,
        backtrack_factor: config.backtrack_factor,
        initial_shift: config.hessian_regularization,
    };

    let mut stop_err: Option<Error> = None;
    let outcome = minimize_smooth(
        |x| edf_eval(p, x, center, params, order),
        x0,
        &opts,
        |_, x, e| {
            let g = e.gradient.as_ref().expect("in domain").amax();
            if g <= config.grad_tol_abs {
                return Some(StopReason::AbsTol);
            }
            if config.use_gap_rule {
                match lambda_bar_at(p, x, params) {
                    Ok(Some(bar)) => {
                        let gap = (&bar - &params.lambda).amax();
                        if g <= config.alpha / params.k * gap {
                            return Some(StopReason::GapRule);
                        }
                    }
                    Ok(None) => {}
                    Err(e) => {
                        stop_err = Some(e);
                        return Some(StopReason::IterCap);
                    }
                }
            }
            None
        },
    )?;
    if let Some(e) = stop_err {
        return Err(e);
    }

    let finish = |x: DVector<f64>, value: f64, grad_norm: f64, iterations: usize, stop| {
        let bar = lambda_bar_at(p, &x, params)?.ok_or_else(|| {
            Error::Domain("inner iterate left the shifted slack domain".into())
        })?;
        Ok(InnerResult {
            x,
            value,
            grad_norm,
            iterations,
            stop,
            lambda_bar: bar,
        })
    };

    match outcome.stop {
        StopKind::Requested(r) => finish(
            outcome.x,
            outcome.value,
            outcome.grad_norm,
            outcome.iterations,
            r,
        ),
        StopKind::IterCap => finish(
            outcome.x,
            outcome.value,
            outcome.grad_norm,
            outcome.iterations,
            StopReason::IterCap,
        ),
        // A stall below tolerance would have stopped above, so a stall here
        // means the line search hit the arithmetic floor short of the target.
        StopKind::Stall => Err(Error::InnerSolveFailure {
            iterations: outcome.iterations,
            grad_norm: outcome.grad_norm,
            target: config.grad_tol_abs,
        }),
    }
}
