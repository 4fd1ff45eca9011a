//! Damped Newton core shared by the inner solver, the dual evaluator and the
//! interior center baseline.
//!
//! The objective is supplied as a closure returning a [`PointEval`]; points
//! outside the domain count as infinite during the line search, which keeps
//! every accepted iterate strictly inside.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::eval::PointEval;

/// First shift tried when the caller asked for none and the plain system is
/// not positive definite.
const SHIFT_LADDER_BASE: f64 = 1e-10;
/// Escalation cap; beyond this the system is reported as singular.
const SHIFT_LADDER_MAX: f64 = 1e8;
/// Step length floor of roughly 0.5^90 before a line search gives up.
const MAX_BACKTRACKS: usize = 90;

/// Solves `(H + sigma I) d = -g` for the smallest workable `sigma` from the
/// ladder `{shift, 10 shift, 100 shift, ...}` (starting at a small positive
/// value when `shift` is zero and plain `H` fails). Returns the direction and
/// the shift actually used. The direction satisfies `g' d < 0` whenever `g`
/// is nonzero.
pub fn newton_direction(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    shift: f64,
) -> Result<(DVector<f64>, f64)> {
    let n = g.len();
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: h.nrows(),
        });
    }
    let neg_g = -g;
    let mut sigma = shift.max(0.0);
    loop {
        let system = if sigma > 0.0 {
            h + DMatrix::identity(n, n) * sigma
        } else {
            h.clone()
        };
        if let Some(ch) = system.cholesky() {
            let d = ch.solve(&neg_g);
            let descent = g.dot(&d) < 0.0 || g.amax() == 0.0;
            if d.iter().all(|v| v.is_finite()) && descent {
                return Ok((d, sigma));
            }
        }
        sigma = if sigma == 0.0 {
            SHIFT_LADDER_BASE
        } else {
            sigma * 10.0
        };
        if sigma > SHIFT_LADDER_MAX {
            return Err(Error::SingularSystem {
                max_shift: SHIFT_LADDER_MAX,
            });
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOptions {
    pub max_iters: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub initial_shift: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            initial_shift: 0.0,
        }
    }
}

/// Why the iteration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StopKind<T> {
    /// The caller's stop test fired.
    Requested(T),
    /// Iteration budget exhausted.
    IterCap,
    /// No backtracking step achieved sufficient decrease; the iterate sits at
    /// the numerical floor of the objective.
    Stall,
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome<T> {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    /// Number of accepted steps.
    pub iterations: usize,
    pub stop: StopKind<T>,
}

/// Minimizes a smooth function with damped Newton steps (steepest descent
/// when no Hessian is supplied) under an Armijo backtracking line search.
///
/// `stop` is consulted after every evaluation, including the starting point,
/// so a start that already satisfies the caller's test returns with zero
/// iterations. Returning `Some(tag)` ends the run with that tag.
pub(crate) fn minimize_smooth<T, E, S>(
    mut eval: E,
    x0: &DVector<f64>,
    opts: &NewtonOptions,
    mut stop: S,
) -> Result<NewtonOutcome<T>>
where
    E: FnMut(&DVector<f64>) -> Result<PointEval>,
    S: FnMut(usize, &DVector<f64>, &PointEval) -> Option<T>,
{
    let mut x = x0.clone();
    let mut cur = eval(&x)?;
    if !cur.in_domain() {
        return Err(Error::StartOutOfDomain(format!(
            "{:?}",
            cur.violation.expect("out of domain carries a violation")
        )));
    }

    let mut iterations = 0usize;
    // Consecutive accepted steps whose decrease is below value resolution;
    // three in a row means the iterate is creeping at the arithmetic floor.
    let mut tiny_streak = 0usize;
    loop {
        let grad = cur
            .gradient
            .clone()
            .expect("in-domain evaluation must carry a gradient");
        if let Some(tag) = stop(iterations, &x, &cur) {
            return Ok(NewtonOutcome {
                x,
                value: cur.value.expect("in domain"),
                grad_norm: grad.amax(),
                iterations,
                stop: StopKind::Requested(tag),
            });
        }
        if tiny_streak >= 3 {
            return Ok(NewtonOutcome {
                x,
                value: cur.value.expect("in domain"),
                grad_norm: grad.amax(),
                iterations,
                stop: StopKind::Stall,
            });
        }
        if iterations >= opts.max_iters {
            return Ok(NewtonOutcome {
                x,
                value: cur.value.expect("in domain"),
                grad_norm: grad.amax(),
                iterations,
                stop: StopKind::IterCap,
            });
        }

        let (direction, _) = match cur.hessian.as_ref() {
            Some(h) => newton_direction(h, &grad, opts.initial_shift)?,
            None => (-&grad, 0.0),
        };
        let slope = grad.dot(&direction);
        let f0 = cur.value.expect("in domain");

        let mut t = 1.0;
        let mut accepted = None;
        let noise = f64::EPSILON * (1.0 + f0.abs());
        for _ in 0..MAX_BACKTRACKS {
            let xt = &x + &direction * t;
            let trial = eval(&xt)?;
            let armijo = trial.value_or_inf() <= f0 + opts.armijo_c * t * slope;
            // Below value resolution the Armijo comparison is decided by
            // rounding noise, which strands the last quadratic step; fall
            // back to accepting plain gradient descent there.
            let flat = (opts.armijo_c * t * slope).abs() <= noise
                && trial.value_or_inf() <= f0 + noise
                && trial
                    .gradient
                    .as_ref()
                    .is_some_and(|g| g.amax() < grad.amax());
            if armijo || flat {
                accepted = Some((xt, trial));
                break;
            }
            t *= opts.backtrack_factor;
        }
        match accepted {
            Some((xt, trial)) => {
                let improvement = f0 - trial.value.expect("accepted step is in domain");
                let new_grad = trial
                    .gradient
                    .as_ref()
                    .expect("accepted step is in domain")
                    .amax();
                // A quadratic tail makes sub-resolution value steps while
                // the gradient is still collapsing; only steps where both
                // the value and the gradient are stuck count as creep.
                let collapsing = new_grad <= 0.5 * grad.amax();
                x = xt;
                cur = trial;
                iterations += 1;
                let floor = f64::EPSILON * (1.0 + cur.value.expect("in domain").abs());
                if improvement <= floor && !collapsing {
                    tiny_streak += 1;
                } else {
                    tiny_streak = 0;
                }
            }
            None => {
                return Ok(NewtonOutcome {
                    x,
                    value: f0,
                    grad_norm: grad.amax(),
                    iterations,
                    stop: StopKind::Stall,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn direction_solves_identity_system() {
        let h = DMatrix::identity(2, 2);
        let g = DVector::from_vec(vec![2.0, 0.0]);
        let (d, shift) = newton_direction(&h, &g, 0.0).unwrap();
        assert_eq!(shift, 0.0);
        assert_relative_eq!(d[0], -2.0, max_relative = 1e-14);
        assert_relative_eq!(d[1], 0.0);
    }

    #[test]
    fn direction_falls_back_to_scaled_gradient_on_zero_hessian() {
        let h = DMatrix::zeros(1, 1);
        let g = DVector::from_element(1, 1.0);
        let (d, shift) = newton_direction(&h, &g, 1e-4).unwrap();
        assert_eq!(shift, 1e-4);
        assert_relative_eq!(d[0], -1e4, max_relative = 1e-12);
    }

    #[test]
    fn direction_escalates_from_zero_shift() {
        // Indefinite system with no requested shift still yields a descent
        // direction through the ladder.
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0]));
        let g = DVector::from_vec(vec![1.0, 1.0]);
        let (d, shift) = newton_direction(&h, &g, 0.0).unwrap();
        assert!(shift > 1.0, "needs a shift past the negative eigenvalue");
        assert!(g.dot(&d) < 0.0);
    }

    #[test]
    fn direction_reports_hopeless_systems() {
        let h = DMatrix::from_element(1, 1, -1e9);
        let g = DVector::from_element(1, 1.0);
        let err = newton_direction(&h, &g, 0.0).unwrap_err();
        assert!(matches!(err, crate::error::Error::SingularSystem { .. }));
    }

    fn quadratic_eval(x: &DVector<f64>) -> crate::error::Result<PointEval> {
        // 0.5 (x1 - 3)^2 + (x2 + 1)^2
        let g = DVector::from_vec(vec![x[0] - 3.0, 2.0 * (x[1] + 1.0)]);
        Ok(PointEval {
            value: Some(0.5 * (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2)),
            gradient: Some(g),
            hessian: Some(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]))),
            violation: None,
        })
    }

    #[test]
    fn minimizes_a_quadratic_in_one_newton_step() {
        let out = minimize_smooth(
            quadratic_eval,
            &DVector::from_vec(vec![10.0, 10.0]),
            &NewtonOptions::default(),
            |_, _, e| {
                let g = e.gradient.as_ref().unwrap();
                (g.amax() <= 1e-12).then_some("tol")
            },
        )
        .unwrap();
        assert!(matches!(out.stop, StopKind::Requested("tol")));
        assert_eq!(out.iterations, 1, "exact Newton step on a quadratic");
        assert_relative_eq!(out.x[0], 3.0, max_relative = 1e-12);
        assert_relative_eq!(out.x[1], -1.0, max_relative = 1e-12);
    }

    fn gated_log_eval(x: &DVector<f64>) -> crate::error::Result<PointEval> {
        // -ln(x) + x on x > 0, minimized at 1.
        if x[0] <= 0.0 {
            return Ok(PointEval::out_of_domain(crate::eval::DomainViolation {
                kind: crate::eval::ViolationKind::Constraint(0),
                amount: -x[0],
            }));
        }
        Ok(PointEval {
            value: Some(-x[0].ln() + x[0]),
            gradient: Some(DVector::from_element(1, 1.0 - 1.0 / x[0])),
            hessian: Some(DMatrix::from_element(1, 1, 1.0 / (x[0] * x[0]))),
            violation: None,
        })
    }

    #[test]
    fn line_search_respects_the_domain_gate() {
        let out = minimize_smooth(
            gated_log_eval,
            &DVector::from_element(1, 5.0),
            &NewtonOptions::default(),
            |_, _, e| (e.gradient.as_ref().unwrap().amax() <= 1e-12).then_some(()),
        )
        .unwrap();
        assert!(matches!(out.stop, StopKind::Requested(())));
        assert_relative_eq!(out.x[0], 1.0, max_relative = 1e-10);
    }

    #[test]
    fn out_of_domain_start_is_rejected() {
        let err = minimize_smooth(
            gated_log_eval,
            &DVector::from_element(1, -1.0),
            &NewtonOptions::default(),
            |_, _, _| None::<()>,
        )
        .unwrap_err();
        assert!(matches!(err, crate::error::Error::StartOutOfDomain(_)));
    }

    #[test]
    fn zero_tolerance_start_returns_immediately() {
        let out = minimize_smooth(
            quadratic_eval,
            &DVector::from_vec(vec![3.0, -1.0]),
            &NewtonOptions::default(),
            |_, _, e| (e.gradient.as_ref().unwrap().amax() <= 1e-12).then_some(()),
        )
        .unwrap();
        assert_eq!(out.iterations, 0);
    }
}
