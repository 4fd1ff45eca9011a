//! The exterior distance function, its classical Lagrangian companion, and
//! the dual value oracle.
//!
//! For a center `y` with `f(y) > min f`, the transformed objective is
//! `F(x, y) = -ln(f(y) - f(x))`, defined on the level set `f(x) < f(y)`.
//! The exterior distance function couples `F` with rescaled logarithms of
//! the shifted constraint slacks:
//!
//! ```text
//! E(x) = -ln(f(y) - f(x)) - (1/k) * sum_i lambda_i * ln(k c_i(x) + 1)
//! ```
//!
//! Its domain allows constraint violations up to `-1/k`, so minimizers
//! approach the feasible set from outside as the multipliers converge. All
//! stopping logic in this crate measures vectors in the max norm.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::eval::{DomainViolation, PointEval, ViolationKind};
use crate::newton::{minimize_smooth, NewtonOptions, StopKind};
use crate::problem::{evaluate, EvalOrder, ProblemInstance};

/// Gradient tolerance used when evaluating the dual function numerically.
const DUAL_GRAD_TOL: f64 = 1e-10;
/// For extreme multipliers the inner minimizer presses against the level
/// boundary and line search progress drops below value resolution before
/// the gradient does. The dual value error is quadratic in the gradient
/// residual, so accepting such a point still certifies roughly `1e-12`
/// accuracy in the value itself.
const DUAL_GRAD_ACCEPT: f64 = 1e-6;
const DUAL_MAX_ITERS: usize = 300;

/// A strictly feasible anchor point with its cached objective value.
#[derive(Debug, Clone)]
pub struct Center {
    pub y: DVector<f64>,
    pub f_y: f64,
    /// Slack margin every constraint had to clear at `y`.
    pub gamma: f64,
}

impl Center {
    /// Validates `c_i(y) >= gamma` for all constraints and caches `f(y)`.
    pub fn new(p: &ProblemInstance, y: DVector<f64>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be positive and finite, got {gamma}"
            )));
        }
        let bundle = evaluate(p, &y, EvalOrder::Value)?;
        for i in 0..p.m() {
            if bundle.c_vals[i] < gamma {
                return Err(Error::Domain(format!(
                    "center slack c_{i} = {} is below gamma = {gamma}",
                    bundle.c_vals[i]
                )));
            }
        }
        Ok(Self {
            y,
            f_y: bundle.f_val,
            gamma,
        })
    }
}

/// Penalty level and multipliers for one exterior distance evaluation.
#[derive(Debug, Clone)]
pub struct EdfParams {
    /// Penalty parameter, `k > 0`.
    pub k: f64,
    /// Strictly positive multiplier vector.
    pub lambda: DVector<f64>,
}

impl EdfParams {
    pub fn new(k: f64, lambda: DVector<f64>) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidConfig(format!("k must be positive, got {k}")));
        }
        if lambda.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidConfig(
                "multipliers must be strictly positive".into(),
            ));
        }
        Ok(Self { k, lambda })
    }

    pub fn ones(k: f64, m: usize) -> Result<Self> {
        Self::new(k, DVector::from_element(m, 1.0))
    }
}

/// `ln(t + 1)` on `t > -1`.
pub fn psi(t: f64) -> Result<f64> {
    if t <= -1.0 {
        return Err(Error::Domain(format!("psi argument {t} is at or below -1")));
    }
    Ok(t.ln_1p())
}

/// First derivative `1 / (t + 1)`.
pub fn psi_prime(t: f64) -> Result<f64> {
    if t <= -1.0 {
        return Err(Error::Domain(format!("psi argument {t} is at or below -1")));
    }
    Ok(1.0 / (t + 1.0))
}

/// Second derivative `-1 / (t + 1)^2`.
pub fn psi_second(t: f64) -> Result<f64> {
    if t <= -1.0 {
        return Err(Error::Domain(format!("psi argument {t} is at or below -1")));
    }
    Ok(-1.0 / ((t + 1.0) * (t + 1.0)))
}

/// Objective level gap `f(y) - f(x)`. May be zero or negative; the exterior
/// distance function is only defined where it is positive.
pub fn delta(p: &ProblemInstance, x: &DVector<f64>, center: &Center) -> Result<f64> {
    Ok(center.f_y - evaluate(p, x, EvalOrder::Value)?.f_val)
}

/// Evaluates the exterior distance function at `x` to the requested order.
///
/// Out of domain points (closed level gap, or a shifted slack at or below
/// zero) produce a [`PointEval`] with the violation recorded instead of an
/// error; line searches treat them as infinite.
pub fn edf_eval(
    p: &ProblemInstance,
    x: &DVector<f64>,
    center: &Center,
    params: &EdfParams,
    order: EvalOrder,
) -> Result<PointEval> {
    if params.lambda.len() != p.m() {
        return Err(Error::DimensionMismatch {
            expected: p.m(),
            got: params.lambda.len(),
        });
    }
    let bundle = evaluate(p, x, order)?;
    let gap = center.f_y - bundle.f_val;
    if gap <= 0.0 {
        return Ok(PointEval::out_of_domain(DomainViolation {
            kind: ViolationKind::ObjectiveLevel,
            amount: -gap,
        }));
    }
    let k = params.k;
    let mut shifted = DVector::zeros(p.m());
    for i in 0..p.m() {
        let t = k * bundle.c_vals[i];
        if t <= -1.0 {
            return Ok(PointEval::out_of_domain(DomainViolation {
                kind: ViolationKind::Constraint(i),
                amount: -(t + 1.0),
            }));
        }
        shifted[i] = t;
    }

    let mut value = -gap.ln();
    for i in 0..p.m() {
        value -= params.lambda[i] / k * shifted[i].ln_1p();
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
        let mut g = f_grad / gap;
        for i in 0..p.m() {
            let w = params.lambda[i] / (shifted[i] + 1.0);
            g -= jac.row(i).transpose() * w;
        }
        out.gradient = Some(g);
    }

    if order.wants_hessian() {
        let f_grad = bundle.f_grad.as_ref().expect("order");
        let f_hess = bundle.f_hess.as_ref().expect("order");
        let jac = bundle.c_jac.as_ref().expect("order");
        let c_hess = bundle.c_hess.as_ref().expect("order");
        let mut h = (f_grad * f_grad.transpose()) / (gap * gap) + f_hess / gap;
        for i in 0..p.m() {
            let s1 = shifted[i] + 1.0;
            let gi = jac.row(i).transpose();
            h -= &c_hess[i] * (params.lambda[i] / s1);
            h += (&gi * gi.transpose()) * (k * params.lambda[i] / (s1 * s1));
        }
        out.hessian = Some(h);
    }

    Ok(out)
}

/// Evaluates the classical Lagrangian of the transformed problem,
/// `L(x, lambda) = -ln(f(y) - f(x)) - sum_i lambda_i c_i(x)`,
/// on the level set `f(x) < f(y)`.
pub fn lagrangian_eval(
    p: &ProblemInstance,
    x: &DVector<f64>,
    center: &Center,
    lambda: &DVector<f64>,
    order: EvalOrder,
) -> Result<PointEval> {
    if lambda.len() != p.m() {
        return Err(Error::DimensionMismatch {
            expected: p.m(),
            got: lambda.len(),
        });
    }
    let bundle = evaluate(p, x, order)?;
    let gap = center.f_y - bundle.f_val;
    if gap <= 0.0 {
        return Ok(PointEval::out_of_domain(DomainViolation {
            kind: ViolationKind::ObjectiveLevel,
            amount: -gap,
        }));
    }

    let mut out = PointEval {
        value: Some(-gap.ln() - lambda.dot(&bundle.c_vals)),
        gradient: None,
        hessian: None,
        violation: None,
    };

    if order.wants_gradient() {
        let f_grad = bundle.f_grad.as_ref().expect("order");
        let jac = bundle.c_jac.as_ref().expect("order");
        out.gradient = Some(f_grad / gap - jac.transpose() * lambda);
    }

    if order.wants_hessian() {
        let f_grad = bundle.f_grad.as_ref().expect("order");
        let f_hess = bundle.f_hess.as_ref().expect("order");
        let c_hess = bundle.c_hess.as_ref().expect("order");
        let mut h = (f_grad * f_grad.transpose()) / (gap * gap) + f_hess / gap;
        for i in 0..p.m() {
            h -= &c_hess[i] * lambda[i];
        }
        out.hessian = Some(h);
    }

    Ok(out)
}

/// Converts multipliers of the original stationarity system into multipliers
/// of the transformed problem by dividing through the level gap at the
/// solution. Fails when the gap is not positive.
pub fn rescale_multipliers(lambda: &DVector<f64>, gap: f64) -> Result<DVector<f64>> {
    if !(gap > 0.0 && gap.is_finite()) {
        return Err(Error::Domain(format!(
            "level gap must be positive to rescale multipliers, got {gap}"
        )));
    }
    Ok(lambda / gap)
}

/// Merit of a primal/dual pair for the transformed problem: the largest of
/// the Lagrangian gradient norm, the complementarity sum
/// `sum_i lambda_i |c_i(x)|`, and the worst constraint violation.
#[derive(Debug, Clone, Copy)]
pub struct MeritValue {
    /// Infinite when the level gap is closed at `x`.
    pub value: f64,
    pub in_level_domain: bool,
}

pub fn merit(
    p: &ProblemInstance,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
    center: &Center,
) -> Result<MeritValue> {
    let eval = lagrangian_eval(p, x, center, lambda, EvalOrder::Gradient)?;
    if !eval.in_domain() {
        return Ok(MeritValue {
            value: f64::INFINITY,
            in_level_domain: false,
        });
    }
    let grad_term = eval.gradient.expect("in domain").amax();
    let c_vals = evaluate(p, x, EvalOrder::Value)?.c_vals;
    let comp_term: f64 = lambda
        .iter()
        .zip(c_vals.iter())
        .map(|(l, c)| l * c.abs())
        .sum();
    let feas_term = c_vals.iter().map(|c| -c).fold(f64::NEG_INFINITY, f64::max);
    Ok(MeritValue {
        value: grad_term.max(comp_term).max(feas_term),
        in_level_domain: true,
    })
}

/// Steps from the center into the open level set along the steepest descent
/// direction of `f`. The center itself sits on the level boundary, so every
/// routine minimizing over the level set starts from such a pulled point.
pub(crate) fn pull_into_level<A>(
    p: &ProblemInstance,
    center: &Center,
    accept: A,
) -> Result<DVector<f64>>
where
    A: Fn(&DVector<f64>) -> Result<bool>,
{
    let bundle = evaluate(p, &center.y, EvalOrder::Gradient)?;
    let g = bundle.f_grad.expect("gradient order");
    let norm = g.norm();
    if norm == 0.0 {
        return Err(Error::Domain(
            "center is an unconstrained minimizer; the level set below it is empty".into(),
        ));
    }
    let d = -g / norm;
    let mut t = 1.0;
    for _ in 0..80 {
        let x = &center.y + &d * t;
        if accept(&x)? {
            return Ok(x);
        }
        t *= 0.5;
    }
    Err(Error::StartOutOfDomain(
        "no strictly interior point found along the descent ray from the center".into(),
    ))
}

/// Dual function value `d(lambda) = inf_x L(x, lambda)` with its argmin.
#[derive(Debug, Clone)]
pub struct DualValue {
    pub value: f64,
    pub argmin: DVector<f64>,
}

/// Evaluates the dual function of the transformed problem by minimizing the
/// Lagrangian to a max norm gradient of `1e-10`.
///
/// The infimum must be attained for the requested `lambda`; when the inner
/// iteration cannot reach tolerance the call fails rather than returning a
/// misleading value. A warm start (typically the latest primal iterate)
/// makes this cheap along a multiplier trajectory.
pub fn dual_value(
    p: &ProblemInstance,
    center: &Center,
    lambda: &DVector<f64>,
    warm_start: Option<&DVector<f64>>,
) -> Result<DualValue> {
    if lambda.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::InvalidConfig(
            "dual evaluation needs nonnegative multipliers".into(),
        ));
    }
    let order = if p.has_hessians() {
        EvalOrder::Hessian
    } else {
        EvalOrder::Gradient
    };

    let start = match warm_start {
        Some(x) if lagrangian_eval(p, x, center, lambda, EvalOrder::Value)?.in_domain() => x.clone(),
        _ => pull_into_level(p, center, |x| {
            Ok(lagrangian_eval(p, x, center, lambda, EvalOrder::Value)?.in_domain())
        })?,
    };

    let outcome = minimize_smooth(
        |x| lagrangian_eval(p, x, center, lambda, order),
        &start,
        &NewtonOptions {
            max_iters: DUAL_MAX_ITERS,
            ..NewtonOptions::default()
        },
        |_, _, e| {
            (e.gradient.as_ref().expect("in domain").amax() <= DUAL_GRAD_TOL).then_some(())
        },
    )?;

    match outcome.stop {
        StopKind::Requested(()) => Ok(DualValue {
            value: outcome.value,
            argmin: outcome.x,
        }),
        StopKind::IterCap | StopKind::Stall if outcome.grad_norm <= DUAL_GRAD_ACCEPT => {
            Ok(DualValue {
                value: outcome.value,
                argmin: outcome.x,
            })
        }
        StopKind::IterCap | StopKind::Stall => Err(Error::InnerSolveFailure {
            iterations: outcome.iterations,
            grad_norm: outcome.grad_norm,
            target: DUAL_GRAD_TOL,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::builtin_by_name;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn toy_center(gamma: f64) -> (ProblemInstance, Center) {
        let p = builtin_by_name("TOY1D").unwrap();
        let c = Center::new(&p, DVector::from_element(1, 1.0), gamma).unwrap();
        (p, c)
    }

    #[test]
    fn psi_family_at_zero() {
        assert_eq!(psi(0.0).unwrap(), 0.0);
        assert_eq!(psi_prime(0.0).unwrap(), 1.0);
        assert_eq!(psi_second(0.0).unwrap(), -1.0);
        assert_relative_eq!(
            psi(std::f64::consts::E - 1.0).unwrap(),
            1.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn psi_rejects_arguments_at_or_below_minus_one() {
        assert!(psi(-1.0).is_err());
        assert!(psi_prime(-1.5).is_err());
        assert!(psi_second(-1.0).is_err());
    }

    #[test]
    fn center_rejects_thin_slack() {
        let p = builtin_by_name("TOY1D").unwrap();
        let err = Center::new(&p, DVector::from_element(1, 1e-6), 1e-4).unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err}");
    }

    #[test]
    fn params_require_positive_entries() {
        assert!(EdfParams::new(0.0, DVector::from_element(1, 1.0)).is_err());
        assert!(EdfParams::new(1.0, DVector::from_element(1, 0.0)).is_err());
        assert!(EdfParams::new(1.0, DVector::from_element(1, 1.0)).is_ok());
    }

    #[test]
    fn level_gap_on_toy_problem() {
        let (p, c) = toy_center(1e-4);
        assert_eq!(delta(&p, &DVector::zeros(1), &c).unwrap(), 1.0);
        assert_eq!(delta(&p, &DVector::from_element(1, 2.0), &c).unwrap(), -1.0);
    }

    #[test]
    fn edf_vanishes_at_the_toy_solution_with_unit_multiplier() {
        let (p, c) = toy_center(1e-4);
        let params = EdfParams::new(9.0, DVector::from_element(1, 1.0)).unwrap();
        let e = edf_eval(&p, &DVector::zeros(1), &c, &params, EvalOrder::Hessian).unwrap();
        assert_abs_diff_eq!(e.value.unwrap(), 0.0);
        assert_abs_diff_eq!(e.gradient.as_ref().unwrap()[0], 0.0);
        // 1/gap^2 + k * lambda at the solution.
        assert_relative_eq!(e.hessian.as_ref().unwrap()[(0, 0)], 10.0, max_relative = 1e-14);
    }

    #[test]
    fn edf_stationary_point_matches_closed_form() {
        // With multiplier 2 and k = 9 the minimizer is (lambda-1)/(k+lambda).
        let (p, c) = toy_center(1e-4);
        let params = EdfParams::new(9.0, DVector::from_element(1, 2.0)).unwrap();
        let x = DVector::from_element(1, 1.0 / 11.0);
        let e = edf_eval(&p, &x, &c, &params, EvalOrder::Gradient).unwrap();
        assert_abs_diff_eq!(e.gradient.as_ref().unwrap()[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn edf_flags_closed_level_gap() {
        let (p, c) = toy_center(1e-4);
        let params = EdfParams::ones(9.0, 1).unwrap();
        let e = edf_eval(&p, &DVector::from_element(1, 1.0), &c, &params, EvalOrder::Value).unwrap();
        assert!(!e.in_domain());
        assert_eq!(
            e.violation.unwrap().kind,
            ViolationKind::ObjectiveLevel
        );
        assert_eq!(e.value_or_inf(), f64::INFINITY);
    }

    #[test]
    fn edf_flags_deep_constraint_violation() {
        let (p, c) = toy_center(1e-4);
        let params = EdfParams::ones(9.0, 1).unwrap();
        // k c + 1 = 9*(-0.2) + 1 = -0.8.
        let e =
            edf_eval(&p, &DVector::from_element(1, -0.2), &c, &params, EvalOrder::Value).unwrap();
        let v = e.violation.unwrap();
        assert_eq!(v.kind, ViolationKind::Constraint(0));
        assert_relative_eq!(v.amount, 0.8, max_relative = 1e-12);
    }

    #[test]
    fn lagrangian_is_stationary_at_rescaled_toy_solution() {
        let (p, c) = toy_center(1e-4);
        let lambda = DVector::from_element(1, 1.0);
        let e = lagrangian_eval(&p, &DVector::zeros(1), &c, &lambda, EvalOrder::Gradient).unwrap();
        assert_abs_diff_eq!(e.value.unwrap(), 0.0);
        assert_abs_diff_eq!(e.gradient.as_ref().unwrap()[0], 0.0);
    }

    #[test]
    fn lagrangian_is_stationary_at_rescaled_qp_solution() {
        let p = builtin_by_name("QP2D").unwrap();
        let c = Center::new(&p, p.interior_point().unwrap().clone(), 1e-4).unwrap();
        let sol = p.known_solution().unwrap();
        let gap = delta(&p, &sol.x, &c).unwrap();
        assert_relative_eq!(gap, 0.56, max_relative = 1e-13);
        let lambda = rescale_multipliers(&sol.lambda, gap).unwrap();
        assert_relative_eq!(lambda[2], 25.0 / 28.0, max_relative = 1e-13);
        let e = lagrangian_eval(&p, &sol.x, &c, &lambda, EvalOrder::Gradient).unwrap();
        assert_abs_diff_eq!(e.gradient.as_ref().unwrap().amax(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn rescale_handles_zero_entries_and_rejects_bad_gaps() {
        let lambda = DVector::from_vec(vec![0.0, 4.0]);
        let scaled = rescale_multipliers(&lambda, 2.0).unwrap();
        assert_eq!(scaled[0], 0.0);
        assert_eq!(scaled[1], 2.0);
        assert!(rescale_multipliers(&lambda, 0.0).is_err());
        assert!(rescale_multipliers(&lambda, -1.0).is_err());
    }

    #[test]
    fn merit_vanishes_at_the_toy_saddle() {
        let (p, c) = toy_center(1e-4);
        let m = merit(&p, &DVector::zeros(1), &DVector::from_element(1, 1.0), &c).unwrap();
        assert_abs_diff_eq!(m.value, 0.0);
        assert!(m.in_level_domain);
    }

    #[test]
    fn merit_picks_the_worst_term() {
        let (p, c) = toy_center(1e-4);
        // At x = -0.5 with unit multiplier: |1/1.5 - 1| = 1/3,
        // complementarity 0.5, violation 0.5.
        let m = merit(
            &p,
            &DVector::from_element(1, -0.5),
            &DVector::from_element(1, 1.0),
            &c,
        )
        .unwrap();
        assert_relative_eq!(m.value, 0.5, max_relative = 1e-14);
    }

    #[test]
    fn merit_outside_the_level_set_is_infinite() {
        let (p, c) = toy_center(1e-4);
        let m = merit(
            &p,
            &DVector::from_element(1, 2.0),
            &DVector::from_element(1, 1.0),
            &c,
        )
        .unwrap();
        assert!(m.value.is_infinite());
        assert!(!m.in_level_domain);
    }

    #[test]
    fn dual_value_matches_toy_closed_form() {
        // d(u) = ln u - u + 1 on this problem.
        let (p, c) = toy_center(1e-4);
        let d1 = dual_value(&p, &c, &DVector::from_element(1, 1.0), None).unwrap();
        assert_abs_diff_eq!(d1.value, 0.0, epsilon = 1e-10);
        let d2 = dual_value(&p, &c, &DVector::from_element(1, 2.0), None).unwrap();
        assert_relative_eq!(d2.value, 2.0f64.ln() - 1.0, max_relative = 1e-9);
        assert_relative_eq!(d2.argmin[0], 0.5, max_relative = 1e-7);
    }

    #[test]
    fn dual_value_attains_the_primal_value_at_the_dual_solution() {
        let p = builtin_by_name("QP2D").unwrap();
        let c = Center::new(&p, p.interior_point().unwrap().clone(), 1e-4).unwrap();
        let sol = p.known_solution().unwrap();
        let gap = delta(&p, &sol.x, &c).unwrap();
        let lambda = rescale_multipliers(&sol.lambda, gap).unwrap();
        let d = dual_value(&p, &c, &lambda, None).unwrap();
        assert_relative_eq!(d.value, -(0.56f64.ln()), max_relative = 1e-6);
    }
}
