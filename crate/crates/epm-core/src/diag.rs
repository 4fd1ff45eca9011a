//! Finite difference oracles, conditioning probes, and in-domain sampling.
//!
//! Everything here exists to check the analytic machinery against an
//! independent computation, so none of it is on the hot path and all of it
//! favors clarity over speed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::edf::{edf_eval, Center, EdfParams};
use crate::error::{Error, Result};
use crate::problem::{evaluate, EvalOrder, ProblemInstance};

/// Central difference step for coordinate value `xj`: `eps^(1/3)` scaled by
/// the coordinate magnitude with a unit floor.
pub fn fd_step(xj: f64) -> f64 {
    f64::EPSILON.powf(1.0 / 3.0) * xj.abs().max(1.0)
}

/// Central difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, x: &DVector<f64>) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let n = x.len();
    let mut g = DVector::zeros(n);
    let mut xp = x.clone();
    for j in 0..n {
        let h = fd_step(x[j]);
        xp[j] = x[j] + h;
        let fp = f(&xp)?;
        xp[j] = x[j] - h;
        let fm = f(&xp)?;
        xp[j] = x[j];
        g[j] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Central difference Hessian from a *gradient* closure, symmetrized.
/// Differencing the analytic gradient keeps first order truncation and
/// roundoff balance, which double differencing of values cannot reach.
pub fn fd_hessian<G>(grad: G, x: &DVector<f64>) -> Result<DMatrix<f64>>
where
    G: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    for j in 0..n {
        let hj = fd_step(x[j]);
        xp[j] = x[j] + hj;
        let gp = grad(&xp)?;
        xp[j] = x[j] - hj;
        let gm = grad(&xp)?;
        xp[j] = x[j];
        let col = (gp - gm) / (2.0 * hj);
        h.set_column(j, &col);
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Max norm relative error with a unit floor on the reference magnitude.
pub fn rel_err_vec(approx: &DVector<f64>, exact: &DVector<f64>) -> f64 {
    (approx - exact).amax() / exact.amax().max(1.0)
}

/// Max norm relative error for matrices, same floor convention.
pub fn rel_err_mat(approx: &DMatrix<f64>, exact: &DMatrix<f64>) -> f64 {
    (approx - exact).amax() / exact.amax().max(1.0)
}

/// Spectral condition number of a symmetric matrix. Returns infinity when
/// the smallest eigenvalue is nonpositive or below `1e-14` times the
/// largest, which is how a numerically singular barrier Hessian shows up.
pub fn condition_number(h: &DMatrix<f64>) -> f64 {
    let eigs = h.clone().symmetric_eigenvalues();
    let max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 1e-14 * max.max(1.0)) {
        return f64::INFINITY;
    }
    max / min
}

/// Margins for sampling probe points: comfortably interior so a finite
/// difference stencil at any reasonable penalty level stays in domain.
#[derive(Debug, Clone, Copy)]
pub struct SamplePlan {
    pub min_slack: f64,
    pub min_gap: f64,
    pub radius: f64,
    pub max_tries: usize,
}

impl Default for SamplePlan {
    fn default() -> Self {
        Self {
            min_slack: 0.02,
            min_gap: 0.05,
            radius: 0.4,
            max_tries: 20_000,
        }
    }
}

/// Draws `count` points around the center that keep every slack at least
/// `min_slack` and the level gap at least `min_gap`.
pub fn sample_in_domain<R: Rng>(
    p: &ProblemInstance,
    center: &Center,
    count: usize,
    rng: &mut R,
    plan: &SamplePlan,
) -> Result<Vec<DVector<f64>>> {
    let n = p.n();
    let mut out = Vec::with_capacity(count);
    for _ in 0..plan.max_tries {
        if out.len() == count {
            break;
        }
        let mut x = center.y.clone();
        for j in 0..n {
            x[j] += rng.gen_range(-plan.radius..plan.radius);
        }
        let bundle = evaluate(p, &x, EvalOrder::Value)?;
        let slack_ok = bundle.c_vals.iter().all(|c| *c >= plan.min_slack);
        let gap_ok = center.f_y - bundle.f_val >= plan.min_gap;
        if slack_ok && gap_ok {
            out.push(x);
        }
    }
    if out.len() < count {
        return Err(Error::OracleNoConverge(format!(
            "found only {} of {count} probe points in {} tries",
            out.len(),
            plan.max_tries
        )));
    }
    Ok(out)
}

/// Finite difference agreement of the exterior distance derivatives at one
/// point. `hess_rel_err` is absent when the problem has no Hessian oracles.
#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    pub grad_rel_err: f64,
    pub hess_rel_err: Option<f64>,
}

pub fn edf_fd_check(
    p: &ProblemInstance,
    center: &Center,
    params: &EdfParams,
    x: &DVector<f64>,
) -> Result<FdReport> {
    let value_at = |z: &DVector<f64>| -> Result<f64> {
        let e = edf_eval(p, z, center, params, EvalOrder::Value)?;
        e.value.ok_or_else(|| {
            Error::Domain("finite difference stencil left the domain".into())
        })
    };
    let grad_at = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let e = edf_eval(p, z, center, params, EvalOrder::Gradient)?;
        e.gradient.ok_or_else(|| {
            Error::Domain("finite difference stencil left the domain".into())
        })
    };
    let order = if p.has_hessians() {
        EvalOrder::Hessian
    } else {
        EvalOrder::Gradient
    };
    let e = edf_eval(p, x, center, params, order)?;
    let g = e
        .gradient
        .as_ref()
        .ok_or_else(|| Error::Domain("probe point is out of domain".into()))?;
    let grad_rel_err = rel_err_vec(&fd_gradient(value_at, x)?, g);
    let hess_rel_err = match &e.hessian {
        Some(h) => Some(rel_err_mat(&fd_hessian(grad_at, x)?, h)),
        None => None,
    };
    Ok(FdReport {
        grad_rel_err,
        hess_rel_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::builtin_by_name;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fd_gradient_matches_a_polynomial() {
        let f = |x: &DVector<f64>| Ok(x[0] * x[0] * x[0] + 2.0 * x[0] * x[1]);
        let x = DVector::from_vec(vec![1.5, -0.5]);
        let g = fd_gradient(f, &x).unwrap();
        assert_relative_eq!(g[0], 3.0 * 1.5 * 1.5 + 2.0 * -0.5, max_relative = 1e-9);
        assert_relative_eq!(g[1], 3.0, max_relative = 1e-9);
    }

    #[test]
    fn fd_hessian_matches_a_polynomial() {
        // Gradient of x0^3 + 2 x0 x1 supplied analytically.
        let g = |x: &DVector<f64>| {
            Ok(DVector::from_vec(vec![
                3.0 * x[0] * x[0] + 2.0 * x[1],
                2.0 * x[0],
            ]))
        };
        let x = DVector::from_vec(vec![1.5, -0.5]);
        let h = fd_hessian(g, &x).unwrap();
        assert_relative_eq!(h[(0, 0)], 9.0, max_relative = 1e-8);
        assert_relative_eq!(h[(0, 1)], 2.0, max_relative = 1e-8);
        assert_abs_diff_eq!(h[(1, 1)], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn condition_number_of_a_diagonal_matrix() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![100.0, 2.0]));
        assert_relative_eq!(condition_number(&h), 50.0, max_relative = 1e-12);
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        assert!(condition_number(&s).is_infinite());
        let indef = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(condition_number(&indef).is_infinite());
    }

    #[test]
    fn sampling_respects_margins_and_is_deterministic() {
        let p = builtin_by_name("QP2D").unwrap();
        let center = Center::new(&p, p.interior_point().unwrap().clone(), 1e-6).unwrap();
        let plan = SamplePlan::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = sample_in_domain(&p, &center, 10, &mut rng, &plan).unwrap();
        assert_eq!(pts.len(), 10);
        for x in &pts {
            let b = evaluate(&p, x, EvalOrder::Value).unwrap();
            assert!(b.c_vals.iter().all(|c| *c >= plan.min_slack));
            assert!(center.f_y - b.f_val >= plan.min_gap);
        }
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let pts2 = sample_in_domain(&p, &center, 10, &mut rng2, &plan).unwrap();
        assert_eq!(pts, pts2);
    }

    #[test]
    fn derivative_check_is_tight_on_the_toy_problem() {
        let p = builtin_by_name("TOY1D").unwrap();
        let center = Center::new(&p, DVector::from_element(1, 1.0), 1e-6).unwrap();
        let params = EdfParams::new(10.0, DVector::from_element(1, 1.5)).unwrap();
        let r = edf_fd_check(&p, &center, &params, &DVector::from_element(1, 0.3)).unwrap();
        assert!(r.grad_rel_err <= 1e-7, "grad rel err {}", r.grad_rel_err);
        assert!(r.hess_rel_err.unwrap() <= 1e-6);
    }
}
