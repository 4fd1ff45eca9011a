//! Dual side oracle: proximal ascent on the dual function with a
//! logarithmic distance kernel.
//!
//! The multiplier update of the exterior method is, equivalently, one
//! proximal step on the dual of the transformed problem:
//!
//! ```text
//! u_next = argmax_u  d(u) - (1/k) D(u, lambda),
//! D(u, lambda) = sum_i lambda_i phi(u_i / lambda_i),
//! phi(s) = -ln s + s - 1.
//! ```
//!
//! This module computes that argmax by brute numerical force (coordinate
//! ascent with golden section line searches, each probing the dual through
//! a full inner minimization) precisely so it shares no code with the
//! closed form update it is used to cross-check.

use nalgebra::DVector;

use crate::edf::{dual_value, Center};
use crate::error::{Error, Result};
use crate::problem::ProblemInstance;

/// Value and derivative of the distance kernel at one point.
#[derive(Debug, Clone, Copy)]
pub struct KernelEval {
    pub value: f64,
    pub derivative: f64,
}

/// `phi(s) = -ln s + s - 1` on `s >= 0`, infinite at zero.
pub fn phi_kernel(s: f64) -> Result<KernelEval> {
    if s < 0.0 || s.is_nan() {
        return Err(Error::Domain(format!(
            "kernel argument must be nonnegative, got {s}"
        )));
    }
    if s == 0.0 {
        return Ok(KernelEval {
            value: f64::INFINITY,
            derivative: f64::NEG_INFINITY,
        });
    }
    Ok(KernelEval {
        value: -s.ln() + s - 1.0,
        derivative: 1.0 - 1.0 / s,
    })
}

/// Kernel divergence between multiplier vectors. Zero exactly at `u ==
/// lambda`, infinite when a positive multiplier is driven to zero, and a
/// plain linear penalty `u_i` where `lambda_i == 0`.
pub fn phi_divergence(u: &DVector<f64>, lambda: &DVector<f64>) -> Result<f64> {
    if u.len() != lambda.len() {
        return Err(Error::DimensionMismatch {
            expected: lambda.len(),
            got: u.len(),
        });
    }
    let mut total = 0.0;
    for i in 0..u.len() {
        let (ui, li) = (u[i], lambda[i]);
        if ui < 0.0 || li < 0.0 {
            return Err(Error::Domain(format!(
                "divergence arguments must be nonnegative, got u = {ui}, lambda = {li}"
            )));
        }
        if li == 0.0 {
            total += ui;
        } else {
            total += li * phi_kernel(ui / li)?.value;
        }
    }
    Ok(total)
}

/// Search controls for the proximal oracle.
#[derive(Debug, Clone, Copy)]
pub struct ProxOptions {
    /// Each coordinate is searched over `[lambda_i / range_factor,
    /// lambda_i * range_factor]`.
    pub range_factor: f64,
    /// Golden section window tolerance in log coordinates.
    pub coord_tol: f64,
    /// Sweep-to-sweep movement below which the point is declared fixed.
    pub fixed_point_tol: f64,
    pub max_sweeps: usize,
}

impl Default for ProxOptions {
    fn default() -> Self {
        Self {
            range_factor: 1e3,
            coord_tol: 1e-8,
            fixed_point_tol: 1e-7,
            max_sweeps: 60,
        }
    }
}

/// Result of one proximal step.
#[derive(Debug, Clone)]
pub struct ProxStep {
    pub u: DVector<f64>,
    /// `d(u) - (1/k) D(u, lambda)` at the maximizer.
    pub objective: f64,
    pub dual_at_u: f64,
    pub divergence: f64,
    pub sweeps: usize,
}

/// Maximizes `d(u) - (1/k) D(u, lambda)` over positive `u` by coordinate
/// ascent. Requires strictly positive `lambda` so the search boxes are well
/// formed. Every objective probe solves the dual subproblem from scratch
/// (warm started), which is slow and entirely the point: the result is an
/// independent check of the closed form multiplier update.
pub fn prox_step_oracle(
    p: &ProblemInstance,
    center: &Center,
    lambda: &DVector<f64>,
    k: f64,
    opts: &ProxOptions,
) -> Result<ProxStep> {
    if lambda.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidConfig(
            "the proximal oracle needs strictly positive multipliers".into(),
        ));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidConfig(format!("k must be positive, got {k}")));
    }
    let m = lambda.len();
    let mut u = lambda.clone();
    let mut warm: Option<DVector<f64>> = None;

    let objective = |u: &DVector<f64>, warm: &mut Option<DVector<f64>>| -> Result<f64> {
        let d = dual_value(p, center, u, warm.as_ref())?;
        *warm = Some(d.argmin.clone());
        Ok(d.value - phi_divergence(u, lambda)? / k)
    };

    let gr = (5f64.sqrt() - 1.0) / 2.0;
    for sweep in 0..opts.max_sweeps {
        let u_prev = u.clone();
        for i in 0..m {
            let mut a = (lambda[i] / opts.range_factor).ln();
            let mut b = (lambda[i] * opts.range_factor).ln();
            let probe = |w: f64, u: &DVector<f64>, warm: &mut Option<DVector<f64>>| -> Result<f64> {
                let mut cand = u.clone();
                cand[i] = w.exp();
                objective(&cand, warm)
            };
            let mut c = b - gr * (b - a);
            let mut d = a + gr * (b - a);
            let mut fc = probe(c, &u, &mut warm)?;
            let mut fd = probe(d, &u, &mut warm)?;
            while b - a > opts.coord_tol {
                if fc >= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - gr * (b - a);
                    fc = probe(c, &u, &mut warm)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + gr * (b - a);
                    fd = probe(d, &u, &mut warm)?;
                }
            }
            u[i] = (0.5 * (a + b)).exp();
        }
        let moved = (&u - &u_prev).amax();
        if moved <= opts.fixed_point_tol * u.amax().max(1.0) {
            let dual_at_u = dual_value(p, center, &u, warm.as_ref())?.value;
            let divergence = phi_divergence(&u, lambda)?;
            return Ok(ProxStep {
                objective: dual_at_u - divergence / k,
                u,
                dual_at_u,
                divergence,
                sweeps: sweep + 1,
            });
        }
    }
    Err(Error::OracleNoConverge(format!(
        "coordinate ascent did not fix within {} sweeps",
        opts.max_sweeps
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::builtin_by_name;
    use crate::edf::EdfParams;
    use crate::epm::relaxation_operator;
    use crate::inner::InnerConfig;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn kernel_is_zero_with_zero_slope_at_one() {
        let k = phi_kernel(1.0).unwrap();
        assert_eq!(k.value, 0.0);
        assert_eq!(k.derivative, 0.0);
        let k2 = phi_kernel(2.0).unwrap();
        assert_relative_eq!(k2.value, 1.0 - 2f64.ln(), max_relative = 1e-15);
        assert!(phi_kernel(0.0).unwrap().value.is_infinite());
        assert!(phi_kernel(-0.1).is_err());
    }

    #[test]
    fn divergence_conventions() {
        let l = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(phi_divergence(&l, &l).unwrap(), 0.0);
        let u = DVector::from_vec(vec![2.0, 2.0]);
        assert_relative_eq!(
            phi_divergence(&u, &l).unwrap(),
            1.0 - 2f64.ln(),
            max_relative = 1e-15
        );
        let zero_u = DVector::from_vec(vec![0.0, 2.0]);
        assert!(phi_divergence(&zero_u, &l).unwrap().is_infinite());
        let zero_l = DVector::from_vec(vec![0.0, 2.0]);
        assert_eq!(phi_divergence(&DVector::from_vec(vec![3.0, 2.0]), &zero_l).unwrap(), 3.0);
        assert!(phi_divergence(&DVector::from_vec(vec![-1.0, 2.0]), &l).is_err());
    }

    #[test]
    fn prox_step_matches_the_toy_closed_form() {
        // On the toy problem the maximizer is (k + lambda) / (k + 1).
        let p = builtin_by_name("TOY1D").unwrap();
        let center = crate::edf::Center::new(&p, DVector::from_element(1, 1.0), 1e-6).unwrap();
        let lambda = DVector::from_element(1, 3.0);
        let step = prox_step_oracle(&p, &center, &lambda, 4.0, &ProxOptions::default()).unwrap();
        assert_abs_diff_eq!(step.u[0], 7.0 / 5.0, epsilon = 1e-6);
        assert!(step.divergence > 0.0);
        assert!(step.sweeps >= 1);
    }

    #[test]
    fn prox_step_agrees_with_the_closed_form_update_on_the_qp() {
        let p = builtin_by_name("QP2D").unwrap();
        let center = crate::edf::Center::new(&p, p.interior_point().unwrap().clone(), 1e-6).unwrap();
        let k = 5.0;
        let lambda = DVector::from_element(p.m(), 1.0);
        let params = EdfParams::new(k, lambda.clone()).unwrap();
        let x0 = DVector::from_vec(vec![0.3, 0.3]);
        let closed = relaxation_operator(&p, &center, &params, &InnerConfig::tight(), &x0).unwrap();
        let oracle = prox_step_oracle(&p, &center, &lambda, k, &ProxOptions::default()).unwrap();
        assert_abs_diff_eq!(
            (&oracle.u - &closed.lambda_bar).amax(),
            0.0,
            epsilon = 1e-5
        );
    }

    #[test]
    fn oracle_rejects_nonpositive_multipliers() {
        let p = builtin_by_name("TOY1D").unwrap();
        let center = crate::edf::Center::new(&p, DVector::from_element(1, 1.0), 1e-6).unwrap();
        let bad = DVector::from_element(1, 0.0);
        assert!(prox_step_oracle(&p, &center, &bad, 4.0, &ProxOptions::default()).is_err());
    }
}
