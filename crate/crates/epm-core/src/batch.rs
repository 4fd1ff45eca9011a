//! Data parallel layers over independent solves and derivative sweeps.
//!
//! A single solve is inherently sequential (each outer step feeds the
//! next), so parallelism lives one level up: batches of independent
//! problems and sweeps of independent probe points. With the `parallel`
//! feature (default) these fan out over rayon; the `_seq` variants always
//! exist and are what the parallel names fall back to when the feature is
//! off. Work items are independent and the arithmetic per item is
//! identical either way, so both paths produce bitwise equal results.

use nalgebra::DVector;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::diag::{edf_fd_check, FdReport};
use crate::edf::{Center, EdfParams};
use crate::epm::{solve, EpmConfig, SolveResult};
use crate::error::Result;
use crate::problem::ProblemInstance;

/// Solves each (problem, config) pair independently, sequentially.
pub fn solve_all_seq(items: &[(ProblemInstance, EpmConfig)]) -> Vec<Result<SolveResult>> {
    items.iter().map(|(p, cfg)| solve(p, cfg)).collect()
}

/// Solves each (problem, config) pair independently across threads.
#[cfg(feature = "parallel")]
pub fn solve_all(items: &[(ProblemInstance, EpmConfig)]) -> Vec<Result<SolveResult>> {
    items.par_iter().map(|(p, cfg)| solve(p, cfg)).collect()
}

/// Sequential fallback under the same name when rayon is compiled out.
#[cfg(not(feature = "parallel"))]
pub fn solve_all(items: &[(ProblemInstance, EpmConfig)]) -> Vec<Result<SolveResult>> {
    solve_all_seq(items)
}

/// Finite difference agreement at each probe point, sequentially.
pub fn fd_sweep_seq(
    p: &ProblemInstance,
    center: &Center,
    params: &EdfParams,
    points: &[DVector<f64>],
) -> Result<Vec<FdReport>> {
    points.iter().map(|x| edf_fd_check(p, center, params, x)).collect()
}

/// Finite difference agreement at each probe point, across threads.
#[cfg(feature = "parallel")]
pub fn fd_sweep(
    p: &ProblemInstance,
    center: &Center,
    params: &EdfParams,
    points: &[DVector<f64>],
) -> Result<Vec<FdReport>> {
    points
        .par_iter()
        .map(|x| edf_fd_check(p, center, params, x))
        .collect()
}

/// Sequential fallback under the same name when rayon is compiled out.
#[cfg(not(feature = "parallel"))]
pub fn fd_sweep(
    p: &ProblemInstance,
    center: &Center,
    params: &EdfParams,
    points: &[DVector<f64>],
) -> Result<Vec<FdReport>> {
    fd_sweep_seq(p, center, params, points)
}

/// Largest gradient and Hessian errors across a sweep. The Hessian entry is
/// absent when no report carried one.
pub fn worst_fd_errors(reports: &[FdReport]) -> (f64, Option<f64>) {
    let grad = reports
        .iter()
        .map(|r| r.grad_rel_err)
        .fold(f64::NEG_INFINITY, f64::max);
    let hess = reports
        .iter()
        .filter_map(|r| r.hess_rel_err)
        .fold(f64::NEG_INFINITY, f64::max);
    (
        grad,
        if hess.is_finite() || hess > f64::NEG_INFINITY {
            Some(hess).filter(|h| *h > f64::NEG_INFINITY)
        } else {
            None
        },
    )
}
