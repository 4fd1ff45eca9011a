//! Exterior point solver for smooth convex programs.
//!
//! The solver minimizes `f(x)` subject to `c_i(x) >= 0` by working on a
//! transformed problem: pick a strictly feasible center `y`, replace the
//! objective with `-ln(f(y) - f(x))`, and couple the constraints through
//! shifted logarithms whose domain extends a distance `1/k` *outside* the
//! feasible set. Each outer step minimizes that exterior distance function
//! and then rescales the multipliers in closed form; the minimizers
//! approach the solution from outside while the multipliers converge
//! linearly at rate `O(1/k)` without the penalty surface degenerating.
//!
//! The crate also carries a classical interior barrier baseline
//! ([`idf`]) whose Hessian conditioning provably degenerates near the
//! optimum, and a brute force dual proximal oracle ([`prox`]) that
//! re-derives the closed form multiplier update numerically. Both exist so
//! the main method can be checked against independent computations, and
//! the test suite leans on them heavily.
//!
//! Quick tour:
//!
//! * [`problem`]: oracle based problem description plus evaluation.
//! * [`corpus`]: built-in instances with hand checked solutions.
//! * [`edf`]: the exterior distance function, merit, and dual values.
//! * [`inner`] / [`newton`]: damped Newton inner solves with the
//!   multiplier gap stopping rule.
//! * [`epm`]: the outer driver with center updates and telemetry.
//! * [`idf`]: interior barrier method of centers baseline.
//! * [`prox`]: dual proximal step oracle.
//! * [`diag`]: finite differences, conditioning, in-domain sampling.
//! * [`batch`]: data parallel batch solves and sweeps (rayon behind the
//!   default `parallel` feature, sequential fallback otherwise).

pub mod batch;
pub mod corpus;
pub mod diag;
pub mod edf;
pub mod epm;
pub mod error;
pub mod eval;
pub mod idf;
pub mod inner;
pub mod newton;
pub mod problem;
pub mod prox;

pub use corpus::{builtin_by_name, builtin_corpus};
pub use edf::{
    delta, dual_value, edf_eval, lagrangian_eval, merit, psi, psi_prime, psi_second,
    rescale_multipliers, Center, DualValue, EdfParams, MeritValue,
};
pub use epm::{
    center_linesearch, center_update, multiplier_update, relaxation_operator, solve,
    solve_with_observer, EpmConfig, EpmState, IterationRecord, LinesearchResult, SolveResult,
    SolveStatus,
};
pub use error::{Error, Result};
pub use eval::{DomainViolation, PointEval, ViolationKind};
pub use idf::{icm_step, idf_eval, run_icm, IcmConfig, IdfState, IdfStepRecord};
pub use inner::{minimize_edf, InnerConfig, InnerResult, StopReason};
pub use newton::newton_direction;
pub use problem::{
    check_slater, evaluate, nonneg_transform, EvalOrder, EvaluationBundle, KnownSolution,
    ProblemInstance, ScalarOracle, SlaterReport,
};
pub use prox::{phi_divergence, phi_kernel, prox_step_oracle, KernelEval, ProxOptions, ProxStep};
pub use diag::{
    condition_number, edf_fd_check, fd_gradient, fd_hessian, fd_step, rel_err_mat, rel_err_vec,
    sample_in_domain, FdReport, SamplePlan,
};
