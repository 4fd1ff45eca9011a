//! Problem containers and oracle evaluation.
//!
//! A problem is `min f(x)` subject to `c_i(x) >= 0`, with `f` convex and
//! every `c_i` concave, so the feasible set is convex. Oracles are plain
//! closures; quadratic and affine pieces get dedicated constructors so the
//! built-in corpus and file loader stay cheap to assemble.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// How much differential information a caller wants from [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EvalOrder {
    /// Function values only.
    Value,
    /// Values and first derivatives.
    Gradient,
    /// Values, first and second derivatives.
    Hessian,
}

impl EvalOrder {
    pub fn wants_gradient(self) -> bool {
        self >= EvalOrder::Gradient
    }

    pub fn wants_hessian(self) -> bool {
        self >= EvalOrder::Hessian
    }
}

type ValueFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type HessianFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// A scalar function of `x` with optional second derivatives.
pub struct ScalarOracle {
    value: Box<ValueFn>,
    gradient: Box<GradientFn>,
    hessian: Option<Box<HessianFn>>,
}

impl ScalarOracle {
    pub fn new(
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        hessian: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Box::new(value),
            gradient: Box::new(gradient),
            hessian: Some(Box::new(hessian)),
        }
    }

    /// Oracle without second derivatives; solvers fall back to first order
    /// methods on problems containing one of these.
    pub fn first_order(
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Box::new(value),
            gradient: Box::new(gradient),
            hessian: None,
        }
    }

    /// `0.5 x'Qx + q'x + c0` with `Q` symmetric.
    pub fn quadratic(q_matrix: DMatrix<f64>, q: DVector<f64>, c0: f64) -> Self {
        assert_eq!(q_matrix.nrows(), q_matrix.ncols(), "Q must be square");
        assert_eq!(q_matrix.nrows(), q.len(), "Q and q dimensions differ");
        let qm = Arc::new(q_matrix);
        let qv = Arc::new(q);
        let (qm_v, qv_v) = (qm.clone(), qv.clone());
        let (qm_g, qv_g) = (qm.clone(), qv.clone());
        Self {
            value: Box::new(move |x| 0.5 * (x.transpose() * &*qm_v * x)[(0, 0)] + qv_v.dot(x) + c0),
            gradient: Box::new(move |x| &*qm_g * x + &*qv_g),
            hessian: Some(Box::new(move |_| (*qm).clone())),
        }
    }

    /// `a'x + b`.
    pub fn affine(a: DVector<f64>, b: f64) -> Self {
        let a = Arc::new(a);
        let (a_v, a_g) = (a.clone(), a.clone());
        let n = a.len();
        Self {
            value: Box::new(move |x| a_v.dot(x) + b),
            gradient: Box::new(move |_| (*a_g).clone()),
            hessian: Some(Box::new(move |_| DMatrix::zeros(n, n))),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(x)
    }

    pub fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.hessian.as_ref().map(|h| h(x))
    }

    pub fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }
}

/// A primal/dual pair used to cross check solver output. `lambda` holds the
/// multipliers of the original stationarity system `grad f = sum lambda_i grad c_i`.
#[derive(Debug, Clone)]
pub struct KnownSolution {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
}

/// Immutable problem description. Shareable across threads; oracles must be
/// pure functions of `x`.
pub struct ProblemInstance {
    name: String,
    n: usize,
    objective: Arc<ScalarOracle>,
    constraints: Vec<Arc<ScalarOracle>>,
    interior_point: Option<DVector<f64>>,
    known_solution: Option<KnownSolution>,
}

impl ProblemInstance {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        objective: ScalarOracle,
        constraints: Vec<ScalarOracle>,
    ) -> Self {
        Self {
            name: name.into(),
            n,
            objective: Arc::new(objective),
            constraints: constraints.into_iter().map(Arc::new).collect(),
            interior_point: None,
            known_solution: None,
        }
    }

    pub fn with_interior_point(mut self, x: DVector<f64>) -> Self {
        assert_eq!(x.len(), self.n, "interior point dimension");
        self.interior_point = Some(x);
        self
    }

    pub fn with_known_solution(mut self, x: DVector<f64>, lambda: DVector<f64>) -> Self {
        assert_eq!(x.len(), self.n, "solution dimension");
        assert_eq!(lambda.len(), self.constraints.len(), "multiplier dimension");
        self.known_solution = Some(KnownSolution { x, lambda });
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> &ScalarOracle {
        &self.objective
    }

    pub fn constraint(&self, i: usize) -> &ScalarOracle {
        &self.constraints[i]
    }

    pub fn interior_point(&self) -> Option<&DVector<f64>> {
        self.interior_point.as_ref()
    }

    pub fn known_solution(&self) -> Option<&KnownSolution> {
        self.known_solution.as_ref()
    }

    /// True when the objective and every constraint expose second derivatives.
    pub fn has_hessians(&self) -> bool {
        self.objective.has_hessian() && self.constraints.iter().all(|c| c.has_hessian())
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Residuals of the stationarity system at the stored solution, used by
    /// loaders to reject inconsistent files. Returns
    /// `(stationarity_inf_norm, max |lambda_i c_i|, min c_i, min lambda_i)`.
    pub fn known_solution_residuals(&self) -> Result<Option<(f64, f64, f64, f64)>> {
        let Some(sol) = &self.known_solution else {
            return Ok(None);
        };
        let bundle = evaluate(self, &sol.x, EvalOrder::Gradient)?;
        let jac = bundle.c_jac.as_ref().expect("gradient order requested");
        let mut residual = bundle.f_grad.clone().expect("gradient order requested");
        for i in 0..self.m() {
            let gi = jac.row(i).transpose();
            residual -= gi * sol.lambda[i];
        }
        let comp = (0..self.m())
            .map(|i| (sol.lambda[i] * bundle.c_vals[i]).abs())
            .fold(0.0f64, f64::max);
        let min_c = bundle.c_vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let min_l = sol.lambda.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Some((residual.amax(), comp, min_c, min_l)))
    }
}

impl std::fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m())
            .finish()
    }
}

/// Objective and constraint data at a point, populated to the requested
/// order. Fields beyond the requested order stay `None`.
#[derive(Debug, Clone)]
pub struct EvaluationBundle {
    pub f_val: f64,
    pub f_grad: Option<DVector<f64>>,
    pub f_hess: Option<DMatrix<f64>>,
    /// Constraint values `c_i(x)`, length `m`.
    pub c_vals: DVector<f64>,
    /// Jacobian with row `i` equal to `grad c_i(x)'`, `m` by `n`.
    pub c_jac: Option<DMatrix<f64>>,
    pub c_hess: Option<Vec<DMatrix<f64>>>,
}

fn ensure_finite_scalar(v: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteEvaluation { what: what() })
    }
}

fn ensure_finite_vec(v: &DVector<f64>, what: impl FnOnce() -> String) -> Result<()> {
    if v.iter().all(|e| e.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteEvaluation { what: what() })
    }
}

fn ensure_finite_mat(m: &DMatrix<f64>, what: impl FnOnce() -> String) -> Result<()> {
    if m.iter().all(|e| e.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteEvaluation { what: what() })
    }
}

/// Evaluates the objective and all constraints at `x`.
///
/// Requesting [`EvalOrder::Hessian`] on a problem holding a first order
/// oracle fails with [`Error::UnsupportedOrder`]. Non finite oracle output
/// is rejected rather than propagated.
pub fn evaluate(p: &ProblemInstance, x: &DVector<f64>, order: EvalOrder) -> Result<EvaluationBundle> {
    p.check_dim(x)?;
    if order.wants_hessian() && !p.has_hessians() {
        return Err(Error::UnsupportedOrder {
            op: "evaluate",
            requested: 2,
            available: 1,
        });
    }

    let f_val = ensure_finite_scalar(p.objective().value(x), || "objective value".into())?;
    let mut c_vals = DVector::zeros(p.m());
    for i in 0..p.m() {
        c_vals[i] =
            ensure_finite_scalar(p.constraint(i).value(x), || format!("constraint {i} value"))?;
    }

    let mut bundle = EvaluationBundle {
        f_val,
        f_grad: None,
        f_hess: None,
        c_vals,
        c_jac: None,
        c_hess: None,
    };

    if order.wants_gradient() {
        let g = p.objective().gradient(x);
        if g.len() != p.n() {
            return Err(Error::DimensionMismatch {
                expected: p.n(),
                got: g.len(),
            });
        }
        ensure_finite_vec(&g, || "objective gradient".into())?;
        let mut jac = DMatrix::zeros(p.m(), p.n());
        for i in 0..p.m() {
            let gi = p.constraint(i).gradient(x);
            if gi.len() != p.n() {
                return Err(Error::DimensionMismatch {
                    expected: p.n(),
                    got: gi.len(),
                });
            }
            ensure_finite_vec(&gi, || format!("constraint {i} gradient"))?;
            jac.row_mut(i).copy_from(&gi.transpose());
        }
        bundle.f_grad = Some(g);
        bundle.c_jac = Some(jac);
    }

    if order.wants_hessian() {
        let h = p.objective().hessian(x).expect("checked above");
        ensure_finite_mat(&h, || "objective hessian".into())?;
        let mut hs = Vec::with_capacity(p.m());
        for i in 0..p.m() {
            let hi = p.constraint(i).hessian(x).expect("checked above");
            ensure_finite_mat(&hi, || format!("constraint {i} hessian"))?;
            hs.push(hi);
        }
        bundle.f_hess = Some(h);
        bundle.c_hess = Some(hs);
    }

    Ok(bundle)
}

/// Numerically stable `ln(1 + e^t)`.
pub(crate) fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Numerically stable logistic `e^t / (1 + e^t)`.
pub(crate) fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Replaces the objective `f` with `ln(e^f + 1)`, which is positive
/// everywhere, convex, and shares the minimizer set of `f`.
///
/// Constraints, interior point and solution point carry over unchanged;
/// stored multipliers are rescaled by the chain rule factor at the solution.
pub fn nonneg_transform(p: &ProblemInstance) -> ProblemInstance {
    let f = p.objective.clone();
    let (f_v, f_g, f_h) = (f.clone(), f.clone(), f.clone());
    let value = move |x: &DVector<f64>| softplus(f_v.value(x));
    let gradient = move |x: &DVector<f64>| f_g.gradient(x) * logistic(f_g.value(x));
    let objective = if f.has_hessian() {
        let hessian = move |x: &DVector<f64>| {
            let s = logistic(f_h.value(x));
            let g = f_h.gradient(x);
            let h = f_h.hessian(x).expect("has_hessian");
            h * s + (&g * g.transpose()) * (s * (1.0 - s))
        };
        ScalarOracle::new(value, gradient, hessian)
    } else {
        ScalarOracle::first_order(value, gradient)
    };

    let transformed = ProblemInstance {
        name: format!("{}-nonneg", p.name),
        n: p.n,
        objective: Arc::new(objective),
        constraints: p.constraints.clone(),
        interior_point: p.interior_point.clone(),
        known_solution: p.known_solution.as_ref().map(|s| KnownSolution {
            x: s.x.clone(),
            lambda: &s.lambda * logistic(f.value(&s.x)),
        }),
    };
    transformed
}

/// Outcome of a strict feasibility probe.
#[derive(Debug, Clone, Copy)]
pub struct SlaterReport {
    /// True when every constraint is strictly positive at the probe point.
    pub holds: bool,
    pub min_slack: f64,
}

/// Checks `c_i(x) > 0` for all `i` at the candidate interior point.
pub fn check_slater(p: &ProblemInstance, x: &DVector<f64>) -> Result<SlaterReport> {
    let bundle = evaluate(p, x, EvalOrder::Value)?;
    let min_slack = bundle.c_vals.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(SlaterReport {
        holds: min_slack > 0.0,
        min_slack,
    })
}
