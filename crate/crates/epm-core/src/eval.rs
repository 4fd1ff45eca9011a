//! Shared result type for functions that are only defined on part of space.

use nalgebra::{DMatrix, DVector};

/// Which domain condition a point violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// The objective level gap closed (the logarithm of the gap is undefined).
    ObjectiveLevel,
    /// The shifted slack of constraint `i` left the admissible range.
    Constraint(usize),
}

/// First domain violation found at a point, with its magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainViolation {
    pub kind: ViolationKind,
    /// How far past the boundary the point sits; zero on the boundary itself.
    pub amount: f64,
}

/// Evaluation of a domain restricted smooth function.
///
/// Inside the domain `value` is present and `gradient`/`hessian` follow the
/// requested derivative order. Outside, all three are `None` and `violation`
/// reports the failed condition.
#[derive(Debug, Clone)]
pub struct PointEval {
    pub value: Option<f64>,
    pub gradient: Option<DVector<f64>>,
    pub hessian: Option<DMatrix<f64>>,
    pub violation: Option<DomainViolation>,
}

impl PointEval {
    pub fn out_of_domain(violation: DomainViolation) -> Self {
        Self {
            value: None,
            gradient: None,
            hessian: None,
            violation: Some(violation),
        }
    }

    pub fn in_domain(&self) -> bool {
        self.violation.is_none()
    }

    /// Value with an infinite sentinel outside the domain, the form line
    /// searches want.
    pub fn value_or_inf(&self) -> f64 {
        self.value.unwrap_or(f64::INFINITY)
    }
}
