//! Built-in test problems with hand checked solutions.

use nalgebra::{DMatrix, DVector};

use crate::problem::{ProblemInstance, ScalarOracle};

fn toy1d() -> ProblemInstance {
    // min x subject to x >= 0. Multiplier 1 balances the objective slope.
    ProblemInstance::new(
        "TOY1D",
        1,
        ScalarOracle::affine(DVector::from_element(1, 1.0), 0.0),
        vec![ScalarOracle::affine(DVector::from_element(1, 1.0), 0.0)],
    )
    .with_interior_point(DVector::from_element(1, 1.0))
    .with_known_solution(DVector::zeros(1), DVector::from_element(1, 1.0))
}

fn qp2d() -> ProblemInstance {
    // min 0.5*|x - (1,1)|^2 on the triangle x1 >= 0, x2 >= 0, x1 + x2 <= 1.
    // The sum constraint is active at (1/2, 1/2) with multiplier 1/2.
    ProblemInstance::new(
        "QP2D",
        2,
        ScalarOracle::quadratic(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![-1.0, -1.0]),
            1.0,
        ),
        vec![
            ScalarOracle::affine(DVector::from_vec(vec![1.0, 0.0]), 0.0),
            ScalarOracle::affine(DVector::from_vec(vec![0.0, 1.0]), 0.0),
            ScalarOracle::affine(DVector::from_vec(vec![-1.0, -1.0]), 1.0),
        ],
    )
    .with_interior_point(DVector::from_vec(vec![0.1, 0.1]))
    .with_known_solution(
        DVector::from_vec(vec![0.5, 0.5]),
        DVector::from_vec(vec![0.0, 0.0, 0.5]),
    )
}

fn qp5d() -> ProblemInstance {
    // Strictly convex diagonal quadratic with three constraints active at the
    // solution (two bounds and one sum constraint) and two inactive ones.
    // At x* = (0,0,0,1/2,3/2): grad f = (0.5, 1, -1, 0, 0) and the active
    // rows e1, e2, -(e1+e2+e3) reproduce it with multipliers (1.5, 2, 1).
    let q_matrix = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 3.0, 4.0, 2.0]));
    let q = DVector::from_vec(vec![0.5, 1.0, -1.0, -2.0, -3.0]);
    ProblemInstance::new(
        "QP5D",
        5,
        ScalarOracle::quadratic(q_matrix, q, 0.0),
        vec![
            ScalarOracle::affine(DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0]), 0.0),
            ScalarOracle::affine(DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0, 0.0]), 0.0),
            ScalarOracle::affine(DVector::from_vec(vec![-1.0, -1.0, -1.0, 0.0, 0.0]), 0.0),
            ScalarOracle::affine(DVector::from_vec(vec![0.0, 0.0, 0.0, -1.0, 0.0]), 10.0),
            ScalarOracle::affine(DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 1.0]), 5.0),
        ],
    )
    .with_interior_point(DVector::from_vec(vec![0.2, 0.2, -1.0, 0.5, 1.5]))
    .with_known_solution(
        DVector::from_vec(vec![0.0, 0.0, 0.0, 0.5, 1.5]),
        DVector::from_vec(vec![1.5, 2.0, 1.0, 0.0, 0.0]),
    )
}

fn linbox() -> ProblemInstance {
    // min x2 over the unit box. Every point of the lower edge is optimal, so
    // only the objective value is pinned down; the stored pair is one valid
    // stationary point.
    ProblemInstance::new(
        "LINBOX",
        2,
        ScalarOracle::affine(DVector::from_vec(vec![0.0, 1.0]), 0.0),
        vec![
            ScalarOracle::affine(DVector::from_vec(vec![1.0, 0.0]), 0.0),
            ScalarOracle::affine(DVector::from_vec(vec![-1.0, 0.0]), 1.0),
            ScalarOracle::affine(DVector::from_vec(vec![0.0, 1.0]), 0.0),
            ScalarOracle::affine(DVector::from_vec(vec![0.0, -1.0]), 1.0),
        ],
    )
    .with_interior_point(DVector::from_vec(vec![0.5, 0.5]))
    .with_known_solution(
        DVector::from_vec(vec![0.5, 0.0]),
        DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]),
    )
}

/// All built-in problems. Stored solutions are re-validated on every call;
/// an inconsistent entry is a programming error, not an input error.
pub fn builtin_corpus() -> Vec<ProblemInstance> {
    let problems = vec![toy1d(), qp2d(), qp5d(), linbox()];
    for p in &problems {
        let (stat, comp, min_c, min_l) = p
            .known_solution_residuals()
            .expect("corpus oracle evaluation")
            .expect("corpus problems carry solutions");
        assert!(
            stat <= 1e-8,
            "{}: stationarity residual {stat:.2e}",
            p.name()
        );
        assert!(comp <= 1e-10, "{}: complementarity {comp:.2e}", p.name());
        assert!(min_c >= -1e-10, "{}: infeasible solution", p.name());
        assert!(min_l >= 0.0, "{}: negative multiplier", p.name());
    }
    problems
}

/// Looks up a built-in problem by its (case insensitive) name.
pub fn builtin_by_name(name: &str) -> Option<ProblemInstance> {
    builtin_corpus()
        .into_iter()
        .find(|p| p.name().eq_ignore_ascii_case(name))
}
