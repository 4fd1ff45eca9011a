//! On-disk problem descriptions.
//!
//! A problem file is a TOML document declaring the dimensions, a quadratic
//! objective, and one block per constraint. Constraint values are kept
//! nonnegative on the feasible set, so an affine block means `a'x + b >= 0`
//! and a concave quadratic block means `x'Qx/2 + q'x + const >= 0` with `Q`
//! negative semidefinite. Optional blocks attach a strictly feasible
//! starting point and a reference solution.
//!
//! ```toml
//! name = "qp2d"
//! n = 2
//! m = 3
//!
//! [objective.quadratic]
//! Q = [[1.0, 0.0], [0.0, 1.0]]
//! q = [-1.0, -1.0]
//! const = 1.0
//!
//! [[constraint]]
//! affine = { a = [1.0, 0.0], b = 0.0 }
//! ```
//!
//! Unknown keys anywhere in the document are hard errors, so typos cannot
//! silently fall back to defaults.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use epm_core::{ProblemInstance, ScalarOracle};

use crate::error::CliError;

/// Symmetry slack allowed in declared `Q` blocks.
const SYMMETRY_TOL: f64 = 1e-12;
/// Largest eigenvalue tolerated in a concave quadratic block.
const NSD_TOL: f64 = 1e-8;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    /// Defaults to the file stem when absent.
    pub name: Option<String>,
    pub n: usize,
    pub m: usize,
    pub objective: ObjectiveSpec,
    #[serde(default, rename = "constraint")]
    pub constraints: Vec<ConstraintSpec>,
    pub interior_point: Option<PointBlock>,
    pub known_solution: Option<SolutionBlock>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub quadratic: QuadraticBlock,
}

/// `x'Qx/2 + q'x + const`, with `Q` row-major.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticBlock {
    #[serde(rename = "Q")]
    pub q_matrix: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    #[serde(default, rename = "const")]
    pub constant: f64,
}

/// Exactly one of the two bodies must be present.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub affine: Option<AffineBlock>,
    pub quadratic_concave: Option<QuadraticBlock>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineBlock {
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointBlock {
    pub x: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionBlock {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Reads, parses, and validates a problem file.
pub fn load_problem(path: &Path) -> Result<ProblemInstance, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: ProblemFile = toml::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let fallback_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "problem".to_string());
    file.into_instance(fallback_name)
        .map_err(|detail| CliError::Validation {
            path: path.to_path_buf(),
            detail,
        })
}

impl ProblemFile {
    /// Builds the runtime instance, or describes the first failing block.
    pub fn into_instance(self, fallback_name: String) -> Result<ProblemInstance, String> {
        let n = self.n;
        if n == 0 {
            return Err("n must be at least 1".into());
        }
        if self.constraints.len() != self.m {
            return Err(format!(
                "m = {} but {} constraint blocks are declared",
                self.m,
                self.constraints.len()
            ));
        }

        let (q_matrix, q, c0) = parse_quadratic(&self.objective.quadratic, n, "objective")?;
        let objective = ScalarOracle::quadratic(q_matrix, q, c0);

        let mut constraints = Vec::with_capacity(self.m);
        for (i, spec) in self.constraints.iter().enumerate() {
            let what = format!("constraint {i}");
            let oracle = match (&spec.affine, &spec.quadratic_concave) {
                (Some(aff), None) => {
                    if aff.a.len() != n {
                        return Err(format!("{what}: a has length {}, expected {n}", aff.a.len()));
                    }
                    ScalarOracle::affine(DVector::from_column_slice(&aff.a), aff.b)
                }
                (None, Some(quad)) => {
                    let (qm, qv, c) = parse_quadratic(quad, n, &what)?;
                    let max_eig = qm
                        .clone()
                        .symmetric_eigen()
                        .eigenvalues
                        .iter()
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max);
                    if max_eig > NSD_TOL {
                        return Err(format!(
                            "{what}: quadratic_concave block has eigenvalue {max_eig:.3e} > 0; \
                             Q must be negative semidefinite"
                        ));
                    }
                    ScalarOracle::quadratic(qm, qv, c)
                }
                (Some(_), Some(_)) => {
                    return Err(format!("{what}: declare either affine or quadratic_concave, not both"))
                }
                (None, None) => {
                    return Err(format!("{what}: missing the affine or quadratic_concave body"))
                }
            };
            constraints.push(oracle);
        }

        let name = self.name.unwrap_or(fallback_name);
        let mut instance = ProblemInstance::new(name, n, objective, constraints);

        if let Some(point) = self.interior_point {
            if point.x.len() != n {
                return Err(format!(
                    "interior_point: x has length {}, expected {n}",
                    point.x.len()
                ));
            }
            instance = instance.with_interior_point(DVector::from_column_slice(&point.x));
        }
        if let Some(sol) = self.known_solution {
            if sol.x.len() != n {
                return Err(format!(
                    "known_solution: x has length {}, expected {n}",
                    sol.x.len()
                ));
            }
            if sol.lambda.len() != self.m {
                return Err(format!(
                    "known_solution: lambda has length {}, expected {}",
                    sol.lambda.len(),
                    self.m
                ));
            }
            if sol.lambda.iter().any(|&l| l < 0.0) {
                return Err("known_solution: multipliers must be nonnegative".into());
            }
            instance = instance.with_known_solution(
                DVector::from_column_slice(&sol.x),
                DVector::from_column_slice(&sol.lambda),
            );
        }
        Ok(instance)
    }
}

fn parse_quadratic(
    block: &QuadraticBlock,
    n: usize,
    what: &str,
) -> Result<(DMatrix<f64>, DVector<f64>, f64), String> {
    if block.q_matrix.len() != n {
        return Err(format!(
            "{what}: Q has {} rows, expected {n}",
            block.q_matrix.len()
        ));
    }
    for (i, row) in block.q_matrix.iter().enumerate() {
        if row.len() != n {
            return Err(format!(
                "{what}: Q row {i} has length {}, expected {n}",
                row.len()
            ));
        }
    }
    if block.q.len() != n {
        return Err(format!("{what}: q has length {}, expected {n}", block.q.len()));
    }
    let qm = DMatrix::from_row_iterator(n, n, block.q_matrix.iter().flatten().copied());
    for i in 0..n {
        for j in (i + 1)..n {
            if (qm[(i, j)] - qm[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(format!(
                    "{what}: Q is not symmetric at ({i},{j}): {} vs {}",
                    qm[(i, j)],
                    qm[(j, i)]
                ));
            }
        }
    }
    Ok((qm, DVector::from_column_slice(&block.q), block.constant))
}
