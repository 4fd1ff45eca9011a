//! Run orchestration: resolve the problem, dispatch the chosen solver,
//! and serialize results.
//!
//! One process performs one run. Trajectory files are written record by
//! record as the solver produces them, so a partial file from an
//! interrupted run is still parseable line by line. Every summary carries
//! a seeded finite-difference spot check of the distance-function
//! derivatives at random in-domain points; identical manifests and seeds
//! therefore reproduce the summary bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use epm_core::{
    builtin_by_name, edf_fd_check, evaluate, run_icm, sample_in_domain, solve_with_observer,
    Center, EdfParams, EvalOrder, IterationRecord, ProblemInstance, SamplePlan, SolveResult,
    SolveStatus,
};

use crate::args::{ProblemSource, RunManifest, SolverKind};
use crate::error::CliError;
use crate::problem_file::load_problem;
use crate::report::{
    conditioning_table, epm_trajectory_line, fmt_f64, fmt_vec, icm_trajectory_line, status_name,
    summary_text,
};

/// Points drawn for the derivative spot check.
const FD_POINTS: usize = 5;

#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    /// One-line digest, also printed to stdout by the binary.
    pub digest: String,
}

pub fn run(manifest: &RunManifest) -> Result<RunOutcome, CliError> {
    let problem = resolve_problem(&manifest.source)?;
    std::fs::create_dir_all(&manifest.out_dir).map_err(|source| CliError::Io {
        path: manifest.out_dir.clone(),
        source,
    })?;
    match manifest.solver {
        SolverKind::Epm => run_epm(manifest, &problem),
        SolverKind::Icm => run_icm_baseline(manifest, &problem),
        SolverKind::Compare => run_compare(manifest, &problem),
    }
}

pub fn resolve_problem(source: &ProblemSource) -> Result<ProblemInstance, CliError> {
    match source {
        ProblemSource::Builtin(name) => builtin_by_name(name).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown builtin problem {name:?}; available: toy1d, qp2d, qp5d, linbox"
            ))
        }),
        ProblemSource::File(path) => load_problem(path),
    }
}

fn run_epm(manifest: &RunManifest, p: &ProblemInstance) -> Result<RunOutcome, CliError> {
    let cfg = manifest.epm_config(p)?;
    let result = solve_streaming(p, &cfg, &manifest.out_dir.join("trajectory.txt"))?;
    let entries = epm_summary(manifest, p, &cfg, &result)?;
    write_text(
        &manifest.out_dir.join("summary.txt"),
        &summary_text(&entries),
    )?;
    let digest = format!(
        "problem={} solver=epm status={} merit={} outer_iterations={}",
        p.name(),
        status_name(result.status),
        fmt_f64(result.merit_final),
        result.trajectory.len()
    );
    Ok(RunOutcome {
        exit_code: exit_for(result.status),
        digest,
    })
}

fn run_icm_baseline(manifest: &RunManifest, p: &ProblemInstance) -> Result<RunOutcome, CliError> {
    let y = manifest.start_point(p)?;
    let cfg = manifest.icm_config();
    let (state, records) = run_icm(p, y, manifest.icm_steps(), &cfg)?;

    let mut lines = String::new();
    for r in &records {
        lines.push_str(&icm_trajectory_line(r));
        lines.push('\n');
    }
    write_text(&manifest.out_dir.join("trajectory.txt"), &lines)?;

    let merit = kkt_residual(p, &state.x, &state.lambda)?;
    let inner_total: usize = records.iter().map(|r| r.inner_iters).sum();
    let mut entries = vec![
        ("problem", p.name().to_string()),
        ("solver", "icm".to_string()),
        ("status", "completed".to_string()),
        ("x_final", fmt_vec(&state.x)),
        ("lambda_final", fmt_vec(&state.lambda)),
        ("merit", fmt_f64(merit)),
        ("tau_final", fmt_f64(state.tau)),
        ("outer_iterations", records.len().to_string()),
        ("inner_iterations", inner_total.to_string()),
        ("seed", manifest.seed.to_string()),
    ];
    entries.extend(fd_entries(manifest, p));
    write_text(
        &manifest.out_dir.join("summary.txt"),
        &summary_text(&entries),
    )?;

    let digest = format!(
        "problem={} solver=icm status=completed merit={} outer_iterations={}",
        p.name(),
        fmt_f64(merit),
        records.len()
    );
    Ok(RunOutcome {
        exit_code: 0,
        digest,
    })
}

fn run_compare(manifest: &RunManifest, p: &ProblemInstance) -> Result<RunOutcome, CliError> {
    let y = manifest.start_point(p)?;
    let icm_cfg = manifest.icm_config();
    let (_, icm_records) = run_icm(p, y, manifest.icm_steps(), &icm_cfg)?;
    let icm_rows: Vec<(f64, Option<f64>)> = icm_records
        .iter()
        .map(|r| (r.tau_before - r.f_after, r.hessian_cond))
        .collect();
    write_text(
        &manifest.out_dir.join("conditioning_icm.txt"),
        &conditioning_table(&icm_rows),
    )?;

    let cfg = manifest.epm_config(p)?;
    let result = solve_streaming(p, &cfg, &manifest.out_dir.join("trajectory.txt"))?;
    let epm_rows: Vec<(f64, Option<f64>)> = result
        .trajectory
        .iter()
        .map(|r| ((-r.primal_f).exp(), r.edf_hessian_cond))
        .collect();
    write_text(
        &manifest.out_dir.join("conditioning_epm.txt"),
        &conditioning_table(&epm_rows),
    )?;

    let mut entries = epm_summary(manifest, p, &cfg, &result)?;
    entries.push(("icm_steps", icm_records.len().to_string()));
    write_text(
        &manifest.out_dir.join("summary.txt"),
        &summary_text(&entries),
    )?;

    let digest = format!(
        "problem={} solver=compare status={} icm_rows={} epm_rows={}",
        p.name(),
        status_name(result.status),
        icm_rows.len(),
        epm_rows.len()
    );
    Ok(RunOutcome {
        exit_code: exit_for(result.status),
        digest,
    })
}

/// Runs the exterior solver while appending each record to the trajectory
/// file as soon as it exists.
fn solve_streaming(
    p: &ProblemInstance,
    cfg: &epm_core::EpmConfig,
    traj_path: &Path,
) -> Result<SolveResult, CliError> {
    let file = File::create(traj_path).map_err(|source| CliError::Io {
        path: traj_path.to_path_buf(),
        source,
    })?;
    let mut writer = BufWriter::new(file);
    let mut write_err: Option<std::io::Error> = None;
    let observer = |r: &IterationRecord| {
        if write_err.is_some() {
            return;
        }
        let line = epm_trajectory_line(r);
        if let Err(e) = writeln!(writer, "{line}").and_then(|()| writer.flush()) {
            write_err = Some(e);
        }
    };
    let result = solve_with_observer(p, cfg, observer)?;
    if let Some(source) = write_err {
        return Err(CliError::Io {
            path: traj_path.to_path_buf(),
            source,
        });
    }
    Ok(result)
}

fn epm_summary(
    manifest: &RunManifest,
    p: &ProblemInstance,
    cfg: &epm_core::EpmConfig,
    result: &SolveResult,
) -> Result<Vec<(&'static str, String)>, CliError> {
    let inner_total: usize = result.trajectory.iter().map(|r| r.inner_iters).sum();
    let k_final = result
        .trajectory
        .last()
        .map(|r| r.k_used)
        .unwrap_or(cfg.k);
    let active = result
        .active_set_estimate
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let mut entries = vec![
        ("problem", p.name().to_string()),
        ("solver", "epm".to_string()),
        ("status", status_name(result.status).to_string()),
        ("x_final", fmt_vec(&result.x_final)),
        ("lambda_final", fmt_vec(&result.lambda_final)),
        ("merit", fmt_f64(result.merit_final)),
        ("outer_iterations", result.trajectory.len().to_string()),
        ("inner_iterations", inner_total.to_string()),
        ("k_final", fmt_f64(k_final)),
        ("ergodic_x", fmt_vec(&result.ergodic_x)),
        ("active_set", active),
        ("seed", manifest.seed.to_string()),
    ];
    if let Some(detail) = &result.failure_detail {
        entries.push(("failure_detail", detail.replace('\n', " ")));
    }
    entries.extend(fd_entries(manifest, p));
    Ok(entries)
}

/// Seeded derivative spot check; degrades to `nan` entries when the
/// sampler cannot place points (never on the shipped problems).
fn fd_entries(manifest: &RunManifest, p: &ProblemInstance) -> Vec<(&'static str, String)> {
    let worst = fd_worst_errors(manifest, p);
    let (g, h) = worst.unwrap_or((f64::NAN, None));
    vec![
        ("fd_grad_err", fmt_f64(g)),
        (
            "fd_hess_err",
            h.map(fmt_f64).unwrap_or_else(|| "nan".to_string()),
        ),
    ]
}

fn fd_worst_errors(manifest: &RunManifest, p: &ProblemInstance) -> Option<(f64, Option<f64>)> {
    let y = manifest.start_point(p).ok()?;
    let center = Center::new(p, y, 1e-12).ok()?;
    let params = EdfParams::ones(manifest.k.unwrap_or(10.0), p.m()).ok()?;
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    let points = sample_in_domain(p, &center, FD_POINTS, &mut rng, &SamplePlan::default()).ok()?;
    let mut worst_g = 0.0_f64;
    let mut worst_h: Option<f64> = None;
    for x in &points {
        let report = edf_fd_check(p, &center, &params, x).ok()?;
        worst_g = worst_g.max(report.grad_rel_err);
        if let Some(h) = report.hess_rel_err {
            worst_h = Some(worst_h.unwrap_or(0.0).max(h));
        }
    }
    Some((worst_g, worst_h))
}

/// Largest of the stationarity, complementarity, and violation residuals
/// for the original problem's optimality system.
fn kkt_residual(
    p: &ProblemInstance,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<f64, CliError> {
    let eval = evaluate(p, x, EvalOrder::Gradient)?;
    let grad_f = eval.f_grad.expect("gradient tier is always available");
    let jac = eval.c_jac.expect("gradient tier is always available");
    let stat = (grad_f - jac.transpose() * lambda).amax();
    let comp: f64 = lambda
        .iter()
        .zip(eval.c_vals.iter())
        .map(|(l, c)| l * c.abs())
        .sum();
    let viol = eval
        .c_vals
        .iter()
        .fold(0.0_f64, |acc, &c| acc.max(-c));
    Ok(stat.max(comp).max(viol))
}

fn exit_for(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Converged => 0,
        SolveStatus::IterCap => 2,
        SolveStatus::InnerFailure => 3,
    }
}

fn write_text(path: &PathBuf, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })
}
