//! Text serialization for run artifacts.
//!
//! Numbers are printed with Rust's shortest round-trip formatting, so a
//! value parsed back from any file compares bit-identical to the value the
//! solver produced. Summaries are `key=value` lines; trajectories hold one
//! complete record per line with named fields.

use std::fmt::Write as _;

use nalgebra::DVector;

use epm_core::{IdfStepRecord, IterationRecord, SolveStatus};

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Comma separated coordinates, no brackets.
pub fn fmt_vec(v: &DVector<f64>) -> String {
    v.iter()
        .map(|x| fmt_f64(*x))
        .collect::<Vec<_>>()
        .join(",")
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => fmt_f64(x),
        None => "nan".to_string(),
    }
}

pub fn status_name(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Converged => "converged",
        SolveStatus::IterCap => "iter_cap",
        SolveStatus::InnerFailure => "inner_failure",
    }
}

/// One outer-step record, fields named after [`IterationRecord`].
pub fn epm_trajectory_line(r: &IterationRecord) -> String {
    format!(
        "outer_index={} dual_val={} primal_f={} merit={} complementarity={} inner_iters={} \
         edf_hessian_cond={} center_updated={} k_used={}",
        r.outer_index,
        fmt_f64(r.dual_val),
        fmt_f64(r.primal_f),
        fmt_f64(r.merit),
        fmt_f64(r.complementarity),
        r.inner_iters,
        fmt_opt(r.edf_hessian_cond),
        r.center_updated,
        fmt_f64(r.k_used),
    )
}

/// One center-shift record, fields named after [`IdfStepRecord`].
pub fn icm_trajectory_line(r: &IdfStepRecord) -> String {
    format!(
        "step_index={} tau_before={} f_after={} lambda={} grad_norm={} inner_iters={} \
         hessian_cond={} stalled={}",
        r.step_index,
        fmt_f64(r.tau_before),
        fmt_f64(r.f_after),
        fmt_vec(&r.lambda),
        fmt_f64(r.grad_norm),
        r.inner_iters,
        fmt_opt(r.hessian_cond),
        r.stalled,
    )
}

/// `key=value` lines in the order given.
pub fn summary_text(entries: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

/// Two space-separated columns: level gap, then Hessian condition number.
pub fn conditioning_table(rows: &[(f64, Option<f64>)]) -> String {
    let mut out = String::new();
    for (gap, cond) in rows {
        let _ = writeln!(out, "{} {}", fmt_f64(*gap), fmt_opt(*cond));
    }
    out
}

/// Parses one trajectory or summary field line back into (key, value) pairs.
/// Splits on whitespace, then on the first `=` in each token; vector values
/// keep their commas inside the token.
pub fn parse_record_line(line: &str) -> Vec<(String, String)> {
    line.split_whitespace()
        .filter_map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect()
}
