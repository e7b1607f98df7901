//! Per-run artifacts: the ledger CSV, the analysis JSON, and re-analysis of a
//! stored pair.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use oil_core::analysis::{
    bound_inputs, concentration_diagnostic, default_window, loglog_slope, theory_bounds, ConcentrationReport,
    SlopeFit, TheoryBounds,
};
use oil_core::learners::StepsizeRule;
use oil_core::numerics::ParameterVector;
use oil_core::online_il::{decomposition_report, DecompositionReport, Derived, RoundRecord, RunConfig, RunLedger};

use crate::error::CliError;

/// Residual tolerance of the decomposition identity, relative to its scale.
pub const DECOMPOSITION_TOL: f64 = 1e-8;
/// Tolerance of `Regret ≤ linearized regret`, relative to `max(1, |lin|)`.
pub const ORDERING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checks {
    pub decomposition_ok: Option<bool>,
    pub regret_ordering_ok: Option<bool>,
    /// `None` when the run carried no resample statistics.
    pub concentration_ok: Option<bool>,
    pub oracle_converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAnalysis {
    pub rounds: usize,
    pub final_avg_eval: Option<f64>,
    pub best_round: Option<usize>,
    pub slope: Option<SlopeFit>,
    pub eps_hat: Option<f64>,
    pub eps: Option<f64>,
    pub regret_hat: Option<f64>,
    pub regret_lin: Option<f64>,
    pub bounds: Option<TheoryBounds>,
    pub decomposition: Option<DecompositionReport>,
    pub concentration: Option<ConcentrationReport>,
    pub checks: Checks,
    /// Number of failed checks.
    pub violations: usize,
}

pub fn analyze_run(ledger: &RunLedger, delta: f64) -> Result<RunAnalysis, CliError> {
    let avg = ledger.cumulative_average_eval();
    let slope = loglog_slope(&avg, default_window(avg.len())).ok();
    let d = ledger.derived.as_ref();
    let decomposition = d.map(|_| decomposition_report(ledger)).transpose()?;
    let has_resamples = ledger.records.first().is_some_and(|r| r.w_vector.is_some());
    let concentration = if d.is_some() && has_resamples {
        Some(concentration_diagnostic(ledger, delta)?)
    } else {
        None
    };
    let bounds = d
        .map(|_| bound_inputs(ledger, delta).and_then(|b| theory_bounds(&b, concentration.as_ref())))
        .transpose()?;

    let checks = Checks {
        decomposition_ok: decomposition.map(|r| {
            r.sampled.residual.abs().max(r.expected.residual.abs()) <= DECOMPOSITION_TOL * r.scale
        }),
        regret_ordering_ok: d.map(|d| d.regret_hat <= d.regret_lin + ORDERING_TOL * d.regret_lin.abs().max(1.0)),
        concentration_ok: concentration.map(|c| !c.violated),
        oracle_converged: d.map(|d| d.oracle_converged),
    };
    let violations = [checks.decomposition_ok, checks.regret_ordering_ok, checks.concentration_ok]
        .iter()
        .filter(|c| **c == Some(false))
        .count();
    Ok(RunAnalysis {
        rounds: ledger.rounds(),
        final_avg_eval: avg.last().copied(),
        best_round: ledger.best_round(),
        slope,
        eps_hat: d.map(|d| d.eps_hat),
        eps: d.map(|d| d.eps),
        regret_hat: d.map(|d| d.regret_hat),
        regret_lin: d.map(|d| d.regret_lin),
        bounds,
        decomposition,
        concentration,
        checks,
        violations,
    })
}

/// Run-dependent values live outside `metadata`, so two runs of one config
/// differ only there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub created_unix: u64,
    pub ledger_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDocument {
    pub metadata: Metadata,
    pub config: RunConfig,
    pub delta: f64,
    pub radius: f64,
    pub r_a: f64,
    pub stepsize_rule: StepsizeRule,
    pub final_theta: ParameterVector,
    pub aborted: Option<String>,
    pub derived: Option<Derived>,
    pub analysis: RunAnalysis,
}

impl RunDocument {
    pub fn new(ledger: &RunLedger, analysis: RunAnalysis, delta: f64, ledger_file: &str) -> Self {
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Self {
            metadata: Metadata {
                tool: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                created_unix,
                ledger_file: ledger_file.into(),
            },
            config: ledger.config.clone(),
            delta,
            radius: ledger.radius,
            r_a: ledger.r_a,
            stepsize_rule: ledger.stepsize_rule,
            final_theta: ledger.final_theta.clone(),
            aborted: ledger.aborted.clone(),
            derived: ledger.derived.clone(),
            analysis,
        }
    }
}

fn ledger_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "n",
        "sampled_loss",
        "eval_loss",
        "avg_eval_loss",
        "grad_norm_sq",
        "stepsize",
        "w_vector",
        "w_scalar",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for prefix in ["theta", "grad", "eval_grad"] {
        h.extend((0..dim).map(|i| format!("{prefix}_{i}")));
    }
    h
}

/// `{}` on `f64` prints the shortest string that parses back to the same
/// value.
fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_ledger_csv(ledger: &RunLedger, path: &Path) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::csv(path, e);
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(ledger_header(ledger.final_theta.dim())).map_err(io)?;
    let avg = ledger.cumulative_average_eval();
    for (r, a) in ledger.records.iter().zip(avg) {
        let mut row = vec![
            r.n.to_string(),
            num(r.sampled_loss),
            num(r.eval_loss),
            num(a),
            num(r.grad_norm_sq),
            num(r.stepsize),
            r.w_vector.map_or(String::new(), num),
            r.w_scalar.map_or(String::new(), num),
        ];
        for v in [&r.theta, &r.grad, &r.eval_grad] {
            row.extend(v.as_slice().iter().map(|x| num(*x)));
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_ledger_csv(path: &Path) -> Result<Vec<RoundRecord>, CliError> {
    let io = |e: csv::Error| CliError::csv(path, e);
    let bad = |line: usize, msg: String| CliError::Format(format!("{}:{line}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    let header = r.headers().map_err(io)?.clone();
    let dim = header.iter().filter(|h| h.starts_with("theta_")).count();
    if header.len() != 8 + 3 * dim || ledger_header(dim).iter().zip(header.iter()).any(|(a, b)| a != b) {
        return Err(bad(1, "unexpected ledger header".into()));
    }
    let mut records = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(io)?;
        let line = i + 2;
        let f = |j: usize| -> Result<f64, CliError> {
            row[j]
                .parse::<f64>()
                .map_err(|_| bad(line, format!("column `{}`: `{}` is not a number", &header[j], &row[j])))
        };
        let opt = |j: usize| -> Result<Option<f64>, CliError> {
            if row[j].is_empty() {
                Ok(None)
            } else {
                f(j).map(Some)
            }
        };
        let vec_at = |start: usize| -> Result<ParameterVector, CliError> {
            let v = (start..start + dim).map(f).collect::<Result<Vec<_>, _>>()?;
            ParameterVector::new(v).map_err(|e| bad(line, e.to_string()))
        };
        let n: usize = row[0].parse().map_err(|_| bad(line, format!("bad round index `{}`", &row[0])))?;
        records.push(RoundRecord {
            n,
            theta: vec_at(8)?,
            sampled_loss: f(1)?,
            eval_loss: f(2)?,
            grad: vec_at(8 + dim)?,
            grad_norm_sq: f(4)?,
            stepsize: f(5)?,
            eval_grad: vec_at(8 + 2 * dim)?,
            w_vector: opt(6)?,
            w_scalar: opt(7)?,
        });
    }
    Ok(records)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// The analysis JSON stored next to a ledger CSV.
pub fn document_path(ledger_csv: &Path) -> PathBuf {
    ledger_csv.with_extension("json")
}

/// Rebuilds a ledger from its CSV and JSON and recomputes the analysis.
pub fn reanalyze(ledger_csv: &Path) -> Result<RunAnalysis, CliError> {
    let doc_path = document_path(ledger_csv);
    let text = std::fs::read_to_string(&doc_path).map_err(|e| CliError::io(&doc_path, e))?;
    let doc: RunDocument =
        serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", doc_path.display())))?;
    let records = read_ledger_csv(ledger_csv)?;
    let ledger = RunLedger {
        config: doc.config,
        radius: doc.radius,
        r_a: doc.r_a,
        stepsize_rule: doc.stepsize_rule,
        records,
        final_theta: doc.final_theta,
        batch_archive: Vec::new(),
        eval_archive: Vec::new(),
        derived: doc.derived,
        aborted: doc.aborted,
    };
    analyze_run(&ledger, doc.delta)
}
