//! Runs a grid of (bias level, seed) cells and writes their artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use oil_core::analysis::{percentile, SlopeFit};
use oil_core::online_il::{run_online_il, RunLedger};
use oil_core::policies::BiasLevel;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::report::{analyze_run, write_json, write_ledger_csv, RunAnalysis, RunDocument};

pub const AGGREGATE_FILE: &str = "aggregate.csv";

#[derive(Debug, Clone)]
pub struct ExperimentGrid {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub level: BiasLevel,
    pub seed: u64,
    pub radius: Option<f64>,
    pub analysis: Option<RunAnalysis>,
    pub aborted: Option<String>,
    /// Set when the cell could not be run or its files not written.
    pub error: Option<String>,
    pub avg_curve: Vec<f64>,
}

impl CellResult {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn violations(&self) -> usize {
        self.analysis.as_ref().map_or(0, |a| a.violations)
    }
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub cells: Vec<CellResult>,
    pub files: Vec<PathBuf>,
}

impl GridOutcome {
    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(CellResult::failed)
    }

    /// Failed cells, aborted runs and check violations all count.
    pub fn all_checks_pass(&self) -> bool {
        self.cells
            .iter()
            .all(|c| !c.failed() && c.aborted.is_none() && c.violations() == 0)
    }
}

pub fn cell_stem(level: BiasLevel, seed: u64) -> String {
    format!("{}_seed{seed}", level.label())
}

fn run_cell(grid: &ExperimentGrid, level: BiasLevel, seed: u64) -> (CellResult, Vec<PathBuf>) {
    let mut cell = CellResult {
        level,
        seed,
        radius: None,
        analysis: None,
        aborted: None,
        error: None,
        avg_curve: Vec::new(),
    };
    let result = (|| -> Result<(RunLedger, RunAnalysis, Vec<PathBuf>), CliError> {
        let config = grid.config.run_config(level, seed).map_err(|e| CliError::Config(vec![e]))?;
        let ledger = run_online_il(&config)?;
        let analysis = analyze_run(&ledger, grid.config.delta)?;
        let stem = cell_stem(level, seed);
        let csv = grid.out_dir.join(format!("{stem}.csv"));
        let json = grid.out_dir.join(format!("{stem}.json"));
        write_ledger_csv(&ledger, &csv)?;
        let doc = RunDocument::new(&ledger, analysis.clone(), grid.config.delta, &format!("{stem}.csv"));
        write_json(&doc, &json)?;
        Ok((ledger, analysis, vec![csv, json]))
    })();
    match result {
        Ok((ledger, analysis, files)) => {
            cell.radius = Some(ledger.radius);
            cell.avg_curve = ledger.cumulative_average_eval();
            cell.aborted = ledger.aborted;
            cell.analysis = Some(analysis);
            (cell, files)
        }
        Err(e) => {
            cell.error = Some(e.to_string());
            (cell, Vec::new())
        }
    }
}

/// Runs every cell on `workers` threads. Per-cell failures are recorded in
/// the outcome; only output-directory problems abort the grid.
pub fn run_grid(grid: &ExperimentGrid, workers: usize) -> Result<GridOutcome, CliError> {
    std::fs::create_dir_all(&grid.out_dir).map_err(|e| CliError::io(&grid.out_dir, e))?;
    let cfg = &grid.config;
    let cells: Vec<(BiasLevel, u64)> = cfg
        .levels
        .iter()
        .flat_map(|l| cfg.seeds.iter().map(move |s| (*l, *s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Format(format!("thread pool: {e}")))?;
    let results: Vec<(CellResult, Vec<PathBuf>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(level, seed)| {
                let start = Instant::now();
                let out = run_cell(grid, level, seed);
                match &out.0.error {
                    Some(e) => eprintln!("{}: failed: {e}", cell_stem(level, seed)),
                    None => eprintln!("{}: done in {:.1}s", cell_stem(level, seed), start.elapsed().as_secs_f64()),
                }
                out
            })
            .collect()
    });

    let mut files = Vec::new();
    let mut outcome_cells = Vec::new();
    for (cell, f) in results {
        files.extend(f);
        outcome_cells.push(cell);
    }
    let aggregate = grid.out_dir.join(AGGREGATE_FILE);
    write_aggregate(&outcome_cells, &aggregate)?;
    files.push(aggregate);
    // a percentile band needs more than one seed
    if cfg.seeds.len() > 1 {
        for level in &cfg.levels {
            let curves: Vec<&Vec<f64>> = outcome_cells
                .iter()
                .filter(|c| c.level == *level && !c.failed() && c.aborted.is_none())
                .map(|c| &c.avg_curve)
                .collect();
            if curves.is_empty() {
                continue;
            }
            let path = grid.out_dir.join(format!("plot_{}.dat", level.label()));
            write_plot(&curves, &path)?;
            files.push(path);
        }
    }
    Ok(GridOutcome {
        cells: outcome_cells,
        files,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    format!("{}", v.unwrap_or(f64::NAN))
}

pub const AGGREGATE_HEADER: [&str; 9] = [
    "radius",
    "seed",
    "slope",
    "eps_hat",
    "eps",
    "regret_hat",
    "lemma2_bound",
    "thm2_bound",
    "violations",
];

fn write_aggregate(cells: &[CellResult], path: &Path) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::csv(path, e);
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(AGGREGATE_HEADER).map_err(io)?;
    for c in cells {
        let a = c.analysis.as_ref();
        let bounds = a.and_then(|a| a.bounds.as_ref());
        let row = [
            fmt_opt(c.radius),
            c.seed.to_string(),
            fmt_opt(a.and_then(|a| a.slope.map(|s: SlopeFit| s.slope))),
            fmt_opt(a.and_then(|a| a.eps_hat)),
            fmt_opt(a.and_then(|a| a.eps)),
            fmt_opt(a.and_then(|a| a.regret_hat)),
            fmt_opt(bounds.map(|b| b.lemma2)),
            fmt_opt(bounds.map(|b| b.thm2_average)),
            a.map_or(String::new(), |a| a.violations.to_string()),
        ];
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Gnuplot data: `log10 N`, then the median, 10th and 90th percentiles of
/// `log10` running-average loss across seeds. Curves of different lengths
/// are cut to the shortest.
fn write_plot(curves: &[&Vec<f64>], path: &Path) -> Result<(), CliError> {
    let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    let mut out = String::from("# log10_n median_log10_avg_loss p10 p90\n");
    for i in 0..len {
        let logs: Vec<f64> = curves.iter().map(|c| c[i].max(1e-300).log10()).collect();
        let q = |p| percentile(&logs, p).map_err(CliError::from);
        out.push_str(&format!(
            "{} {} {} {}\n",
            ((i + 1) as f64).log10(),
            q(50.0)?,
            q(10.0)?,
            q(90.0)?
        ));
    }
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}
