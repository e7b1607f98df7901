//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits nonzero if any fails.

use std::f64::consts::{E, SQRT_2};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use oil_core::analysis::{
    concentration_diagnostic, default_window, loglog_slope, rakhlin_bound, synthetic_mds_trial, MdsKind, ADAGRAD_K,
};
use oil_core::environments::SysIdEnvironment;
use oil_core::learners::{lemma2_bound, lemma2_bound_adaptive, theorem1_stepsize};
use oil_core::losses::{huber_value, self_bounding_check, smoothness_bound, SampleBatch, SampledLoss, SmoothnessMethod};
use oil_core::numerics::RandomStream;
use oil_core::online_il::{
    cumulative_average, decomposition_report, run_online_il, RunConfig, RunLedger, Scenario, StationarySetup,
    StepsizeChoice, SyntheticSetup,
};
use oil_core::policies::BiasLevel;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn median(v: &[f64]) -> f64 {
    oil_core::analysis::percentile(v, 50.0).unwrap()
}

fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get());
    let chunk = items.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    })
}

fn self_bounding_property() -> Outcome {
    let mut rng = RandomStream::new(11, 1);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for i in 0..10_000 {
        let dim = 1 + rng.index(6);
        let m = 1 + rng.index(12);
        let scale = rng.uniform(0.1, 3.0);
        let feats: Vec<Vec<f64>> = (0..m).map(|_| (0..dim).map(|_| scale * rng.normal()).collect()).collect();
        let targets: Vec<f64> = (0..m).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let batch = SampleBatch::new(feats, targets).unwrap();
        let loss = if i % 2 == 0 {
            SampledLoss::huber(batch, rng.uniform(0.01, 1.0)).unwrap()
        } else {
            SampledLoss::squared(batch)
        };
        let beta = smoothness_bound(&loss.batch, loss.kind, SmoothnessMethod::PowerIteration)
            .unwrap()
            .beta;
        let point: Vec<f64> = (0..dim).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let report = self_bounding_check(&loss, &[point], beta);
        worst = worst.max(report.max_ratio);
        failures += (!report.pass) as usize;
    }
    outcome(failures == 0, format!("10000 pairs, {failures} violations, max ‖∇f‖²/(4βf) = {worst:.4}"))
}

/// Unit-sphere Huber sequences with a known smoothness (β = 1) and a known
/// upper bound on ε̂ from the reference parameter (or its projection).
struct SyntheticCase {
    seed: u64,
    rounds: usize,
    bias: BiasLevel,
    offset: f64,
}

impl SyntheticCase {
    fn e_hat(&self, mu: f64) -> f64 {
        let reference_norm = oil_core::numerics::norm(&SyntheticSetup::default().theta_ref);
        let residual = match self.bias {
            BiasLevel::Fraction(f) => (1.0 - f) * reference_norm + self.offset,
            _ => self.offset,
        };
        huber_value(residual, mu).unwrap()
    }

    fn config(&self, stepsize: StepsizeChoice) -> RunConfig {
        RunConfig {
            rounds: self.rounds,
            batch_size: 8,
            eval_batch_size: 8,
            shared_eval_batch: true,
            resamples: 0,
            bias: self.bias,
            stepsize,
            scenario: Scenario::Synthetic(SyntheticSetup {
                offset: self.offset,
                ..SyntheticSetup::default()
            }),
            seed: self.seed,
            ..RunConfig::default()
        }
    }
}

fn synthetic_suite() -> Vec<SyntheticCase> {
    let mut cases = Vec::new();
    for rounds in [10, 100, 1000] {
        for seed in 0..20 {
            for (bias, offset) in [
                (BiasLevel::Unbiased, 0.0),
                (BiasLevel::Unbiased, 0.1),
                (BiasLevel::Fraction(0.5), 0.1),
            ] {
                cases.push(SyntheticCase { seed, rounds, bias, offset });
            }
        }
    }
    cases
}

struct SyntheticResult {
    regret: f64,
    regret_lin: f64,
    bound: f64,
    ledger: RunLedger,
}

fn run_synthetic(case: &SyntheticCase, adaptive: bool) -> SyntheticResult {
    let mu = RunConfig::default().mu;
    let e_hat = case.e_hat(mu);
    let stepsize = if adaptive {
        StepsizeChoice::AdaGrad { base: None }
    } else {
        StepsizeChoice::Theorem1 { beta: Some(1.0), e_hat: Some(e_hat) }
    };
    let ledger = run_online_il(&case.config(stepsize)).unwrap();
    let d = ledger.derived.as_ref().unwrap();
    assert!(d.eps_hat <= e_hat + 1e-9, "E_hat {e_hat} below eps_hat {}", d.eps_hat);
    assert!(d.beta <= 1.0 + 1e-9);
    let bound = if adaptive {
        lemma2_bound_adaptive(ADAGRAD_K, 1.0, ledger.r_a, case.rounds, e_hat).unwrap()
    } else {
        lemma2_bound(1.0, ledger.r_a, case.rounds, e_hat).unwrap()
    };
    SyntheticResult {
        regret: d.regret_hat,
        regret_lin: d.regret_lin,
        bound,
        ledger,
    }
}

fn constant_step_compliance(results: &[SyntheticResult]) -> Outcome {
    let violations = results.iter().filter(|r| r.regret > r.bound).count();
    let worst = results.iter().map(|r| r.regret / r.bound).fold(f64::MIN, f64::max);
    outcome(
        violations == 0,
        format!("{} runs, {violations} violations, max regret/bound = {worst:.4}", results.len()),
    )
}

fn ordering_ok(regret: f64, regret_lin: f64) -> bool {
    regret <= regret_lin + 1e-6 * regret_lin.abs().max(1.0)
}

fn regret_ordering(theorem1: &[SyntheticResult], others: &[&RunLedger]) -> Outcome {
    let mut bad = 0;
    let mut checked = 0;
    for r in theorem1 {
        checked += 1;
        let tol = 1e-6 * r.bound.max(1.0);
        if !ordering_ok(r.regret, r.regret_lin) || r.regret_lin > r.bound + tol {
            bad += 1;
        }
    }
    for l in others {
        checked += 1;
        let d = l.derived.as_ref().unwrap();
        if !ordering_ok(d.regret_hat, d.regret_lin) {
            bad += 1;
        }
    }
    outcome(
        bad == 0,
        format!("{checked} runs ({} against the bound), {bad} out of order", theorem1.len()),
    )
}

fn adaptive_compliance(results: &[SyntheticResult]) -> Outcome {
    let violations = results.iter().filter(|r| r.regret_lin > r.bound).count();
    let worst = results.iter().map(|r| r.regret_lin / r.bound).fold(f64::MIN, f64::max);
    outcome(
        violations == 0,
        format!("{} runs, {violations} violations, max lin-regret/bound = {worst:.4}", results.len()),
    )
}

fn decomposition_identity(ledgers: &[&RunLedger]) -> Outcome {
    let mut worst: f64 = 0.0;
    for l in ledgers {
        let rep = decomposition_report(l).unwrap();
        worst = worst.max(rep.sampled.residual.abs() / rep.scale);
        worst = worst.max(rep.expected.residual.abs() / rep.scale);
    }
    outcome(
        worst <= 1e-8,
        format!("{} ledgers, max |residual|/scale = {worst:.2e}", ledgers.len()),
    )
}

const IMITATION_SEEDS: [u64; 4] = [0, 1, 2, 3];
const FRACTIONS: [BiasLevel; 4] = [
    BiasLevel::Fraction(0.5),
    BiasLevel::Fraction(0.65),
    BiasLevel::Fraction(0.85),
    BiasLevel::Unbiased,
];

fn imitation_config(bias: BiasLevel, seed: u64) -> RunConfig {
    RunConfig {
        bias,
        seed,
        resamples: 0,
        ..RunConfig::default()
    }
}

/// Slope over the tail window of the per-round median across seeds of the
/// running average evaluation loss.
fn median_curve_slope(ledgers: &[&RunLedger]) -> (f64, Vec<f64>) {
    let curves: Vec<Vec<f64>> = ledgers.iter().map(|l| l.cumulative_average_eval()).collect();
    let n = curves[0].len();
    let med: Vec<f64> = (0..n)
        .map(|i| median(&curves.iter().map(|c| c[i]).collect::<Vec<_>>()))
        .collect();
    let fit = loglog_slope(&med, default_window(n)).unwrap();
    (fit.slope, med)
}

fn realizable_rate(unbiased: &[&RunLedger]) -> Outcome {
    let (slope, med) = median_curve_slope(unbiased);
    outcome(
        slope <= -0.8,
        format!("slope {slope:.3} (need ≤ -0.8), final median avg loss {:.3e}", med[med.len() - 1]),
    )
}

fn biased_transition(grid: &[Vec<RunLedger>]) -> Outcome {
    let half: Vec<&RunLedger> = grid[0].iter().collect();
    let (slope, med) = median_curve_slope(&half);
    let final_avg = med[med.len() - 1];
    let eps_hat = median(&half.iter().map(|l| l.derived.as_ref().unwrap().eps_hat).collect::<Vec<_>>());
    let ratio = final_avg / eps_hat;
    let monotone_seeds = (0..IMITATION_SEEDS.len())
        .filter(|&s| {
            let finals: Vec<f64> = grid
                .iter()
                .map(|row| *row[s].cumulative_average_eval().last().unwrap())
                .collect();
            finals.windows(2).all(|w| w[1] <= w[0])
        })
        .count();
    let pass = (-0.65..=-0.15).contains(&slope) && (0.5..=2.0).contains(&ratio) && monotone_seeds >= 3;
    outcome(
        pass,
        format!(
            "fraction 0.5 slope {slope:.3} (need [-0.65, -0.15]), avg/eps_hat {ratio:.2} (need [0.5, 2]), monotone in {monotone_seeds}/4 seeds"
        ),
    )
}

fn tail_slope(ledger: &RunLedger) -> f64 {
    let avg = ledger.cumulative_average_eval();
    loglog_slope(&avg, default_window(avg.len())).unwrap().slope
}

fn stationary_rate() -> (Outcome, Vec<RunLedger>) {
    let ledgers: Vec<RunLedger> = (0..4)
        .map(|seed| {
            run_online_il(&RunConfig {
                scenario: Scenario::Stationary(StationarySetup::default()),
                seed,
                resamples: 2,
                ..RunConfig::default()
            })
            .unwrap()
        })
        .collect();
    let refs: Vec<&RunLedger> = ledgers.iter().collect();
    let (slope, med) = median_curve_slope(&refs);
    let out = outcome(
        slope <= -0.8,
        format!("slope {slope:.3} (need ≤ -0.8), final median avg loss {:.3e}", med[med.len() - 1]),
    );
    (out, ledgers)
}

fn sysid_rate() -> (Outcome, RunLedger) {
    let ledger = run_online_il(&RunConfig {
        rounds: 200,
        scenario: Scenario::SysId(SysIdEnvironment::default_2d()),
        resamples: 2,
        ..RunConfig::default()
    })
    .unwrap();
    let slope = tail_slope(&ledger);
    let final_avg = *cumulative_average(&ledger.eval_losses()).last().unwrap();
    let out = outcome(
        final_avg <= 1e-3 && slope <= -0.8,
        format!("final avg loss {final_avg:.3e} (need ≤ 1e-3), slope {slope:.3} (need ≤ -0.8)"),
    );
    (out, ledger)
}

fn concentration_mc(ledgers: &[&RunLedger]) -> Outcome {
    let trials = 200;
    let violations = (0..trials)
        .filter(|&t| {
            let mut rng = RandomStream::new(1000 + t as u64, 42);
            let kind = if t % 2 == 0 {
                MdsKind::ScaledRademacher
            } else {
                MdsKind::Sphere { dim: 4 }
            };
            synthetic_mds_trial(kind, 300, 0.05, &mut rng).unwrap().violated
        })
        .count();
    let frac = violations as f64 / trials as f64;
    // the same check on logged runs, reported alongside
    let run_violations = ledgers
        .iter()
        .filter(|l| concentration_diagnostic(l, 0.05).unwrap().violated)
        .count();
    outcome(
        frac <= 0.10,
        format!(
            "{violations}/{trials} synthetic violations ({frac:.3}, need ≤ 0.10); {run_violations}/{} logged runs violate",
            ledgers.len()
        ),
    )
}

fn formula_spot_checks() -> Outcome {
    let eta = theorem1_stepsize(1.0, 100, 0.08, 1.0).unwrap();
    let l2 = lemma2_bound(1.0, 1.0, 100, 0.08).unwrap();
    let rb = rakhlin_bound(0.0, 0.0, SQRT_2, 1.0 / E).unwrap();
    let pass = (eta - 0.154508).abs() <= 1e-6 && (l2 - 16.0).abs() <= 1e-9 && (rb - SQRT_2).abs() <= 1e-9;
    outcome(pass, format!("stepsize {eta:.7}, lemma2 {l2:.10}, rakhlin {rb:.10}"))
}

fn report(results: &mut Vec<bool>, id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let o = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let pass = o.pass && in_time;
    println!(
        "{} [{id:>2}] {name}: {} ({:.1}s{})",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64(),
        if in_time { String::new() } else { format!(", over {}s budget", budget.as_secs()) }
    );
    results.push(pass);
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--list`; nothing to list here
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut results = Vec::new();
    let secs = Duration::from_secs;

    report(&mut results, 1, "self-bounding gradients", secs(5), self_bounding_property);

    let suite = synthetic_suite();
    let mut theorem1 = Vec::new();
    report(&mut results, 2, "constant-stepsize regret bound", secs(30), || {
        theorem1 = par_map(&suite, |c| run_synthetic(c, false));
        constant_step_compliance(&theorem1)
    });
    let mut adaptive = Vec::new();
    report(&mut results, 4, "adaptive-stepsize regret bound", secs(30), || {
        adaptive = par_map(&suite, |c| run_synthetic(c, true));
        adaptive_compliance(&adaptive)
    });

    let cells: Vec<(usize, u64)> = (0..FRACTIONS.len())
        .flat_map(|f| IMITATION_SEEDS.iter().map(move |&s| (f, s)))
        .collect();
    let mut grid: Vec<Vec<RunLedger>> = Vec::new();
    report(&mut results, 6, "realizable rate (unbiased imitation)", secs(180), || {
        let mut flat = par_map(&cells, |&(f, s)| run_online_il(&imitation_config(FRACTIONS[f], s)).unwrap());
        for _ in 0..FRACTIONS.len() {
            grid.push(flat.drain(..IMITATION_SEEDS.len()).collect());
        }
        realizable_rate(&grid[3].iter().collect::<Vec<_>>())
    });
    report(&mut results, 7, "biased rate transition", secs(300), || biased_transition(&grid));

    let mut stationary = Vec::new();
    report(&mut results, 8, "stationary fast rate", secs(60), || {
        let (o, l) = stationary_rate();
        stationary = l;
        o
    });
    let mut sysid = None;
    report(&mut results, 9, "system identification", secs(60), || {
        let (o, l) = sysid_rate();
        sysid = Some(l);
        o
    });

    let mut all: Vec<&RunLedger> = theorem1.iter().map(|r| &r.ledger).collect();
    all.extend(adaptive.iter().map(|r| &r.ledger));
    all.extend(grid.iter().flatten());
    all.extend(stationary.iter());
    all.extend(sysid.iter());
    let others: Vec<&RunLedger> = all[theorem1.len()..].to_vec();
    report(&mut results, 3, "regret ordering", secs(5), || regret_ordering(&theorem1, &others));
    report(&mut results, 5, "decomposition identity", secs(30), || decomposition_identity(&all));

    let logged: Vec<&RunLedger> = stationary.iter().chain(sysid.iter()).collect();
    report(&mut results, 10, "concentration bound", secs(30), || concentration_mc(&logged));
    report(&mut results, 11, "formula spot checks", secs(1), formula_spot_checks);

    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
