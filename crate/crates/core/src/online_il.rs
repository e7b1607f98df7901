//! The online imitation-learning loop and its per-round ledger.
//!
//! Every round `n` draws a batch under the current policy `π_θn`, builds the
//! sampled loss `l̂_n`, hands its gradient at `θ_n` to the learner, and scores
//! `θ_n` on an independent evaluation batch that the learner never sees.

use serde::{Deserialize, Serialize};

use crate::environments::{collect_batch, sysid_collect, CartPoleConfig, SysIdEnvironment};
use crate::error::{Error, Result};
use crate::learners::{
    batch_min, batch_min_from, empirical_regret, learner_step, linearized_regret, Algorithm,
    LearnerConfig, LearnerState, MinimizerResult, StepsizeRule,
};
use crate::losses::{smoothness_bound, LossKind, SampleBatch, SampledLoss, SmoothnessMethod};
use crate::numerics::{dot, norm, ParameterSet, ParameterVector, RandomStream, StreamKind};
use crate::policies::{class_radius, BiasLevel, ExpertPolicy, FeatureKind, FeatureMap, LinearPolicy};

pub const DEFAULT_MU: f64 = 0.05;
pub const DEFAULT_RESAMPLES: usize = 10;
pub const PILOT_E_HAT_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImitationSetup {
    pub cartpole: CartPoleConfig,
    pub expert: ExpertPolicy,
    pub features: FeatureKind,
}

impl Default for ImitationSetup {
    fn default() -> Self {
        Self {
            cartpole: CartPoleConfig::default(),
            expert: ExpertPolicy::default(),
            features: FeatureKind::Identity,
        }
    }
}

/// Fixed linear-Gaussian regression problem: the same expected loss every
/// round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySetup {
    /// Per-coordinate standard deviation of the features.
    pub feature_scales: Vec<f64>,
    pub theta_star: Vec<f64>,
    /// Label noise standard deviation; the minimum expected loss is its square.
    pub noise: f64,
}

impl Default for StationarySetup {
    fn default() -> Self {
        Self {
            feature_scales: vec![1.0, 0.8, 0.6, 0.5, 0.4],
            theta_star: vec![0.5, -0.3, 0.2, 0.4, -0.1],
            noise: 0.0,
        }
    }
}

/// A non-stationary sequence of Huber regression losses: unit-sphere
/// features, targets `⟨θ_ref, φ⟩ + c_n` with an offset that alternates sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSetup {
    pub theta_ref: Vec<f64>,
    pub feature_scale: f64,
    pub offset: f64,
}

impl Default for SyntheticSetup {
    fn default() -> Self {
        Self {
            theta_ref: vec![0.6, -0.4, 0.3],
            feature_scale: 1.0,
            offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Scenario {
    Imitation(ImitationSetup),
    SysId(SysIdEnvironment),
    Stationary(StationarySetup),
    Synthetic(SyntheticSetup),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Imitation(_) => "imitation",
            Scenario::SysId(_) => "sysid",
            Scenario::Stationary(_) => "stationary",
            Scenario::Synthetic(_) => "synthetic",
        }
    }

    pub fn loss_kind(&self) -> LossKind {
        match self {
            Scenario::Imitation(_) | Scenario::Synthetic(_) => LossKind::HuberImitation,
            Scenario::SysId(_) | Scenario::Stationary(_) => LossKind::Squared,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepsizeChoice {
    Constant(f64),
    /// Bias-tuned constant stepsize. A missing `beta` is estimated from a
    /// pilot batch drawn under the initial policy. A missing `e_hat` is 0 for
    /// an unbiased class and otherwise [`PILOT_E_HAT_FACTOR`] times the
    /// minimum average loss on that pilot batch.
    Theorem1 { beta: Option<f64>, e_hat: Option<f64> },
    AdaGrad { base: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitChoice {
    Zero,
    /// The realizing parameter (expert gains, true model), projected.
    Reference,
    /// Uniform on the sphere of radius half the class radius.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub rounds: usize,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub mu: f64,
    pub bias: BiasLevel,
    pub stepsize: StepsizeChoice,
    pub algorithm: Algorithm,
    pub scenario: Scenario,
    pub seed: u64,
    pub init: InitChoice,
    /// Frozen-θ resamples per round for the conditional-variance estimate;
    /// 0 turns the estimate off.
    pub resamples: usize,
    /// Score each round on its own training batch instead of a fresh one.
    pub shared_eval_batch: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rounds: 300,
            batch_size: 200,
            eval_batch_size: 1000,
            mu: DEFAULT_MU,
            bias: BiasLevel::Unbiased,
            stepsize: StepsizeChoice::AdaGrad { base: None },
            algorithm: Algorithm::Ogd,
            scenario: Scenario::Imitation(ImitationSetup::default()),
            seed: 0,
            init: InitChoice::Zero,
            resamples: DEFAULT_RESAMPLES,
            shared_eval_batch: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("rounds must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        if self.eval_batch_size < self.batch_size {
            return Err(Error::InvalidParameter(format!(
                "eval batch size {} is smaller than batch size {}",
                self.eval_batch_size, self.batch_size
            )));
        }
        if self.shared_eval_batch && self.eval_batch_size != self.batch_size {
            return Err(Error::InvalidParameter(
                "a shared eval batch requires eval batch size = batch size".into(),
            ));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter("mu must be positive".into()));
        }
        match self.stepsize {
            StepsizeChoice::Constant(eta) if !(eta > 0.0 && eta.is_finite()) => {
                return Err(Error::InvalidParameter("stepsize must be positive".into()));
            }
            StepsizeChoice::Theorem1 { beta, e_hat } => {
                if beta.is_some_and(|b| !(b > 0.0 && b.is_finite()))
                    || e_hat.is_some_and(|e| !(e >= 0.0 && e.is_finite()))
                {
                    return Err(Error::InvalidParameter("theorem1 stepsize needs beta > 0 and e_hat ≥ 0".into()));
                }
            }
            StepsizeChoice::AdaGrad { base: Some(b) } if !(b > 0.0 && b.is_finite()) => {
                return Err(Error::InvalidParameter("adagrad base must be positive".into()));
            }
            _ => {}
        }
        match &self.scenario {
            Scenario::Imitation(s) => s.cartpole.validate()?,
            Scenario::SysId(env) => {
                env.validate()?;
                if self.batch_size < 2 {
                    return Err(Error::InvalidParameter("system-id batches need at least 2 transitions".into()));
                }
            }
            Scenario::Stationary(s) => {
                if s.feature_scales.is_empty() || s.feature_scales.len() != s.theta_star.len() {
                    return Err(Error::InvalidParameter("stationary scales and theta_star must match".into()));
                }
                if s.noise < 0.0 {
                    return Err(Error::InvalidParameter("noise must be nonnegative".into()));
                }
            }
            Scenario::Synthetic(s) => {
                if s.theta_ref.is_empty() || s.feature_scale.is_nan() || s.feature_scale <= 0.0 {
                    return Err(Error::InvalidParameter("synthetic scenario needs a reference and a positive scale".into()));
                }
            }
        }
        Ok(())
    }
}

/// Scenario with its derived objects built once per run.
pub struct LossSource {
    scenario: Scenario,
    features: Option<FeatureMap>,
    mu: f64,
}

impl LossSource {
    pub fn new(scenario: &Scenario, mu: f64) -> Self {
        let features = match scenario {
            Scenario::Imitation(s) => Some(FeatureMap::new(s.features)),
            _ => None,
        };
        Self {
            scenario: scenario.clone(),
            features,
            mu,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.scenario {
            Scenario::Imitation(_) => self.features.as_ref().map_or(4, FeatureMap::dim),
            Scenario::SysId(env) => env.param_dim(),
            Scenario::Stationary(s) => s.theta_star.len(),
            Scenario::Synthetic(s) => s.theta_ref.len(),
        }
    }

    /// A parameter achieving zero expected loss (or the noise floor).
    pub fn reference_theta(&self) -> Vec<f64> {
        match &self.scenario {
            Scenario::Imitation(s) => self
                .features
                .as_ref()
                .expect("imitation features")
                .embed_gains(&s.expert.gains)
                .into_vec(),
            Scenario::SysId(env) => env.true_params(),
            Scenario::Stationary(s) => s.theta_star.clone(),
            Scenario::Synthetic(s) => s.theta_ref.clone(),
        }
    }

    pub fn loss_kind(&self) -> LossKind {
        self.scenario.loss_kind()
    }

    /// Batch of `m` samples for round `round` under the policy of `theta`.
    pub fn draw(&self, round: usize, theta: &[f64], m: usize, rng: &mut RandomStream) -> Result<SampledLoss> {
        let batch = match &self.scenario {
            Scenario::Imitation(s) => {
                let features = self.features.clone().expect("imitation features");
                let policy = LinearPolicy::new(ParameterVector::new(theta.to_vec())?, features)?;
                collect_batch(&policy, &s.expert, &policy.features, &s.cartpole, m, rng)?
            }
            Scenario::SysId(env) => sysid_collect(env, theta, m, rng)?,
            Scenario::Stationary(s) => {
                let mut feats = Vec::with_capacity(m);
                let mut labels = Vec::with_capacity(m);
                for _ in 0..m {
                    let phi: Vec<f64> = s.feature_scales.iter().map(|sc| sc * rng.normal()).collect();
                    labels.push(dot(&s.theta_star, &phi) + s.noise * rng.normal());
                    feats.push(phi);
                }
                SampleBatch::new(feats, labels)?
            }
            Scenario::Synthetic(s) => {
                let sign = if round.is_multiple_of(2) { 1.0 } else { -1.0 };
                let mut feats = Vec::with_capacity(m);
                let mut labels = Vec::with_capacity(m);
                for _ in 0..m {
                    let phi: Vec<f64> = rng
                        .unit_vector(s.theta_ref.len())
                        .into_iter()
                        .map(|v| v * s.feature_scale)
                        .collect();
                    labels.push(dot(&s.theta_ref, &phi) + sign * s.offset);
                    feats.push(phi);
                }
                SampleBatch::new(feats, labels)?
            }
        };
        match self.loss_kind() {
            LossKind::HuberImitation => SampledLoss::huber(batch, self.mu),
            LossKind::Squared => Ok(SampledLoss::squared(batch)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub n: usize,
    pub theta: ParameterVector,
    pub sampled_loss: f64,
    pub eval_loss: f64,
    pub grad: ParameterVector,
    pub grad_norm_sq: f64,
    /// Stepsize of the update leaving this round; 0 for a skipped update.
    pub stepsize: f64,
    pub eval_grad: ParameterVector,
    /// Resample estimate of `E‖∇l_n(θ_n) − ∇l̂_n(θ_n)‖²`.
    pub w_vector: Option<f64>,
    /// Resample estimate of `E⟨∇l_n(θ_n) − ∇l̂_n(θ_n), θ_n⟩²`.
    pub w_scalar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub regret_hat: f64,
    pub regret_lin: f64,
    pub eps_hat: f64,
    pub eps: f64,
    pub theta_star_hat: ParameterVector,
    pub theta_star: ParameterVector,
    /// Minimum over evaluation losses at `θ⋆` from the sampled-loss oracle,
    /// averaged: `(1/N) Σ l_n(θ̂⋆)`.
    pub eval_at_theta_star_hat: f64,
    /// `(1/N) Σ l̂_n(θ⋆)`.
    pub sampled_at_theta_star: f64,
    pub oracle_converged: bool,
    /// Largest smoothness constant among the sampled losses.
    pub beta: f64,
    /// Largest gradient-norm bound over the ball among the sampled losses.
    pub grad_bound: f64,
    pub feature_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub config: RunConfig,
    pub radius: f64,
    pub r_a: f64,
    /// The stepsize rule after pilot estimates are resolved.
    pub stepsize_rule: StepsizeRule,
    pub records: Vec<RoundRecord>,
    pub final_theta: ParameterVector,
    pub batch_archive: Vec<SampledLoss>,
    pub eval_archive: Vec<SampledLoss>,
    pub derived: Option<Derived>,
    /// Set when the environment aborted; the records stop at the failing
    /// round.
    pub aborted: Option<String>,
}

impl RunLedger {
    pub fn rounds(&self) -> usize {
        self.records.len()
    }

    pub fn eval_losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.eval_loss).collect()
    }

    /// `(1/n) Σ_{i≤n} eval_loss_i` for every `n`.
    pub fn cumulative_average_eval(&self) -> Vec<f64> {
        cumulative_average(&self.eval_losses())
    }

    /// Round (1-based) with the smallest evaluation loss.
    pub fn best_round(&self) -> Option<usize> {
        self.records
            .iter()
            .min_by(|a, b| a.eval_loss.total_cmp(&b.eval_loss))
            .map(|r| r.n)
    }

    pub fn decisions(&self) -> Vec<ParameterVector> {
        self.records.iter().map(|r| r.theta.clone()).collect()
    }

    pub fn set(&self) -> Result<ParameterSet> {
        ParameterSet::new(self.radius, self.final_theta.dim())
    }
}

pub fn cumulative_average(values: &[f64]) -> Vec<f64> {
    let mut sum = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            sum += v;
            sum / (i + 1) as f64
        })
        .collect()
}

/// Runs the loop and computes the derived regret and bias quantities.
pub fn run_online_il(config: &RunConfig) -> Result<RunLedger> {
    let mut ledger = run_rounds(config)?;
    if ledger.aborted.is_none() {
        ledger.derived = Some(derive(&ledger)?);
    }
    Ok(ledger)
}

/// Runs the loop only; `derived` is left empty.
pub fn run_rounds(config: &RunConfig) -> Result<RunLedger> {
    config.validate()?;
    let source = LossSource::new(&config.scenario, config.mu);
    let dim = source.dim();
    let reference = source.reference_theta();
    let radius = class_radius(norm(&reference), config.bias)?;
    let set = ParameterSet::new(radius, dim)?;

    let init = match config.init {
        InitChoice::Zero => ParameterVector::zeros(dim),
        InitChoice::Reference => ParameterVector::new(reference.clone())?,
        InitChoice::Random => {
            let mut rng = RandomStream::for_round(config.seed, StreamKind::Init, 0, 0);
            let u = rng.unit_vector(dim);
            ParameterVector::new(u.into_iter().map(|v| 0.5 * radius * v).collect())?
        }
    };
    let mut state = LearnerState::new(init, &set)?;

    let stepsize_rule = match config.stepsize {
        StepsizeChoice::Constant(eta) => StepsizeRule::Constant(eta),
        StepsizeChoice::AdaGrad { base } => StepsizeRule::AdaGrad { base },
        StepsizeChoice::Theorem1 { beta, e_hat } => {
            let pilot = if beta.is_none() || (e_hat.is_none() && config.bias != BiasLevel::Unbiased) {
                Some(pilot_batch(&source, config, state.theta.as_slice())?)
            } else {
                None
            };
            let beta = match (beta, &pilot) {
                (Some(b), _) => b,
                (None, Some(loss)) => {
                    let cert = smoothness_bound(&loss.batch, loss.kind, SmoothnessMethod::PowerIteration)?;
                    // a degenerate pilot (e.g. a resting cart-pole) would give β = 0
                    cert.beta.max(1e-12)
                }
                (None, None) => unreachable!(),
            };
            let e_hat = match (e_hat, &pilot) {
                (Some(e), _) => e,
                (None, Some(loss)) if config.bias != BiasLevel::Unbiased => {
                    PILOT_E_HAT_FACTOR * batch_min(std::slice::from_ref(loss), &set)?.average_value.max(0.0)
                }
                _ => 0.0,
            };
            StepsizeRule::Theorem1 {
                beta,
                rounds: config.rounds,
                e_hat,
            }
        }
    };
    let learner = LearnerConfig::new(set, stepsize_rule, config.algorithm)?;

    let mut ledger = RunLedger {
        config: config.clone(),
        radius,
        r_a: learner.r_a,
        stepsize_rule,
        records: Vec::with_capacity(config.rounds),
        final_theta: state.theta.clone(),
        batch_archive: Vec::with_capacity(config.rounds),
        eval_archive: Vec::with_capacity(config.rounds),
        derived: None,
        aborted: None,
    };

    for n in 1..=config.rounds {
        match play_round(&source, config, &learner, &state, n) {
            Ok((record, loss, eval, next)) => {
                ledger.records.push(record);
                ledger.batch_archive.push(loss);
                ledger.eval_archive.push(eval);
                state = next;
                ledger.final_theta = state.theta.clone();
            }
            Err(Error::EnvironmentAbort(msg)) => {
                ledger.aborted = Some(format!("round {n}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ledger)
}

fn pilot_batch(source: &LossSource, config: &RunConfig, theta: &[f64]) -> Result<SampledLoss> {
    let mut rng = RandomStream::for_round(config.seed, StreamKind::Pilot, 0, 0);
    source.draw(0, theta, config.eval_batch_size, &mut rng)
}

type RoundOutput = (RoundRecord, SampledLoss, SampledLoss, LearnerState);

fn play_round(
    source: &LossSource,
    config: &RunConfig,
    learner: &LearnerConfig,
    state: &LearnerState,
    n: usize,
) -> Result<RoundOutput> {
    let theta = state.theta.as_slice();
    let mut train_rng = RandomStream::for_round(config.seed, StreamKind::Train, n, 0);
    let loss = source.draw(n, theta, config.batch_size, &mut train_rng)?;
    let eval = if config.shared_eval_batch {
        loss.clone()
    } else {
        let mut eval_rng = RandomStream::for_round(config.seed, StreamKind::Eval, n, 0);
        source.draw(n, theta, config.eval_batch_size, &mut eval_rng)?
    };

    let sampled_loss = loss.value_unchecked(theta);
    let grad = loss.grad_unchecked(theta);
    let eval_loss = eval.value_unchecked(theta);
    let eval_grad = eval.grad_unchecked(theta);

    let (w_vector, w_scalar) = if config.resamples > 0 {
        let mut wv = 0.0;
        let mut ws = 0.0;
        for j in 0..config.resamples {
            let mut rng = RandomStream::for_round(config.seed, StreamKind::Resample, n, j);
            let g = source.draw(n, theta, config.batch_size, &mut rng)?.grad_unchecked(theta);
            let z: Vec<f64> = eval_grad.iter().zip(&g).map(|(a, b)| a - b).collect();
            wv += dot(&z, &z);
            ws += dot(&z, theta).powi(2);
        }
        let k = config.resamples as f64;
        (Some(wv / k), Some(ws / k))
    } else {
        (None, None)
    };

    let grad = ParameterVector::new(grad)?;
    let next = learner_step(state, &grad, learner)?;
    let record = RoundRecord {
        n,
        theta: state.theta.clone(),
        sampled_loss,
        eval_loss,
        grad_norm_sq: grad.norm().powi(2),
        grad,
        stepsize: next.last_stepsize.unwrap_or(0.0),
        eval_grad: ParameterVector::new(eval_grad)?,
        w_vector,
        w_scalar,
    };
    Ok((record, loss, eval, next))
}

/// Regrets, biases and problem constants of a finished run.
pub fn derive(ledger: &RunLedger) -> Result<Derived> {
    if ledger.records.is_empty() {
        return Err(Error::MissingData("ledger has no rounds".into()));
    }
    let set = ledger.set()?;
    let decisions = ledger.decisions();
    let grads: Vec<ParameterVector> = ledger.records.iter().map(|r| r.grad.clone()).collect();
    let report = empirical_regret(&ledger.batch_archive, &decisions, &set)?;
    let regret_lin = linearized_regret(&grads, &decisions, &set)?;
    let eps_oracle = batch_min_from(&ledger.eval_archive, &set, Some(&report.theta_star))?;
    let n = ledger.records.len() as f64;

    let eval_at_hat = ledger
        .eval_archive
        .iter()
        .map(|l| l.value_unchecked(report.theta_star.as_slice()))
        .sum::<f64>()
        / n;
    let sampled_at_star = ledger
        .batch_archive
        .iter()
        .map(|l| l.value_unchecked(eps_oracle.theta.as_slice()))
        .sum::<f64>()
        / n;

    let mut beta: f64 = 0.0;
    let mut grad_bound: f64 = 0.0;
    let mut feature_bound: f64 = 0.0;
    for l in &ledger.batch_archive {
        beta = beta.max(smoothness_bound(&l.batch, l.kind, SmoothnessMethod::PowerIteration)?.beta);
        grad_bound = grad_bound.max(l.gradient_bound(set.radius));
        feature_bound = feature_bound.max(l.batch.feature_bound());
    }
    Ok(Derived {
        regret_hat: report.regret,
        regret_lin,
        eps_hat: report.eps_hat,
        eps: eps_oracle.average_value,
        theta_star_hat: report.theta_star,
        theta_star: eps_oracle.theta.clone(),
        eval_at_theta_star_hat: eval_at_hat,
        sampled_at_theta_star: sampled_at_star,
        oracle_converged: report.oracle.converged && eps_oracle.converged,
        beta,
        grad_bound,
        feature_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasEstimates {
    pub eps_hat: f64,
    pub eps: f64,
    pub converged: bool,
}

/// `ε̂ = min (1/N) Σ l̂_n` and `ε = min (1/N) Σ l_n`, the latter over the
/// evaluation batches.
pub fn bias_estimates(ledger: &RunLedger) -> Result<BiasEstimates> {
    if ledger.batch_archive.is_empty() || ledger.eval_archive.len() != ledger.batch_archive.len() {
        return Err(Error::MissingData("ledger lacks batch or eval archives".into()));
    }
    let set = ledger.set()?;
    let hat: MinimizerResult = batch_min(&ledger.batch_archive, &set)?;
    let exp = batch_min_from(&ledger.eval_archive, &set, Some(&hat.theta))?;
    Ok(BiasEstimates {
        eps_hat: hat.average_value,
        eps: exp.average_value,
        converged: hat.converged && exp.converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// `Σ l_n(θ_n)` with evaluation losses standing in for `l_n`.
    pub lhs: f64,
    pub regret_term: f64,
    pub generalization_term: f64,
    /// `N ε̂`.
    pub bias_term: f64,
    pub residual: f64,
}

/// Comparator-side split: `θ⋆` minimises the summed evaluation losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedDecomposition {
    pub lhs: f64,
    pub regret_term: f64,
    /// `Σ l_n(θ_n) − l̂_n(θ_n)`.
    pub generalization_played: f64,
    /// `Σ l̂_n(θ⋆) − l_n(θ⋆)`.
    pub generalization_comparator: f64,
    /// `N ε`.
    pub bias_term: f64,
    /// `Σ l̂_n(θ⋆) − N ε̂ ≥ 0`, subtracted.
    pub comparator_slack: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub sampled: Decomposition,
    pub expected: ExpectedDecomposition,
    /// `max(1, lhs)`, the scale of the residual tolerance.
    pub scale: f64,
}

pub fn decomposition_report(ledger: &RunLedger) -> Result<DecompositionReport> {
    let d = ledger
        .derived
        .as_ref()
        .ok_or_else(|| Error::MissingData("ledger has no derived quantities".into()))?;
    let n = ledger.records.len() as f64;
    let lhs: f64 = ledger.records.iter().map(|r| r.eval_loss).sum();
    let played_hat: f64 = ledger.records.iter().map(|r| r.sampled_loss).sum();

    let bias_term = n * d.eps_hat;
    let regret_term = played_hat - bias_term;
    let generalization_term = lhs - played_hat;
    let sampled = Decomposition {
        lhs,
        regret_term,
        generalization_term,
        bias_term,
        residual: lhs - (regret_term + generalization_term + bias_term),
    };

    let sampled_at_star = n * d.sampled_at_theta_star;
    let expected_bias = n * d.eps;
    let generalization_comparator = sampled_at_star - expected_bias;
    let comparator_slack = sampled_at_star - bias_term;
    let expected = ExpectedDecomposition {
        lhs,
        regret_term,
        generalization_played: generalization_term,
        generalization_comparator,
        bias_term: expected_bias,
        comparator_slack,
        residual: lhs
            - (regret_term + generalization_term + generalization_comparator + expected_bias
                - comparator_slack),
    };
    Ok(DecompositionReport {
        sampled,
        expected,
        scale: lhs.max(1.0),
    })
}
