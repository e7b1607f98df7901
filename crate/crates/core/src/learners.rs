//! Admissible online learners over an ℓ2 ball and the regret oracle.
//!
//! Two algorithms are provided, both with the Euclidean regularizer `½‖θ‖²`:
//!
//! * projected online gradient descent (mirror descent): `θ ← Π(θ − η g)`
//! * follow-the-regularized-leader on linearized losses: `θ ← Π(−η Σ g)`
//!
//! Either can run with a constant stepsize, the bias-tuned constant stepsize
//! [`theorem1_stepsize`], or the adaptive rule [`adagrad_stepsize`].

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::losses::SmoothObjective;
use crate::numerics::{axpy, dot, norm, project_slice, ParameterSet, ParameterVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ogd,
    Ftrl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepsizeRule {
    Constant(f64),
    Theorem1 { beta: f64, rounds: usize, e_hat: f64 },
    /// `η_n = R_A / (2√Σ‖g_i‖²)`, or `base / √Σ‖g_i‖²` when a base is given.
    AdaGrad { base: Option<f64> },
}

impl StepsizeRule {
    pub fn is_adaptive(&self) -> bool {
        matches!(self, StepsizeRule::AdaGrad { .. })
    }
}

/// Geometry constant `R_A` of an algorithm on a ball of radius `radius`.
///
/// Mirror descent uses the Bregman diameter `max ½‖x − y‖² = 2R²`, FTRL uses
/// `max ½‖θ‖² = ½R²`.
pub fn geometry_constant(algorithm: Algorithm, radius: f64) -> f64 {
    match algorithm {
        Algorithm::Ogd => radius * std::f64::consts::SQRT_2,
        Algorithm::Ftrl => radius / std::f64::consts::SQRT_2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub set: ParameterSet,
    pub r_a: f64,
    pub stepsize: StepsizeRule,
    pub algorithm: Algorithm,
}

impl LearnerConfig {
    /// Config with `R_A` derived from the ball radius.
    pub fn new(set: ParameterSet, stepsize: StepsizeRule, algorithm: Algorithm) -> Result<Self> {
        Self::with_geometry(set, geometry_constant(algorithm, set.radius), stepsize, algorithm)
    }

    pub fn with_geometry(
        set: ParameterSet,
        r_a: f64,
        stepsize: StepsizeRule,
        algorithm: Algorithm,
    ) -> Result<Self> {
        if !(r_a > 0.0 && r_a.is_finite()) {
            return Err(Error::InvalidParameter(format!("R_A must be positive, got {r_a}")));
        }
        match stepsize {
            StepsizeRule::Constant(eta) if !(eta > 0.0 && eta.is_finite()) => {
                return Err(Error::InvalidParameter(format!("stepsize must be positive, got {eta}")));
            }
            StepsizeRule::Theorem1 { beta, rounds, e_hat } => {
                theorem1_stepsize(beta, rounds, e_hat, r_a)?;
            }
            StepsizeRule::AdaGrad { base: Some(b) } if !(b > 0.0 && b.is_finite()) => {
                return Err(Error::InvalidParameter(format!("adagrad base must be positive, got {b}")));
            }
            _ => {}
        }
        Ok(Self {
            set,
            r_a,
            stepsize,
            algorithm,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    pub theta: ParameterVector,
    pub cum_grad: ParameterVector,
    pub cum_sq_grad_norm: f64,
    pub round: usize,
    /// Stepsize used by the most recent update; `None` before the first
    /// update and for skipped zero-gradient rounds.
    pub last_stepsize: Option<f64>,
}

impl LearnerState {
    pub fn new(theta: ParameterVector, set: &ParameterSet) -> Result<Self> {
        ensure_dim(set.dim, theta.dim())?;
        ensure_finite(theta.as_slice(), "initial parameter")?;
        let theta = set.project(&theta)?;
        let dim = theta.dim();
        Ok(Self {
            theta,
            cum_grad: ParameterVector::zeros(dim),
            cum_sq_grad_norm: 0.0,
            round: 0,
            last_stepsize: None,
        })
    }
}

/// Bias-tuned constant stepsize `1 / (2(β + √(β² + ½βNÊ/R_A²)))`.
pub fn theorem1_stepsize(beta: f64, rounds: usize, e_hat: f64, r_a: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    if rounds == 0 {
        return Err(Error::InvalidParameter("number of rounds must be positive".into()));
    }
    if !(e_hat >= 0.0 && e_hat.is_finite()) {
        return Err(Error::InvalidParameter(format!("E_hat must be nonnegative, got {e_hat}")));
    }
    if !(r_a > 0.0 && r_a.is_finite()) {
        return Err(Error::InvalidParameter(format!("R_A must be positive, got {r_a}")));
    }
    let inner = beta * beta + 0.5 * beta * rounds as f64 * e_hat / (r_a * r_a);
    Ok(1.0 / (2.0 * (beta + inner.sqrt())))
}

/// Adaptive stepsize `R_A / (2√Σ‖g_i‖²)`; `None` means the accumulated
/// gradient is zero and the step is skipped.
pub fn adagrad_stepsize(state: &LearnerState, r_a: f64) -> Option<f64> {
    adagrad_from_sum(state.cum_sq_grad_norm, 0.5 * r_a)
}

fn adagrad_from_sum(sum_sq: f64, numerator: f64) -> Option<f64> {
    if sum_sq > 0.0 {
        Some(numerator / sum_sq.sqrt())
    } else {
        None
    }
}

/// One online update with gradient `grad` of the current round's loss at
/// `state.theta`.
pub fn learner_step(
    state: &LearnerState,
    grad: &ParameterVector,
    config: &LearnerConfig,
) -> Result<LearnerState> {
    ensure_dim(state.theta.dim(), grad.dim())?;
    ensure_finite(grad.as_slice(), "gradient")?;
    let g = grad.as_slice();
    let mut cum_grad = state.cum_grad.as_slice().to_vec();
    axpy(1.0, g, &mut cum_grad);
    let cum_sq = state.cum_sq_grad_norm + dot(g, g);

    let eta = match config.stepsize {
        StepsizeRule::Constant(eta) => Some(eta),
        StepsizeRule::Theorem1 { beta, rounds, e_hat } => {
            Some(theorem1_stepsize(beta, rounds, e_hat, config.r_a)?)
        }
        StepsizeRule::AdaGrad { base } => {
            adagrad_from_sum(cum_sq, base.unwrap_or(0.5 * config.r_a))
        }
    };

    let theta = match (eta, config.algorithm) {
        (None, _) => state.theta.as_slice().to_vec(),
        (Some(eta), Algorithm::Ogd) => {
            let mut t = state.theta.as_slice().to_vec();
            axpy(-eta, g, &mut t);
            project_slice(&t, config.set.radius)
        }
        (Some(eta), Algorithm::Ftrl) => ftrl_closed_form(&cum_grad, eta, config.set.radius),
    };

    Ok(LearnerState {
        theta: ParameterVector::from_vec_unchecked(theta),
        cum_grad: ParameterVector::from_vec_unchecked(cum_grad),
        cum_sq_grad_norm: cum_sq,
        round: state.round + 1,
        last_stepsize: eta,
    })
}

/// `argmin_{‖θ‖≤R} ⟨G, θ⟩ + ‖θ‖²/(2η)`
pub(crate) fn ftrl_closed_form(cum_grad: &[f64], eta: f64, radius: f64) -> Vec<f64> {
    let t: Vec<f64> = cum_grad.iter().map(|x| -eta * x).collect();
    project_slice(&t, radius)
}

/// Admissibility right-hand side `R_A²/η + (η/2) Σ‖g_n‖²`.
pub fn admissible_bound(r_a: f64, eta: f64, sum_sq_grad: f64) -> f64 {
    r_a * r_a / eta + 0.5 * eta * sum_sq_grad
}

/// Bias-dependent regret bound `8βR_A² + √(8βR_A²NÊ)`.
pub fn lemma2_bound(beta: f64, r_a: f64, rounds: usize, e_hat: f64) -> Result<f64> {
    lemma2_bound_adaptive(1.0, beta, r_a, rounds, e_hat)
}

/// Proper-stepsize variant `8K²βR_A² + √(8K²βR_A²NÊ)`.
pub fn lemma2_bound_adaptive(k: f64, beta: f64, r_a: f64, rounds: usize, e_hat: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    if rounds == 0 {
        return Err(Error::InvalidParameter("number of rounds must be positive".into()));
    }
    if !(k > 0.0 && r_a >= 0.0 && e_hat >= 0.0) {
        return Err(Error::InvalidParameter("K must be positive, R_A and E_hat nonnegative".into()));
    }
    let c = 8.0 * k * k * beta * r_a * r_a;
    Ok(c + (c * rounds as f64 * e_hat).sqrt())
}

/// Stationarity tolerance on the gradient mapping of the averaged objective.
pub const BATCH_MIN_TOLERANCE: f64 = 1e-8;
pub const BATCH_MIN_MAX_ITERS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerResult {
    pub theta: ParameterVector,
    /// `(1/N) Σ f_n(θ)` at the returned point.
    pub average_value: f64,
    pub gradient_mapping_norm: f64,
    pub iterations: usize,
    /// Absolute gap between this solve and an independently started one.
    pub restart_gap: f64,
    pub converged: bool,
}

/// Minimizes `F(θ) = (1/N) Σ f_n(θ)` over the ball.
///
/// Accelerated projected gradient with backtracking and function-value
/// restarts, run twice from different starting points.
pub fn batch_min<L: SmoothObjective>(losses: &[L], set: &ParameterSet) -> Result<MinimizerResult> {
    batch_min_from(losses, set, None)
}

pub fn batch_min_from<L: SmoothObjective>(
    losses: &[L],
    set: &ParameterSet,
    warm_start: Option<&ParameterVector>,
) -> Result<MinimizerResult> {
    if losses.is_empty() {
        return Err(Error::InvalidInput("empty loss sequence".into()));
    }
    for l in losses {
        ensure_dim(set.dim, l.dim())?;
    }
    let objective = Averaged(losses);
    let start_a = match warm_start {
        Some(w) => {
            ensure_dim(set.dim, w.dim())?;
            project_slice(w.as_slice(), set.radius)
        }
        None => vec![0.0; set.dim],
    };
    // second start: a boundary point away from the first
    let mut start_b = vec![0.0; set.dim];
    let n = norm(&start_a);
    if n > 0.0 {
        start_b = start_a.iter().map(|x| -x * set.radius / n).collect();
    } else {
        let c = set.radius / (set.dim as f64).sqrt();
        start_b.iter_mut().for_each(|x| *x = c);
    }
    let a = accelerated_projected_gradient(&objective, start_a, set.radius);
    let b = accelerated_projected_gradient(&objective, start_b, set.radius);
    let gap = (a.value - b.value).abs();
    let best = if b.value < a.value { b } else { a };
    let converged = best.grad_map <= BATCH_MIN_TOLERANCE && gap <= 1e-6;
    Ok(MinimizerResult {
        theta: ParameterVector::from_vec_unchecked(best.x),
        average_value: best.value,
        gradient_mapping_norm: best.grad_map,
        iterations: best.iters,
        restart_gap: gap,
        converged,
    })
}

struct Averaged<'a, L>(&'a [L]);

impl<L: SmoothObjective> Averaged<'_, L> {
    fn value(&self, x: &[f64]) -> f64 {
        self.0.iter().map(|l| l.value(x)).sum::<f64>() / self.0.len() as f64
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for l in self.0 {
            axpy(1.0, &l.gradient(x), &mut g);
        }
        let inv = 1.0 / self.0.len() as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }
}

struct Solve {
    x: Vec<f64>,
    value: f64,
    grad_map: f64,
    iters: usize,
}

fn accelerated_projected_gradient<L: SmoothObjective>(
    f: &Averaged<'_, L>,
    x0: Vec<f64>,
    radius: f64,
) -> Solve {
    let mut x = x0;
    let mut fx = f.value(&x);
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut lip = initial_lipschitz(f, &x);
    let mut iters = 0;
    let mut grad_map_x = f64::INFINITY;

    while iters < BATCH_MIN_MAX_ITERS {
        iters += 1;
        let fy = f.value(&y);
        let gy = f.gradient(&y);
        lip = (lip * 0.9).max(f64::MIN_POSITIVE);
        let (z, fz) = loop {
            let step: Vec<f64> = y.iter().zip(&gy).map(|(yi, gi)| yi - gi / lip).collect();
            let z = project_slice(&step, radius);
            let fz = f.value(&z);
            let diff: Vec<f64> = z.iter().zip(&y).map(|(a, b)| a - b).collect();
            let model = fy + dot(&gy, &diff) + 0.5 * lip * dot(&diff, &diff);
            if fz <= model + 1e-15 * fy.abs() || lip > 1e300 {
                break (z, fz);
            }
            lip *= 2.0;
        };
        let grad_map_y = lip * distance(&z, &y);

        if fz > fx {
            // restart momentum from the better iterate
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        y = z
            .iter()
            .zip(&x)
            .map(|(zi, xi)| zi + momentum * (zi - xi))
            .collect();
        y = project_slice(&y, radius);
        x = z;
        fx = fz;
        t = t_next;

        if grad_map_y <= BATCH_MIN_TOLERANCE {
            grad_map_x = gradient_mapping(f, &x, lip, radius);
            if grad_map_x <= BATCH_MIN_TOLERANCE {
                break;
            }
        }
    }
    if !grad_map_x.is_finite() || iters >= BATCH_MIN_MAX_ITERS {
        grad_map_x = gradient_mapping(f, &x, lip, radius);
    }
    Solve {
        value: fx,
        x,
        grad_map: grad_map_x,
        iters,
    }
}

fn gradient_mapping<L: SmoothObjective>(f: &Averaged<'_, L>, x: &[f64], lip: f64, radius: f64) -> f64 {
    let g = f.gradient(x);
    let step: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - gi / lip).collect();
    lip * distance(&project_slice(&step, radius), x)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn initial_lipschitz<L: SmoothObjective>(f: &Averaged<'_, L>, x: &[f64]) -> f64 {
    let g = f.gradient(x);
    let h = 1e-4 * (1.0 + norm(x));
    let xp: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + if i == 0 { h } else { 0.0 }).collect();
    let gp = f.gradient(&xp);
    let est = norm(&g.iter().zip(&gp).map(|(a, b)| a - b).collect::<Vec<_>>()) / h;
    if est.is_finite() && est > 0.0 {
        est
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub regret: f64,
    pub theta_star: ParameterVector,
    pub eps_hat: f64,
    pub oracle: MinimizerResult,
}

/// `Σ f_n(θ_n) − min_θ Σ f_n(θ)` together with the bias `ε̂ = min (1/N) Σ f_n`.
pub fn empirical_regret<L: SmoothObjective>(
    losses: &[L],
    decisions: &[ParameterVector],
    set: &ParameterSet,
) -> Result<RegretReport> {
    if losses.is_empty() {
        return Err(Error::InvalidInput("empty loss sequence".into()));
    }
    if losses.len() != decisions.len() {
        return Err(Error::InvalidInput(format!(
            "{} losses but {} decisions",
            losses.len(),
            decisions.len()
        )));
    }
    for d in decisions {
        ensure_dim(set.dim, d.dim())?;
    }
    let played: f64 = losses
        .iter()
        .zip(decisions)
        .map(|(l, d)| l.value(d.as_slice()))
        .sum();
    let oracle = batch_min(losses, set)?;
    let n = losses.len() as f64;
    Ok(RegretReport {
        regret: played - n * oracle.average_value,
        theta_star: oracle.theta.clone(),
        eps_hat: oracle.average_value,
        oracle,
    })
}

/// Regret against the linear losses `⟨g_n, ·⟩`; the comparator over a ball
/// is available in closed form: `min ⟨Σg, θ⟩ = −R‖Σg‖`.
pub fn linearized_regret(
    grads: &[ParameterVector],
    decisions: &[ParameterVector],
    set: &ParameterSet,
) -> Result<f64> {
    if grads.len() != decisions.len() {
        return Err(Error::InvalidInput("gradient/decision length mismatch".into()));
    }
    let mut sum = vec![0.0; set.dim];
    let mut played = 0.0;
    for (g, d) in grads.iter().zip(decisions) {
        ensure_dim(set.dim, g.dim())?;
        ensure_dim(set.dim, d.dim())?;
        played += g.dot(d);
        axpy(1.0, g.as_slice(), &mut sum);
    }
    Ok(played + set.radius * norm(&sum))
}
