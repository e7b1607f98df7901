//! Cart-pole simulator and a linear system-identification environment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::SampleBatch;
use crate::numerics::{dot, RandomStream};
use crate::policies::{ExpertPolicy, FeatureMap, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub phi: f64,
    pub phi_dot: f64,
}

impl CartPoleState {
    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.phi, self.phi_dot]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleConfig {
    pub masscart: f64,
    pub masspole: f64,
    pub pole_half_length: f64,
    pub gravity: f64,
    /// Newtons per unit action.
    pub force_scale: f64,
    pub dt: f64,
    /// Radians.
    pub phi_threshold: f64,
    pub x_threshold: f64,
    pub horizon: usize,
    pub init_offset: f64,
    /// Actions are clipped to `[−action_limit, action_limit]` before they
    /// reach the dynamics.
    pub action_limit: f64,
}

pub const MAX_HORIZON: usize = 1000;

impl Default for CartPoleConfig {
    fn default() -> Self {
        Self {
            masscart: 1.0,
            masspole: 0.1,
            pole_half_length: 0.5,
            gravity: 9.8,
            force_scale: 10.0,
            dt: 0.02,
            phi_threshold: 12.0_f64.to_radians(),
            x_threshold: 2.4,
            horizon: 200,
            init_offset: 0.03,
            action_limit: 1.0,
        }
    }
}

impl CartPoleConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("masscart", self.masscart),
            ("masspole", self.masspole),
            ("pole_half_length", self.pole_half_length),
            ("gravity", self.gravity),
            ("force_scale", self.force_scale),
            ("dt", self.dt),
            ("phi_threshold", self.phi_threshold),
            ("x_threshold", self.x_threshold),
            ("action_limit", self.action_limit),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.init_offset >= 0.0 && self.init_offset.is_finite()) {
            return Err(Error::InvalidParameter("init_offset must be nonnegative".into()));
        }
        if self.horizon > MAX_HORIZON {
            return Err(Error::InvalidParameter(format!(
                "horizon must be at most {MAX_HORIZON}, got {}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Mechanical energy of a uniform-rod pole on a cart (zero at rest with
    /// the pole horizontal).
    pub fn energy(&self, s: &CartPoleState) -> f64 {
        let (m_c, m_p, l) = (self.masscart, self.masspole, self.pole_half_length);
        0.5 * (m_c + m_p) * s.x_dot * s.x_dot
            + m_p * l * s.x_dot * s.phi_dot * s.phi.cos()
            + (2.0 / 3.0) * m_p * l * l * s.phi_dot * s.phi_dot
            + m_p * self.gravity * l * s.phi.cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// States at which an action was taken.
    pub states: Vec<CartPoleState>,
    pub actions: Vec<f64>,
    pub total_reward: usize,
}

pub fn cartpole_reset(cfg: &CartPoleConfig, rng: &mut RandomStream) -> CartPoleState {
    let o = cfg.init_offset;
    if o == 0.0 {
        return CartPoleState::default();
    }
    CartPoleState {
        x: rng.uniform(-o, o),
        x_dot: rng.uniform(-o, o),
        phi: rng.uniform(-o, o),
        phi_dot: rng.uniform(-o, o),
    }
}

/// Semi-implicit Euler step of the cart-pole ODE.
pub fn cartpole_step(
    state: &CartPoleState,
    action: f64,
    cfg: &CartPoleConfig,
) -> Result<(CartPoleState, bool)> {
    if !state.is_finite() || !action.is_finite() {
        return Err(Error::EnvironmentAbort(format!(
            "non-finite state or action: {state:?}, action {action}"
        )));
    }
    let force = cfg.force_scale * action.clamp(-cfg.action_limit, cfg.action_limit);
    let total_mass = cfg.masscart + cfg.masspole;
    let pml = cfg.masspole * cfg.pole_half_length;
    let (sin, cos) = state.phi.sin_cos();
    let temp = (force + pml * state.phi_dot * state.phi_dot * sin) / total_mass;
    let phi_acc = (cfg.gravity * sin - cos * temp)
        / (cfg.pole_half_length * (4.0 / 3.0 - cfg.masspole * cos * cos / total_mass));
    let x_acc = temp - pml * phi_acc * cos / total_mass;

    let x_dot = state.x_dot + cfg.dt * x_acc;
    let phi_dot = state.phi_dot + cfg.dt * phi_acc;
    let next = CartPoleState {
        x: state.x + cfg.dt * x_dot,
        x_dot,
        phi: state.phi + cfg.dt * phi_dot,
        phi_dot,
    };
    if !next.is_finite() {
        return Err(Error::EnvironmentAbort(format!("dynamics diverged from {state:?}")));
    }
    let alive = next.phi.abs() <= cfg.phi_threshold && next.x.abs() <= cfg.x_threshold;
    Ok((next, alive))
}

/// Runs `policy` from a fresh reset until the first dead step or the horizon.
pub fn rollout<P: Policy + ?Sized>(
    policy: &P,
    cfg: &CartPoleConfig,
    rng: &mut RandomStream,
) -> Result<Trajectory> {
    let mut traj = Trajectory {
        states: Vec::with_capacity(cfg.horizon),
        actions: Vec::with_capacity(cfg.horizon),
        total_reward: 0,
    };
    if cfg.horizon == 0 {
        return Ok(traj);
    }
    let mut s = cartpole_reset(cfg, rng);
    for _ in 0..cfg.horizon {
        let a = policy.act(&s);
        if !a.is_finite() {
            return Err(Error::EnvironmentAbort(format!("policy emitted {a} at {s:?}")));
        }
        traj.states.push(s);
        traj.actions.push(a);
        let (next, alive) = cartpole_step(&s, a, cfg)?;
        if !alive {
            break;
        }
        traj.total_reward += 1;
        s = next;
    }
    Ok(traj)
}

/// Visits `m` states of `policy`: whole episodes are pooled until at least
/// `m` states exist, then `m` of them are drawn without replacement.
pub fn collect_states<P: Policy + ?Sized>(
    policy: &P,
    cfg: &CartPoleConfig,
    m: usize,
    rng: &mut RandomStream,
) -> Result<Vec<CartPoleState>> {
    if m == 0 {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }
    if cfg.horizon == 0 {
        return Err(Error::InvalidInput("cannot collect states with horizon 0".into()));
    }
    let mut pool = Vec::with_capacity(m + cfg.horizon);
    while pool.len() < m {
        pool.extend(rollout(policy, cfg, rng)?.states);
    }
    let picks = rng.sample_indices(pool.len(), m);
    Ok(picks.into_iter().map(|i| pool[i]).collect())
}

/// Learner-visited states labelled by the expert.
pub fn collect_batch<P: Policy + ?Sized>(
    policy: &P,
    expert: &ExpertPolicy,
    features: &FeatureMap,
    cfg: &CartPoleConfig,
    m: usize,
    rng: &mut RandomStream,
) -> Result<SampleBatch> {
    let states = collect_states(policy, cfg, m, rng)?;
    labelled_batch(&states, expert, features)
}

pub fn labelled_batch(
    states: &[CartPoleState],
    expert: &ExpertPolicy,
    features: &FeatureMap,
) -> Result<SampleBatch> {
    let feats = states.iter().map(|s| features.features(s)).collect();
    let labels = states.iter().map(|s| expert.act(s)).collect();
    SampleBatch::new(feats, labels)
}

/// Linear dynamics `s' = A s + B a + noise`, learned through the squared loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysIdEnvironment {
    pub dim: usize,
    /// Row-major `dim × dim`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub noise_scale: f64,
    /// Exploration distribution: states and actions uniform in these boxes.
    pub explore_state: f64,
    pub explore_action: f64,
    pub init_state: f64,
    pub rollout_horizon: usize,
    pub action_limit: f64,
}

pub const MAX_SPECTRAL_RADIUS: f64 = 1.05;

impl SysIdEnvironment {
    pub fn new(dim: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let env = Self {
            dim,
            a,
            b,
            noise_scale: 0.0,
            explore_state: 0.1,
            explore_action: 0.1,
            init_state: 0.1,
            rollout_horizon: 20,
            action_limit: 0.2,
        };
        env.validate()?;
        Ok(env)
    }

    /// Lightly damped oscillator with a direct actuator on the velocity.
    pub fn default_2d() -> Self {
        Self::new(2, vec![0.98, 0.1, -0.1, 0.95], vec![0.0, 0.1]).expect("valid default system")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.a.len() != self.dim * self.dim || self.b.len() != self.dim {
            return Err(Error::InvalidParameter("inconsistent system dimensions".into()));
        }
        crate::error::ensure_finite(&self.a, "A")?;
        crate::error::ensure_finite(&self.b, "B")?;
        let rho = spectral_radius(&self.a, self.dim);
        if rho > MAX_SPECTRAL_RADIUS {
            return Err(Error::InvalidParameter(format!(
                "spectral radius of A is {rho:.4}, above {MAX_SPECTRAL_RADIUS}"
            )));
        }
        if self.noise_scale < 0.0 || self.explore_state < 0.0 || self.explore_action < 0.0 {
            return Err(Error::InvalidParameter("scales must be nonnegative".into()));
        }
        if self.rollout_horizon == 0 {
            return Err(Error::InvalidParameter("rollout horizon must be positive".into()));
        }
        Ok(())
    }

    /// Model parameter dimension `d(d+1)`: for each output row `i`, the
    /// coefficients `(A_i·, B_i)`.
    pub fn param_dim(&self) -> usize {
        self.dim * (self.dim + 1)
    }

    /// `vec(A, B)` in the layout of [`param_dim`](Self::param_dim).
    pub fn true_params(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = Vec::with_capacity(self.param_dim());
        for i in 0..d {
            out.extend_from_slice(&self.a[i * d..(i + 1) * d]);
            out.push(self.b[i]);
        }
        out
    }

    pub fn step(&self, s: &[f64], a: f64, rng: &mut RandomStream) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| {
                let mut v = dot(&self.a[i * d..(i + 1) * d], s) + self.b[i] * a;
                if self.noise_scale > 0.0 {
                    v += self.noise_scale * rng.normal();
                }
                v
            })
            .collect()
    }

    /// One-step certainty-equivalent controller of a model:
    /// `a = argmin ‖Â s + B̂ a‖²`, clipped.
    pub fn controller_action(&self, model: &[f64], s: &[f64]) -> f64 {
        let d = self.dim;
        let mut bb = 0.0;
        let mut ba = 0.0;
        for i in 0..d {
            let row = &model[i * (d + 1)..(i + 1) * (d + 1)];
            let bi = row[d];
            bb += bi * bi;
            ba += bi * dot(&row[..d], s);
        }
        if bb < 1e-12 {
            return 0.0;
        }
        (-ba / bb).clamp(-self.action_limit, self.action_limit)
    }

    /// Feature rows of one transition: row `i` carries `(s, a)` in block `i`.
    pub fn transition_rows(&self, s: &[f64], a: f64, next: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let d = self.dim;
        let rows = (0..d)
            .map(|i| {
                let mut r = vec![0.0; self.param_dim()];
                r[i * (d + 1)..i * (d + 1) + d].copy_from_slice(s);
                r[i * (d + 1) + d] = a;
                r
            })
            .collect();
        (rows, next.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: f64,
    pub next: Vec<f64>,
}

/// Transitions from the mixture `½ d_{T_θ} + ½ ν`: the first `m/2` come from
/// rollouts of the model's certainty-equivalent controller, the rest from the
/// exploration distribution.
pub fn sysid_transitions(
    env: &SysIdEnvironment,
    model: &[f64],
    m: usize,
    rng: &mut RandomStream,
) -> Result<Vec<Transition>> {
    if m < 2 {
        return Err(Error::InvalidInput("system-id batches need at least 2 transitions".into()));
    }
    if model.len() != env.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: env.param_dim(),
            got: model.len(),
        });
    }
    let d = env.dim;
    let n_rollout = m / 2;
    let blowup = 1e3 * env.init_state.max(env.explore_state).max(1e-3);
    let mut out = Vec::with_capacity(m);
    'outer: while out.len() < n_rollout {
        let mut s: Vec<f64> = (0..d).map(|_| rng.uniform(-env.init_state, env.init_state)).collect();
        for _ in 0..env.rollout_horizon {
            let a = env.controller_action(model, &s);
            let next = env.step(&s, a, rng);
            if next.iter().any(|v| !v.is_finite() || v.abs() > blowup) {
                // unstable rollout: drop the tail and start a fresh one
                continue 'outer;
            }
            out.push(Transition { state: s, action: a, next: next.clone() });
            if out.len() == n_rollout {
                break 'outer;
            }
            s = next;
        }
    }
    while out.len() < m {
        let s: Vec<f64> = (0..d).map(|_| rng.uniform(-env.explore_state, env.explore_state)).collect();
        let a = rng.uniform(-env.explore_action, env.explore_action);
        let next = env.step(&s, a, rng);
        out.push(Transition { state: s, action: a, next });
    }
    Ok(out)
}

/// Squared-loss batch for model learning; every transition yields `d` rows.
pub fn sysid_collect(
    env: &SysIdEnvironment,
    model: &[f64],
    m: usize,
    rng: &mut RandomStream,
) -> Result<SampleBatch> {
    let transitions = sysid_transitions(env, model, m, rng)?;
    sysid_batch(env, &transitions)
}

pub fn sysid_batch(env: &SysIdEnvironment, transitions: &[Transition]) -> Result<SampleBatch> {
    let mut feats = Vec::with_capacity(transitions.len() * env.dim);
    let mut labels = Vec::with_capacity(transitions.len() * env.dim);
    for t in transitions {
        let (rows, targets) = env.transition_rows(&t.state, t.action, &t.next);
        feats.extend(rows);
        labels.extend(targets);
    }
    SampleBatch::new(feats, labels)
}

/// Gelfand estimate `‖A^k‖_F^{1/k}` with `k = 2^12`, by repeated squaring.
pub fn spectral_radius(a: &[f64], d: usize) -> f64 {
    let mut p = a.to_vec();
    let mut log_scale = 0.0_f64;
    let mut k = 1.0_f64;
    for _ in 0..12 {
        let mut q = vec![0.0; d * d];
        for i in 0..d {
            for l in 0..d {
                let pil = p[i * d + l];
                for j in 0..d {
                    q[i * d + j] += pil * p[l * d + j];
                }
            }
        }
        log_scale *= 2.0;
        k *= 2.0;
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            return 0.0;
        }
        log_scale += n.ln();
        p = q.into_iter().map(|v| v / n).collect();
    }
    (log_scale / k).exp()
}
