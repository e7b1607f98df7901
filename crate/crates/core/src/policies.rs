//! Linear learner policies, the analytic expert, and the bias knob.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environments::CartPoleState;
use crate::error::{Error, Result};
use crate::numerics::{dot, norm, ParameterSet, ParameterVector, RandomStream, StreamKind};

/// Anything that maps a cart-pole state to a scalar action.
pub trait Policy {
    fn act(&self, s: &CartPoleState) -> f64;
}

impl<F: Fn(&CartPoleState) -> f64> Policy for F {
    fn act(&self, s: &CartPoleState) -> f64 {
        self(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeatureKind {
    Identity,
    /// Identity plus `k` fixed random linear projections of the state.
    IdentityPlusRandom { k: usize, seed: u64 },
}

/// State representation `φ(s)` shared by learner and loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub kind: FeatureKind,
    projections: Vec<[f64; 4]>,
}

impl FeatureMap {
    pub fn identity() -> Self {
        Self {
            kind: FeatureKind::Identity,
            projections: Vec::new(),
        }
    }

    pub fn new(kind: FeatureKind) -> Self {
        match kind {
            FeatureKind::Identity => Self::identity(),
            FeatureKind::IdentityPlusRandom { k, seed } => {
                let mut rng = RandomStream::for_round(seed, StreamKind::Features, 0, 0);
                let projections = (0..k)
                    .map(|_| {
                        let mut p = [0.0; 4];
                        p.iter_mut().for_each(|v| *v = 0.5 * rng.normal());
                        p
                    })
                    .collect();
                Self { kind, projections }
            }
        }
    }

    pub fn dim(&self) -> usize {
        4 + self.projections.len()
    }

    pub fn features(&self, s: &CartPoleState) -> Vec<f64> {
        let base = s.as_array();
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(&base);
        for p in &self.projections {
            out.push(dot(p, &base));
        }
        out
    }

    /// Embeds 4 state gains into feature space (zeros on the random block).
    pub fn embed_gains(&self, gains: &[f64; 4]) -> ParameterVector {
        let mut v = gains.to_vec();
        v.resize(self.dim(), 0.0);
        ParameterVector::from_vec_unchecked(v)
    }
}

/// `π_θ(s) = ⟨θ, φ(s)⟩`
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy {
    pub theta: ParameterVector,
    pub features: FeatureMap,
}

impl LinearPolicy {
    pub fn new(theta: ParameterVector, features: FeatureMap) -> Result<Self> {
        if theta.dim() != features.dim() {
            return Err(Error::DimensionMismatch {
                expected: features.dim(),
                got: theta.dim(),
            });
        }
        Ok(Self { theta, features })
    }
}

impl Policy for LinearPolicy {
    fn act(&self, s: &CartPoleState) -> f64 {
        act(self, s)
    }
}

pub fn act(policy: &LinearPolicy, s: &CartPoleState) -> f64 {
    dot(policy.theta.as_slice(), &policy.features.features(s))
}

/// Pole-placement gains (closed-loop poles 0.99, 0.98, 0.95, 0.93) for the
/// default cart-pole discretized at dt = 0.02 with semi-implicit Euler.
pub const DEFAULT_EXPERT_GAINS: [f64; 4] = [0.030506, 0.111216, 2.323503, 0.562141];

/// Linear state-feedback expert `a = ⟨K, (x, ẋ, φ, φ̇)⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertPolicy {
    pub gains: [f64; 4],
}

impl Default for ExpertPolicy {
    fn default() -> Self {
        Self {
            gains: DEFAULT_EXPERT_GAINS,
        }
    }
}

const GAIN_KEYS: [&str; 4] = ["gain_x", "gain_x_dot", "gain_phi", "gain_phi_dot"];

impl ExpertPolicy {
    pub fn norm(&self) -> f64 {
        norm(&self.gains)
    }

    /// Parses `gain_x`, `gain_x_dot`, `gain_phi`, `gain_phi_dot` from flat
    /// `key = value` text; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut gains = [None; 4];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!("line {}: expected key=value", lineno + 1))
            })?;
            let k = k.trim();
            let idx = GAIN_KEYS.iter().position(|g| *g == k).ok_or_else(|| {
                Error::InvalidInput(format!("line {}: unknown key `{k}`", lineno + 1))
            })?;
            let value: f64 = v.trim().parse().map_err(|_| {
                Error::InvalidInput(format!("line {}: `{}` is not a number", lineno + 1, v.trim()))
            })?;
            if !value.is_finite() {
                return Err(Error::InvalidInput(format!("line {}: gain must be finite", lineno + 1)));
            }
            gains[idx] = Some(value);
        }
        let mut out = [0.0; 4];
        for (i, g) in gains.iter().enumerate() {
            out[i] = g.ok_or_else(|| Error::InvalidInput(format!("missing key `{}`", GAIN_KEYS[i])))?;
        }
        Ok(Self { gains: out })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        GAIN_KEYS
            .iter()
            .zip(self.gains)
            .map(|(k, g)| format!("{k} = {g}\n"))
            .collect()
    }
}

impl Policy for ExpertPolicy {
    fn act(&self, s: &CartPoleState) -> f64 {
        expert_act(self, s)
    }
}

pub fn expert_act(expert: &ExpertPolicy, s: &CartPoleState) -> f64 {
    dot(&expert.gains, &s.as_array())
}

/// Size of the policy class relative to a reference (realizing) parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasLevel {
    /// Radius = fraction × reference norm.
    Fraction(f64),
    /// Radius = 2 × reference norm, so the reference is strictly inside.
    Unbiased,
    /// Absolute radius.
    Radius(f64),
}

impl BiasLevel {
    pub fn label(&self) -> String {
        match self {
            BiasLevel::Fraction(f) => format!("fraction_{f}"),
            BiasLevel::Unbiased => "unbiased".to_string(),
            BiasLevel::Radius(r) => format!("radius_{r}"),
        }
    }
}

pub const UNBIASED_RADIUS_FACTOR: f64 = 2.0;

/// Ball radius for a bias level around a reference parameter norm.
pub fn class_radius(reference_norm: f64, level: BiasLevel) -> Result<f64> {
    match level {
        BiasLevel::Fraction(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "bias fraction must lie in (0, 1], got {f}"
                )));
            }
            Ok(f * reference_norm)
        }
        BiasLevel::Unbiased => Ok(UNBIASED_RADIUS_FACTOR * reference_norm),
        BiasLevel::Radius(r) => {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
            }
            Ok(r)
        }
    }
}

/// Decision set for the learner imitating `expert` through `features`.
pub fn bias_knob(expert: &ExpertPolicy, level: BiasLevel, features: &FeatureMap) -> Result<ParameterSet> {
    ParameterSet::new(class_radius(expert.norm(), level)?, features.dim())
}
