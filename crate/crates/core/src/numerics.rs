//! Dense vector arithmetic, Euclidean ball geometry and seeded random streams.
//!
//! The geometry is Euclidean throughout: the primal norm and its dual are both
//! the ℓ2 norm, and the distance generating function is `½‖θ‖²`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, ensure_finite, Error, Result};

/// Slack allowed on ball membership.
pub const BALL_TOLERANCE: f64 = 1e-12;

/// A finite-dimensional decision vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        ensure_finite(&coords, "parameter vector")?;
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        let mut out = self.0.clone();
        axpy(alpha, &other.0, &mut out);
        Self(out)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(-1.0, other)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| c * v).collect())
    }
}

impl AsRef<[f64]> for ParameterVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// An origin-centred ℓ2 ball, the decision set Θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub radius: f64,
    pub dim: usize,
}

impl ParameterSet {
    pub fn new(radius: f64, dim: usize) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be finite and nonnegative, got {radius}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Self { radius, dim })
    }

    pub fn contains(&self, v: &ParameterVector) -> bool {
        v.dim() == self.dim && v.norm() <= self.radius + BALL_TOLERANCE
    }

    pub fn project(&self, v: &ParameterVector) -> Result<ParameterVector> {
        ensure_dim(self.dim, v.dim())?;
        project_l2_ball(v, self.radius)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Euclidean norm; also serves as the dual norm.
pub fn l2_norm(v: &ParameterVector) -> Result<f64> {
    ensure_finite(v.as_slice(), "vector")?;
    Ok(v.norm())
}

/// Radial projection onto `{θ : ‖θ‖₂ ≤ radius}`.
pub fn project_l2_ball(v: &ParameterVector, radius: f64) -> Result<ParameterVector> {
    ensure_finite(v.as_slice(), "vector")?;
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "radius must be finite and nonnegative, got {radius}"
        )));
    }
    Ok(ParameterVector(project_slice(v.as_slice(), radius)))
}

pub(crate) fn project_slice(v: &[f64], radius: f64) -> Vec<f64> {
    let n = norm(v);
    if n <= radius {
        v.to_vec()
    } else {
        let c = radius / n;
        let out: Vec<f64> = v.iter().map(|x| x * c).collect();
        // rounding can leave the rescaled vector a hair outside; pull it in so
        // that projecting again is a bitwise no-op
        if norm(&out) > radius {
            let c2 = c * (1.0 - f64::EPSILON);
            v.iter().map(|x| x * c2).collect()
        } else {
            out
        }
    }
}

/// Well-known substream labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Train = 1,
    Eval = 2,
    Resample = 3,
    Init = 4,
    Features = 5,
    Scenario = 6,
    Pilot = 7,
}

/// Deterministic counter-based random stream.
///
/// Every `(seed, stream_id)` pair addresses an independent ChaCha8 keystream, so
/// per-round training, evaluation and resampling draws never share state.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    /// Substream for a given purpose, round and sub-index.
    pub fn for_round(seed: u64, kind: StreamKind, round: usize, sub: usize) -> Self {
        let id = ((kind as u64) << 56) | ((sub as u64 & 0xff_ffff) << 32) | (round as u64 & 0xffff_ffff);
        Self::new(seed, id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw in `[lo, hi)`; returns `lo` when the interval is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u: f64 = self.rng.random();
        lo + (hi - lo) * u
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn rademacher(&mut self) -> f64 {
        if self.rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Random point uniformly distributed on the unit sphere in `dim` dimensions.
    pub fn unit_vector(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| self.normal()).collect();
            let n = norm(&v);
            if n > 1e-12 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    /// Partial Fisher–Yates: `k` distinct indices out of `0..n`.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.index(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}
