//! Convex, smooth, non-negative losses over linear predictors.
//!
//! Both loss kinds act on a [`SampleBatch`] of `(φ(s), target)` pairs and a
//! parameter `θ`; the prediction is `⟨θ, φ(s)⟩`:
//!
//! * `HuberImitation`: `(1/m) Σ H_μ(⟨θ, φ_i⟩ − a_i)`
//! * `Squared`: `(1/m) Σ (⟨θ, φ_i⟩ − a_i)²`

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::numerics::{axpy, dot, norm, ParameterVector};

/// Huber function `H_μ`.
pub fn huber_value(x: f64, mu: f64) -> Result<f64> {
    check_mu(mu)?;
    Ok(huber(x, mu))
}

/// Derivative of `H_μ`: `x` inside `[−μ, μ]`, `μ·sign(x)` outside.
pub fn huber_grad(x: f64, mu: f64) -> Result<f64> {
    check_mu(mu)?;
    Ok(huber_prime(x, mu))
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "mu must be positive, got {mu}"
        )));
    }
    Ok(())
}

#[inline]
fn huber(x: f64, mu: f64) -> f64 {
    let a = x.abs();
    if a <= mu {
        0.5 * x * x
    } else {
        mu * a - 0.5 * mu * mu
    }
}

#[inline]
fn huber_prime(x: f64, mu: f64) -> f64 {
    x.clamp(-mu, mu)
}

/// Feature rows with their regression targets (expert actions, next-state
/// components, ...). Rows are stored contiguously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    dim: usize,
    rows: Vec<f64>,
    targets: Vec<f64>,
}

impl SampleBatch {
    pub fn new(features: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidInput("sample batch must be nonempty".into()));
        }
        if features.len() != targets.len() {
            return Err(Error::InvalidInput(format!(
                "{} feature rows but {} targets",
                features.len(),
                targets.len()
            )));
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput("feature dimension must be positive".into()));
        }
        let mut rows = Vec::with_capacity(dim * features.len());
        for f in &features {
            ensure_dim(dim, f.len())?;
            rows.extend_from_slice(f);
        }
        ensure_finite(&rows, "features")?;
        ensure_finite(&targets, "targets")?;
        Ok(Self { dim, rows, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.rows
            .chunks_exact(self.dim)
            .zip(self.targets.iter().copied())
    }

    /// Largest feature norm in the batch.
    pub fn feature_bound(&self) -> f64 {
        self.rows
            .chunks_exact(self.dim)
            .map(norm)
            .fold(0.0, f64::max)
    }

    pub fn max_abs_target(&self) -> f64 {
        self.targets.iter().fold(0.0, |a, t| a.max(t.abs()))
    }

    /// `(1/m) Σ φ_i φ_iᵀ`, row-major.
    pub fn second_moment(&self) -> Vec<f64> {
        let d = self.dim;
        let mut m = vec![0.0; d * d];
        for row in self.rows.chunks_exact(d) {
            for i in 0..d {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                for j in 0..d {
                    m[i * d + j] += ri * row[j];
                }
            }
        }
        let inv = 1.0 / self.len() as f64;
        m.iter_mut().for_each(|v| *v *= inv);
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    HuberImitation,
    Squared,
}

/// A sampled online loss `l̂_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledLoss {
    pub batch: SampleBatch,
    pub mu: f64,
    pub kind: LossKind,
}

/// Anything with a value and a gradient, for the self-bounding checker.
pub trait SmoothObjective {
    fn dim(&self) -> usize;
    fn value(&self, theta: &[f64]) -> f64;
    fn gradient(&self, theta: &[f64]) -> Vec<f64>;
}

impl SampledLoss {
    pub fn new(batch: SampleBatch, mu: f64, kind: LossKind) -> Result<Self> {
        check_mu(mu)?;
        Ok(Self { batch, mu, kind })
    }

    pub fn huber(batch: SampleBatch, mu: f64) -> Result<Self> {
        Self::new(batch, mu, LossKind::HuberImitation)
    }

    pub fn squared(batch: SampleBatch) -> Self {
        // mu is inert for the squared loss
        Self {
            batch,
            mu: 1.0,
            kind: LossKind::Squared,
        }
    }

    pub fn dim(&self) -> usize {
        self.batch.dim()
    }

    /// Scalar loss of a residual `r = ⟨θ,φ⟩ − a`.
    #[inline]
    pub(crate) fn point_value(&self, r: f64) -> f64 {
        match self.kind {
            LossKind::HuberImitation => huber(r, self.mu),
            LossKind::Squared => r * r,
        }
    }

    #[inline]
    pub(crate) fn point_slope(&self, r: f64) -> f64 {
        match self.kind {
            LossKind::HuberImitation => huber_prime(r, self.mu),
            LossKind::Squared => 2.0 * r,
        }
    }

    /// Curvature bound of the scalar loss.
    pub fn curvature(&self) -> f64 {
        match self.kind {
            LossKind::HuberImitation => 1.0,
            LossKind::Squared => 2.0,
        }
    }

    pub fn value_unchecked(&self, theta: &[f64]) -> f64 {
        let s: f64 = self
            .batch
            .iter()
            .map(|(phi, a)| self.point_value(dot(theta, phi) - a))
            .sum();
        s / self.batch.len() as f64
    }

    pub fn grad_unchecked(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.add_grad(theta, 1.0 / self.batch.len() as f64, &mut g);
        g
    }

    /// `g += weight · Σ_i ℓ'(r_i) φ_i`
    pub(crate) fn add_grad(&self, theta: &[f64], weight: f64, g: &mut [f64]) {
        for (phi, a) in self.batch.iter() {
            let s = self.point_slope(dot(theta, phi) - a);
            if s != 0.0 {
                axpy(weight * s, phi, g);
            }
        }
    }

    pub fn value(&self, theta: &ParameterVector) -> Result<f64> {
        loss_value(self, theta)
    }

    pub fn grad(&self, theta: &ParameterVector) -> Result<ParameterVector> {
        loss_grad(self, theta)
    }

    /// Gradient-norm bound `G` over a ball of radius `radius`.
    pub fn gradient_bound(&self, radius: f64) -> f64 {
        let fb = self.batch.feature_bound();
        match self.kind {
            LossKind::HuberImitation => self.mu * fb,
            LossKind::Squared => 2.0 * fb * (radius * fb + self.batch.max_abs_target()),
        }
    }
}

impl SmoothObjective for SampledLoss {
    fn dim(&self) -> usize {
        self.batch.dim()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        self.value_unchecked(theta)
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.grad_unchecked(theta)
    }
}

pub fn loss_value(loss: &SampledLoss, theta: &ParameterVector) -> Result<f64> {
    ensure_dim(loss.dim(), theta.dim())?;
    Ok(loss.value_unchecked(theta.as_slice()))
}

pub fn loss_grad(loss: &SampledLoss, theta: &ParameterVector) -> Result<ParameterVector> {
    ensure_dim(loss.dim(), theta.dim())?;
    Ok(ParameterVector::from_vec_unchecked(
        loss.grad_unchecked(theta.as_slice()),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothnessMethod {
    PowerIteration,
    TraceBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessCertificate {
    pub beta: f64,
    pub method: SmoothnessMethod,
}

const POWER_ITERATIONS: usize = 200;
const POWER_TOLERANCE: f64 = 1e-8;

/// Smoothness constant of the sampled loss built on `batch`.
///
/// The Huber loss has unit curvature, so `β = λ_max((1/m) Σ φφᵀ)`; the squared
/// loss doubles it.
pub fn smoothness_bound(
    batch: &SampleBatch,
    kind: LossKind,
    method: SmoothnessMethod,
) -> Result<SmoothnessCertificate> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let curvature = match kind {
        LossKind::HuberImitation => 1.0,
        LossKind::Squared => 2.0,
    };
    let lambda = match method {
        SmoothnessMethod::TraceBound => {
            batch.iter().map(|(phi, _)| dot(phi, phi)).sum::<f64>() / batch.len() as f64
        }
        SmoothnessMethod::PowerIteration => top_eigenvalue(&batch.second_moment(), batch.dim()),
    };
    Ok(SmoothnessCertificate {
        beta: curvature * lambda,
        method,
    })
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn top_eigenvalue(matrix: &[f64], d: usize) -> f64 {
    let matvec = |v: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|i| dot(&matrix[i * d..(i + 1) * d], v))
            .collect()
    };
    let trace: f64 = (0..d).map(|i| matrix[i * d + i]).sum();
    if trace <= 0.0 {
        return 0.0;
    }
    // Warm start from M^(2^k): repeated squaring separates close eigenvalues far
    // faster than plain iteration. The start vector mixes in an asymmetric
    // deterministic vector so it is never orthogonal to the top eigenvector.
    let mut p: Vec<f64> = matrix.iter().map(|x| x / trace).collect();
    for _ in 0..30 {
        let mut q = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let pik = p[i * d + k];
                if pik == 0.0 {
                    continue;
                }
                for j in 0..d {
                    q[i * d + j] += pik * p[k * d + j];
                }
            }
        }
        let t: f64 = (0..d).map(|i| q[i * d + i]).sum();
        if !(t > 0.0 && t.is_finite()) {
            break;
        }
        p = q.into_iter().map(|x| x / t).collect();
    }
    let seed: Vec<f64> = (0..d).map(|i| 1.0 + 1.0 / (i as f64 + 2.0).sqrt()).collect();
    let mut v: Vec<f64> = (0..d)
        .map(|i| dot(&p[i * d..(i + 1) * d], &seed))
        .collect();
    if norm(&v) < 1e-300 {
        v = seed;
    }
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let w = matvec(&v);
        let next = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|x| x / nw).collect();
        let done = (next - lambda).abs() <= POWER_TOLERANCE * next.abs().max(f64::MIN_POSITIVE);
        lambda = next;
        if done {
            break;
        }
    }
    // final Rayleigh quotient
    let w = matvec(&v);
    lambda.max(dot(&v, &w))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfBoundingReport {
    pub max_ratio: f64,
    pub pass: bool,
}

/// Checks `‖∇f‖² ≤ 4βf` at each point.
///
/// Points where `f < 1e-14` must instead have `‖∇f‖² ≤ 1e-12`.
pub fn self_bounding_check<F: SmoothObjective + ?Sized>(
    f: &F,
    points: &[Vec<f64>],
    beta: f64,
) -> SelfBoundingReport {
    let mut max_ratio: f64 = 0.0;
    let mut pass = true;
    for x in points {
        let v = f.value(x);
        let g = f.gradient(x);
        let g2 = dot(&g, &g);
        if v < 1e-14 {
            if g2 > 1e-12 {
                pass = false;
                max_ratio = f64::INFINITY;
            }
            continue;
        }
        let ratio = g2 / (4.0 * beta * v);
        max_ratio = max_ratio.max(ratio);
        if ratio > 1.0 + 1e-9 {
            pass = false;
        }
    }
    SelfBoundingReport { max_ratio, pass }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RandomStream;

    fn single(phi: &[f64], a: f64) -> SampleBatch {
        SampleBatch::new(vec![phi.to_vec()], vec![a]).unwrap()
    }

    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn huber_examples() {
        assert_eq!(huber_value(0.0, 0.05).unwrap(), 0.0);
        assert!((huber_value(0.05, 0.05).unwrap() - 0.00125).abs() < 1e-15);
        assert!((huber_value(0.1, 0.05).unwrap() - 0.00375).abs() < 1e-15);
        assert_eq!(huber_grad(0.0, 0.05).unwrap(), 0.0);
        assert_eq!(huber_grad(0.02, 0.05).unwrap(), 0.02);
        assert_eq!(huber_grad(-0.1, 0.05).unwrap(), -0.05);
        assert!(matches!(huber_value(1.0, 0.0), Err(Error::InvalidParameter(_))));
        assert!(huber_grad(1.0, -1.0).is_err());
    }

    #[test]
    fn huber_is_c1_at_the_kink() {
        let mu = 0.05;
        let eps = 1e-9;
        let left = huber(mu - eps, mu);
        let right = huber(mu + eps, mu);
        assert!((left - right).abs() < 1e-10);
        assert!((huber_prime(mu - eps, mu) - huber_prime(mu + eps, mu)).abs() < 1e-8);
    }

    #[test]
    fn huber_derivative_is_one_lipschitz() {
        let mu = 0.05;
        let grid: Vec<f64> = (-200..=200).map(|i| i as f64 * 0.001).collect();
        for &x in &grid {
            for &y in &grid {
                assert!((huber_prime(x, mu) - huber_prime(y, mu)).abs() <= (x - y).abs() + 1e-15);
            }
        }
    }

    #[test]
    fn loss_value_examples() {
        // realizable: targets generated by θ_e
        let theta_e = [0.4, -1.2];
        let feats = vec![vec![1.0, 2.0], vec![-0.3, 0.5], vec![0.0, 1.0]];
        let targets = feats.iter().map(|f| dot(&theta_e, f)).collect();
        let loss = SampledLoss::huber(SampleBatch::new(feats, targets).unwrap(), 0.05).unwrap();
        assert_eq!(loss.value(&pv(&theta_e)).unwrap(), 0.0);
        assert!(loss.grad(&pv(&theta_e)).unwrap().as_slice().iter().all(|&g| g == 0.0));

        let l = SampledLoss::huber(single(&[1.0, 0.0], 0.0), 0.05).unwrap();
        assert!((l.value(&pv(&[0.05, 0.0])).unwrap() - 0.00125).abs() < 1e-15);

        let sq = SampledLoss::squared(single(&[2.0, 0.0], 1.0));
        assert_eq!(sq.value(&pv(&[1.0, 0.0])).unwrap(), 1.0);
    }

    #[test]
    fn loss_grad_examples() {
        let l = SampledLoss::huber(single(&[1.0, 0.0], 0.0), 0.05).unwrap();
        let g = l.grad(&pv(&[0.02, 0.0])).unwrap();
        assert!((g.as_slice()[0] - 0.02).abs() < 1e-15 && g.as_slice()[1] == 0.0);
        let g = l.grad(&pv(&[0.1, 0.0])).unwrap();
        assert!((g.as_slice()[0] - 0.05).abs() < 1e-15 && g.as_slice()[1] == 0.0);
        assert!(matches!(l.grad(&pv(&[0.1])), Err(Error::DimensionMismatch { .. })));
        assert!(l.value(&pv(&[0.1, 0.0, 0.0])).is_err());
    }

    fn random_loss(rng: &mut RandomStream, kind: LossKind) -> SampledLoss {
        let d = 1 + rng.index(5);
        let m = 1 + rng.index(12);
        let feats: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let targets = (0..m).map(|_| rng.uniform(-0.3, 0.3)).collect();
        SampledLoss::new(SampleBatch::new(feats, targets).unwrap(), 0.05, kind).unwrap()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = RandomStream::new(3, 0);
        let h = 1e-6;
        let mut checked = 0;
        for trial in 0..400 {
            let kind = if trial % 2 == 0 { LossKind::HuberImitation } else { LossKind::Squared };
            let loss = random_loss(&mut rng, kind);
            let theta: Vec<f64> = (0..loss.dim()).map(|_| rng.uniform(-1.0, 1.0)).collect();
            // skip points within a finite-difference step of a Huber kink
            let near_kink = loss.batch.iter().any(|(phi, a)| {
                let r = dot(&theta, phi) - a;
                (r.abs() - loss.mu).abs() < 10.0 * h * norm(phi).max(1.0)
            });
            if kind == LossKind::HuberImitation && near_kink {
                continue;
            }
            let g = loss.grad_unchecked(&theta);
            for k in 0..theta.len() {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[k] += h;
                tm[k] -= h;
                let fd = (loss.value_unchecked(&tp) - loss.value_unchecked(&tm)) / (2.0 * h);
                let scale = g[k].abs().max(1e-3);
                assert!(
                    (fd - g[k]).abs() / scale < 1e-5,
                    "trial {trial} coord {k}: fd={fd} g={}",
                    g[k]
                );
            }
            checked += 1;
        }
        assert!(checked > 300);
    }

    #[test]
    fn smoothness_examples() {
        let c = smoothness_bound(&single(&[1.0, 0.0], 0.0), LossKind::HuberImitation, SmoothnessMethod::PowerIteration).unwrap();
        assert!((c.beta - 1.0).abs() < 1e-9);
        let b = SampleBatch::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]).unwrap();
        let c = smoothness_bound(&b, LossKind::HuberImitation, SmoothnessMethod::PowerIteration).unwrap();
        assert!((c.beta - 0.5).abs() < 1e-9);
        let c2 = smoothness_bound(&b, LossKind::Squared, SmoothnessMethod::PowerIteration).unwrap();
        assert!((c2.beta - 1.0).abs() < 1e-9);
    }

    #[test]
    fn trace_bound_dominates_power_iteration() {
        let mut rng = RandomStream::new(5, 0);
        for _ in 0..200 {
            let loss = random_loss(&mut rng, LossKind::HuberImitation);
            let p = smoothness_bound(&loss.batch, loss.kind, SmoothnessMethod::PowerIteration).unwrap();
            let t = smoothness_bound(&loss.batch, loss.kind, SmoothnessMethod::TraceBound).unwrap();
            assert!(t.beta >= p.beta - 1e-12);
        }
    }

    #[test]
    fn power_iteration_matches_closed_form_2x2() {
        // λ_max of [[a,b],[b,c]] = (a+c)/2 + sqrt(((a−c)/2)² + b²)
        let mut rng = RandomStream::new(9, 0);
        for _ in 0..200 {
            let m = 2 + rng.index(10);
            let feats: Vec<Vec<f64>> = (0..m)
                .map(|_| vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)])
                .collect();
            let b = SampleBatch::new(feats, vec![0.0; m]).unwrap();
            let s = b.second_moment();
            let (a, bb, c) = (s[0], s[1], s[3]);
            let exact = 0.5 * (a + c) + (0.25 * (a - c) * (a - c) + bb * bb).sqrt();
            let cert = smoothness_bound(&b, LossKind::HuberImitation, SmoothnessMethod::PowerIteration).unwrap();
            assert!(cert.beta >= exact - 1e-9, "{} vs {}", cert.beta, exact);
            assert!(cert.beta <= exact + 1e-9);
        }
    }

    struct HalfSquare;
    impl SmoothObjective for HalfSquare {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, x: &[f64]) -> f64 {
            0.5 * x[0] * x[0]
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            vec![x[0]]
        }
    }

    #[test]
    fn self_bounding_examples() {
        let r = self_bounding_check(&HalfSquare, &[vec![1.0]], 1.0);
        assert!((r.max_ratio - 0.5).abs() < 1e-15);
        assert!(r.pass);
        let r = self_bounding_check(&HalfSquare, &[vec![0.0]], 1.0);
        assert!(r.pass);
        // an underestimated beta must be caught
        let r = self_bounding_check(&HalfSquare, &[vec![1.0]], 0.1);
        assert!(!r.pass);
    }

    #[test]
    fn self_bounding_on_random_huber_losses() {
        let mut rng = RandomStream::new(21, 0);
        for _ in 0..1000 {
            let loss = random_loss(&mut rng, LossKind::HuberImitation);
            let beta = smoothness_bound(&loss.batch, loss.kind, SmoothnessMethod::PowerIteration).unwrap().beta;
            let u = rng.unit_vector(loss.dim());
            let r = rng.uniform(0.0, 2.0);
            let theta: Vec<f64> = u.iter().map(|x| x * r).collect();
            assert!(self_bounding_check(&loss, &[theta], beta).pass);
        }
    }

    #[test]
    fn nonnegative_and_convex_probes() {
        let mut rng = RandomStream::new(33, 0);
        for trial in 0..10_000 {
            let kind = if trial % 2 == 0 { LossKind::HuberImitation } else { LossKind::Squared };
            let loss = random_loss(&mut rng, kind);
            let d = loss.dim();
            let x: Vec<f64> = (0..d).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let y: Vec<f64> = (0..d).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            let (fx, fy, fm) = (loss.value_unchecked(&x), loss.value_unchecked(&y), loss.value_unchecked(&mid));
            assert!(fx >= 0.0 && fy >= 0.0);
            assert!(fm <= 0.5 * fx + 0.5 * fy + 1e-12);
        }
    }

    #[test]
    fn batch_validation() {
        assert!(SampleBatch::new(vec![], vec![]).is_err());
        assert!(SampleBatch::new(vec![vec![1.0]], vec![]).is_err());
        assert!(SampleBatch::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0.0, 0.0]).is_err());
        assert!(SampleBatch::new(vec![vec![f64::NAN]], vec![0.0]).is_err());
    }
}
