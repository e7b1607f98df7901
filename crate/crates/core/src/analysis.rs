//! Rate slopes, regret bounds with explicit constants, and martingale
//! concentration diagnostics over finished runs.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{lemma2_bound, lemma2_bound_adaptive};
use crate::numerics::{axpy, dot, norm, RandomStream};
use crate::online_il::RunLedger;

/// Values at or below this are clipped before taking logs.
pub const SLOPE_FLOOR: f64 = 1e-12;
pub const MIN_WINDOW_POINTS: usize = 5;
/// Bregman diameter constant of the Euclidean geometry on unit vectors.
pub const EUCLIDEAN_B: f64 = SQRT_2;
/// Proper-stepsize constant used for the AdaGrad comparison.
pub const ADAGRAD_K: f64 = SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: (usize, usize),
    /// Number of values that were clipped up to [`SLOPE_FLOOR`].
    pub clipped: usize,
}

/// Tail window `[⌊N/2⌋, N]` (1-based, inclusive).
pub fn default_window(rounds: usize) -> (usize, usize) {
    ((rounds / 2).max(1), rounds)
}

/// Least-squares slope of `log v_n` against `log n` over the 1-based inclusive
/// window `[n0, n1]`; `values[i]` belongs to round `i + 1`.
pub fn loglog_slope(values: &[f64], window: (usize, usize)) -> Result<SlopeFit> {
    let (n0, n1) = window;
    if n0 == 0 || n1 > values.len() || n1 < n0 || n1 - n0 + 1 < MIN_WINDOW_POINTS {
        return Err(Error::InvalidWindow(format!(
            "window [{n0}, {n1}] over {} values needs at least {MIN_WINDOW_POINTS} points",
            values.len()
        )));
    }
    let mut clipped = 0;
    let pts: Vec<(f64, f64)> = (n0..=n1)
        .map(|n| {
            let v = values[n - 1];
            let v = if v > SLOPE_FLOOR {
                v
            } else {
                clipped += 1;
                SLOPE_FLOOR
            };
            ((n as f64).ln(), v.ln())
        })
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        window,
        clipped,
    })
}

/// Average-loss bound `8βR_A²/N + √(8βR_A²Ê/N)`.
pub fn thm1_bound(beta: f64, r_a: f64, rounds: usize, e_hat: f64) -> Result<f64> {
    Ok(lemma2_bound(beta, r_a, rounds, e_hat)? / rounds as f64)
}

/// Lemma-3 style deviation bound
/// `2B√V + √(2 log(1/δ)) √(1 + ½ log(2V+2W+1)) √(2V+2W+1)`.
pub fn rakhlin_bound(v: f64, w: f64, b: f64, delta: f64) -> Result<f64> {
    if !(v >= 0.0 && w >= 0.0 && b >= 0.0) || !(v.is_finite() && w.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter("V, W and B must be finite and nonnegative".into()));
    }
    if !(delta > 0.0 && delta <= (-1.0f64).exp()) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1/e], got {delta}")));
    }
    let s = 2.0 * v + 2.0 * w + 1.0;
    Ok(2.0 * b * v.sqrt() + (2.0 * (1.0 / delta).ln()).sqrt() * (1.0 + 0.5 * s.ln()).sqrt() * s.sqrt())
}

/// Problem constants for the high-probability bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub beta: f64,
    pub r_a: f64,
    pub r_theta: f64,
    /// Uniform bound on sampled-gradient norms over the decision set.
    pub g: f64,
    pub delta: f64,
    pub rounds: usize,
    pub eps: f64,
    pub eps_hat: f64,
    /// Any upper bound on `ε̂`.
    pub e_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub beta: f64,
    pub r_a: f64,
    pub r_theta: f64,
    pub r: f64,
    pub r_tilde: f64,
    pub g: f64,
    pub delta: f64,
    pub b: f64,
    pub a1: f64,
    pub a2: f64,
    pub c: f64,
}

impl BoundInputs {
    fn check(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter("beta must be positive".into()));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("number of rounds must be positive".into()));
        }
        for (name, v) in [
            ("R_A", self.r_a),
            ("R_Theta", self.r_theta),
            ("G", self.g),
            ("eps", self.eps),
            ("eps_hat", self.eps_hat),
            ("E_hat", self.e_hat),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if !(self.delta > 0.0 && self.delta < (-1.0f64).exp()) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0, 1/e), got {}",
                self.delta
            )));
        }
        Ok(())
    }

    pub fn constants(&self) -> Result<BoundConstants> {
        self.check()?;
        let (beta, rt) = (self.beta, self.r_theta);
        let n = self.rounds as f64;
        let log_inv_delta = (1.0 / self.delta).ln();
        let a1 = 8.0 * EUCLIDEAN_B * (2.0 * beta * rt * rt).sqrt();
        let a2 = 8.0
            * (6.0 * beta * rt * rt * log_inv_delta).sqrt()
            * (1.0 + 0.5 * (16.0 * self.g * self.g * rt.max(1.0).powi(2) * n + 1.0).ln()).sqrt();
        let r = 1.0f64.max(rt).max(self.r_a);
        Ok(BoundConstants {
            beta,
            r_a: self.r_a,
            r_theta: rt,
            r,
            r_tilde: rt.min(1.0),
            g: self.g,
            delta: self.delta,
            b: EUCLIDEAN_B,
            a1,
            a2,
            c: log_inv_delta * (self.g * r * n).ln(),
        })
    }
}

/// Explicit high-probability bound on `Regret(l_n) = Σ l_n(θ_n) − Nε`:
/// `2(A₁+A₂)√(Nε+Nε̂) + 6√(2βR_A²NÊ) + (A₁+A₂)² + A₂/√(12βR̃²) + 24βR_A²`.
///
/// With `R_Θ = 0` the `A₂/√(12βR̃²)` term is `0/0`; it is taken as 0.
pub fn thm2_regret_bound(inputs: &BoundInputs) -> Result<f64> {
    let k = inputs.constants()?;
    let n = inputs.rounds as f64;
    let (beta, r_a) = (inputs.beta, inputs.r_a);
    let a = k.a1 + k.a2;
    let tail = if k.a2 == 0.0 {
        0.0
    } else {
        k.a2 / (12.0 * beta * k.r_tilde * k.r_tilde).sqrt()
    };
    Ok(2.0 * a * (n * inputs.eps + n * inputs.eps_hat).sqrt()
        + 6.0 * (2.0 * beta * r_a * r_a * n * inputs.e_hat).sqrt()
        + a * a
        + tail
        + 24.0 * beta * r_a * r_a)
}

/// Bound on the average expected loss: `ε + thm2_regret_bound / N`.
pub fn thm2_bound(inputs: &BoundInputs) -> Result<f64> {
    Ok(inputs.eps + thm2_regret_bound(inputs)? / inputs.rounds as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryBounds {
    pub thm1_rhs: f64,
    pub lemma2: f64,
    /// Same value as `lemma2`: the linearized regret obeys the same bound.
    pub lemma4: f64,
    /// Adaptive variant with `K = √2`.
    pub lemma6: f64,
    pub k: f64,
    pub rakhlin: Option<f64>,
    pub thm2_explicit: f64,
    pub thm2_average: f64,
    pub constants: BoundConstants,
}

pub fn theory_bounds(inputs: &BoundInputs, concentration: Option<&ConcentrationReport>) -> Result<TheoryBounds> {
    let lemma2 = lemma2_bound(inputs.beta, inputs.r_a, inputs.rounds, inputs.e_hat)?;
    Ok(TheoryBounds {
        thm1_rhs: lemma2 / inputs.rounds as f64,
        lemma2,
        lemma4: lemma2,
        lemma6: lemma2_bound_adaptive(ADAGRAD_K, inputs.beta, inputs.r_a, inputs.rounds, inputs.e_hat)?,
        k: ADAGRAD_K,
        rakhlin: concentration.map(|c| c.rakhlin_bound),
        thm2_explicit: thm2_regret_bound(inputs)?,
        thm2_average: thm2_bound(inputs)?,
        constants: inputs.constants()?,
    })
}

/// Bound inputs of a finished run, with `Ê = ε̂`.
pub fn bound_inputs(ledger: &RunLedger, delta: f64) -> Result<BoundInputs> {
    let d = ledger
        .derived
        .as_ref()
        .ok_or_else(|| Error::MissingData("ledger has no derived quantities".into()))?;
    Ok(BoundInputs {
        // a run whose batches are all zero has β = 0; any positive β is valid
        beta: d.beta.max(f64::MIN_POSITIVE),
        r_a: ledger.r_a,
        r_theta: ledger.radius,
        g: d.grad_bound,
        delta,
        rounds: ledger.rounds(),
        eps: d.eps.max(0.0),
        eps_hat: d.eps_hat.max(0.0),
        e_hat: d.eps_hat.max(0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    /// `Σ ⟨∇l_n − ∇l̂_n, θ_n⟩²` over the logged rounds.
    pub v: f64,
    /// Resample estimate of the conditional counterpart of `v`.
    pub w_hat: f64,
    pub scalar_mds_sum: f64,
    pub rakhlin_bound: f64,
    pub scalar_violated: bool,
    /// `Σ ‖∇l_n − ∇l̂_n‖²`.
    pub v_vector: f64,
    pub w_hat_vector: f64,
    pub vector_mds_sum_norm: f64,
    pub vector_rakhlin_bound: f64,
    pub vector_violated: bool,
    pub violated: bool,
    /// `24βR_Θ²(Σ l_n(θ_n) + Σ l̂_n(θ_n)) − (V + W)`; negative values mean the
    /// estimated statistics exceed the analytic bound.
    pub vw_margin: f64,
    /// Same check for the vector sequence, without the `R_Θ²` factor.
    pub vw_margin_vector: f64,
    pub delta: f64,
}

/// Lemma-3 check of both gradient-noise sequences, with evaluation gradients
/// standing in for `∇l_n`.
pub fn concentration_diagnostic(ledger: &RunLedger, delta: f64) -> Result<ConcentrationReport> {
    if ledger.records.is_empty() {
        return Err(Error::MissingData("ledger has no rounds".into()));
    }
    let dim = ledger.final_theta.dim();
    let mut v = 0.0;
    let mut w = 0.0;
    let mut vv = 0.0;
    let mut wv = 0.0;
    let mut scalar_sum = 0.0;
    let mut vec_sum = vec![0.0; dim];
    let mut loss_sum = 0.0;
    for r in &ledger.records {
        let (ws, wvec) = match (r.w_scalar, r.w_vector) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::MissingData(format!(
                    "round {} has no resample statistics; rerun with resamples > 0",
                    r.n
                )))
            }
        };
        let z: Vec<f64> = r
            .eval_grad
            .as_slice()
            .iter()
            .zip(r.grad.as_slice())
            .map(|(a, b)| a - b)
            .collect();
        let zs = dot(&z, r.theta.as_slice());
        scalar_sum += zs;
        v += zs * zs;
        vv += dot(&z, &z);
        axpy(1.0, &z, &mut vec_sum);
        w += ws;
        wv += wvec;
        loss_sum += r.eval_loss + r.sampled_loss;
    }
    let bound = rakhlin_bound(v, w, EUCLIDEAN_B, delta)?;
    let vbound = rakhlin_bound(vv, wv, EUCLIDEAN_B, delta)?;
    let vec_norm = norm(&vec_sum);
    let beta = ledger.derived.as_ref().map_or(0.0, |d| d.beta);
    let scalar_violated = scalar_sum.abs() > bound;
    let vector_violated = vec_norm > vbound;
    Ok(ConcentrationReport {
        v,
        w_hat: w,
        scalar_mds_sum: scalar_sum,
        rakhlin_bound: bound,
        scalar_violated,
        v_vector: vv,
        w_hat_vector: wv,
        vector_mds_sum_norm: vec_norm,
        vector_rakhlin_bound: vbound,
        vector_violated,
        violated: scalar_violated || vector_violated,
        vw_margin: 24.0 * beta * ledger.radius.powi(2) * loss_sum - (v + w),
        vw_margin_vector: 24.0 * beta * loss_sum - (vv + wv),
        delta,
    })
}

/// Kinds of generated martingale difference sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdsKind {
    /// `z_t = σ_t ξ_t` with Rademacher `ξ_t` and a predictable scale.
    ScaledRademacher,
    /// `z_t` uniform on the sphere of a predictable radius, in `dim` dimensions.
    Sphere { dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdsTrial {
    pub sum_norm: f64,
    pub v: f64,
    /// Exact conditional second moments summed.
    pub w: f64,
    pub bound: f64,
    pub violated: bool,
}

/// One bounded MDS of length `len` whose scale depends on the past, checked
/// against the deviation bound with the exact `W`.
pub fn synthetic_mds_trial(kind: MdsKind, len: usize, delta: f64, rng: &mut RandomStream) -> Result<MdsTrial> {
    let dim = match kind {
        MdsKind::ScaledRademacher => 1,
        MdsKind::Sphere { dim } => dim.max(1),
    };
    let mut sum = vec![0.0; dim];
    let mut v = 0.0;
    let mut w = 0.0;
    for _ in 0..len {
        // predictable scale in [0.1, 1.1], shrinking when the walk has drifted
        let sigma = 0.1 + 1.0 / (1.0 + norm(&sum));
        let z: Vec<f64> = match kind {
            MdsKind::ScaledRademacher => vec![sigma * rng.rademacher()],
            MdsKind::Sphere { .. } => rng.unit_vector(dim).into_iter().map(|x| sigma * x).collect(),
        };
        v += dot(&z, &z);
        w += sigma * sigma;
        axpy(1.0, &z, &mut sum);
    }
    let bound = rakhlin_bound(v, w, EUCLIDEAN_B, delta)?;
    let sum_norm = norm(&sum);
    Ok(MdsTrial {
        sum_norm,
        v,
        w,
        bound,
        violated: sum_norm > bound,
    })
}

/// Linear-interpolation percentile of unsorted data, `p` in `[0, 100]`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("percentile of an empty set".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("percentile must be in [0, 100], got {p}")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub n: usize,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

/// Per-round median and 10/90 percentiles across equally long curves.
pub fn seed_bands(curves: &[Vec<f64>]) -> Result<Vec<Band>> {
    let len = curves.first().map(Vec::len).ok_or_else(|| Error::InvalidInput("no curves".into()))?;
    if curves.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidInput("curves have different lengths".into()));
    }
    (0..len)
        .map(|i| {
            let col: Vec<f64> = curves.iter().map(|c| c[i]).collect();
            Ok(Band {
                n: i + 1,
                median: percentile(&col, 50.0)?,
                p10: percentile(&col, 10.0)?,
                p90: percentile(&col, 90.0)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const E_INV: f64 = 0.36787944117144233;

    #[test]
    fn slope_calibration() {
        let v: Vec<f64> = (1..=100).map(|n| 3.0 / n as f64).collect();
        assert!((loglog_slope(&v, (1, 100)).unwrap().slope + 1.0).abs() < 1e-9);
        let v: Vec<f64> = (1..=100).map(|n| 2.0 / (n as f64).sqrt()).collect();
        assert!((loglog_slope(&v, (10, 100)).unwrap().slope + 0.5).abs() < 1e-9);
        let v: Vec<f64> = (1..=100).map(|n| 1.0 / n as f64 + 0.1).collect();
        let s = loglog_slope(&v, (50, 100)).unwrap().slope;
        assert!(s > -0.5 && s < 0.0, "{s}");
    }

    #[test]
    fn slope_window_errors_and_clipping() {
        let v = vec![1.0; 10];
        assert!(matches!(loglog_slope(&v, (1, 4)), Err(Error::InvalidWindow(_))));
        assert!(loglog_slope(&v, (5, 11)).is_err());
        assert!(loglog_slope(&v, (0, 5)).is_err());
        let z = vec![0.0; 10];
        let fit = loglog_slope(&z, (1, 10)).unwrap();
        assert_eq!(fit.clipped, 10);
        assert_eq!(fit.slope, 0.0);
        assert_eq!(default_window(300), (150, 300));
    }

    #[test]
    fn average_bound_examples_and_consistency() {
        assert!((thm1_bound(1.0, 1.0, 100, 0.0).unwrap() - 0.08).abs() < 1e-12);
        assert!((thm1_bound(1.0, 1.0, 100, 0.08).unwrap() - 0.16).abs() < 1e-12);
        for (b, r, n, e) in [(0.3, 2.0, 17, 0.01), (5.0, 0.1, 1000, 0.4)] {
            let l2 = lemma2_bound(b, r, n, e).unwrap();
            assert!((l2 / n as f64 - thm1_bound(b, r, n, e).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn rakhlin_examples() {
        assert!((rakhlin_bound(0.0, 0.0, SQRT_2, E_INV).unwrap() - SQRT_2).abs() < 1e-9);
        assert!((rakhlin_bound(0.0, 0.0, SQRT_2, (-2.0f64).exp()).unwrap() - 2.0).abs() < 1e-9);
        let v = 3.7;
        let want = SQRT_2 * (1.0 + 0.5 * (2.0 * v + 1.0f64).ln()).sqrt() * (2.0 * v + 1.0f64).sqrt();
        assert!((rakhlin_bound(v, 0.0, 0.0, E_INV).unwrap() - want).abs() < 1e-9);
        assert!(rakhlin_bound(0.0, 0.0, SQRT_2, 0.5).is_err());
        assert!(rakhlin_bound(-1.0, 0.0, SQRT_2, 0.1).is_err());
        // a single term |z| is always covered
        for z in [0.1, 1.0, 25.0] {
            assert!(rakhlin_bound(z * z, 0.0, SQRT_2, 0.05).unwrap() >= z);
        }
    }

    #[test]
    fn rakhlin_monotone() {
        let mut rng = RandomStream::new(3, 0);
        for _ in 0..500 {
            let v = rng.uniform(0.0, 50.0);
            let w = rng.uniform(0.0, 50.0);
            let d = rng.uniform(1e-4, E_INV);
            let base = rakhlin_bound(v, w, SQRT_2, d).unwrap();
            assert!(rakhlin_bound(v + 1.0, w, SQRT_2, d).unwrap() >= base);
            assert!(rakhlin_bound(v, w + 1.0, SQRT_2, d).unwrap() >= base);
            assert!(rakhlin_bound(v, w, SQRT_2, d * 0.5).unwrap() >= base);
        }
    }

    fn inputs() -> BoundInputs {
        BoundInputs {
            beta: 0.7,
            r_a: 2.0,
            r_theta: 1.4,
            g: 3.0,
            delta: 0.05,
            rounds: 200,
            eps: 0.01,
            eps_hat: 0.012,
            e_hat: 0.012,
        }
    }

    #[test]
    fn high_probability_constants_by_hand() {
        let i = inputs();
        let k = i.constants().unwrap();
        let a1 = 8.0 * SQRT_2 * (2.0 * 0.7 * 1.96f64).sqrt();
        let a2 = 8.0 * (6.0 * 0.7 * 1.96 * 20f64.ln()).sqrt() * (1.0 + 0.5 * (16.0 * 9.0 * 1.96 * 200.0 + 1.0f64).ln()).sqrt();
        assert!((k.a1 - a1).abs() < 1e-12 && (k.a2 - a2).abs() < 1e-9);
        assert_eq!(k.r, 2.0);
        assert_eq!(k.r_tilde, 1.0);
        assert!((k.c - 20f64.ln() * (3.0 * 2.0 * 200.0f64).ln()).abs() < 1e-12);
        let want = 2.0 * (a1 + a2) * (200.0 * 0.022f64).sqrt()
            + 6.0 * (2.0 * 0.7 * 4.0 * 200.0 * 0.012f64).sqrt()
            + (a1 + a2).powi(2)
            + a2 / (12.0 * 0.7f64).sqrt()
            + 24.0 * 0.7 * 4.0;
        assert!((thm2_regret_bound(&i).unwrap() - want).abs() < 1e-9 * want);
        assert!((thm2_bound(&i).unwrap() - (0.01 + want / 200.0)).abs() < 1e-12);
    }

    #[test]
    fn high_probability_bound_monotone() {
        let i = inputs();
        let base = thm2_regret_bound(&i).unwrap();
        for bumped in [
            BoundInputs { e_hat: 2.0 * i.e_hat, ..i },
            BoundInputs { eps: 2.0 * i.eps, ..i },
            BoundInputs { eps_hat: 2.0 * i.eps_hat, ..i },
            BoundInputs { rounds: 2 * i.rounds, ..i },
        ] {
            assert!(thm2_regret_bound(&bumped).unwrap() >= base);
        }
        assert!(thm2_bound(&BoundInputs { delta: E_INV, ..i }).is_err());
        assert!(thm2_bound(&BoundInputs { delta: 0.5, ..i }).is_err());
        let zero = BoundInputs { r_theta: 0.0, ..i };
        assert!(thm2_regret_bound(&zero).unwrap().is_finite());
    }

    #[test]
    fn theory_bounds_fields() {
        let tb = theory_bounds(&inputs(), None).unwrap();
        assert_eq!(tb.lemma2, tb.lemma4);
        assert!((tb.lemma6 - lemma2_bound_adaptive(SQRT_2, 0.7, 2.0, 200, 0.012).unwrap()).abs() < 1e-12);
        assert!((tb.thm1_rhs * 200.0 - tb.lemma2).abs() < 1e-9);
        assert!(tb.lemma6 >= tb.lemma2);
    }

    #[test]
    fn synthetic_mds_rarely_violates() {
        let mut violations = 0;
        for t in 0..200 {
            let mut rng = RandomStream::new(t, 9);
            let kind = if t % 2 == 0 { MdsKind::ScaledRademacher } else { MdsKind::Sphere { dim: 3 } };
            let trial = synthetic_mds_trial(kind, 200, 0.05, &mut rng).unwrap();
            assert!(trial.v >= 0.0 && trial.w >= 0.0);
            violations += trial.violated as usize;
        }
        assert!(violations <= 20, "{violations}");
    }

    #[test]
    fn percentile_examples() {
        let v = [3.0, 1.0, 2.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 50.0).unwrap(), 3.0);
        assert_eq!(percentile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&v, 100.0).unwrap(), 5.0);
        assert!((percentile(&v, 10.0).unwrap() - 1.4).abs() < 1e-12);
        assert!(percentile(&[], 50.0).is_err());
        let bands = seed_bands(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(bands[1].median, 3.0);
        assert_eq!(bands[0].n, 1);
    }
}
