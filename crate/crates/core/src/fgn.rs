//! Fractional Gaussian noise.
//!
//! Samples are standardized (unit marginal variance) and their exact process
//! autocovariance at integer lag `k` is [`autocov`]. One lag is one grid step
//! of whatever simulation consumes the sequence.
//!
//! The default generator is circulant embedding: the covariance row is
//! embedded in a circulant matrix of size `2m` (`m` the next power of two
//! at or above `n`), diagonalized by one FFT, and a second FFT of scaled
//! complex normals yields a sample whose real part has the target law.
//! When the embedded spectrum has a materially negative eigenvalue the
//! sequential Durbin–Levinson (Hosking) recursion is used instead.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::report::{Report, ToReport};
use crate::seed::rng_from_seed;
use crate::stats;

/// Relative magnitude below which negative embedding eigenvalues are
/// treated as round-off and clipped to zero.
const CLIP_TOLERANCE: f64 = 1e-12;

/// Hurst exponent, restricted to `[0.5, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(value: f64) -> Result<Self> {
        if (0.5..1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(invalid(format!("hurst must be in [0.5, 1), got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for HurstParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FgnMethod {
    CirculantEmbedding,
    Hosking,
}

impl fmt::Display for FgnMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FgnMethod::CirculantEmbedding => "circulant_embedding",
            FgnMethod::Hosking => "hosking",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FgnSequence {
    pub samples: Vec<f64>,
    pub hurst: HurstParam,
    pub seed: u64,
    pub method: FgnMethod,
}

/// Autocovariance of unit-variance fGn at integer lag:
/// `½(|k+1|^{2H} − 2|k|^{2H} + |k−1|^{2H})`.
pub fn autocov(h: HurstParam, lag: i64) -> f64 {
    let k = lag.unsigned_abs();
    if k == 0 {
        return 1.0;
    }
    let two_h = 2.0 * h.0;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).powf(two_h))
}

/// Reusable generator for sequences of a fixed `(H, n)`.
///
/// Building the plan costs one FFT; each draw costs one more. Plans are
/// `Send + Sync` and can be shared by ensemble workers.
#[derive(Clone)]
pub struct FgnGenerator {
    hurst: HurstParam,
    n: usize,
    plan: Plan,
}

#[derive(Clone)]
enum Plan {
    Circulant {
        // sqrt(λ_k / M) for each of the M circulant eigenvalues.
        scale: Arc<[f64]>,
        fft: Arc<dyn Fft<f64>>,
    },
    Hosking {
        gamma: Arc<[f64]>,
    },
}

impl fmt::Debug for FgnGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FgnGenerator")
            .field("hurst", &self.hurst)
            .field("n", &self.n)
            .field("method", &self.method())
            .finish()
    }
}

impl FgnGenerator {
    /// Circulant embedding, falling back to Hosking when the embedding is
    /// not non-negative definite.
    pub fn new(hurst: HurstParam, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("fGn length must be at least 1"));
        }
        let plan = match circulant_plan(hurst, n) {
            Some(plan) => plan,
            None => hosking_plan(hurst, n),
        };
        Ok(Self { hurst, n, plan })
    }

    /// Forces a particular method. Hosking costs O(n²) time per draw.
    pub fn with_method(hurst: HurstParam, n: usize, method: FgnMethod) -> Result<Self> {
        if n == 0 {
            return Err(invalid("fGn length must be at least 1"));
        }
        let plan = match method {
            FgnMethod::CirculantEmbedding => circulant_plan(hurst, n).ok_or_else(|| {
                invalid(format!(
                    "circulant embedding not valid for H={hurst}, n={n}"
                ))
            })?,
            FgnMethod::Hosking => hosking_plan(hurst, n),
        };
        Ok(Self { hurst, n, plan })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn hurst(&self) -> HurstParam {
        self.hurst
    }

    pub fn method(&self) -> FgnMethod {
        match self.plan {
            Plan::Circulant { .. } => FgnMethod::CirculantEmbedding,
            Plan::Hosking { .. } => FgnMethod::Hosking,
        }
    }

    pub fn generate(&self, seed: u64) -> FgnSequence {
        let mut rng = rng_from_seed(seed);
        let samples = match &self.plan {
            Plan::Circulant { scale, fft } => {
                let mut buf: Vec<Complex<f64>> = scale
                    .iter()
                    .map(|&s| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut buf);
                buf.truncate(self.n);
                buf.into_iter().map(|c| c.re).collect()
            }
            Plan::Hosking { gamma } => hosking_draw(gamma, &mut rng),
        };
        FgnSequence {
            samples,
            hurst: self.hurst,
            seed,
            method: self.method(),
        }
    }
}

fn circulant_plan(hurst: HurstParam, n: usize) -> Option<Plan> {
    let m = n.next_power_of_two();
    let size = 2 * m;
    let mut row: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); size];
    for (k, c) in row.iter_mut().take(m + 1).enumerate() {
        c.re = autocov(hurst, k as i64);
    }
    for k in 1..m {
        row[size - k].re = row[k].re;
    }
    let fft = FftPlanner::new().plan_fft_forward(size);
    fft.process(&mut row);

    let max = row.iter().map(|c| c.re).fold(f64::MIN, f64::max);
    let mut scale = Vec::with_capacity(size);
    for c in &row {
        let lambda = if c.re < 0.0 {
            if -c.re < CLIP_TOLERANCE * max {
                0.0
            } else {
                return None;
            }
        } else {
            c.re
        };
        scale.push((lambda / size as f64).sqrt());
    }
    Some(Plan::Circulant {
        scale: scale.into(),
        fft,
    })
}

fn hosking_plan(hurst: HurstParam, n: usize) -> Plan {
    let gamma: Vec<f64> = (0..n).map(|k| autocov(hurst, k as i64)).collect();
    Plan::Hosking {
        gamma: gamma.into(),
    }
}

// Durbin–Levinson: x_t = Σ φ_{t,j} x_{t−j} + sqrt(v_t) z_t, with the
// prediction coefficients φ_{t,·} updated in place (O(n) memory).
fn hosking_draw(gamma: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let n = gamma.len();
    let mut x = Vec::with_capacity(n);
    let mut phi: Vec<f64> = Vec::with_capacity(n);
    let mut next = Vec::with_capacity(n);
    let mut v = gamma[0];
    for t in 0..n {
        if t > 0 {
            let acc: f64 = phi
                .iter()
                .enumerate()
                .map(|(j, p)| p * gamma[t - 1 - j])
                .sum();
            let kappa = (gamma[t] - acc) / v;
            next.clear();
            next.extend((0..t - 1).map(|j| phi[j] - kappa * phi[t - 2 - j]));
            next.push(kappa);
            std::mem::swap(&mut phi, &mut next);
            v *= 1.0 - kappa * kappa;
        }
        let z: f64 = rng.sample(StandardNormal);
        let pred: f64 = phi.iter().zip(x.iter().rev()).map(|(p, v)| p * v).sum();
        x.push(pred + v.max(0.0).sqrt() * z);
    }
    x
}

/// One-shot generation of `n` samples.
pub fn generate(h: HurstParam, n: usize, seed: u64) -> Result<FgnSequence> {
    Ok(FgnGenerator::new(h, n)?.generate(seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    /// Sample autocorrelations at lags `1..=max_lag`.
    pub autocorrelations: Vec<f64>,
    /// Aggregated-variance Hurst estimate.
    pub hurst_estimate: f64,
    pub block_sizes: Vec<usize>,
}

impl ToReport for ValidationReport {
    fn to_report(&self, out: &mut Report) {
        out.text("n", self.n)
            .num("mean", self.mean)
            .num("variance", self.variance)
            .num("hurst_estimate", self.hurst_estimate);
        for (i, r) in self.autocorrelations.iter().enumerate() {
            out.num(format!("acf.lag{}", i + 1), *r);
        }
    }
}

/// Statistical QA of a generated sequence.
pub fn validate(seq: &FgnSequence, max_lag: usize) -> Result<ValidationReport> {
    let x = &seq.samples;
    let n = x.len();
    let required = (10 * max_lag.max(1)).max(32);
    if n < required {
        return Err(Error::SequenceTooShort {
            required,
            actual: n,
        });
    }
    let mean = stats::mean(x);
    let variance = stats::variance(x);
    if !(variance > 0.0) || x.iter().all(|&v| v == x[0]) {
        return Err(Error::DegenerateVariance);
    }
    let denom: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let autocorrelations = (1..=max_lag)
        .map(|k| {
            x.iter()
                .zip(&x[k..])
                .map(|(a, b)| (a - mean) * (b - mean))
                .sum::<f64>()
                / denom
        })
        .collect();
    let (hurst_estimate, block_sizes) = aggregated_variance_hurst(x);
    Ok(ValidationReport {
        n,
        mean,
        variance,
        autocorrelations,
        hurst_estimate,
        block_sizes,
    })
}

/// Slope `β` of log Var(block mean) against log block size over dyadic
/// sizes, giving `H = 1 + β/2`. Sizes stop while enough blocks remain for
/// the mean-subtraction bias to stay small.
fn aggregated_variance_hurst(x: &[f64]) -> (f64, Vec<usize>) {
    let n = x.len();
    let min_blocks = (n / 4096).clamp(8, 256);
    let mut sizes = Vec::new();
    let mut log_m = Vec::new();
    let mut log_v = Vec::new();
    let mut m = 2;
    while n / m >= min_blocks {
        let means: Vec<f64> = x.chunks_exact(m).map(stats::mean).collect();
        let v = stats::variance(&means);
        if v > 0.0 {
            sizes.push(m);
            log_m.push((m as f64).ln());
            log_v.push(v.ln());
        }
        m *= 2;
    }
    if sizes.len() < 2 {
        return (f64::NAN, sizes);
    }
    let fit = stats::linear_fit(&log_m, &log_v);
    (1.0 + fit.slope / 2.0, sizes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstParam {
        HurstParam::new(v).unwrap()
    }

    #[test]
    fn hurst_range() {
        assert!(HurstParam::new(0.5).is_ok());
        assert!(HurstParam::new(0.99).is_ok());
        assert!(HurstParam::new(1.0).is_err());
        assert!(HurstParam::new(0.49).is_err());
        assert!(HurstParam::new(f64::NAN).is_err());
    }

    #[test]
    fn autocov_examples() {
        for v in [0.5, 0.7, 0.8, 0.95] {
            assert_eq!(autocov(h(v), 0), 1.0);
        }
        assert_eq!(autocov(h(0.5), 1), 0.0);
        assert_eq!(autocov(h(0.5), 17), 0.0);
        // ½(2^{1.6} − 2), evaluated independently.
        let expected = 0.5 * (2f64.powf(1.6) - 2.0);
        assert!((autocov(h(0.8), 1) - expected).abs() < 1e-15);
        assert!((expected - 0.51572).abs() < 1e-5);
    }

    #[test]
    fn autocov_symmetric_and_positive() {
        for lag in 1..500 {
            let g = autocov(h(0.8), lag);
            assert_eq!(g, autocov(h(0.8), -lag));
            assert!(g > 0.0);
        }
    }

    #[test]
    fn partial_sums_grow_as_t_pow_2h_minus_1() {
        let hp = h(0.8);
        let mut sum = 0.0;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut next = 100usize;
        for t in 1..=100_000usize {
            sum += autocov(hp, t as i64);
            if t == next {
                xs.push((t as f64).ln());
                ys.push(sum.ln());
                next = (next as f64 * 1.5) as usize;
            }
        }
        let slope = stats::linear_fit(&xs, &ys).slope;
        assert!((slope / 0.6 - 1.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(h(0.8), 4096, 42).unwrap();
        let b = generate(h(0.8), 4096, 42).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.method, FgnMethod::CirculantEmbedding);
        let c = generate(h(0.8), 4096, 43).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn length_and_finiteness() {
        for n in [1, 2, 3, 100, 1000, 1025] {
            let s = generate(h(0.75), n, 1).unwrap();
            assert_eq!(s.samples.len(), n);
            assert!(s.samples.iter().all(|v| v.is_finite()));
        }
        assert!(generate(h(0.8), 0, 1).is_err());
    }

    #[test]
    fn hosking_matches_target_covariance_in_small_case() {
        // Pooled product moments over many short independent sequences.
        let gen = FgnGenerator::with_method(h(0.8), 4, FgnMethod::Hosking).unwrap();
        let trials = 40_000;
        let mut acc = [0.0; 4];
        for s in 0..trials {
            let x = gen.generate(s).samples;
            for (k, a) in acc.iter_mut().enumerate() {
                *a += x[0] * x[k];
            }
        }
        for (k, a) in acc.iter().enumerate() {
            let est = a / trials as f64;
            assert!(
                (est - autocov(h(0.8), k as i64)).abs() < 0.04,
                "lag {k}: {est}"
            );
        }
    }

    #[test]
    fn validate_rejects_short_and_constant() {
        let seq = generate(h(0.8), 50, 1).unwrap();
        assert!(matches!(
            validate(&seq, 10),
            Err(Error::SequenceTooShort { required: 100, .. })
        ));
        let flat = FgnSequence {
            samples: vec![0.3; 1000],
            ..seq
        };
        assert_eq!(validate(&flat, 5), Err(Error::DegenerateVariance));
    }

    #[test]
    fn validate_report_is_finite() {
        let seq = generate(h(0.8), 8192, 3).unwrap();
        let r = validate(&seq, 20).unwrap();
        assert_eq!(r.autocorrelations.len(), 20);
        assert!(r.mean.is_finite() && r.variance.is_finite() && r.hurst_estimate.is_finite());
        assert!(r.autocorrelations.iter().all(|v| v.is_finite()));
    }
}
