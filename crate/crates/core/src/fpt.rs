//! First-passage time to buffer depletion.
//!
//! Trials start in `Available` at `B₀` and run until the level first hits
//! zero or the span runs out (censored). The empirical density of the
//! passage time is modelled as `f(t) ≈ 𝒦 · m(t) · H(t)` where `H` is the
//! Bihill transition function
//! `H(t) = 1 / ([1 + (a₁/t)^{m₁}] [1 + (t/a₂)^{m₂}])`.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::buffer::{consumption_rate, BufferParams, ChannelModel, ConsumptionMode};
use crate::error::{invalid, Error, Result};
use crate::fgn::FgnGenerator;
use crate::format::sig9;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::report::{Report, ToReport};
use crate::seed::{mix, rng_from_seed};
use crate::stats;
use crate::traffic::{sample_count, synthesize_with, trend, TrafficTrace};
use crate::wdm::allocate;

#[derive(Debug, Clone, PartialEq)]
pub struct FptEnsemble {
    /// Passage time per trial, or the span for censored trials.
    pub samples_hours: Vec<f64>,
    pub censored: Vec<bool>,
    pub master_seed: u64,
    pub params: BufferParams,
    pub max_span_hours: f64,
    pub dt_hours: f64,
}

impl FptEnsemble {
    pub fn trials(&self) -> usize {
        self.samples_hours.len()
    }

    pub fn observed(&self) -> Vec<f64> {
        self.samples_hours
            .iter()
            .zip(&self.censored)
            .filter(|(_, c)| !**c)
            .map(|(s, _)| *s)
            .collect()
    }

    pub fn censored_count(&self) -> usize {
        self.censored.iter().filter(|c| **c).count()
    }

    /// CSV `trial,fpt_hours,censored`.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "trial,fpt_hours,censored")?;
        for (i, (s, c)) in self.samples_hours.iter().zip(&self.censored).enumerate() {
            writeln!(w, "{i},{},{}", sig9(*s), u8::from(*c))?;
        }
        Ok(())
    }
}

/// Time of the first depletion on a trace, if any. Mirrors the `Available`
/// branch of [`crate::buffer::simulate_on_trace`] without recording a trace.
pub fn first_passage(params: &BufferParams, trace: &TrafficTrace) -> Result<Option<f64>> {
    let dt = trace.dt_hours;
    let c_q = params.config.key_rate_per_hour();
    let n_channels = f64::from(params.config.n_channels);
    let constant = match params.consumption_mode {
        ConsumptionMode::InstantBalance => None,
        _ => Some(consumption_rate(params, 0.0).dku_per_hour),
    };
    let mut level = params.b0_dku;
    for i in 0..trace.len().saturating_sub(1) {
        let channels = match params.channel_model {
            ChannelModel::Discrete => {
                f64::from(allocate(trace.load[i], params.config.n_channels)?.n_quantum)
            }
            ChannelModel::ContinuousLower => n_channels - 1.0 - 2.0 * trace.load[i],
            ChannelModel::ContinuousUpper => n_channels + 1.0 - 2.0 * trace.load[i],
        };
        let s = constant.unwrap_or_else(|| consumption_rate(params, trace.clock(i)).dku_per_hour);
        level += dt * (c_q * channels - s);
        if level <= 0.0 {
            return Ok(Some((i + 1) as f64 * dt));
        }
    }
    Ok(None)
}

/// Runs `trials` independent first-passage trials in the current rayon pool.
///
/// Trial `i` uses seed `mix(master_seed, i)`; results are stored by index,
/// so the ensemble does not depend on the number of workers.
pub fn run_ensemble(
    params: &BufferParams,
    trials: usize,
    max_span_hours: f64,
    dt_hours: f64,
    master_seed: u64,
) -> Result<FptEnsemble> {
    params.validate()?;
    if trials == 0 {
        return Err(invalid("trials must be >= 1"));
    }
    // One extra grid point so the last update lands on the span itself.
    let n = sample_count(max_span_hours, dt_hours)? + 1;
    let generator = FgnGenerator::new(params.traffic.hurst, n)?;
    let results: Vec<Result<Option<f64>>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let trace = synthesize_with(
                &generator,
                &params.traffic,
                dt_hours,
                params.start_phase_hours,
                mix(master_seed, i as u64),
            )?;
            first_passage(params, &trace)
        })
        .collect();
    let span = (n - 1) as f64 * dt_hours;
    let mut samples_hours = Vec::with_capacity(trials);
    let mut censored = Vec::with_capacity(trials);
    for r in results {
        match r? {
            Some(t) => {
                samples_hours.push(t);
                censored.push(false);
            }
            None => {
                samples_hours.push(span);
                censored.push(true);
            }
        }
    }
    Ok(FptEnsemble {
        samples_hours,
        censored,
        master_seed,
        params: *params,
        max_span_hours: span,
        dt_hours,
    })
}

/// Freedman–Diaconis bin count for `samples` over `range`, at least 1 and
/// at most `max_bins`.
pub fn freedman_diaconis_bins(samples: &[f64], range: (f64, f64), max_bins: usize) -> usize {
    let inside: Vec<f64> = samples
        .iter()
        .copied()
        .filter(|x| *x >= range.0 && *x <= range.1)
        .collect();
    if inside.len() < 2 {
        return 1;
    }
    let sorted = stats::sorted(&inside);
    let iqr = stats::quantile_sorted(&sorted, 0.75) - stats::quantile_sorted(&sorted, 0.25);
    let width = 2.0 * iqr / (inside.len() as f64).cbrt();
    if !(width > 0.0) {
        return 1;
    }
    (((range.1 - range.0) / width).ceil() as usize).clamp(1, max_bins.max(1))
}

pub const MAX_DENSITY_BINS: usize = 4096;

/// Default bin count: Freedman–Diaconis, refined so that no bin is wider
/// than a twenty-fourth of the trend period. Heavy tails inflate the IQR
/// and would otherwise smear the diurnal structure of the density.
pub fn default_density_bins(samples: &[f64], range: (f64, f64), period_hours: f64) -> usize {
    let fd = freedman_diaconis_bins(samples, range, MAX_DENSITY_BINS);
    let resolving = ((range.1 - range.0) / (period_hours / 24.0)).ceil();
    if resolving.is_finite() && resolving >= 1.0 {
        fd.max(resolving as usize).min(MAX_DENSITY_BINS)
    } else {
        fd
    }
}

/// Histogram density: bin centers and `count / (N · width)` where `N` is
/// the total number of samples, so the densities integrate to the
/// in-range fraction.
pub fn histogram_density(
    samples: &[f64],
    n_bins: usize,
    range: (f64, f64),
) -> Result<Vec<(f64, f64)>> {
    let (lo, hi) = range;
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::EmptyRange { lo, hi });
    }
    if n_bins == 0 {
        return Err(invalid("n_bins must be >= 1"));
    }
    let in_range = samples.iter().filter(|x| **x >= lo && **x <= hi).count();
    if in_range < 2 {
        return Err(Error::TooFewSamples {
            count: in_range,
            required: 2,
        });
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0u64; n_bins];
    for &x in samples {
        if x >= lo && x <= hi {
            let b = (((x - lo) / width) as usize).min(n_bins - 1);
            counts[b] += 1;
        }
    }
    let total = samples.len() as f64;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(b, &c)| (lo + (b as f64 + 0.5) * width, c as f64 / (total * width)))
        .collect())
}

/// CSV `t_hours,density`.
pub fn write_density_csv(density: &[(f64, f64)], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "t_hours,density")?;
    for (t, f) in density {
        writeln!(w, "{},{}", sig9(*t), sig9(*f))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BihillParams {
    pub k_norm: f64,
    pub a1: f64,
    pub m1: f64,
    pub a2: f64,
    pub m2: f64,
    /// Sum of squared density errors of the fit that produced these values.
    pub residual: f64,
}

impl BihillParams {
    pub fn new(k_norm: f64, a1: f64, m1: f64, a2: f64, m2: f64) -> Self {
        Self {
            k_norm,
            a1,
            m1,
            a2,
            m2,
            residual: 0.0,
        }
    }
}

pub fn bihill(t: f64, p: &BihillParams) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("bihill requires t > 0, got {t}")));
    }
    Ok(bihill_unchecked(t, p))
}

fn bihill_unchecked(t: f64, p: &BihillParams) -> f64 {
    1.0 / ((1.0 + (p.a1 / t).powf(p.m1)) * (1.0 + (t / p.a2).powf(p.m2)))
}

/// `𝒦 · m(t) · H(t)`.
pub fn composite_density(t: f64, p: &BihillParams, alpha: f64, period_hours: f64) -> Result<f64> {
    Ok(p.k_norm * trend(t, alpha, period_hours) * bihill(t, p)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BihillFit {
    pub params: BihillParams,
    pub n_points: usize,
    pub restarts_used: usize,
    pub alpha: f64,
    pub period_hours: f64,
    /// Best residual at the end of each restart.
    pub restart_residuals: Vec<f64>,
}

impl BihillFit {
    pub fn model_name(&self) -> &'static str {
        if self.alpha > 0.0 {
            "composite_bihill"
        } else {
            "bihill"
        }
    }
}

impl ToReport for BihillFit {
    fn to_report(&self, out: &mut Report) {
        out.text("model", format!("\"{}\"", self.model_name()))
            .num("k_norm", self.params.k_norm)
            .num("a1", self.params.a1)
            .num("m1", self.params.m1)
            .num("a2", self.params.a2)
            .num("m2", self.params.m2)
            .num("residual", self.params.residual)
            .text("n_points", self.n_points)
            .text("restarts_used", self.restarts_used);
    }
}

pub const FIT_RESTARTS: usize = 5;
const FIT_JITTER_SEED: u64 = 0xB1_4111;
/// Standard deviation of the restart jitter, in log-parameter units.
const FIT_JITTER: f64 = 0.7;

// Shape vector: [ln a₁, ln m₁, ln(a₂ − a₁), ln m₂]; the gap
// parameterization keeps a₁ < a₂. 𝒦 is not searched: it is the
// normalization that matches the model's mass to the data's.
fn decode(theta: &[f64], k_norm: f64) -> BihillParams {
    let a1 = theta[0].exp();
    BihillParams::new(
        k_norm,
        a1,
        theta[1].exp(),
        a1 + theta[2].exp(),
        theta[3].exp(),
    )
}

/// Edges of the cells around sorted abscissae: boundaries at midpoints,
/// end cells mirrored outward (and clipped at zero).
fn cell_edges(ts: &[f64]) -> Vec<f64> {
    let n = ts.len();
    let mut edges = Vec::with_capacity(n + 1);
    edges.push((ts[0] - 0.5 * (ts[1] - ts[0])).max(0.0));
    edges.extend(ts.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    edges.push(ts[n - 1] + 0.5 * (ts[n - 1] - ts[n - 2]));
    edges
}

const SIMPSON_PANELS_PER_CELL: usize = 8;

/// Composite Simpson nodes and weights over consecutive cells.
fn simpson_nodes(edges: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = SIMPSON_PANELS_PER_CELL;
    let mut nodes = vec![edges[0]];
    let mut weights = vec![0.0];
    for e in edges.windows(2) {
        let h = (e[1] - e[0]) / k as f64;
        // The cell's left end is the previous cell's right end.
        *weights.last_mut().unwrap() += h / 3.0;
        for j in 1..=k {
            nodes.push(e[0] + j as f64 * h);
            let w = match j {
                _ if j == k => 1.0,
                _ if j % 2 == 1 => 4.0,
                _ => 2.0,
            };
            weights.push(w * h / 3.0);
        }
    }
    (nodes, weights)
}

/// Least-squares fit of `𝒦 m(t) H(t)` to `(t, f)` density points.
///
/// `𝒦` is the normalization constant: for every candidate shape it is set
/// so that the integral of `𝒦 m H` over the cells around the points equals
/// the data mass `Σ f w`.
/// The four shape parameters are searched by Nelder–Mead in log space,
/// restarted up to five times from jittered copies of the best point so
/// far. `alpha = 0` fits the pure Bihill model.
pub fn fit_bihill(density: &[(f64, f64)], alpha: f64, period_hours: f64) -> Result<BihillFit> {
    fit_bihill_phased(density, alpha, period_hours, 0.0)
}

/// As [`fit_bihill`] with the trend evaluated at `phase_hours + t`.
pub fn fit_bihill_phased(
    density: &[(f64, f64)],
    alpha: f64,
    period_hours: f64,
    phase_hours: f64,
) -> Result<BihillFit> {
    if !(0.0..=1.0).contains(&alpha) || !(period_hours > 0.0) {
        return Err(invalid("alpha must be in [0,1] and period_hours > 0"));
    }
    let mut points: Vec<(f64, f64)> = density
        .iter()
        .copied()
        .filter(|(t, f)| *t > 0.0 && t.is_finite() && f.is_finite())
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    if points.len() < 8 {
        return Err(Error::TooFewSamples {
            count: points.len(),
            required: 8,
        });
    }
    let mode = points
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if mode == 0 || mode == points.len() - 1 {
        return Err(invalid(
            "density needs at least one point on each side of its mode",
        ));
    }

    let ts: Vec<f64> = points.iter().map(|p| p.0).collect();
    let edges = cell_edges(&ts);
    let widths: Vec<f64> = edges.windows(2).map(|e| e[1] - e[0]).collect();
    let (nodes, node_weights) = simpson_nodes(&edges);
    let node_trend: Vec<f64> = nodes
        .iter()
        .map(|t| trend(phase_hours + t, alpha, period_hours))
        .collect();
    let mass: f64 = points.iter().zip(&widths).map(|((_, f), w)| f * w).sum();
    if !(mass > 0.0) {
        return Err(invalid("density has no positive mass"));
    }
    let m_t: Vec<f64> = ts
        .iter()
        .map(|t| trend(phase_hours + t, alpha, period_hours))
        .collect();
    // Returns (residual, 𝒦) for a shape vector.
    let evaluate = |theta: &[f64]| -> (f64, f64) {
        let shape = decode(theta, 1.0);
        let model: Vec<f64> = ts
            .iter()
            .zip(&m_t)
            .map(|(t, m)| m * bihill_unchecked(*t, &shape))
            .collect();
        let model_mass: f64 = nodes
            .iter()
            .zip(&node_trend)
            .zip(&node_weights)
            .map(|((t, m), w)| w * m * bihill_unchecked(*t, &shape))
            .sum();
        if !(model_mass > 0.0 && model_mass.is_finite()) {
            return (f64::INFINITY, f64::NAN);
        }
        let k = mass / model_mass;
        let residual = points
            .iter()
            .zip(&model)
            .map(|((_, f), g)| (f - k * g).powi(2))
            .sum();
        (residual, k)
    };
    let objective = |theta: &[f64]| evaluate(theta).0;

    // Knots at the 25th and 90th percentiles of the density's mass.
    let quantile_t = |q: f64| -> f64 {
        let mut acc = 0.0;
        for ((t, f), w) in points.iter().zip(&widths) {
            acc += f.max(0.0) * w;
            if acc >= q * mass {
                return *t;
            }
        }
        ts[ts.len() - 1]
    };
    // The primary start puts the knots at the 25th and 90th mass
    // percentiles with m₁ = m₂ = 2; a small grid of alternatives guards
    // against starting in the basin of a degenerate step-like fit.
    let shape_start = |q1: f64, q2: f64, m1: f64, m2: f64| -> [f64; 4] {
        let a1 = quantile_t(q1).max(ts[0]);
        let a2 = quantile_t(q2).max(a1 * 1.5);
        [a1.ln(), m1.ln(), (a2 - a1).ln(), m2.ln()]
    };
    let mut init = shape_start(0.25, 0.90, 2.0, 2.0);
    let mut init_f = objective(&init);
    for q1 in [0.05, 0.1, 0.25, 0.5] {
        for q2 in [0.5, 0.75, 0.9, 0.99] {
            for m1 in [1.0, 2.0, 4.0] {
                for m2 in [0.5, 1.0, 2.0] {
                    if q2 <= q1 {
                        continue;
                    }
                    let candidate = shape_start(q1, q2, m1, m2);
                    let f = objective(&candidate);
                    if f < init_f {
                        init = candidate;
                        init_f = f;
                    }
                }
            }
        }
    }

    let opts = NelderMeadOptions {
        max_iterations: 4_000,
        f_tol: 1e-12,
        x_tol: 1e-8,
    };
    let mut rng = rng_from_seed(FIT_JITTER_SEED);
    let mut best_theta = init.to_vec();
    let mut best_f = init_f;
    let mut any_converged = false;
    let mut restart_residuals = Vec::with_capacity(FIT_RESTARTS);
    for restart in 0..FIT_RESTARTS {
        let start: Vec<f64> = if restart == 0 {
            init.to_vec()
        } else {
            init.iter()
                .map(|x| x + FIT_JITTER * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let r = nelder_mead(objective, &start, &[0.5; 4], opts);
        any_converged |= r.converged;
        if r.f < best_f {
            best_f = r.f;
            best_theta = r.x;
        }
        restart_residuals.push(best_f);
    }

    let (_, k_norm) = evaluate(&best_theta);
    let mut params = decode(&best_theta, k_norm);
    params.residual = best_f;
    if !any_converged {
        return Err(Error::NotConverged {
            best: Box::new(params),
            residual: best_f,
            restarts: restart_residuals.len(),
        });
    }
    Ok(BihillFit {
        params,
        n_points: points.len(),
        restarts_used: restart_residuals.len(),
        alpha,
        period_hours,
        restart_residuals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub skewness: f64,
    pub mean_over_median: f64,
    pub p99_over_p50: f64,
    /// `p99/p50 > 3` or `skewness > 1`.
    pub heavy_tail: bool,
}

impl ToReport for TailReport {
    fn to_report(&self, out: &mut Report) {
        out.text("count", self.count)
            .num("mean_hours", self.mean)
            .num("median_hours", self.median)
            .num("skewness", self.skewness)
            .num("mean_over_median", self.mean_over_median)
            .num("p99_over_p50", self.p99_over_p50)
            .text("heavy_tail", self.heavy_tail);
    }
}

pub const MIN_TAIL_SAMPLES: usize = 100;

pub fn tail_stats_of(samples: &[f64]) -> Result<TailReport> {
    if samples.len() < MIN_TAIL_SAMPLES {
        return Err(Error::TooFewSamples {
            count: samples.len(),
            required: MIN_TAIL_SAMPLES,
        });
    }
    let sorted = stats::sorted(samples);
    let mean = stats::mean(samples);
    let median = stats::quantile_sorted(&sorted, 0.5);
    let p99 = stats::quantile_sorted(&sorted, 0.99);
    let skewness = stats::skewness(samples);
    let p99_over_p50 = p99 / median;
    Ok(TailReport {
        count: samples.len(),
        mean,
        median,
        skewness,
        mean_over_median: mean / median,
        p99_over_p50,
        heavy_tail: p99_over_p50 > 3.0 || skewness > 1.0,
    })
}

/// Tail statistics of the non-censored passage times.
pub fn tail_stats(ens: &FptEnsemble) -> Result<TailReport> {
    tail_stats_of(&ens.observed())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fgn::HurstParam;
    use crate::traffic::{category_preset, Category, TrafficParams};
    use crate::wdm::WdmConfig;

    fn flat_params(sigma: f64) -> BufferParams {
        let t = TrafficParams::new(20.0, 0.0, sigma, HurstParam::new(0.8).unwrap()).unwrap();
        BufferParams::new(t, WdmConfig::default(), 1.0).unwrap()
    }

    #[test]
    fn bihill_examples() {
        let p = BihillParams::new(1.0, 3.0, 2.5, 3.0, 2.5);
        assert!((bihill(3.0, &p).unwrap() - 0.25).abs() < 1e-15);
        assert!(bihill(1e-9, &p).unwrap() < 1e-20);
        assert!(bihill(1e9, &p).unwrap() < 1e-20);
        assert!(bihill(0.0, &p).is_err());
        assert!(bihill(-1.0, &p).is_err());
        let v = bihill(2.0, &BihillParams::new(1.0, 1.0, 3.0, 10.0, 2.0)).unwrap();
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn composite_examples() {
        let p = BihillParams::new(7.0, 3.0, 2.0, 3.0, 2.0);
        assert!((composite_density(3.0, &p, 0.0, 24.0).unwrap() - 7.0 / 4.0).abs() < 1e-14);
        let q = BihillParams::new(2.0, 1.0, 3.0, 10.0, 2.0);
        for t in [0.5, 2.0, 9.0] {
            let expect = 2.0 * bihill(t, &q).unwrap();
            assert_eq!(composite_density(t, &q, 0.0, 24.0).unwrap(), expect);
            assert!(composite_density(t, &q, 0.6, 24.0).unwrap() <= expect);
        }
        assert!(composite_density(0.0, &q, 0.3, 24.0).is_err());
    }

    #[test]
    fn bihill_is_unimodal_on_log_grid() {
        for p in [
            BihillParams::new(1.0, 2.0, 3.0, 10.0, 2.0),
            BihillParams::new(1.0, 0.1, 0.5, 50.0, 4.0),
            BihillParams::new(1.0, 5.0, 8.0, 5.5, 0.7),
        ] {
            let values: Vec<f64> = (0..10_000)
                .map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 9_999.0))
                .map(|t| bihill(t, &p).unwrap())
                .collect();
            let signs: Vec<bool> = values
                .windows(2)
                .filter(|w| w[1] != w[0])
                .map(|w| w[1] > w[0])
                .collect();
            let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
            assert!(changes <= 1, "{changes} sign changes for {p:?}");
        }
    }

    #[test]
    fn histogram_single_bin() {
        let samples = vec![4.2; 1000];
        let d = histogram_density(&samples, 10, (0.0, 10.0)).unwrap();
        let nonzero: Vec<_> = d.iter().filter(|(_, f)| *f > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert!((nonzero[0].1 - 1.0).abs() < 1e-12); // 1 / binwidth
        assert!((nonzero[0].0 - 4.5).abs() < 1e-12);
    }

    #[test]
    fn histogram_uniform_and_normalized() {
        let mut rng = rng_from_seed(8);
        let samples: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let d = histogram_density(&samples, 10, (0.0, 1.0)).unwrap();
        for (_, f) in &d {
            assert!((f - 1.0).abs() < 4.0 / (1000f64).sqrt());
        }
        let integral: f64 = d.iter().map(|(_, f)| f * 0.1).sum();
        assert!((integral - 1.0).abs() < 1e-9);
        // Half the samples out of range → integral is the in-range fraction.
        let d = histogram_density(&samples, 7, (0.0, 0.5)).unwrap();
        let in_range = samples.iter().filter(|x| **x <= 0.5).count() as f64 / 10_000.0;
        let integral: f64 = d.iter().map(|(_, f)| f * 0.5 / 7.0).sum();
        assert!((integral - in_range).abs() < 1e-9);
    }

    #[test]
    fn histogram_errors() {
        assert!(matches!(
            histogram_density(&[1.0, 2.0], 4, (3.0, 3.0)),
            Err(Error::EmptyRange { .. })
        ));
        assert!(matches!(
            histogram_density(&[1.0], 4, (0.0, 3.0)),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn freedman_diaconis_sane() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let b = freedman_diaconis_bins(&xs, (0.0, 1.0), 1000);
        // IQR ≈ 0.5, width ≈ 2·0.5/10 = 0.1 → 10 bins (11 after rounding up).
        assert!((10..=11).contains(&b), "{b}");
        assert_eq!(freedman_diaconis_bins(&[1.0; 50], (0.0, 2.0), 100), 1);
    }

    #[test]
    fn tail_examples() {
        let constant = tail_stats_of(&[2.0; 200]).unwrap();
        assert_eq!(constant.skewness, 0.0);
        assert_eq!(constant.p99_over_p50, 1.0);
        assert!(!constant.heavy_tail);

        // Exact exponential quantiles −ln(1 − u) on a fine uniform grid.
        let n = 200_000;
        let samples: Vec<f64> = (0..n)
            .map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln())
            .collect();
        let r = tail_stats_of(&samples).unwrap();
        assert!((r.skewness - 2.0).abs() < 0.05, "{}", r.skewness);
        assert!((r.p99_over_p50 - 100f64.ln() / 2f64.ln()).abs() < 0.01);
        assert!(r.heavy_tail);
        assert!(matches!(
            tail_stats_of(&[1.0; 99]),
            Err(Error::TooFewSamples { count: 99, .. })
        ));
    }

    #[test]
    fn zero_noise_zero_drift_never_depletes() {
        let p = flat_params(0.0);
        let ens = run_ensemble(&p, 20, 48.0, 0.1, 3).unwrap();
        assert!(ens.censored.iter().all(|c| *c));
        assert!(ens.samples_hours.iter().all(|s| *s == 48.0));
    }

    #[test]
    fn deterministic_drain_time() {
        let mut p = flat_params(0.0);
        p.consumption_mode = ConsumptionMode::Fixed(3.0);
        p.b0_dku = 1.5;
        let dt = 0.01;
        let ens = run_ensemble(&p, 10, 48.0, dt, 0).unwrap();
        let expect = 1.5 / (3.0 - 41.0 / 24.0);
        for (s, c) in ens.samples_hours.iter().zip(&ens.censored) {
            assert!(!c);
            assert!((s - expect).abs() <= dt + 1e-12);
        }
    }

    #[test]
    fn first_passage_agrees_with_state_machine() {
        let p = BufferParams::new(
            category_preset(Category::Cat3, 80).unwrap(),
            WdmConfig::default(),
            0.3,
        )
        .unwrap();
        for model in [
            ChannelModel::Discrete,
            ChannelModel::ContinuousUpper,
            ChannelModel::ContinuousLower,
        ] {
            let mut q = p;
            q.channel_model = model;
            for seed in 0..5 {
                let tr =
                    crate::traffic::synthesize(&q.traffic, 96.0, 1.0 / 60.0, 0.0, seed).unwrap();
                let fp = first_passage(&q, &tr).unwrap();
                let sim = crate::buffer::simulate_on_trace(&q, &tr, Default::default()).unwrap();
                assert_eq!(fp, sim.first_depletion());
            }
        }
    }

    #[test]
    fn round_trip_noise_free_fit() {
        let truth = BihillParams::new(0.2, 2.0, 3.0, 10.0, 2.0);
        let points: Vec<(f64, f64)> = (1..=120)
            .map(|i| {
                let t = i as f64 * 0.25;
                (t, composite_density(t, &truth, 0.0, 24.0).unwrap())
            })
            .collect();
        let fit = fit_bihill(&points, 0.0, 24.0).unwrap();
        let p = fit.params;
        for (got, want) in [
            (p.k_norm, 0.2),
            (p.a1, 2.0),
            (p.m1, 3.0),
            (p.a2, 10.0),
            (p.m2, 2.0),
        ] {
            assert!((got / want - 1.0).abs() < 1e-3, "{got} vs {want}");
        }
        assert!(p.a1 <= p.a2);
        assert!(fit.restart_residuals.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn fit_preconditions() {
        let few: Vec<(f64, f64)> = (1..6).map(|i| (i as f64, 1.0)).collect();
        assert!(matches!(
            fit_bihill(&few, 0.0, 24.0),
            Err(Error::TooFewSamples { .. })
        ));
        let rising: Vec<(f64, f64)> = (1..20).map(|i| (i as f64, i as f64)).collect();
        assert!(fit_bihill(&rising, 0.0, 24.0).is_err());
    }
}
