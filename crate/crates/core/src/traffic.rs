//! Classical traffic model: a diurnal trend modulated by lognormal
//! long-range-dependent noise, `R(t)/C = p · m(t) · exp(σ X_H(t))`.
//!
//! All rates are in channel units (multiples of one WDM channel's capacity).

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use crate::error::{invalid, Result};
use crate::fgn::{FgnGenerator, HurstParam};
use crate::format::sig9;

pub const DEFAULT_PERIOD_HOURS: f64 = 24.0;
pub const DEFAULT_HURST: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficParams {
    /// Peak load over single-channel capacity.
    pub p: f64,
    /// Diurnal modulation depth.
    pub alpha: f64,
    /// Lognormal volatility.
    pub sigma: f64,
    pub hurst: HurstParam,
    pub period_hours: f64,
    /// Peak rate in bit/s; reporting only.
    pub r0: Option<f64>,
    /// Channel capacity in bit/s; reporting only.
    pub channel_capacity: Option<f64>,
}

impl TrafficParams {
    pub fn new(p: f64, alpha: f64, sigma: f64, hurst: HurstParam) -> Result<Self> {
        let params = Self {
            p,
            alpha,
            sigma,
            hurst,
            period_hours: DEFAULT_PERIOD_HOURS,
            r0: None,
            channel_capacity: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 0.0 && self.p.is_finite()) {
            return Err(invalid(format!(
                "p must be finite and >= 0, got {}",
                self.p
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(format!(
                "alpha must be in [0,1], got {}",
                self.alpha
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        if !(self.period_hours > 0.0 && self.period_hours.is_finite()) {
            return Err(invalid(format!(
                "period_hours must be > 0, got {}",
                self.period_hours
            )));
        }
        for (name, v) in [("r0", self.r0), ("channel_capacity", self.channel_capacity)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid(format!("{name} must be > 0, got {v}")));
                }
            }
        }
        if let (Some(r0), Some(c)) = (self.r0, self.channel_capacity) {
            let ratio = r0 / c;
            if (ratio - self.p).abs() > 1e-9 * ratio.abs().max(self.p.abs()) {
                return Err(invalid(format!(
                    "p={} inconsistent with r0/channel_capacity={ratio}",
                    self.p
                )));
            }
        }
        Ok(())
    }

    pub fn trend(&self, t_hours: f64) -> f64 {
        trend(t_hours, self.alpha, self.period_hours)
    }

    /// `E[ν] = e^{σ²/2}`.
    pub fn noise_mean(&self) -> f64 {
        (self.sigma * self.sigma / 2.0).exp()
    }
}

/// Table-based traffic regimes, ratio `p/N` plus modulation and volatility.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// Enterprise/campus backbone: strong diurnal cycle, moderate noise.
    Cat1,
    /// Machine-to-machine: nearly flat and quiet.
    Cat2,
    /// Residential/edge access: bursty.
    Cat3,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Cat1, Category::Cat2, Category::Cat3];

    /// `(p/N, α, σ)`.
    pub fn table_row(self) -> (f64, f64, f64) {
        match self {
            Category::Cat1 => (0.5, 0.875, 0.3),
            Category::Cat2 => (0.2, 0.15, 0.08),
            Category::Cat3 => (0.2, 0.6, 0.8),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Category::Cat1 => 1,
            Category::Cat2 => 2,
            Category::Cat3 => 3,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for Category {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_start_matches("cat").trim_start_matches("Cat") {
            "1" => Ok(Category::Cat1),
            "2" => Ok(Category::Cat2),
            "3" => Ok(Category::Cat3),
            _ => Err(invalid(format!(
                "unknown traffic category {s:?}; expected 1, 2 or 3"
            ))),
        }
    }
}

/// Preset parameters for `n_channels` channels. Hurst defaults to 0.8.
pub fn category_preset(id: Category, n_channels: u32) -> Result<TrafficParams> {
    if n_channels == 0 {
        return Err(invalid("n_channels must be >= 1"));
    }
    let (ratio, alpha, sigma) = id.table_row();
    TrafficParams::new(
        ratio * f64::from(n_channels),
        alpha,
        sigma,
        HurstParam::new(DEFAULT_HURST)?,
    )
}

/// Diurnal trend `m(t) = 1 − α sin²(πt/T)`.
pub fn trend(t_hours: f64, alpha: f64, period_hours: f64) -> f64 {
    let s = (PI * t_hours / period_hours).sin();
    1.0 - alpha * s * s
}

/// Mean normalized load `p · m(t) · e^{σ²/2}`.
pub fn mean_rate(params: &TrafficParams, t_hours: f64) -> f64 {
    params.p * params.trend(t_hours) * params.noise_mean()
}

/// Variance of normalized load `(p m(t))² e^{σ²}(e^{σ²} − 1)`.
pub fn var_rate(params: &TrafficParams, t_hours: f64) -> f64 {
    let pm = params.p * params.trend(t_hours);
    let s2 = params.sigma * params.sigma;
    pm * pm * s2.exp() * s2.exp_m1()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficTrace {
    pub dt_hours: f64,
    pub start_phase_hours: f64,
    pub trend: Vec<f64>,
    pub fgn: Vec<f64>,
    pub noise: Vec<f64>,
    pub load: Vec<f64>,
    pub seed: u64,
}

impl TrafficTrace {
    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }

    /// Elapsed time of sample `i` since the start of the trace.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt_hours
    }

    /// Clock time of sample `i` on the trend's axis.
    pub fn clock(&self, i: usize) -> f64 {
        self.start_phase_hours + self.time(i)
    }

    /// CSV with header `t_hours,trend_m,fgn_x,noise_nu,load_channels`;
    /// `t_hours` is elapsed time.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "t_hours,trend_m,fgn_x,noise_nu,load_channels")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                sig9(self.time(i)),
                sig9(self.trend[i]),
                sig9(self.fgn[i]),
                sig9(self.noise[i]),
                sig9(self.load[i])
            )?;
        }
        Ok(())
    }
}

/// Number of grid samples covering `duration_hours`.
pub fn sample_count(duration_hours: f64, dt_hours: f64) -> Result<usize> {
    if !(dt_hours > 0.0 && dt_hours.is_finite()) {
        return Err(invalid(format!("dt_hours must be > 0, got {dt_hours}")));
    }
    if !(duration_hours >= dt_hours && duration_hours.is_finite()) {
        return Err(invalid(format!(
            "duration_hours must be finite and >= dt_hours, got {duration_hours}"
        )));
    }
    // Tolerate round-off in duration/dt so that e.g. 7 days at 1/60 h gives 10080.
    let ratio = duration_hours / dt_hours;
    let n = if (ratio - ratio.round()).abs() < 1e-9 * ratio {
        ratio.round()
    } else {
        ratio.ceil()
    };
    Ok(n as usize)
}

/// Synthesizes a trace of `⌈duration/dt⌉` samples.
pub fn synthesize(
    params: &TrafficParams,
    duration_hours: f64,
    dt_hours: f64,
    start_phase_hours: f64,
    seed: u64,
) -> Result<TrafficTrace> {
    let n = sample_count(duration_hours, dt_hours)?;
    let generator = FgnGenerator::new(params.hurst, n)?;
    synthesize_with(&generator, params, dt_hours, start_phase_hours, seed)
}

/// As [`synthesize`] but reusing a prepared generator; the trace length is
/// the generator's length. Ensembles use this to plan the FFT once.
pub fn synthesize_with(
    generator: &FgnGenerator,
    params: &TrafficParams,
    dt_hours: f64,
    start_phase_hours: f64,
    seed: u64,
) -> Result<TrafficTrace> {
    params.validate()?;
    if generator.hurst() != params.hurst {
        return Err(invalid(
            "generator Hurst parameter differs from traffic params",
        ));
    }
    if !(dt_hours > 0.0 && dt_hours.is_finite()) {
        return Err(invalid(format!("dt_hours must be > 0, got {dt_hours}")));
    }
    if !(0.0..params.period_hours).contains(&start_phase_hours) {
        return Err(invalid(format!(
            "start_phase_hours must be in [0, {}), got {start_phase_hours}",
            params.period_hours
        )));
    }
    let fgn = generator.generate(seed).samples;
    let n = fgn.len();
    let trend: Vec<f64> = (0..n)
        .map(|i| params.trend(start_phase_hours + i as f64 * dt_hours))
        .collect();
    let noise: Vec<f64> = fgn.iter().map(|x| (params.sigma * x).exp()).collect();
    let load = trend
        .iter()
        .zip(&noise)
        .map(|(m, nu)| params.p * m * nu)
        .collect();
    Ok(TrafficTrace {
        dt_hours,
        start_phase_hours,
        trend,
        fgn,
        noise,
        load,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64, alpha: f64, sigma: f64, h: f64) -> TrafficParams {
        TrafficParams::new(p, alpha, sigma, HurstParam::new(h).unwrap()).unwrap()
    }

    #[test]
    fn trend_examples() {
        assert_eq!(trend(0.0, 0.6, 24.0), 1.0);
        assert!((trend(12.0, 0.6, 24.0) - 0.4).abs() < 1e-15);
        assert!((trend(6.0, 0.875, 24.0) - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn trend_periodic_and_bounded() {
        for i in 0..1000 {
            let t = i as f64 * 0.173;
            let a = trend(t, 0.7, 24.0);
            assert!((a - trend(t + 24.0, 0.7, 24.0)).abs() < 1e-12);
            assert!((0.3 - 1e-15..=1.0).contains(&a));
        }
    }

    #[test]
    fn mean_rate_examples() {
        assert_eq!(mean_rate(&params(20.0, 0.0, 0.0, 0.8), 3.3), 20.0);
        let v = mean_rate(&params(20.0, 0.6, 0.3, 0.8), 12.0);
        assert!((v - 20.0 * 0.4 * 0.045f64.exp()).abs() < 1e-12);
        assert!((v - 8.368).abs() < 1e-3);
        assert_eq!(mean_rate(&params(0.0, 0.6, 0.3, 0.8), 5.0), 0.0);
    }

    #[test]
    fn var_rate_examples() {
        assert_eq!(var_rate(&params(20.0, 0.6, 0.0, 0.8), 7.0), 0.0);
        let v = var_rate(&params(20.0, 0.0, 0.3, 0.8), 1.0);
        assert!((v - 400.0 * 0.09f64.exp() * (0.09f64.exp() - 1.0)).abs() < 1e-12);
        // 400·e^{0.09}·(e^{0.09} − 1) = 41.217...
        assert!((v - 41.217).abs() < 1e-3);
    }

    #[test]
    fn presets_match_table() {
        let c1 = category_preset(Category::Cat1, 80).unwrap();
        assert_eq!((c1.p, c1.alpha, c1.sigma), (40.0, 0.875, 0.3));
        let c2 = category_preset(Category::Cat2, 80).unwrap();
        assert_eq!((c2.p, c2.alpha, c2.sigma), (16.0, 0.15, 0.08));
        let c3 = category_preset(Category::Cat3, 80).unwrap();
        assert_eq!((c3.p, c3.alpha, c3.sigma), (16.0, 0.6, 0.8));
        assert_eq!(c3.hurst.value(), 0.8);
        assert!(category_preset(Category::Cat1, 0).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        let h = HurstParam::new(0.8).unwrap();
        assert!(TrafficParams::new(1.0, 1.5, 0.3, h).is_err());
        assert!(TrafficParams::new(-1.0, 0.5, 0.3, h).is_err());
        assert!(TrafficParams::new(1.0, 0.5, -0.3, h).is_err());
        let mut p = params(2.0, 0.5, 0.3, 0.8);
        p.r0 = Some(20e9);
        p.channel_capacity = Some(10e9);
        assert!(p.validate().is_ok());
        p.channel_capacity = Some(5e9);
        assert!(p.validate().is_err());
    }

    #[test]
    fn deterministic_limits() {
        let p = params(20.0, 0.6, 0.0, 0.8);
        let tr = synthesize(&p, 48.0, 0.25, 0.0, 9).unwrap();
        assert_eq!(tr.len(), 192);
        for i in 0..tr.len() {
            assert_eq!(tr.noise[i], 1.0);
            assert_eq!(tr.load[i], 20.0 * trend(tr.clock(i), 0.6, 24.0));
        }
        let flat = synthesize(&params(20.0, 0.0, 0.0, 0.5), 10.0, 0.5, 3.0, 1).unwrap();
        assert!(flat.load.iter().all(|&l| l == 20.0));
    }

    #[test]
    fn trace_invariants_hold() {
        let p = params(16.0, 0.6, 0.8, 0.8);
        let tr = synthesize(&p, 24.0 * 3.0, 1.0 / 60.0, 5.0, 77).unwrap();
        assert_eq!(tr.len(), 3 * 1440);
        for i in 0..tr.len() {
            assert_eq!(tr.noise[i], (p.sigma * tr.fgn[i]).exp());
            assert!(tr.noise[i] > 0.0 && tr.load[i] > 0.0);
            assert_eq!(tr.load[i], p.p * tr.trend[i] * tr.noise[i]);
            assert!(tr.trend[i] >= 1.0 - p.alpha - 1e-15 && tr.trend[i] <= 1.0);
        }
        assert_eq!(tr, synthesize(&p, 72.0, 1.0 / 60.0, 5.0, 77).unwrap());
    }

    #[test]
    fn sample_count_rounding() {
        assert_eq!(sample_count(7.0 * 24.0, 1.0 / 60.0).unwrap(), 10_080);
        assert_eq!(sample_count(1.0, 0.3).unwrap(), 4);
        assert!(sample_count(0.1, 0.2).is_err());
        assert!(sample_count(1.0, 0.0).is_err());
        assert!(synthesize(&params(1.0, 0.0, 0.0, 0.5), 1.0, -1.0, 0.0, 0).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let tr = synthesize(&params(2.0, 0.0, 0.0, 0.5), 2.0, 1.0, 0.0, 0).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t_hours,trend_m,fgn_x,noise_nu,load_channels");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("1.00000000,1.00000000,"));
        assert!(lines[2].ends_with(",1.00000000,2.00000000"));
    }
}
