//! Channel bookkeeping on an `N`-channel WDM link.
//!
//! `N_C = ⌈load⌉` classical channels are lit; each one beyond the first
//! also blocks one adjacent guard slot, which leaves
//! `N_Q = N − 2 N_C + 1` channels for QKD, clamped to `[0, N]`.

use std::io::{self, Write};

use crate::error::{invalid, Result};
use crate::format::sig9;
use crate::report::{Report, ToReport};
use crate::traffic::{TrafficParams, TrafficTrace};

/// Hours in the day that defines one DKU.
pub const DKU_HOURS: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WdmConfig {
    pub n_channels: u32,
    /// Per-channel QKD key rate in DKU per day (1 DKU = one channel-day).
    pub key_rate_dku_per_day: f64,
}

impl Default for WdmConfig {
    fn default() -> Self {
        Self {
            n_channels: 80,
            key_rate_dku_per_day: 1.0,
        }
    }
}

impl WdmConfig {
    pub fn new(n_channels: u32, key_rate_dku_per_day: f64) -> Result<Self> {
        let c = Self {
            n_channels,
            key_rate_dku_per_day,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 {
            return Err(invalid("n_channels must be >= 1"));
        }
        if !(self.key_rate_dku_per_day > 0.0 && self.key_rate_dku_per_day.is_finite()) {
            return Err(invalid(format!(
                "key_rate_dku_per_day must be > 0, got {}",
                self.key_rate_dku_per_day
            )));
        }
        Ok(())
    }

    /// Per-channel key rate `C_Q` in DKU per hour.
    pub fn key_rate_per_hour(&self) -> f64 {
        self.key_rate_dku_per_day / DKU_HOURS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelAllocation {
    pub n_classical: u32,
    pub n_quantum: u32,
    /// Unclamped classical demand exceeded `N`.
    pub overflow: bool,
}

impl ChannelAllocation {
    pub fn guard(&self) -> u32 {
        if self.n_quantum > 0 {
            self.n_classical.saturating_sub(1)
        } else {
            0
        }
    }
}

fn check_load(load: f64) -> Result<()> {
    if load.is_finite() && load >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("load must be finite and >= 0, got {load}")))
    }
}

/// `(min(⌈load⌉, n), ⌈load⌉ > n)`.
pub fn classical_channels(load: f64, n: u32) -> Result<(u32, bool)> {
    check_load(load)?;
    let demand = load.ceil();
    if demand > f64::from(n) {
        Ok((n, true))
    } else {
        Ok((demand as u32, false))
    }
}

/// `max(0, min(n, n − 2 n_classical + 1))`.
pub fn quantum_channels(n: u32, n_classical: u32) -> Result<u32> {
    if n_classical > n {
        return Err(invalid(format!(
            "n_classical={n_classical} exceeds n_channels={n}"
        )));
    }
    let raw = i64::from(n) - 2 * i64::from(n_classical) + 1;
    Ok(raw.clamp(0, i64::from(n)) as u32)
}

pub fn allocate(load: f64, n: u32) -> Result<ChannelAllocation> {
    let (n_classical, overflow) = classical_channels(load, n)?;
    let n_quantum = if overflow {
        0
    } else {
        quantum_channels(n, n_classical)?
    };
    Ok(ChannelAllocation {
        n_classical,
        n_quantum,
        overflow,
    })
}

/// Raw (unclamped) ceiling bounds `N ± 1 − 2 p m(t) e^{σx}` on the
/// quantum channel count for a standardized noise value `x`.
pub fn quantum_bounds(params: &TrafficParams, n: u32, t_hours: f64, x: f64) -> (f64, f64) {
    let classical = 2.0 * params.p * params.trend(t_hours) * (params.sigma * x).exp();
    let n = f64::from(n);
    (n - 1.0 - classical, n + 1.0 - classical)
}

/// Expected bounds `N ± 1 − 2 p m(t) e^{σ²/2}`.
pub fn expected_quantum(params: &TrafficParams, n: u32, t_hours: f64) -> (f64, f64) {
    let classical = 2.0 * params.p * params.trend(t_hours) * params.noise_mean();
    let n = f64::from(n);
    (n - 1.0 - classical, n + 1.0 - classical)
}

/// Time-averaged allocation statistics of one or more traces.
#[derive(Debug, Clone, PartialEq)]
pub struct AvailabilityStats {
    pub n_channels: u32,
    pub samples: u64,
    pub mean_quantum_channels: f64,
    pub utilization_percent: f64,
    pub mean_classical_channels: f64,
    /// `(channel count, frequency)` for every count in `0..=N`.
    pub quantum_histogram: Vec<(u32, f64)>,
    pub classical_histogram: Vec<(u32, f64)>,
    /// Fraction of time with no quantum channel.
    pub outage_fraction: f64,
    pub overflow_fraction: f64,
    /// Fraction of time the `N − 2N_C + 1` formula fell below 0 and was clamped.
    pub clamp_low_fraction: f64,
    /// Fraction of time it exceeded `N` (idle link) and was clamped.
    pub clamp_high_fraction: f64,
}

/// Integer counters behind [`AvailabilityStats`]; merging is exact and
/// order-independent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvailabilityCounts {
    n_channels: u32,
    quantum: Vec<u64>,
    classical: Vec<u64>,
    overflow: u64,
    clamp_low: u64,
    clamp_high: u64,
}

impl AvailabilityCounts {
    pub fn new(n_channels: u32) -> Self {
        let bins = n_channels as usize + 1;
        Self {
            n_channels,
            quantum: vec![0; bins],
            classical: vec![0; bins],
            overflow: 0,
            clamp_low: 0,
            clamp_high: 0,
        }
    }

    pub fn record(&mut self, alloc: &ChannelAllocation) {
        self.quantum[alloc.n_quantum as usize] += 1;
        self.classical[alloc.n_classical as usize] += 1;
        let raw = i64::from(self.n_channels) - 2 * i64::from(alloc.n_classical) + 1;
        if alloc.overflow {
            self.overflow += 1;
        }
        if raw < 0 {
            self.clamp_low += 1;
        }
        if raw > i64::from(self.n_channels) {
            self.clamp_high += 1;
        }
    }

    pub fn record_trace(&mut self, trace: &TrafficTrace) -> Result<()> {
        for &load in &trace.load {
            self.record(&allocate(load, self.n_channels)?);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &AvailabilityCounts) {
        assert_eq!(self.n_channels, other.n_channels);
        for (a, b) in self.quantum.iter_mut().zip(&other.quantum) {
            *a += b;
        }
        for (a, b) in self.classical.iter_mut().zip(&other.classical) {
            *a += b;
        }
        self.overflow += other.overflow;
        self.clamp_low += other.clamp_low;
        self.clamp_high += other.clamp_high;
    }

    pub fn total(&self) -> u64 {
        self.quantum.iter().sum()
    }

    pub fn stats(&self) -> Result<AvailabilityStats> {
        let total = self.total();
        if total == 0 {
            return Err(invalid("no samples recorded"));
        }
        let tf = total as f64;
        let weighted = |h: &[u64]| -> f64 {
            let s: u64 = h.iter().enumerate().map(|(k, c)| k as u64 * c).sum();
            s as f64 / tf
        };
        let hist = |h: &[u64]| -> Vec<(u32, f64)> {
            h.iter()
                .enumerate()
                .map(|(k, &c)| (k as u32, c as f64 / tf))
                .collect()
        };
        let mean_quantum_channels = weighted(&self.quantum);
        Ok(AvailabilityStats {
            n_channels: self.n_channels,
            samples: total,
            mean_quantum_channels,
            utilization_percent: 100.0 * mean_quantum_channels / f64::from(self.n_channels),
            mean_classical_channels: weighted(&self.classical),
            quantum_histogram: hist(&self.quantum),
            classical_histogram: hist(&self.classical),
            outage_fraction: self.quantum[0] as f64 / tf,
            overflow_fraction: self.overflow as f64 / tf,
            clamp_low_fraction: self.clamp_low as f64 / tf,
            clamp_high_fraction: self.clamp_high as f64 / tf,
        })
    }
}

pub fn availability_stats(trace: &TrafficTrace, config: &WdmConfig) -> Result<AvailabilityStats> {
    config.validate()?;
    if trace.is_empty() {
        return Err(invalid("trace is empty"));
    }
    let mut counts = AvailabilityCounts::new(config.n_channels);
    counts.record_trace(trace)?;
    counts.stats()
}

impl ToReport for AvailabilityStats {
    fn to_report(&self, out: &mut Report) {
        out.text("n_channels", self.n_channels)
            .text("samples", self.samples)
            .num("mean_quantum_channels", self.mean_quantum_channels)
            .num("utilization_percent", self.utilization_percent)
            .num("mean_classical_channels", self.mean_classical_channels)
            .num("outage_fraction", self.outage_fraction)
            .num("overflow_fraction", self.overflow_fraction)
            .num("clamp_low_fraction", self.clamp_low_fraction)
            .num("clamp_high_fraction", self.clamp_high_fraction);
    }
}

/// CSV `t_hours,load_channels,n_classical,n_quantum,overflow`.
pub fn write_allocation_csv(trace: &TrafficTrace, n: u32, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "t_hours,load_channels,n_classical,n_quantum,overflow")?;
    for (i, &load) in trace.load.iter().enumerate() {
        let a = allocate(load, n).map_err(io::Error::other)?;
        writeln!(
            w,
            "{},{},{},{},{}",
            sig9(trace.time(i)),
            sig9(load),
            a.n_classical,
            a.n_quantum,
            u8::from(a.overflow)
        )?;
    }
    Ok(())
}

/// CSV `channel_count,frequency`.
pub fn write_histogram_csv(hist: &[(u32, f64)], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "channel_count,frequency")?;
    for (k, f) in hist {
        writeln!(w, "{k},{}", sig9(*f))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fgn::HurstParam;
    use crate::traffic::{category_preset, synthesize, Category};

    #[test]
    fn classical_examples() {
        assert_eq!(classical_channels(10.2, 80).unwrap(), (11, false));
        assert_eq!(classical_channels(11.0, 80).unwrap(), (11, false));
        assert_eq!(classical_channels(95.3, 80).unwrap(), (80, true));
        assert_eq!(classical_channels(80.0, 80).unwrap(), (80, false));
        assert_eq!(classical_channels(0.0, 80).unwrap(), (0, false));
        assert!(classical_channels(-0.1, 80).is_err());
        assert!(classical_channels(f64::NAN, 80).is_err());
        assert!(classical_channels(f64::INFINITY, 80).is_err());
    }

    #[test]
    fn quantum_examples() {
        assert_eq!(quantum_channels(80, 11).unwrap(), 59);
        assert_eq!(quantum_channels(80, 41).unwrap(), 0);
        assert_eq!(quantum_channels(80, 40).unwrap(), 1);
        assert_eq!(quantum_channels(80, 0).unwrap(), 80);
        assert!(quantum_channels(80, 81).is_err());
    }

    #[test]
    fn exhaustive_against_rederived_formula() {
        for n in 1..=100i64 {
            for nc in 0..=n {
                let expected = if n - 2 * nc + 1 < 0 {
                    0
                } else if n - 2 * nc + 1 > n {
                    n
                } else {
                    n - 2 * nc + 1
                };
                assert_eq!(
                    i64::from(quantum_channels(n as u32, nc as u32).unwrap()),
                    expected
                );
            }
        }
    }

    #[test]
    fn monotone_in_classical_count() {
        for n in 1..=200u32 {
            let mut prev = u32::MAX;
            for nc in 0..=n {
                let q = quantum_channels(n, nc).unwrap();
                assert!(q <= prev);
                prev = q;
            }
        }
    }

    #[test]
    fn guard_accounting_fits_on_link() {
        for n in 1..=100u32 {
            for nc in 0..=n {
                let a = ChannelAllocation {
                    n_classical: nc,
                    n_quantum: quantum_channels(n, nc).unwrap(),
                    overflow: false,
                };
                assert!(a.n_classical + a.guard() + a.n_quantum <= n);
            }
        }
    }

    #[test]
    fn bounds_examples() {
        let h = HurstParam::new(0.8).unwrap();
        let idle = TrafficParams::new(0.0, 0.5, 0.3, h).unwrap();
        assert_eq!(quantum_bounds(&idle, 80, 3.0, 1.2), (79.0, 81.0));
        let flat = TrafficParams::new(20.0, 0.0, 0.0, h).unwrap();
        assert_eq!(quantum_bounds(&flat, 80, 0.0, 0.0), (39.0, 41.0));
        assert_eq!(expected_quantum(&flat, 80, 0.0), (39.0, 41.0));
    }

    #[test]
    fn expected_quantum_cat2() {
        let c2 = category_preset(Category::Cat2, 80).unwrap();
        // Clock time where m(t) = 0.925: sin²(πt/24) = 0.5 -> t = 6 h.
        let (lo, hi) = expected_quantum(&c2, 80, 6.0);
        let direct = 81.0 - 2.0 * 16.0 * 0.925 * (0.0032f64).exp();
        assert!((hi - direct).abs() < 1e-12);
        assert!((hi - 51.30).abs() < 0.01);
        assert!((hi - lo - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stats_invariants_on_trace() {
        let p = category_preset(Category::Cat3, 80).unwrap();
        let tr = synthesize(&p, 48.0, 1.0 / 60.0, 0.0, 11).unwrap();
        let s = availability_stats(&tr, &WdmConfig::default()).unwrap();
        let qsum: f64 = s.quantum_histogram.iter().map(|(_, f)| f).sum();
        let csum: f64 = s.classical_histogram.iter().map(|(_, f)| f).sum();
        assert!((qsum - 1.0).abs() < 1e-9 && (csum - 1.0).abs() < 1e-9);
        assert!((s.utilization_percent - 100.0 * s.mean_quantum_channels / 80.0).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&s.outage_fraction));
        for &load in &tr.load {
            let a = allocate(load, 80).unwrap();
            let expect = (80i64 - 2 * i64::from(a.n_classical) + 1).clamp(0, 80);
            assert_eq!(i64::from(a.n_quantum), expect);
        }
    }

    #[test]
    fn merge_equals_concatenation() {
        let p = category_preset(Category::Cat1, 80).unwrap();
        let a = synthesize(&p, 24.0, 0.1, 0.0, 1).unwrap();
        let b = synthesize(&p, 24.0, 0.1, 0.0, 2).unwrap();
        let mut ca = AvailabilityCounts::new(80);
        ca.record_trace(&a).unwrap();
        let mut cb = AvailabilityCounts::new(80);
        cb.record_trace(&b).unwrap();
        let mut all = AvailabilityCounts::new(80);
        all.record_trace(&a).unwrap();
        all.record_trace(&b).unwrap();
        ca.merge(&cb);
        assert_eq!(ca, all);
    }
}
