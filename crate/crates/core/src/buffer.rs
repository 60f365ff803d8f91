//! Quantum key buffer dynamics.
//!
//! The buffer level `B(t)` (in DKU) grows with the QKD generation rate
//! `C_Q · N_Q(t)` and drains at the consumption rate `S(t)`. It alternates
//! between two states:
//!
//! * `Available`: keys are consumed; hitting zero switches to `Recovery`.
//! * `Recovery`: consumption stops; reaching the reset level `B₀` switches
//!   back to `Available` with the level set exactly to `B₀`.
//!
//! Analytic results (variance, reliability horizon, expected recovery time)
//! use the continuous channel approximation `N_Q ≈ N ± 1 − 2 p m(t) ν(t)`.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::fgn::{autocov, FgnGenerator};
use crate::format::sig9;
use crate::report::{Report, ToReport};
use crate::traffic::{sample_count, synthesize_with, TrafficParams, TrafficTrace};
use crate::wdm::{allocate, WdmConfig};

/// Default cap on covariance terms evaluated by the variance quadrature.
pub const DEFAULT_QUADRATURE_BUDGET: u128 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConsumptionMode {
    /// `S(t) = C_Q · E[N_Q(t)]` for the active channel model: zero drift.
    InstantBalance,
    /// Daily average of the `InstantBalance` rate.
    ConstantMean,
    /// Constant rate in DKU per hour.
    Fixed(f64),
}

impl fmt::Display for ConsumptionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConsumptionMode::InstantBalance => f.write_str("instant-balance"),
            ConsumptionMode::ConstantMean => f.write_str("constant-mean"),
            ConsumptionMode::Fixed(r) => write!(f, "fixed:{r}"),
        }
    }
}

impl FromStr for ConsumptionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "instant-balance" => Ok(ConsumptionMode::InstantBalance),
            "constant-mean" => Ok(ConsumptionMode::ConstantMean),
            other => {
                let rate = other
                    .strip_prefix("fixed:")
                    .and_then(|r| r.trim().parse::<f64>().ok())
                    .ok_or_else(|| {
                        invalid(format!(
                            "unknown consumption mode {other:?}; expected instant-balance, constant-mean or fixed:RATE"
                        ))
                    })?;
                if !(rate >= 0.0 && rate.is_finite()) {
                    return Err(invalid(format!(
                        "fixed consumption rate must be >= 0, got {rate}"
                    )));
                }
                Ok(ConsumptionMode::Fixed(rate))
            }
        }
    }
}

/// How the simulation turns traffic into a quantum channel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelModel {
    /// Integer allocation `max(0, min(N, N − 2⌈load⌉ + 1))`.
    Discrete,
    /// `N − 1 − 2·load`.
    ContinuousLower,
    /// `N + 1 − 2·load`.
    ContinuousUpper,
}

impl ChannelModel {
    /// Offset added to `N` in the continuous expression. `Discrete` uses
    /// the midpoint of the two ceiling bounds for its expectation.
    fn offset(self) -> f64 {
        match self {
            ChannelModel::Discrete => 0.0,
            ChannelModel::ContinuousLower => -1.0,
            ChannelModel::ContinuousUpper => 1.0,
        }
    }
}

impl fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelModel::Discrete => "discrete",
            ChannelModel::ContinuousLower => "cont-lower",
            ChannelModel::ContinuousUpper => "cont-upper",
        })
    }
}

impl FromStr for ChannelModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "discrete" => Ok(ChannelModel::Discrete),
            "cont-lower" => Ok(ChannelModel::ContinuousLower),
            "cont-upper" => Ok(ChannelModel::ContinuousUpper),
            other => Err(invalid(format!(
                "unknown channel model {other:?}; expected discrete, cont-lower or cont-upper"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferParams {
    pub b0_dku: f64,
    pub consumption_mode: ConsumptionMode,
    pub config: WdmConfig,
    pub traffic: TrafficParams,
    pub channel_model: ChannelModel,
    /// Clock time (on the trend's axis) at which simulations start.
    pub start_phase_hours: f64,
}

impl BufferParams {
    pub fn new(traffic: TrafficParams, config: WdmConfig, b0_dku: f64) -> Result<Self> {
        let p = Self {
            b0_dku,
            consumption_mode: ConsumptionMode::InstantBalance,
            config,
            traffic,
            channel_model: ChannelModel::ContinuousUpper,
            start_phase_hours: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b0_dku >= 0.0 && self.b0_dku.is_finite()) {
            return Err(invalid(format!(
                "b0_dku must be finite and >= 0, got {}",
                self.b0_dku
            )));
        }
        if let ConsumptionMode::Fixed(r) = self.consumption_mode {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(invalid(format!(
                    "fixed consumption rate must be >= 0, got {r}"
                )));
            }
        }
        if !(0.0..self.traffic.period_hours).contains(&self.start_phase_hours) {
            return Err(invalid(format!(
                "start_phase_hours must be in [0, {}), got {}",
                self.traffic.period_hours, self.start_phase_hours
            )));
        }
        self.config.validate()?;
        self.traffic.validate()
    }

    pub fn with_b0(mut self, b0_dku: f64) -> Self {
        self.b0_dku = b0_dku;
        self
    }

    /// Analytic mean quantum channel count under the channel model:
    /// `N + offset − 2 p m(t) e^{σ²/2}` (unclamped).
    pub fn expected_channels(&self, t_hours: f64) -> f64 {
        f64::from(self.config.n_channels) + self.channel_model.offset()
            - 2.0 * self.traffic.p * self.traffic.trend(t_hours) * self.traffic.noise_mean()
    }

    /// Deterministic modulation `K(t) = 2 p C_Q m(t)` in DKU per hour.
    pub fn modulation(&self, t_hours: f64) -> f64 {
        2.0 * self.traffic.p * self.config.key_rate_per_hour() * self.traffic.trend(t_hours)
    }
}

/// Consumption rate and whether it had to be clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Consumption {
    pub dku_per_hour: f64,
    /// The balancing rate would have been negative (saturated link).
    pub saturated: bool,
}

fn instant_balance(params: &BufferParams, t_hours: f64) -> Consumption {
    let rate = params.config.key_rate_per_hour() * params.expected_channels(t_hours);
    if rate < 0.0 {
        Consumption {
            dku_per_hour: 0.0,
            saturated: true,
        }
    } else {
        Consumption {
            dku_per_hour: rate,
            saturated: false,
        }
    }
}

const CONSTANT_MEAN_POINTS: usize = 2880;

/// Evaluates `S(t)` repeatedly, averaging the constant-mean rate only once.
struct ConsumptionSchedule<'a> {
    params: &'a BufferParams,
    constant: Option<Consumption>,
}

impl<'a> ConsumptionSchedule<'a> {
    fn new(params: &'a BufferParams) -> Self {
        let constant = match params.consumption_mode {
            ConsumptionMode::InstantBalance => None,
            _ => Some(consumption_rate(params, 0.0)),
        };
        Self { params, constant }
    }

    fn at(&self, t_hours: f64) -> Consumption {
        self.constant
            .unwrap_or_else(|| instant_balance(self.params, t_hours))
    }
}

/// Consumption `S(t)` in DKU per hour at clock time `t_hours`.
pub fn consumption_rate(params: &BufferParams, t_hours: f64) -> Consumption {
    match params.consumption_mode {
        ConsumptionMode::InstantBalance => instant_balance(params, t_hours),
        ConsumptionMode::ConstantMean => {
            let period = params.traffic.period_hours;
            let h = period / CONSTANT_MEAN_POINTS as f64;
            let mut saturated = false;
            let sum: f64 = (0..CONSTANT_MEAN_POINTS)
                .map(|i| {
                    let c = instant_balance(params, i as f64 * h);
                    saturated |= c.saturated;
                    c.dku_per_hour
                })
                .sum();
            Consumption {
                dku_per_hour: sum / CONSTANT_MEAN_POINTS as f64,
                saturated,
            }
        }
        ConsumptionMode::Fixed(rate) => Consumption {
            dku_per_hour: rate,
            saturated: false,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferState {
    Available,
    Recovery,
}

impl BufferState {
    pub fn label(self) -> &'static str {
        match self {
            BufferState::Available => "AVAILABLE",
            BufferState::Recovery => "RECOVERY",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    Depleted,
    Recovered,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Elapsed hours since the start of the trace.
    pub time_hours: f64,
    pub direction: TransitionKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferTrace {
    pub dt_hours: f64,
    pub start_phase_hours: f64,
    /// Level at elapsed time `i·dt`.
    pub levels_dku: Vec<f64>,
    pub states: Vec<BufferState>,
    /// Discrete quantum channel allocation at each grid point.
    pub n_quantum: Vec<u32>,
    /// Consumption applied over the step starting at each grid point.
    pub consumption_dku_per_h: Vec<f64>,
    pub transitions: Vec<Transition>,
    /// Grid points where the balancing consumption was clamped at zero.
    pub saturated_steps: usize,
}

impl BufferTrace {
    pub fn len(&self) -> usize {
        self.levels_dku.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels_dku.is_empty()
    }

    pub fn first_depletion(&self) -> Option<f64> {
        self.transitions
            .iter()
            .find(|t| t.direction == TransitionKind::Depleted)
            .map(|t| t.time_hours)
    }

    /// CSV `t_hours,buffer_dku,state,n_quantum,consumption_dku_per_h`.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(
            w,
            "t_hours,buffer_dku,state,n_quantum,consumption_dku_per_h"
        )?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                sig9(i as f64 * self.dt_hours),
                sig9(self.levels_dku[i]),
                self.states[i].label(),
                self.n_quantum[i],
                sig9(self.consumption_dku_per_h[i])
            )?;
        }
        Ok(())
    }
}

/// Simulation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// With the floor off the level is an unconstrained Euler path, never
    /// changes state, and may go negative. Used to check analytic moments.
    pub absorbing_floor: bool,
    /// Stop right after the first depletion (first-passage runs).
    pub stop_at_first_depletion: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            absorbing_floor: true,
            stop_at_first_depletion: false,
        }
    }
}

/// Quantum channels used for key generation at one grid point.
fn generating_channels(
    params: &BufferParams,
    trace: &TrafficTrace,
    i: usize,
    discrete: u32,
) -> f64 {
    match params.channel_model {
        ChannelModel::Discrete => f64::from(discrete),
        model => f64::from(params.config.n_channels) + model.offset() - 2.0 * trace.load[i],
    }
}

/// Explicit Euler evolution of the buffer over an existing traffic trace.
pub fn simulate_on_trace(
    params: &BufferParams,
    trace: &TrafficTrace,
    options: SimOptions,
) -> Result<BufferTrace> {
    params.validate()?;
    if trace.is_empty() {
        return Err(invalid("traffic trace is empty"));
    }
    let n = trace.len();
    let dt = trace.dt_hours;
    let c_q = params.config.key_rate_per_hour();
    let b0 = params.b0_dku;

    let mut levels = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let mut n_quantum = Vec::with_capacity(n);
    let mut consumption = Vec::with_capacity(n);
    let mut transitions = Vec::new();
    let mut saturated_steps = 0;

    let schedule = ConsumptionSchedule::new(params);
    let mut level = b0;
    let mut state = BufferState::Available;
    for i in 0..n {
        let alloc = allocate(trace.load[i], params.config.n_channels)?;
        let channels = generating_channels(params, trace, i, alloc.n_quantum);
        let demand = schedule.at(trace.clock(i));
        if demand.saturated {
            saturated_steps += 1;
        }
        let s = match state {
            BufferState::Available => demand.dku_per_hour,
            BufferState::Recovery => 0.0,
        };
        levels.push(level);
        states.push(state);
        n_quantum.push(alloc.n_quantum);
        consumption.push(s);
        if i + 1 == n {
            break;
        }

        let t_next = (i + 1) as f64 * dt;
        if !options.absorbing_floor {
            level += dt * (c_q * channels - s);
            continue;
        }
        match state {
            BufferState::Available => {
                level += dt * (c_q * channels - s);
                if level <= 0.0 {
                    level = 0.0;
                    state = BufferState::Recovery;
                    transitions.push(Transition {
                        time_hours: t_next,
                        direction: TransitionKind::Depleted,
                    });
                    if options.stop_at_first_depletion {
                        levels.push(level);
                        states.push(state);
                        n_quantum
                            .push(allocate(trace.load[i + 1], params.config.n_channels)?.n_quantum);
                        consumption.push(0.0);
                        break;
                    }
                }
            }
            BufferState::Recovery => {
                // Physical generation cannot be negative while recharging.
                level += dt * c_q * channels.max(0.0);
                if level >= b0 {
                    level = b0;
                    state = BufferState::Available;
                    transitions.push(Transition {
                        time_hours: t_next,
                        direction: TransitionKind::Recovered,
                    });
                }
            }
        }
    }
    Ok(BufferTrace {
        dt_hours: dt,
        start_phase_hours: trace.start_phase_hours,
        levels_dku: levels,
        states,
        n_quantum,
        consumption_dku_per_h: consumption,
        transitions,
        saturated_steps,
    })
}

/// Synthesizes traffic for `seed` and evolves the buffer over it.
pub fn simulate_buffer(
    params: &BufferParams,
    duration_hours: f64,
    dt_hours: f64,
    seed: u64,
) -> Result<BufferTrace> {
    simulate_buffer_with(
        params,
        duration_hours,
        dt_hours,
        seed,
        SimOptions::default(),
    )
}

pub fn simulate_buffer_with(
    params: &BufferParams,
    duration_hours: f64,
    dt_hours: f64,
    seed: u64,
    options: SimOptions,
) -> Result<BufferTrace> {
    params.validate()?;
    let n = sample_count(duration_hours, dt_hours)?;
    let generator = FgnGenerator::new(params.traffic.hurst, n)?;
    let trace = synthesize_with(
        &generator,
        &params.traffic,
        dt_hours,
        params.start_phase_hours,
        seed,
    )?;
    simulate_on_trace(params, &trace, options)
}

/// Incremental evaluation of the discretized double sum
/// `σ²_B(t_n) = e^{σ²} Δt² Σ_{i,j<n} K_i K_j (e^{σ²γ_H(i−j)} − 1)`.
struct VarianceAccumulator {
    dt: f64,
    prefactor: f64,
    // g[k] = e^{σ²γ_H(k)} − 1
    g: Vec<f64>,
    k: Vec<f64>,
    sum: f64,
}

impl VarianceAccumulator {
    fn new(params: &BufferParams, dt: f64) -> Self {
        let s2 = params.traffic.sigma * params.traffic.sigma;
        Self {
            dt,
            prefactor: s2.exp() * dt * dt,
            g: Vec::new(),
            k: Vec::new(),
            sum: 0.0,
        }
    }

    fn lag_term(params: &BufferParams, lag: usize) -> f64 {
        let s2 = params.traffic.sigma * params.traffic.sigma;
        (s2 * autocov(params.traffic.hurst, lag as i64)).exp_m1()
    }

    /// Adds grid point `n = self.k.len()` and returns σ²_B(t_{n+1}).
    fn push(&mut self, params: &BufferParams) -> f64 {
        let n = self.k.len();
        self.g.push(Self::lag_term(params, n));
        let kn = params.modulation(params.start_phase_hours + n as f64 * self.dt);
        let cross: f64 = self
            .k
            .iter()
            .enumerate()
            .map(|(j, kj)| kj * self.g[n - j])
            .sum();
        self.k.push(kn);
        self.sum += kn * kn * self.g[0] + 2.0 * kn * cross;
        self.prefactor * self.sum
    }
}

fn check_budget(points: usize, budget: u128) -> Result<()> {
    let terms = (points as u128) * (points as u128);
    if terms > budget {
        Err(Error::BudgetExceeded {
            points,
            terms,
            budget,
        })
    } else {
        Ok(())
    }
}

/// Variance curve `σ²_B(n·dt)` for `n = 0..=n_max`.
///
/// Rows of the double sum are evaluated in parallel; each row is summed
/// sequentially and rows are accumulated in index order, so the result does
/// not depend on the worker count.
pub fn variance_curve(
    params: &BufferParams,
    dt_hours: f64,
    n_max: usize,
    budget: u128,
) -> Result<Vec<f64>> {
    params.validate()?;
    if !(dt_hours > 0.0 && dt_hours.is_finite()) {
        return Err(invalid(format!("dt_hours must be > 0, got {dt_hours}")));
    }
    check_budget(n_max, budget)?;
    let s2 = params.traffic.sigma * params.traffic.sigma;
    let g: Vec<f64> = (0..n_max.max(1))
        .into_par_iter()
        .map(|lag| VarianceAccumulator::lag_term(params, lag))
        .collect();
    let k: Vec<f64> = (0..n_max)
        .map(|i| params.modulation(params.start_phase_hours + i as f64 * dt_hours))
        .collect();
    // cross[r] = Σ_{j<r} K_j g(r − j)
    let cross: Vec<f64> = (0..n_max)
        .into_par_iter()
        .map(|r| k[..r].iter().enumerate().map(|(j, kj)| kj * g[r - j]).sum())
        .collect();
    let prefactor = s2.exp() * dt_hours * dt_hours;
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(0.0);
    let mut sum = 0.0;
    for r in 0..n_max {
        sum += k[r] * k[r] * g[0] + 2.0 * k[r] * cross[r];
        out.push(prefactor * sum);
    }
    Ok(out)
}

/// Buffer variance at arbitrary times, linear between grid points of
/// spacing `dt_hours`.
pub fn buffer_variance(
    params: &BufferParams,
    dt_hours: f64,
    t_grid_hours: &[f64],
    budget: u128,
) -> Result<Vec<f64>> {
    if t_grid_hours.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("t_grid must be strictly increasing"));
    }
    let Some(&last) = t_grid_hours.last() else {
        return Ok(Vec::new());
    };
    if t_grid_hours[0] < 0.0 || !last.is_finite() {
        return Err(invalid("t_grid must start at >= 0 and be finite"));
    }
    let n_max = (last / dt_hours - 1e-9).ceil().max(0.0) as usize;
    let curve = variance_curve(params, dt_hours, n_max, budget)?;
    Ok(t_grid_hours
        .iter()
        .map(|&t| {
            let x = t / dt_hours;
            let lo = (x.floor() as usize).min(n_max);
            let hi = (lo + 1).min(n_max);
            let frac = (x - lo as f64).clamp(0.0, 1.0);
            curve[lo] + frac * (curve[hi] - curve[lo])
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HorizonOutcome {
    Reached {
        t0_hours: f64,
    },
    /// The 3σ excursion never touched zero within the searched span.
    ExceedsSpan {
        span_hours: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonResult {
    pub outcome: HorizonOutcome,
    /// `(t, σ²_B(t))` on the grid up to the bracketing point.
    pub variance_curve: Vec<(f64, f64)>,
    /// Analytic mean `E[B(t)]` on the same grid.
    pub mean_curve: Vec<f64>,
}

impl HorizonResult {
    pub fn t0_hours(&self) -> Option<f64> {
        match self.outcome {
            HorizonOutcome::Reached { t0_hours } => Some(t0_hours),
            HorizonOutcome::ExceedsSpan { .. } => None,
        }
    }
}

impl ToReport for HorizonResult {
    fn to_report(&self, out: &mut Report) {
        match self.outcome {
            HorizonOutcome::Reached { t0_hours } => {
                out.text("status", "reached").num("t0_hours", t0_hours);
            }
            HorizonOutcome::ExceedsSpan { span_hours } => {
                out.text("status", "exceeds_span")
                    .num("span_hours", span_hours);
            }
        }
        if let Some(&(t, v)) = self.variance_curve.last() {
            out.num("last_grid_hours", t).num("last_sigma2_b", v);
        }
    }
}

/// Search limits for the horizon solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonLimits {
    pub max_span_hours: f64,
    pub budget: u128,
}

impl Default for HorizonLimits {
    fn default() -> Self {
        Self {
            max_span_hours: 30.0 * 24.0,
            budget: DEFAULT_QUADRATURE_BUDGET,
        }
    }
}

const HORIZON_REL_TOL: f64 = 1e-6;

/// Reliability horizon: the first time `E[B(t)] − 3 σ_B(t)` reaches zero.
///
/// The mean is integrated alongside the variance, so modes with drift are
/// handled; for `InstantBalance` without saturation it stays at `B₀`.
/// Between grid points mean and variance are interpolated linearly and the
/// crossing is refined by bisection.
pub fn reliability_horizon(
    params: &BufferParams,
    dt_hours: f64,
    limits: HorizonLimits,
) -> Result<HorizonResult> {
    params.validate()?;
    if !(dt_hours > 0.0 && dt_hours.is_finite()) {
        return Err(invalid(format!("dt_hours must be > 0, got {dt_hours}")));
    }
    let b0 = params.b0_dku;
    if b0 == 0.0 {
        return Ok(HorizonResult {
            outcome: HorizonOutcome::Reached { t0_hours: 0.0 },
            variance_curve: vec![(0.0, 0.0)],
            mean_curve: vec![0.0],
        });
    }
    let c_q = params.config.key_rate_per_hour();
    let n_max = (limits.max_span_hours / dt_hours).floor() as usize;
    let mut acc = VarianceAccumulator::new(params, dt_hours);
    let mut variance = vec![(0.0, 0.0)];
    let mut mean = vec![b0];
    let mut m = b0;
    let margin = |mean: f64, var: f64| mean - 3.0 * var.sqrt();
    let schedule = ConsumptionSchedule::new(params);

    for n in 0..n_max {
        check_budget(n + 1, limits.budget)?;
        let clock = params.start_phase_hours + n as f64 * dt_hours;
        let drift = c_q * params.expected_channels(clock) - schedule.at(clock).dku_per_hour;
        m += dt_hours * drift;
        let v = acc.push(params);
        let t = (n + 1) as f64 * dt_hours;
        variance.push((t, v));
        mean.push(m);
        if margin(m, v) <= 0.0 {
            let (t_lo, v_lo) = variance[n];
            let m_lo = mean[n];
            let at = |frac: f64| margin(m_lo + frac * (m - m_lo), v_lo + frac * (v - v_lo));
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            for _ in 0..200 {
                let t_est = t_lo + hi * dt_hours;
                if (hi - lo) * dt_hours <= HORIZON_REL_TOL * t_est {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if at(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(HorizonResult {
                outcome: HorizonOutcome::Reached {
                    t0_hours: t_lo + 0.5 * (lo + hi) * dt_hours,
                },
                variance_curve: variance,
                mean_curve: mean,
            });
        }
    }
    Ok(HorizonResult {
        outcome: HorizonOutcome::ExceedsSpan {
            span_hours: n_max as f64 * dt_hours,
        },
        variance_curve: variance,
        mean_curve: mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryResult {
    /// Using the lower channel bound `N − 1`: the longer estimate.
    pub tau_lower_hours: f64,
    /// Using the upper channel bound `N + 1`.
    pub tau_upper_hours: f64,
    pub t_prime_hours: f64,
}

impl ToReport for RecoveryResult {
    fn to_report(&self, out: &mut Report) {
        out.num("t_prime_hours", self.t_prime_hours)
            .num("tau_lower_hours", self.tau_lower_hours)
            .num("tau_upper_hours", self.tau_upper_hours);
    }
}

/// Quasi-static recovery time `B₀ / (C_Q [(N ∓ 1) − 2 p m(t') e^{σ²/2}])`,
/// with `t'` the clock time of depletion.
pub fn expected_recovery(params: &BufferParams, t_prime_hours: f64) -> Result<RecoveryResult> {
    params.validate()?;
    if params.b0_dku == 0.0 {
        return Ok(RecoveryResult {
            tau_lower_hours: 0.0,
            tau_upper_hours: 0.0,
            t_prime_hours,
        });
    }
    let c_q = params.config.key_rate_per_hour();
    let n = f64::from(params.config.n_channels);
    let classical =
        2.0 * params.traffic.p * params.traffic.trend(t_prime_hours) * params.traffic.noise_mean();
    let lower = n - 1.0 - classical;
    let upper = n + 1.0 - classical;
    if lower <= 0.0 {
        return Err(Error::Saturated {
            t_prime_hours,
            rate: lower,
        });
    }
    Ok(RecoveryResult {
        tau_lower_hours: params.b0_dku / (c_q * lower),
        tau_upper_hours: params.b0_dku / (c_q * upper),
        t_prime_hours,
    })
}

/// One depletion and, if it completed, the following recovery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryEvent {
    pub depleted_at_hours: f64,
    pub recovered_at_hours: Option<f64>,
}

impl RecoveryEvent {
    pub fn duration_hours(&self) -> Option<f64> {
        self.recovered_at_hours.map(|r| r - self.depleted_at_hours)
    }
}

pub fn recovery_events(trace: &BufferTrace) -> Vec<RecoveryEvent> {
    let mut out = Vec::new();
    let mut pending: Option<f64> = None;
    for t in &trace.transitions {
        match t.direction {
            TransitionKind::Depleted => pending = Some(t.time_hours),
            TransitionKind::Recovered => {
                if let Some(d) = pending.take() {
                    out.push(RecoveryEvent {
                        depleted_at_hours: d,
                        recovered_at_hours: Some(t.time_hours),
                    });
                }
            }
        }
    }
    if let Some(d) = pending {
        out.push(RecoveryEvent {
            depleted_at_hours: d,
            recovered_at_hours: None,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleStats {
    pub total_hours: f64,
    pub availability_fraction: f64,
    pub depletions: usize,
    pub completed_recoveries: usize,
    /// Mean gap between consecutive depletions (NaN with fewer than two).
    pub mean_time_between_depletions_hours: f64,
    /// Mean duration of completed Recovery intervals (NaN if none).
    pub mean_recovery_hours: f64,
    pub depletions_per_day: f64,
    /// Depletions per day times mean recovery hours.
    pub outage_frequency_duration: f64,
    /// Fewer than one complete Available → Recovery → Available cycle.
    pub partial: bool,
}

impl ToReport for CycleStats {
    fn to_report(&self, out: &mut Report) {
        out.num("total_hours", self.total_hours)
            .num("availability_fraction", self.availability_fraction)
            .text("depletions", self.depletions)
            .text("completed_recoveries", self.completed_recoveries)
            .num(
                "mean_time_between_depletions_hours",
                self.mean_time_between_depletions_hours,
            )
            .num("mean_recovery_hours", self.mean_recovery_hours)
            .num("depletions_per_day", self.depletions_per_day)
            .num("outage_frequency_duration", self.outage_frequency_duration)
            .text("partial", self.partial);
    }
}

pub fn cycle_stats(trace: &BufferTrace) -> CycleStats {
    let n = trace.len();
    let total_hours = n as f64 * trace.dt_hours;
    let available = trace
        .states
        .iter()
        .filter(|s| **s == BufferState::Available)
        .count();
    let availability_fraction = if n == 0 {
        1.0
    } else {
        available as f64 / n as f64
    };

    let depletion_times: Vec<f64> = trace
        .transitions
        .iter()
        .filter(|t| t.direction == TransitionKind::Depleted)
        .map(|t| t.time_hours)
        .collect();
    let depletions = depletion_times.len();
    let mean_time_between_depletions_hours = if depletions >= 2 {
        (depletion_times[depletions - 1] - depletion_times[0]) / (depletions - 1) as f64
    } else {
        f64::NAN
    };

    let durations: Vec<f64> = recovery_events(trace)
        .iter()
        .filter_map(RecoveryEvent::duration_hours)
        .collect();
    let completed_recoveries = durations.len();
    let mean_recovery_hours = if durations.is_empty() {
        f64::NAN
    } else {
        durations.iter().sum::<f64>() / durations.len() as f64
    };
    let depletions_per_day = if total_hours > 0.0 {
        depletions as f64 * 24.0 / total_hours
    } else {
        0.0
    };
    let outage_frequency_duration = if depletions == 0 {
        0.0
    } else if completed_recoveries == 0 {
        f64::NAN
    } else {
        depletions_per_day * mean_recovery_hours
    };
    CycleStats {
        total_hours,
        availability_fraction,
        depletions,
        completed_recoveries,
        mean_time_between_depletions_hours,
        mean_recovery_hours,
        depletions_per_day,
        outage_frequency_duration,
        partial: completed_recoveries == 0,
    }
}
