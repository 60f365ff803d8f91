//! Subcommands. Each one runs a chain of core operations for a validated
//! [`RunConfig`] and renders its artifacts in memory; the caller writes
//! them. Trials run on the current rayon pool and are merged in index
//! order, so artifacts do not depend on the worker count.

use std::fmt;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use oqkd_core::buffer::{
    cycle_stats, expected_recovery, recovery_events, reliability_horizon, simulate_buffer,
    BufferParams, HorizonLimits,
};
use oqkd_core::fgn::{validate, FgnGenerator, FgnSequence};
use oqkd_core::format::sig9;
use oqkd_core::fpt::{
    default_density_bins, fit_bihill_phased, histogram_density, run_ensemble, tail_stats,
    write_density_csv, BihillFit, FptEnsemble, MIN_TAIL_SAMPLES,
};
use oqkd_core::report::{Report, ToReport};
use oqkd_core::seed::mix;
use oqkd_core::stats;
use oqkd_core::traffic::{
    mean_rate, sample_count, synthesize, synthesize_with, var_rate, Category,
};
use oqkd_core::wdm::{write_histogram_csv, AvailabilityCounts, AvailabilityStats};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::output::Artifact;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Traffic,
    Availability,
    Buffer,
    Horizon,
    Recovery,
    Fpt,
    Fit,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Traffic => "traffic",
            Command::Availability => "availability",
            Command::Buffer => "buffer",
            Command::Horizon => "horizon",
            Command::Recovery => "recovery",
            Command::Fpt => "fpt",
            Command::Fit => "fit",
            Command::Report => "report",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Result of one subcommand: the structured report plus CSV artifacts.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub csv: Vec<Artifact>,
}

impl Outcome {
    /// Artifacts selected by the output formats; the report file is named
    /// `<command>_report.txt` (`report.txt` for `report`).
    pub fn artifacts(&self, command: Command, config: &RunConfig) -> Vec<Artifact> {
        let mut out = Vec::new();
        if config.output.report {
            let name = match command {
                Command::Report => "report.txt".to_string(),
                _ => format!("{command}_report.txt"),
            };
            out.push(Artifact::new(name, self.report.to_string().into_bytes()));
        }
        if config.output.csv {
            out.extend(self.csv.iter().cloned());
        }
        out
    }
}

/// Extra inputs that only some subcommands take.
#[derive(Debug, Clone, Default)]
pub struct Inputs<'a> {
    /// Density CSV (`t_hours,density`) for `fit`, instead of a fresh ensemble.
    pub density: Option<&'a Path>,
}

pub fn run(command: Command, config: &RunConfig, inputs: &Inputs<'_>) -> Result<Outcome> {
    match command {
        Command::Traffic => traffic(config),
        Command::Availability => availability(config),
        Command::Buffer => buffer(config),
        Command::Horizon => horizon(config),
        Command::Recovery => recovery(config),
        Command::Fpt => fpt(config),
        Command::Fit => fit(config, inputs.density),
        Command::Report => table(config),
    }
}

fn csv(name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Artifact> {
    let mut body = Vec::new();
    write(&mut body).with_context(|| format!("rendering {name}"))?;
    Ok(Artifact::new(name, body))
}

fn header(report: &mut Report, command: Command, config: &RunConfig) {
    report
        .text("command", command)
        .text("category", config.traffic.category)
        .text("seed", config.simulation.seed);
}

fn traffic(config: &RunConfig) -> Result<Outcome> {
    let params = config.traffic_params()?;
    let trace = synthesize(
        &params,
        config.duration_hours(),
        config.dt_hours(),
        config.traffic.start_phase_hours,
        config.simulation.seed,
    )?;
    let expected_mean = stats::mean(
        &(0..trace.len())
            .map(|i| mean_rate(&params, trace.clock(i)))
            .collect::<Vec<_>>(),
    );
    let expected_var = stats::mean(
        &(0..trace.len())
            .map(|i| var_rate(&params, trace.clock(i)))
            .collect::<Vec<_>>(),
    );

    let mut report = Report::new();
    header(&mut report, Command::Traffic, config);
    report
        .num("p", params.p)
        .num("alpha", params.alpha)
        .num("sigma", params.sigma)
        .num("hurst", params.hurst.value())
        .text("samples", trace.len())
        .num("load.mean", stats::mean(&trace.load))
        .num("load.expected_mean", expected_mean)
        .num("load.variance", stats::variance(&trace.load))
        .num("load.expected_pointwise_variance", expected_var);
    let seq = FgnSequence {
        samples: trace.fgn.clone(),
        hurst: params.hurst,
        seed: trace.seed,
        method: FgnGenerator::new(params.hurst, trace.len())?.method(),
    };
    match validate(&seq, 20) {
        Ok(v) => {
            report.section("fgn", &v);
        }
        Err(e) => {
            report.text("fgn.validation", format!("skipped ({e})"));
        }
    }
    let csv = vec![csv("traffic_trace.csv", |w| trace.write_csv(w))?];
    Ok(Outcome { report, csv })
}

/// Availability over `trials` independent traces of `days` each.
pub fn availability_ensemble(config: &RunConfig, category: Category) -> Result<AvailabilityStats> {
    let params = config.traffic_params_for(category)?;
    let n = sample_count(config.duration_hours(), config.dt_hours())?;
    let generator = FgnGenerator::new(params.hurst, n)?;
    let per_trial: Vec<Result<AvailabilityCounts>> = (0..config.simulation.trials)
        .into_par_iter()
        .map(|i| {
            let trace = synthesize_with(
                &generator,
                &params,
                config.dt_hours(),
                config.traffic.start_phase_hours,
                mix(config.simulation.seed, i as u64),
            )?;
            let mut counts = AvailabilityCounts::new(config.wdm.n_channels);
            counts.record_trace(&trace)?;
            Ok(counts)
        })
        .collect();
    let mut total = AvailabilityCounts::new(config.wdm.n_channels);
    for counts in per_trial {
        total.merge(&counts?);
    }
    Ok(total.stats()?)
}

fn availability(config: &RunConfig) -> Result<Outcome> {
    let stats = availability_ensemble(config, config.traffic.category)?;
    let mut report = Report::new();
    header(&mut report, Command::Availability, config);
    report
        .text("trials", config.simulation.trials)
        .num("days", config.simulation.days)
        .section("availability", &stats);
    let csv = vec![
        csv("availability_quantum_histogram.csv", |w| {
            write_histogram_csv(&stats.quantum_histogram, w)
        })?,
        csv("availability_classical_histogram.csv", |w| {
            write_histogram_csv(&stats.classical_histogram, w)
        })?,
    ];
    Ok(Outcome { report, csv })
}

fn buffer(config: &RunConfig) -> Result<Outcome> {
    let params = config.buffer_params()?;
    let trace = simulate_buffer(
        &params,
        config.duration_hours(),
        config.dt_hours(),
        config.simulation.seed,
    )?;
    let cycles = cycle_stats(&trace);
    let mut report = Report::new();
    header(&mut report, Command::Buffer, config);
    report
        .num("b0_dku", params.b0_dku)
        .text("consumption_mode", params.consumption_mode)
        .text("channel_model", params.channel_model)
        .text("saturated_steps", trace.saturated_steps)
        .section("cycles", &cycles);
    let csv = vec![csv("buffer_trace.csv", |w| trace.write_csv(w))?];
    Ok(Outcome { report, csv })
}

fn horizon_limits(config: &RunConfig) -> HorizonLimits {
    HorizonLimits {
        max_span_hours: config.max_span_hours(),
        budget: config.simulation.quadrature_budget,
    }
}

fn horizon(config: &RunConfig) -> Result<Outcome> {
    let params = config.buffer_params()?;
    let result = reliability_horizon(&params, config.dt_hours(), horizon_limits(config))?;
    let mut report = Report::new();
    header(&mut report, Command::Horizon, config);
    report
        .num("b0_dku", params.b0_dku)
        .section("horizon", &result);
    let csv = vec![csv("horizon_curve.csv", |w| {
        writeln!(w, "t_hours,mean_dku,sigma2_b_dku2,lower_3sigma_dku")?;
        for ((t, v), m) in result.variance_curve.iter().zip(&result.mean_curve) {
            writeln!(
                w,
                "{},{},{},{}",
                sig9(*t),
                sig9(*m),
                sig9(*v),
                sig9(m - 3.0 * v.sqrt())
            )?;
        }
        Ok(())
    })?];
    Ok(Outcome { report, csv })
}

/// Simulated recovery durations against the quasi-static estimate at each
/// observed depletion phase. Depletions where the estimate is undefined
/// (saturated) are counted and left out.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryComparison {
    pub depletions: usize,
    pub completed: usize,
    pub saturated: usize,
    pub mean_simulated_hours: f64,
    /// Mean of the estimate matching the simulated channel model.
    pub mean_predicted_hours: f64,
}

pub fn compare_recovery(
    params: &BufferParams,
    duration_hours: f64,
    dt_hours: f64,
    seed: u64,
) -> Result<RecoveryComparison> {
    let trace = simulate_buffer(params, duration_hours, dt_hours, seed)?;
    let events = recovery_events(&trace);
    let (mut simulated, mut predicted, mut saturated, mut completed) =
        (Vec::new(), Vec::new(), 0, 0);
    for event in &events {
        let Some(duration) = event.duration_hours() else {
            continue;
        };
        completed += 1;
        match expected_recovery(params, params.start_phase_hours + event.depleted_at_hours) {
            Ok(r) => {
                simulated.push(duration);
                predicted.push(match params.channel_model {
                    oqkd_core::buffer::ChannelModel::ContinuousLower => r.tau_lower_hours,
                    oqkd_core::buffer::ChannelModel::ContinuousUpper => r.tau_upper_hours,
                    oqkd_core::buffer::ChannelModel::Discrete => {
                        0.5 * (r.tau_lower_hours + r.tau_upper_hours)
                    }
                });
            }
            Err(oqkd_core::Error::Saturated { .. }) => saturated += 1,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(RecoveryComparison {
        depletions: events.len(),
        completed,
        saturated,
        mean_simulated_hours: stats::mean(&simulated),
        mean_predicted_hours: stats::mean(&predicted),
    })
}

fn recovery(config: &RunConfig) -> Result<Outcome> {
    let params = config.buffer_params()?;
    let mut report = Report::new();
    header(&mut report, Command::Recovery, config);
    report.num("b0_dku", params.b0_dku);
    match expected_recovery(&params, params.start_phase_hours) {
        Ok(r) => {
            report.section("quasi_static", &r);
        }
        Err(oqkd_core::Error::Saturated {
            t_prime_hours,
            rate,
        }) => {
            report
                .text("quasi_static.status", "saturated")
                .num("quasi_static.t_prime_hours", t_prime_hours)
                .num("quasi_static.denominator_channels", rate);
        }
        Err(e) => return Err(e.into()),
    }
    let cmp = compare_recovery(
        &params,
        config.duration_hours(),
        config.dt_hours(),
        config.simulation.seed,
    )?;
    report
        .text("simulated.depletions", cmp.depletions)
        .text("simulated.completed_recoveries", cmp.completed)
        .text("simulated.saturated_phases", cmp.saturated)
        .num("simulated.mean_recovery_hours", cmp.mean_simulated_hours)
        .num(
            "simulated.mean_quasi_static_hours",
            cmp.mean_predicted_hours,
        );

    let period = params.traffic.period_hours;
    let phases: Vec<f64> = (0..96).map(|i| period * i as f64 / 96.0).collect();
    let mut csv_out = vec![csv("recovery_phase.csv", |w| {
        writeln!(w, "t_prime_hours,tau_lower_hours,tau_upper_hours,saturated")?;
        for &t in &phases {
            match expected_recovery(&params, t) {
                Ok(r) => writeln!(
                    w,
                    "{},{},{},0",
                    sig9(t),
                    sig9(r.tau_lower_hours),
                    sig9(r.tau_upper_hours)
                )?,
                Err(_) => writeln!(w, "{},NaN,NaN,1", sig9(t))?,
            }
        }
        Ok(())
    })?];
    if params.b0_dku > 0.0 {
        csv_out.push(csv("recovery_vs_b0.csv", |w| {
            writeln!(w, "b0_dku,tau_lower_hours,tau_upper_hours,saturated")?;
            for k in 1..=8 {
                let b0 = params.b0_dku * k as f64 / 4.0;
                match expected_recovery(&params.with_b0(b0), params.start_phase_hours) {
                    Ok(r) => writeln!(
                        w,
                        "{},{},{},0",
                        sig9(b0),
                        sig9(r.tau_lower_hours),
                        sig9(r.tau_upper_hours)
                    )?,
                    Err(_) => writeln!(w, "{},NaN,NaN,1", sig9(b0))?,
                }
            }
            Ok(())
        })?);
    }
    Ok(Outcome {
        report,
        csv: csv_out,
    })
}

/// `(t_hours, density)` at bin centers.
pub type Density = Vec<(f64, f64)>;

/// Ensemble plus its density over `(0, span)` from the observed passages.
pub fn fpt_density(config: &RunConfig) -> Result<(FptEnsemble, Option<Density>)> {
    let params = config.buffer_params()?;
    let ens = run_ensemble(
        &params,
        config.simulation.trials,
        config.max_span_hours(),
        config.dt_hours(),
        config.simulation.seed,
    )?;
    let observed = ens.observed();
    if observed.len() < 2 {
        return Ok((ens, None));
    }
    let range = (0.0, ens.max_span_hours);
    let bins = config
        .simulation
        .bins
        .unwrap_or_else(|| default_density_bins(&observed, range, params.traffic.period_hours));
    let density = histogram_density(&observed, bins, range)?;
    Ok((ens, Some(density)))
}

fn fpt(config: &RunConfig) -> Result<Outcome> {
    let (ens, density) = fpt_density(config)?;
    let mut report = Report::new();
    header(&mut report, Command::Fpt, config);
    report
        .text("trials", ens.trials())
        .text("censored", ens.censored_count())
        .num("max_span_hours", ens.max_span_hours);
    if ens.trials() - ens.censored_count() >= MIN_TAIL_SAMPLES {
        report.section("tail", &tail_stats(&ens)?);
    } else {
        report.text(
            "tail.status",
            format!(
                "needs {MIN_TAIL_SAMPLES} observed passages, have {}",
                ens.trials() - ens.censored_count()
            ),
        );
    }
    let mut csv_out = vec![csv("fpt_ensemble.csv", |w| ens.write_csv(w))?];
    match &density {
        Some(d) => {
            report.text("density.bins", d.len());
            csv_out.push(csv("fpt_density.csv", |w| write_density_csv(d, w))?);
        }
        None => {
            report.text("density.status", "fewer than 2 observed passages");
        }
    }
    Ok(Outcome {
        report,
        csv: csv_out,
    })
}

fn read_density(path: &Path) -> Result<Density> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("t_hours") {
            continue;
        }
        let parsed = line.split_once(',').and_then(|(t, f)| {
            Some((t.trim().parse::<f64>().ok()?, f.trim().parse::<f64>().ok()?))
        });
        match parsed {
            Some(p) => out.push(p),
            None => bail!(
                "{}:{}: expected `t_hours,density`, got {line:?}",
                path.display(),
                i + 1
            ),
        }
    }
    Ok(out)
}

fn fit(config: &RunConfig, density_path: Option<&Path>) -> Result<Outcome> {
    let params = config.buffer_params()?;
    let density = match density_path {
        Some(p) => read_density(p)?,
        None => fpt_density(config)?
            .1
            .context("fit needs at least 2 observed first passages; raise simulation.trials")?,
    };
    let alpha = params.traffic.alpha;
    let period = params.traffic.period_hours;
    let phase = params.start_phase_hours;
    let hint = "fitting the density; finer simulation.bins or more trials may help";
    let composite = fit_bihill_phased(&density, alpha, period, phase).context(hint)?;
    let pure = fit_bihill_phased(&density, 0.0, period, phase).context(hint)?;

    let mut report = Report::new();
    header(&mut report, Command::Fit, config);
    composite.to_report(&mut report);
    report.section("pure", &pure).text(
        "composite_improves",
        composite.params.residual < pure.params.residual,
    );
    let curve = |fit: &BihillFit, t: f64| -> f64 {
        let m = oqkd_core::traffic::trend(phase + t, fit.alpha, period);
        fit.params.k_norm * m * oqkd_core::fpt::bihill(t, &fit.params).unwrap_or(0.0)
    };
    let csv = vec![csv("fit_curve.csv", |w| {
        writeln!(w, "t_hours,density,composite,bihill")?;
        for &(t, f) in &density {
            writeln!(
                w,
                "{},{},{},{}",
                sig9(t),
                sig9(f),
                sig9(curve(&composite, t)),
                sig9(curve(&pure, t))
            )?;
        }
        Ok(())
    })?];
    Ok(Outcome { report, csv })
}

/// One row of the category summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryRow {
    pub category: Category,
    pub p_over_n: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub stats: AvailabilityStats,
    pub t0_hours: Option<f64>,
}

pub fn category_rows(config: &RunConfig) -> Result<Vec<CategoryRow>> {
    Category::ALL
        .iter()
        .map(|&category| {
            let tp = config.traffic_params_for(category)?;
            let stats = availability_ensemble(config, category)?;
            let bp = config.buffer_params_for(category)?;
            let t0_hours =
                reliability_horizon(&bp, config.dt_hours(), horizon_limits(config))?.t0_hours();
            Ok(CategoryRow {
                category,
                p_over_n: tp.p / f64::from(config.wdm.n_channels),
                alpha: tp.alpha,
                sigma: tp.sigma,
                stats,
                t0_hours,
            })
        })
        .collect()
}

fn table(config: &RunConfig) -> Result<Outcome> {
    let rows = category_rows(config)?;
    let mut report = Report::new();
    report
        .text("command", Command::Report)
        .text("seed", config.simulation.seed)
        .text("trials", config.simulation.trials)
        .num("days", config.simulation.days)
        .text("n_channels", config.wdm.n_channels);
    for row in &rows {
        let k = format!("cat{}", row.category);
        report
            .num(format!("{k}.p_over_n"), row.p_over_n)
            .num(format!("{k}.alpha"), row.alpha)
            .num(format!("{k}.sigma"), row.sigma)
            .num(
                format!("{k}.mean_quantum_channels"),
                row.stats.mean_quantum_channels,
            )
            .num(
                format!("{k}.utilization_percent"),
                row.stats.utilization_percent,
            )
            .num(format!("{k}.outage_fraction"), row.stats.outage_fraction);
        match row.t0_hours {
            Some(t0) => report.num(format!("{k}.t0_hours"), t0),
            None => report.text(format!("{k}.t0_hours"), "exceeds_span"),
        };
    }
    let csv = vec![csv("category_summary.csv", |w| {
        writeln!(
            w,
            "category,p_over_n,alpha,sigma,mean_quantum_channels,utilization_percent,mean_classical_channels,outage_fraction,t0_hours"
        )?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.category,
                sig9(r.p_over_n),
                sig9(r.alpha),
                sig9(r.sigma),
                sig9(r.stats.mean_quantum_channels),
                sig9(r.stats.utilization_percent),
                sig9(r.stats.mean_classical_channels),
                sig9(r.stats.outage_fraction),
                r.t0_hours.map_or("NaN".to_string(), sig9)
            )?;
        }
        Ok(())
    })?];
    Ok(Outcome { report, csv })
}
