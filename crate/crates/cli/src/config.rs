//! Run configuration: built-in defaults, overridden by a config file, then
//! by command-line flags.
//!
//! Every setting is addressed as `section.key`. The file and the flags are
//! both reduced to `section.key → text` before anything is parsed, so there
//! is one place that knows the keys, their defaults and their constraints.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ini::{Ini, ParseOption};
use oqkd_core::buffer::{BufferParams, ChannelModel, ConsumptionMode, DEFAULT_QUADRATURE_BUDGET};
use oqkd_core::fgn::HurstParam;
use oqkd_core::traffic::{
    category_preset, Category, TrafficParams, DEFAULT_HURST, DEFAULT_PERIOD_HOURS,
};
use oqkd_core::wdm::WdmConfig;

/// First token of the provenance comment line in every output file.
pub const PROVENANCE_TAG: &str = "# oqkd-provenance";

/// Every accepted key with its default, in output order. An empty default
/// means "unset" (derived from the category, or automatic).
const KEYS: &[(&str, &str)] = &[
    ("traffic.category", "1"),
    ("traffic.p", ""),
    ("traffic.alpha", ""),
    ("traffic.sigma", ""),
    ("traffic.hurst", "0.8"),
    ("traffic.period_hours", "24"),
    ("traffic.start_phase_hours", "0"),
    ("traffic.r0", ""),
    ("traffic.channel_capacity", ""),
    ("wdm.n_channels", "80"),
    ("wdm.key_rate_dku_per_day", "1"),
    ("buffer.b0_dku", "1"),
    ("buffer.consumption_mode", "instant-balance"),
    ("buffer.channel_model", "cont-upper"),
    ("simulation.days", "100"),
    ("simulation.dt_minutes", "1"),
    ("simulation.trials", "10"),
    ("simulation.max_span_days", "30"),
    ("simulation.seed", "0"),
    ("simulation.workers", ""),
    ("simulation.quadrature_budget", "100000000"),
    ("simulation.bins", ""),
    ("output.directory", "out"),
    ("output.formats", "csv,report"),
];

/// Raw `section.key → value` settings in precedence layers.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    values: BTreeMap<String, String>,
}

impl Overrides {
    /// Sets `key`, rejecting names that are not known settings.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let key = key.trim();
        if !KEYS.iter().any(|(k, _)| *k == key) {
            bail!("unknown configuration key {key:?}");
        }
        self.values
            .insert(key.to_string(), value.into().trim().to_string());
        Ok(())
    }

    /// Applies `other` on top of `self`.
    pub fn merge(&mut self, other: &Overrides) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    /// Parses config file text. A provenance line (as written at the top of
    /// every output) is accepted too, so any artifact can be replayed.
    pub fn from_text(text: &str) -> Result<Self> {
        if let Some(line) = text.lines().find(|l| l.starts_with(PROVENANCE_TAG)) {
            return Self::from_provenance(line);
        }
        let opts = ParseOption {
            enabled_quote: false,
            enabled_escape: false,
            ..ParseOption::default()
        };
        let ini = Ini::load_from_str_opt(text, opts)
            .map_err(|e| anyhow!("config line {}: {}", e.line, e.msg))?;
        let mut out = Self::default();
        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                let Some(section) = section else {
                    bail!("key {key:?} appears before any [section] header");
                };
                let name = format!("{section}.{key}");
                if out.values.contains_key(&name) {
                    bail!("duplicate configuration key {name:?}");
                }
                out.set(&name, value)?;
            }
        }
        Ok(out)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_text(&text).with_context(|| format!("in config {}", path.display()))
    }

    fn from_provenance(line: &str) -> Result<Self> {
        let mut out = Self::default();
        for token in line[PROVENANCE_TAG.len()..].split_whitespace() {
            let Some((k, v)) = token.split_once('=') else {
                bail!("malformed provenance token {token:?}");
            };
            if k == "command" || k == "version" {
                continue;
            }
            out.set(k, unescape(v))?;
        }
        Ok(out)
    }

    fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .or_else(|| KEYS.iter().find(|(k, _)| *k == key).map(|(_, d)| *d))
            .expect("key is listed in KEYS")
    }
}

fn escape(v: &str) -> String {
    v.replace('%', "%25")
        .replace(' ', "%20")
        .replace('\t', "%09")
}

fn unescape(v: &str) -> String {
    v.replace("%20", " ")
        .replace("%09", "\t")
        .replace("%25", "%")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSection {
    pub category: Category,
    /// Explicit values override the category preset.
    pub p: Option<f64>,
    pub alpha: Option<f64>,
    pub sigma: Option<f64>,
    pub hurst: f64,
    pub period_hours: f64,
    pub start_phase_hours: f64,
    pub r0: Option<f64>,
    pub channel_capacity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferSection {
    pub b0_dku: f64,
    pub consumption_mode: ConsumptionMode,
    pub channel_model: ChannelModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSection {
    pub days: f64,
    pub dt_minutes: f64,
    pub trials: usize,
    pub max_span_days: f64,
    pub seed: u64,
    /// `None`: available processors, capped by `trials`.
    pub workers: Option<usize>,
    pub quadrature_budget: u128,
    /// `None`: automatic density binning.
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub csv: bool,
    pub report: bool,
}

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub traffic: TrafficSection,
    pub wdm: WdmConfig,
    pub buffer: BufferSection,
    pub simulation: SimulationSection,
    pub output: OutputSection,
}

/// Error for an invalid value, naming the offending key.
fn bad(key: &str, constraint: impl fmt::Display) -> anyhow::Error {
    anyhow!("{key} {constraint}")
}

fn parse_f64(o: &Overrides, key: &str) -> Result<f64> {
    let raw = o.get(key);
    let v: f64 = raw
        .parse()
        .map_err(|_| bad(key, format!("must be a number, got {raw:?}")))?;
    if !v.is_finite() {
        return Err(bad(key, format!("must be finite, got {raw:?}")));
    }
    Ok(v)
}

fn parse_opt_f64(o: &Overrides, key: &str) -> Result<Option<f64>> {
    if o.get(key).is_empty() {
        Ok(None)
    } else {
        parse_f64(o, key).map(Some)
    }
}

fn parse_int<T: std::str::FromStr>(o: &Overrides, key: &str) -> Result<T> {
    let raw = o.get(key);
    raw.parse()
        .map_err(|_| bad(key, format!("must be a non-negative integer, got {raw:?}")))
}

fn parse_opt_int<T: std::str::FromStr>(o: &Overrides, key: &str) -> Result<Option<T>> {
    if o.get(key).is_empty() {
        Ok(None)
    } else {
        parse_int(o, key).map(Some)
    }
}

impl RunConfig {
    /// Validates the layered settings; nothing is computed before this
    /// succeeds.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let category: Category = o.get("traffic.category").parse().map_err(|_| {
            bad(
                "traffic.category",
                format!("must be 1, 2 or 3, got {:?}", o.get("traffic.category")),
            )
        })?;
        let traffic = TrafficSection {
            category,
            p: parse_opt_f64(o, "traffic.p")?,
            alpha: parse_opt_f64(o, "traffic.alpha")?,
            sigma: parse_opt_f64(o, "traffic.sigma")?,
            hurst: parse_f64(o, "traffic.hurst")?,
            period_hours: parse_f64(o, "traffic.period_hours")?,
            start_phase_hours: parse_f64(o, "traffic.start_phase_hours")?,
            r0: parse_opt_f64(o, "traffic.r0")?,
            channel_capacity: parse_opt_f64(o, "traffic.channel_capacity")?,
        };
        if let Some(p) = traffic.p {
            if p < 0.0 {
                return Err(bad("traffic.p", "must be >= 0"));
            }
        }
        if let Some(a) = traffic.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(bad("traffic.alpha", "must be in [0,1]"));
            }
        }
        if let Some(s) = traffic.sigma {
            if s < 0.0 {
                return Err(bad("traffic.sigma", "must be >= 0"));
            }
        }
        if !(0.5..1.0).contains(&traffic.hurst) {
            return Err(bad("traffic.hurst", "must be in [0.5,1)"));
        }
        if traffic.period_hours <= 0.0 {
            return Err(bad("traffic.period_hours", "must be > 0"));
        }
        if !(0.0..traffic.period_hours).contains(&traffic.start_phase_hours) {
            return Err(bad(
                "traffic.start_phase_hours",
                "must be in [0, period_hours)",
            ));
        }
        for (key, v) in [
            ("traffic.r0", traffic.r0),
            ("traffic.channel_capacity", traffic.channel_capacity),
        ] {
            if v.is_some_and(|v| v <= 0.0) {
                return Err(bad(key, "must be > 0"));
            }
        }

        let n_channels: u32 = parse_int(o, "wdm.n_channels")?;
        if n_channels == 0 {
            return Err(bad("wdm.n_channels", "must be >= 1"));
        }
        let key_rate = parse_f64(o, "wdm.key_rate_dku_per_day")?;
        if key_rate <= 0.0 {
            return Err(bad("wdm.key_rate_dku_per_day", "must be > 0"));
        }
        let wdm = WdmConfig::new(n_channels, key_rate).map_err(|e| bad("wdm", e))?;

        let buffer = BufferSection {
            b0_dku: parse_f64(o, "buffer.b0_dku")?,
            consumption_mode: o
                .get("buffer.consumption_mode")
                .parse()
                .map_err(|e| bad("buffer.consumption_mode", e))?,
            channel_model: o
                .get("buffer.channel_model")
                .parse()
                .map_err(|e| bad("buffer.channel_model", e))?,
        };
        if buffer.b0_dku < 0.0 {
            return Err(bad("buffer.b0_dku", "must be >= 0"));
        }

        let simulation = SimulationSection {
            days: parse_f64(o, "simulation.days")?,
            dt_minutes: parse_f64(o, "simulation.dt_minutes")?,
            trials: parse_int(o, "simulation.trials")?,
            max_span_days: parse_f64(o, "simulation.max_span_days")?,
            seed: parse_int(o, "simulation.seed")?,
            workers: parse_opt_int(o, "simulation.workers")?,
            quadrature_budget: parse_int(o, "simulation.quadrature_budget")?,
            bins: parse_opt_int(o, "simulation.bins")?,
        };
        if simulation.dt_minutes <= 0.0 {
            return Err(bad("simulation.dt_minutes", "must be > 0"));
        }
        let dt_days = simulation.dt_minutes / 1440.0;
        if simulation.days < dt_days {
            return Err(bad("simulation.days", "must cover at least one time step"));
        }
        if simulation.max_span_days < dt_days {
            return Err(bad(
                "simulation.max_span_days",
                "must cover at least one time step",
            ));
        }
        if simulation.trials == 0 {
            return Err(bad("simulation.trials", "must be >= 1"));
        }
        if simulation.workers == Some(0) {
            return Err(bad("simulation.workers", "must be >= 1"));
        }
        if simulation.quadrature_budget == 0 {
            return Err(bad("simulation.quadrature_budget", "must be >= 1"));
        }
        if simulation.bins == Some(0) {
            return Err(bad("simulation.bins", "must be >= 1"));
        }

        let mut csv = false;
        let mut report = false;
        for f in o
            .get("output.formats")
            .split(',')
            .map(str::trim)
            .filter(|f| !f.is_empty())
        {
            match f {
                "csv" => csv = true,
                "report" => report = true,
                other => {
                    return Err(bad(
                        "output.formats",
                        format!("entries must be csv or report, got {other:?}"),
                    ))
                }
            }
        }
        let directory = o.get("output.directory");
        if directory.is_empty() {
            return Err(bad("output.directory", "must not be empty"));
        }
        let output = OutputSection {
            directory: PathBuf::from(directory),
            csv,
            report,
        };

        let config = RunConfig {
            traffic,
            wdm,
            buffer,
            simulation,
            output,
        };
        // Cross-field invariants (e.g. p = r0 / C) are checked by the core.
        config.buffer_params().map_err(|e| bad("traffic", e))?;
        Ok(config)
    }

    /// Traffic parameters: the category preset with explicit overrides.
    pub fn traffic_params(&self) -> Result<TrafficParams> {
        self.traffic_params_for(self.traffic.category)
    }

    /// As [`Self::traffic_params`] for another category, keeping every
    /// explicit override.
    pub fn traffic_params_for(&self, category: Category) -> Result<TrafficParams> {
        let t = &self.traffic;
        let mut params = category_preset(category, self.wdm.n_channels)?;
        if let Some(p) = t.p {
            params.p = p;
        }
        if let Some(a) = t.alpha {
            params.alpha = a;
        }
        if let Some(s) = t.sigma {
            params.sigma = s;
        }
        params.hurst = HurstParam::new(t.hurst)?;
        params.period_hours = t.period_hours;
        params.r0 = t.r0;
        params.channel_capacity = t.channel_capacity;
        params.validate()?;
        Ok(params)
    }

    pub fn buffer_params(&self) -> Result<BufferParams> {
        self.buffer_params_for(self.traffic.category)
    }

    pub fn buffer_params_for(&self, category: Category) -> Result<BufferParams> {
        let mut params = BufferParams::new(
            self.traffic_params_for(category)?,
            self.wdm,
            self.buffer.b0_dku,
        )?;
        params.consumption_mode = self.buffer.consumption_mode;
        params.channel_model = self.buffer.channel_model;
        params.start_phase_hours = self.traffic.start_phase_hours;
        params.validate()?;
        Ok(params)
    }

    pub fn dt_hours(&self) -> f64 {
        self.simulation.dt_minutes / 60.0
    }

    pub fn duration_hours(&self) -> f64 {
        self.simulation.days * 24.0
    }

    pub fn max_span_hours(&self) -> f64 {
        self.simulation.max_span_days * 24.0
    }

    /// Worker threads: explicit, or available processors capped by trials.
    pub fn workers(&self) -> usize {
        self.simulation.workers.unwrap_or_else(|| {
            let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
            cpus.min(self.simulation.trials).max(1)
        })
    }

    /// The effective configuration as `section.key=value` pairs, with
    /// derived values (e.g. `p` from the category) filled in.
    pub fn entries(&self) -> Result<Vec<(String, String)>> {
        let tp = self.traffic_params()?;
        let t = &self.traffic;
        let s = &self.simulation;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let formats: Vec<&str> = [(self.output.csv, "csv"), (self.output.report, "report")]
            .into_iter()
            .filter_map(|(on, name)| on.then_some(name))
            .collect();
        let pairs = [
            ("traffic.category", t.category.to_string()),
            ("traffic.p", tp.p.to_string()),
            ("traffic.alpha", tp.alpha.to_string()),
            ("traffic.sigma", tp.sigma.to_string()),
            ("traffic.hurst", t.hurst.to_string()),
            ("traffic.period_hours", t.period_hours.to_string()),
            ("traffic.start_phase_hours", t.start_phase_hours.to_string()),
            ("traffic.r0", opt(t.r0)),
            ("traffic.channel_capacity", opt(t.channel_capacity)),
            ("wdm.n_channels", self.wdm.n_channels.to_string()),
            (
                "wdm.key_rate_dku_per_day",
                self.wdm.key_rate_dku_per_day.to_string(),
            ),
            ("buffer.b0_dku", self.buffer.b0_dku.to_string()),
            (
                "buffer.consumption_mode",
                self.buffer.consumption_mode.to_string(),
            ),
            (
                "buffer.channel_model",
                self.buffer.channel_model.to_string(),
            ),
            ("simulation.days", s.days.to_string()),
            ("simulation.dt_minutes", s.dt_minutes.to_string()),
            ("simulation.trials", s.trials.to_string()),
            ("simulation.max_span_days", s.max_span_days.to_string()),
            ("simulation.seed", s.seed.to_string()),
            ("simulation.workers", self.workers().to_string()),
            (
                "simulation.quadrature_budget",
                s.quadrature_budget.to_string(),
            ),
            (
                "simulation.bins",
                s.bins.map_or(String::new(), |b| b.to_string()),
            ),
            (
                "output.directory",
                self.output.directory.display().to_string(),
            ),
            ("output.formats", formats.join(",")),
        ];
        debug_assert_eq!(pairs.len(), KEYS.len());
        Ok(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    /// Single comment line carrying the command and the full effective
    /// configuration. Feeding it back through `--config` reproduces the run.
    pub fn provenance(&self, command: &str) -> Result<String> {
        let mut line = format!(
            "{PROVENANCE_TAG} version={} command={command}",
            env!("CARGO_PKG_VERSION")
        );
        for (k, v) in self.entries()? {
            line.push(' ');
            line.push_str(&k);
            line.push('=');
            line.push_str(&escape(&v));
        }
        Ok(line)
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::resolve(&Overrides::default()).expect("defaults are valid")
    }
}

// Keep the table of defaults in step with the core's own defaults.
const _: () = {
    assert!(DEFAULT_HURST == 0.8);
    assert!(DEFAULT_PERIOD_HOURS == 24.0);
    assert!(DEFAULT_QUADRATURE_BUDGET == 100_000_000);
};
