//! Run configuration: defaults, a plain-text key-value file, and CLI
//! overrides. Every file key has a flag twin of the same name; flags win.

use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::MissingPolicy;
use crate::model::NoiseFamily;
use crate::pipeline::RecordCadence;
use crate::samplers::{SamplerConfig, SamplerMode};

/// Fully resolved configuration for the experiment drivers.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: SamplerMode,
    pub q: f64,
    pub q0: f64,
    pub u: f64,
    pub pilot: usize,
    pub quantile_window: usize,
    pub threshold_refresh: usize,
    pub n: usize,
    /// None applies the default of ten times the maximum lag.
    pub burn_in: Option<usize>,
    pub seed: u64,
    pub k: usize,
    pub p1: usize,
    pub p2: usize,
    pub target_radius: f64,
    /// Seed of the coefficient generator, separate from the run seed so the
    /// model stays fixed while streams vary.
    pub coeff_seed: u64,
    pub noise: NoiseFamily,
    pub df: Option<f64>,
    pub cadence: RecordCadence,
    pub period: usize,
    pub p2_seasonal: usize,
    pub timestamp_column: String,
    pub policy: MissingPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: SamplerMode::Relaxed,
            q: 0.1,
            q0: 0.05,
            u: 0.1,
            pilot: 100,
            quantile_window: 0,
            threshold_refresh: 1,
            n: 25_000,
            burn_in: None,
            seed: 1,
            k: 10,
            p1: 1,
            p2: 1,
            target_radius: 0.8,
            coeff_seed: 7,
            noise: NoiseFamily::Gaussian,
            df: None,
            cadence: RecordCadence::EveryUpdate,
            period: 24,
            p2_seasonal: 1,
            timestamp_column: "utc_timestamp".into(),
            policy: MissingPolicy::Fail,
        }
    }
}

/// Optional per-key overrides, applied on top of file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<String>,
    pub q: Option<f64>,
    pub q0: Option<f64>,
    pub u: Option<f64>,
    pub pilot: Option<usize>,
    pub quantile_window: Option<usize>,
    pub threshold_refresh: Option<usize>,
    pub n: Option<usize>,
    pub burn_in: Option<usize>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub p1: Option<usize>,
    pub p2: Option<usize>,
    pub target_radius: Option<f64>,
    pub coeff_seed: Option<u64>,
    pub noise: Option<String>,
    pub df: Option<f64>,
    pub cadence: Option<String>,
    pub period: Option<usize>,
    pub p2_seasonal: Option<usize>,
    pub timestamp_column: Option<String>,
    pub policy: Option<String>,
}

impl RunConfig {
    /// Reads `key = value` lines; `#` starts a comment. Unknown keys are
    /// rejected so typos surface instead of silently using defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let text = std::fs::read_to_string(path)?;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                path: path.display().to_string(),
                reason: format!("expected key = value, got {line:?}"),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config {
                    path: path.display().to_string(),
                    reason: e.to_string(),
                })?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &'static str, value: &str) -> Result<T> {
            value.parse().map_err(|_| Error::InvalidParameter {
                name: key,
                reason: format!("cannot parse {value:?}"),
            })
        }
        match key {
            "mode" => self.mode = SamplerMode::parse(value)?,
            "q" => self.q = parse("q", value)?,
            "q0" => self.q0 = parse("q0", value)?,
            "u" => self.u = parse("u", value)?,
            "pilot" => self.pilot = parse("pilot", value)?,
            "quantile_window" => self.quantile_window = parse("quantile_window", value)?,
            "threshold_refresh" => self.threshold_refresh = parse("threshold_refresh", value)?,
            "n" => self.n = parse("n", value)?,
            "burn_in" => self.burn_in = Some(parse("burn_in", value)?),
            "seed" => self.seed = parse("seed", value)?,
            "k" => self.k = parse("k", value)?,
            "p1" => self.p1 = parse("p1", value)?,
            "p2" => self.p2 = parse("p2", value)?,
            "target_radius" => self.target_radius = parse("target_radius", value)?,
            "coeff_seed" => self.coeff_seed = parse("coeff_seed", value)?,
            "noise" => self.noise = NoiseFamily::parse(value)?,
            "df" => self.df = Some(parse("df", value)?),
            "cadence" => self.cadence = RecordCadence::parse(value)?,
            "period" => self.period = parse("period", value)?,
            "p2_seasonal" => self.p2_seasonal = parse("p2_seasonal", value)?,
            "timestamp_column" => self.timestamp_column = value.to_string(),
            "policy" => self.policy = MissingPolicy::parse(value)?,
            other => {
                return Err(Error::InvalidParameter {
                    name: "config key",
                    reason: format!("unknown key {other:?}"),
                })
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = &o.mode {
            self.mode = SamplerMode::parse(v)?;
        }
        if let Some(v) = o.q {
            self.q = v;
        }
        if let Some(v) = o.q0 {
            self.q0 = v;
        }
        if let Some(v) = o.u {
            self.u = v;
        }
        if let Some(v) = o.pilot {
            self.pilot = v;
        }
        if let Some(v) = o.quantile_window {
            self.quantile_window = v;
        }
        if let Some(v) = o.threshold_refresh {
            self.threshold_refresh = v;
        }
        if let Some(v) = o.n {
            self.n = v;
        }
        if let Some(v) = o.burn_in {
            self.burn_in = Some(v);
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.k {
            self.k = v;
        }
        if let Some(v) = o.p1 {
            self.p1 = v;
        }
        if let Some(v) = o.p2 {
            self.p2 = v;
        }
        if let Some(v) = o.target_radius {
            self.target_radius = v;
        }
        if let Some(v) = o.coeff_seed {
            self.coeff_seed = v;
        }
        if let Some(v) = &o.noise {
            self.noise = NoiseFamily::parse(v)?;
        }
        if let Some(v) = o.df {
            self.df = Some(v);
        }
        if let Some(v) = &o.cadence {
            self.cadence = RecordCadence::parse(v)?;
        }
        if let Some(v) = o.period {
            self.period = v;
        }
        if let Some(v) = o.p2_seasonal {
            self.p2_seasonal = v;
        }
        if let Some(v) = &o.timestamp_column {
            self.timestamp_column = v.clone();
        }
        if let Some(v) = &o.policy {
            self.policy = MissingPolicy::parse(v)?;
        }
        Ok(())
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        let mut cfg = SamplerConfig::new(self.mode, self.q, self.q0, self.u, self.pilot)?;
        cfg.quantile_window = self.quantile_window;
        cfg.threshold_refresh = self.threshold_refresh;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full resolved dump in the file format, for manifests and reruns.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("mode = {}\n", self.mode.as_str()));
        s.push_str(&format!("q = {}\n", self.q));
        s.push_str(&format!("q0 = {}\n", self.q0));
        s.push_str(&format!("u = {}\n", self.u));
        s.push_str(&format!("pilot = {}\n", self.pilot));
        s.push_str(&format!("quantile_window = {}\n", self.quantile_window));
        s.push_str(&format!("threshold_refresh = {}\n", self.threshold_refresh));
        s.push_str(&format!("n = {}\n", self.n));
        if let Some(b) = self.burn_in {
            s.push_str(&format!("burn_in = {b}\n"));
        }
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("k = {}\n", self.k));
        s.push_str(&format!("p1 = {}\n", self.p1));
        s.push_str(&format!("p2 = {}\n", self.p2));
        s.push_str(&format!("target_radius = {}\n", self.target_radius));
        s.push_str(&format!("coeff_seed = {}\n", self.coeff_seed));
        s.push_str(&format!("noise = {}\n", self.noise.as_str()));
        if let Some(df) = self.df {
            s.push_str(&format!("df = {df}\n"));
        }
        let cadence = match self.cadence {
            RecordCadence::EveryStep => "every_step",
            RecordCadence::EveryUpdate => "every_update",
        };
        s.push_str(&format!("cadence = {cadence}\n"));
        s.push_str(&format!("period = {}\n", self.period));
        s.push_str(&format!("p2_seasonal = {}\n", self.p2_seasonal));
        s.push_str(&format!("timestamp_column = {}\n", self.timestamp_column));
        let policy = match self.policy {
            MissingPolicy::Fail => "fail",
            MissingPolicy::DropRow => "drop_row",
            MissingPolicy::ForwardFill => "forward_fill",
        };
        s.push_str(&format!("policy = {policy}\n"));
        s
    }
}
