use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::softmax::PredictionMode;

use super::sampler::SamplerKind;

/// Parameters shared by training runs and the experiments built on them.
///
/// Serialized as flat `key=value` lines; `#` starts a comment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub d: usize,
    pub num_queries: usize,
    /// Training examples per epoch (the size of the training set).
    pub examples_per_epoch: usize,
    pub eval_examples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub samplers: Vec<SamplerKind>,
    pub m: Vec<usize>,
    pub seed: u64,
    /// Runs per configuration, with seeds `seed, seed + 1, ...`.
    pub seeds: usize,
    pub eval_every: usize,
    /// `None` picks per sampler: absolute for even polynomial kernels.
    pub prediction_mode: Option<PredictionMode>,
    /// Ground-truth logits are `<u, v> / temperature`.
    pub temperature: f64,
    pub init_scale: f64,
    /// `0` means `max(1, D / d)`.
    pub leaf_capacity: usize,
    /// Compare the incremental tree against a rebuild every this many
    /// epochs; `0` disables.
    pub audit_every: usize,
    pub stop_on_plateau: bool,
    pub plateau_window: usize,
    pub plateau_tolerance: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 1000,
            d: 8,
            num_queries: 20,
            examples_per_epoch: 20_000,
            eval_examples: 4_000,
            epochs: 20,
            batch_size: 1,
            learning_rate: 0.02,
            samplers: vec![
                SamplerKind::Uniform,
                "quadratic:100".parse().unwrap(),
                SamplerKind::Softmax,
            ],
            m: vec![5, 10, 20, 40, 80, 160],
            seed: 0,
            seeds: 3,
            eval_every: 1,
            prediction_mode: None,
            temperature: 1.0,
            init_scale: 0.1,
            leaf_capacity: 0,
            audit_every: 0,
            stop_on_plateau: true,
            plateau_window: 5,
            plateau_tolerance: 1e-4,
        }
    }
}

pub const KEYS: &[&str] = &[
    "n",
    "d",
    "num_queries",
    "examples_per_epoch",
    "eval_examples",
    "epochs",
    "batch_size",
    "learning_rate",
    "samplers",
    "m",
    "seed",
    "seeds",
    "eval_every",
    "prediction_mode",
    "temperature",
    "init_scale",
    "leaf_capacity",
    "audit_every",
    "stop_on_plateau",
    "plateau_window",
    "plateau_tolerance",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value for `{key}`: `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "n" => self.n = parse(key, value)?,
            "d" => self.d = parse(key, value)?,
            "num_queries" => self.num_queries = parse(key, value)?,
            "examples_per_epoch" => self.examples_per_epoch = parse(key, value)?,
            "eval_examples" => self.eval_examples = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "samplers" => {
                self.samplers = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "m" => self.m = parse_list(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "seeds" => self.seeds = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "prediction_mode" => {
                self.prediction_mode = match value.trim() {
                    "auto" => None,
                    other => Some(other.parse()?),
                }
            }
            "temperature" => self.temperature = parse(key, value)?,
            "init_scale" => self.init_scale = parse(key, value)?,
            "leaf_capacity" => self.leaf_capacity = parse(key, value)?,
            "audit_every" => self.audit_every = parse(key, value)?,
            "stop_on_plateau" => self.stop_on_plateau = parse(key, value)?,
            "plateau_window" => self.plateau_window = parse(key, value)?,
            "plateau_tolerance" => self.plateau_tolerance = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of `self`.
    pub fn merge_kv(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.merge_kv(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mode = self
            .prediction_mode
            .map_or_else(|| "auto".to_string(), |m| m.to_string());
        let pairs: [(&str, String); 21] = [
            ("n", self.n.to_string()),
            ("d", self.d.to_string()),
            ("num_queries", self.num_queries.to_string()),
            ("examples_per_epoch", self.examples_per_epoch.to_string()),
            ("eval_examples", self.eval_examples.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("samplers", join(&self.samplers)),
            ("m", join(&self.m)),
            ("seed", self.seed.to_string()),
            ("seeds", self.seeds.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("prediction_mode", mode),
            ("temperature", self.temperature.to_string()),
            ("init_scale", self.init_scale.to_string()),
            ("leaf_capacity", self.leaf_capacity.to_string()),
            ("audit_every", self.audit_every.to_string()),
            ("stop_on_plateau", self.stop_on_plateau.to_string()),
            ("plateau_window", self.plateau_window.to_string()),
            ("plateau_tolerance", self.plateau_tolerance.to_string()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n", self.n),
            ("d", self.d),
            ("num_queries", self.num_queries),
            ("examples_per_epoch", self.examples_per_epoch),
            ("eval_examples", self.eval_examples),
            ("batch_size", self.batch_size),
            ("seeds", self.seeds),
            ("eval_every", self.eval_every),
            ("plateau_window", self.plateau_window),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{key}` must be positive")));
            }
        }
        for (key, v) in [
            ("learning_rate", self.learning_rate),
            ("temperature", self.temperature),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("`{key}` must be positive")));
            }
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::Config("`init_scale` must be nonnegative".into()));
        }
        if self.m.is_empty() {
            return Err(Error::Config("`m` must list at least one sample size".into()));
        }
        if self.m.contains(&0) {
            return Err(Error::Config("`m` entries must be at least 1".into()));
        }
        if self.samplers.is_empty() {
            return Err(Error::Config("`samplers` must not be empty".into()));
        }
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|k| self.seed.wrapping_add(k)).collect()
    }

    pub fn mode_for(&self, sampler: &SamplerKind) -> PredictionMode {
        self.prediction_mode
            .unwrap_or_else(|| sampler.default_mode())
    }
}
