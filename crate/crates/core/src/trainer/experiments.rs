//! Bias and convergence experiments.
//!
//! Both compare sampled-softmax training against full-softmax training on
//! the same synthetic data. The dataset is generated once from
//! `config.seed`; every configuration then runs once per seed in
//! `config.seed_list()`, where a seed fixes the initialization, the example
//! order and the sampling stream.
//!
//! The noise band of a baseline is `max_s |loss_s - mean|` over its seeds.
//! A full-softmax baseline is trained for each prediction mode in use and
//! every sampler is judged against the baseline of its own mode.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::softmax::PredictionMode;

use super::config::ExperimentConfig;
use super::data::generate_synthetic;
use super::sampler::SamplerKind;
use super::train::{train, MetricsRow, MetricsTable, RunSpec, TrainOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct BiasRecord {
    pub run: RunSpec,
    pub best_eval_loss: f64,
    pub final_eval_loss: f64,
    pub final_train_loss: f64,
    pub epochs_run: usize,
    pub wall_ms: u64,
}

impl BiasRecord {
    fn from_outcome(run: RunSpec, out: &TrainOutcome) -> Self {
        BiasRecord {
            run,
            best_eval_loss: out.best_eval_loss,
            final_eval_loss: out.final_eval_loss,
            final_train_loss: out.final_train_loss,
            epochs_run: out.epochs_run,
            wall_ms: out.wall_ms,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BiasTable {
    pub records: Vec<BiasRecord>,
}

impl BiasTable {
    /// One row per run: `epoch` is the number of epochs run, `eval_loss` the
    /// best full-softmax eval loss, `train_loss` the last epoch's sampled
    /// loss and `wall_ms` the run's training time.
    pub fn to_metrics(&self) -> MetricsTable {
        MetricsTable {
            rows: self
                .records
                .iter()
                .map(|r| MetricsRow {
                    epoch: r.epochs_run,
                    sampler: r.run.label(),
                    m: r.run.m,
                    seed: r.run.seed,
                    train_loss: r.final_train_loss,
                    eval_loss: r.best_eval_loss,
                    wall_ms: r.wall_ms,
                })
                .collect(),
        }
    }

    pub fn analyze(&self) -> BiasAnalysis {
        let mut baselines: Vec<Baseline> = Vec::new();
        let mut curves: Vec<SamplerCurve> = Vec::new();
        for r in &self.records {
            let loss = r.best_eval_loss;
            if r.run.sampler == SamplerKind::Full {
                match baselines.iter_mut().find(|b| b.mode == r.run.mode) {
                    Some(b) => b.losses.push(loss),
                    None => baselines.push(Baseline {
                        mode: r.run.mode,
                        losses: vec![loss],
                    }),
                }
                continue;
            }
            let label = r.run.label();
            let curve = match curves.iter_mut().position(|c| c.label == label) {
                Some(i) => &mut curves[i],
                None => {
                    curves.push(SamplerCurve {
                        label,
                        sampler: r.run.sampler,
                        mode: r.run.mode,
                        points: Vec::new(),
                    });
                    curves.last_mut().unwrap()
                }
            };
            match curve.points.iter_mut().find(|p| p.m == r.run.m) {
                Some(p) => p.losses.push(loss),
                None => curve.points.push(CurvePoint {
                    m: r.run.m,
                    losses: vec![loss],
                }),
            }
        }
        for c in &mut curves {
            c.points.sort_by_key(|p| p.m);
        }
        BiasAnalysis { baselines, curves }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// `max_s |x_s - mean|`.
pub fn noise_band(values: &[f64]) -> f64 {
    let mu = mean(values);
    values.iter().map(|v| (v - mu).abs()).fold(0.0, f64::max)
}

/// Full-softmax losses for one prediction mode, one per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub mode: PredictionMode,
    pub losses: Vec<f64>,
}

impl Baseline {
    pub fn mean(&self) -> f64 {
        mean(&self.losses)
    }

    pub fn band(&self) -> f64 {
        noise_band(&self.losses)
    }

    pub fn contains(&self, loss: f64) -> bool {
        (loss - self.mean()).abs() <= self.band()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub m: usize,
    pub losses: Vec<f64>,
}

impl CurvePoint {
    pub fn mean(&self) -> f64 {
        mean(&self.losses)
    }
}

/// Seed-averaged final loss of one sampler as a function of `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerCurve {
    pub label: String,
    pub sampler: SamplerKind,
    pub mode: PredictionMode,
    pub points: Vec<CurvePoint>,
}

impl SamplerCurve {
    pub fn means(&self) -> Vec<(usize, f64)> {
        self.points.iter().map(|p| (p.m, p.mean())).collect()
    }

    /// `max_m mean - min_m mean`.
    pub fn spread(&self) -> f64 {
        let means: Vec<f64> = self.points.iter().map(CurvePoint::mean).collect();
        let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }

    /// All means fit inside one band-wide window (`± band`).
    pub fn is_flat(&self, band: f64) -> bool {
        self.spread() <= 2.0 * band
    }

    /// Each mean is at most `band` above the one at the next smaller `m`.
    pub fn is_non_increasing(&self, band: f64) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].mean() <= w[0].mean() + band)
    }

    /// Smallest `m` whose mean lies inside the baseline's band.
    pub fn entry_m(&self, baseline: &Baseline) -> Option<usize> {
        self.points
            .iter()
            .find(|p| baseline.contains(p.mean()))
            .map(|p| p.m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasAnalysis {
    pub baselines: Vec<Baseline>,
    pub curves: Vec<SamplerCurve>,
}

impl BiasAnalysis {
    pub fn baseline(&self, mode: PredictionMode) -> Option<&Baseline> {
        self.baselines.iter().find(|b| b.mode == mode)
    }

    pub fn curve(&self, sampler: &SamplerKind) -> Option<&SamplerCurve> {
        self.curves.iter().find(|c| &c.sampler == sampler)
    }

    pub fn baseline_for(&self, curve: &SamplerCurve) -> Option<&Baseline> {
        self.baseline(curve.mode)
    }
}

fn baseline_modes(config: &ExperimentConfig) -> Vec<PredictionMode> {
    let mut modes = Vec::new();
    for s in &config.samplers {
        let mode = config.mode_for(s);
        if !modes.contains(&mode) {
            modes.push(mode);
        }
    }
    modes
}

/// Trains every `(sampler, m, seed)` to the epoch budget (or plateau) and
/// records the best full-softmax eval loss, plus full-softmax baselines.
pub fn run_bias_experiment(config: &ExperimentConfig) -> Result<BiasTable> {
    run_bias_experiment_with(config, |_| {})
}

/// Like [`run_bias_experiment`], calling `progress` after each run.
pub fn run_bias_experiment_with(
    config: &ExperimentConfig,
    mut progress: impl FnMut(&BiasRecord),
) -> Result<BiasTable> {
    config.validate()?;
    let mut table = BiasTable::default();
    let data = generate_synthetic(config, config.seed)?;
    for seed in config.seed_list() {
        let mut runs: Vec<RunSpec> = baseline_modes(config)
            .into_iter()
            .map(|mode| RunSpec {
                sampler: SamplerKind::Full,
                m: 0,
                seed,
                mode,
            })
            .collect();
        for sampler in config.samplers.iter().filter(|s| **s != SamplerKind::Full) {
            for &m in &config.m {
                runs.push(RunSpec::new(config, *sampler, m, seed));
            }
        }
        for run in runs {
            let out = train(config, &data, &run)?;
            let record = BiasRecord::from_outcome(run, &out);
            progress(&record);
            table.records.push(record);
        }
    }
    Ok(table)
}

/// Per-epoch curves at a fixed `m` for every sampler and seed, plus the
/// full-softmax baselines. Plateau stopping is disabled so every curve has
/// the same length.
pub fn run_convergence_experiment(config: &ExperimentConfig, m: usize) -> Result<MetricsTable> {
    run_convergence_experiment_with(config, m, |_| {})
}

pub fn run_convergence_experiment_with(
    config: &ExperimentConfig,
    m: usize,
    mut progress: impl FnMut(&RunSpec),
) -> Result<MetricsTable> {
    let config = ExperimentConfig {
        stop_on_plateau: false,
        m: vec![m],
        ..config.clone()
    };
    config.validate()?;
    let mut table = MetricsTable::default();
    let data = generate_synthetic(&config, config.seed)?;
    for seed in config.seed_list() {
        let mut runs: Vec<RunSpec> = baseline_modes(&config)
            .into_iter()
            .map(|mode| RunSpec {
                sampler: SamplerKind::Full,
                m: 0,
                seed,
                mode,
            })
            .collect();
        runs.extend(
            config
                .samplers
                .iter()
                .filter(|s| **s != SamplerKind::Full)
                .map(|s| RunSpec::new(&config, *s, m, seed)),
        );
        for run in runs {
            let out = train(&config, &data, &run)?;
            progress(&run);
            table.extend(out.table);
        }
    }
    Ok(table)
}

/// Seed-averaged eval curves keyed by `(sampler label, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCurves {
    /// `(label, m) -> epoch -> losses over seeds`
    pub curves: BTreeMap<(String, usize), BTreeMap<usize, Vec<f64>>>,
}

impl ConvergenceCurves {
    pub fn from_table(table: &MetricsTable) -> Self {
        let mut curves: BTreeMap<(String, usize), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
        for r in &table.rows {
            curves
                .entry((r.sampler.clone(), r.m))
                .or_default()
                .entry(r.epoch)
                .or_default()
                .push(r.eval_loss);
        }
        ConvergenceCurves { curves }
    }

    /// `(epoch, mean loss)` in epoch order.
    pub fn mean_curve(&self, label: &str, m: usize) -> Option<Vec<(usize, f64)>> {
        self.curves
            .get(&(label.to_string(), m))
            .map(|c| c.iter().map(|(&e, v)| (e, mean(v))).collect())
    }

    /// `(epoch, noise band)` of the curve over seeds.
    pub fn band_curve(&self, label: &str, m: usize) -> Option<Vec<(usize, f64)>> {
        self.curves
            .get(&(label.to_string(), m))
            .map(|c| c.iter().map(|(&e, v)| (e, noise_band(v))).collect())
    }
}
