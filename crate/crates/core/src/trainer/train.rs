use std::io::{Read, Write};
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::kernels::dot;
use crate::rng;
use crate::softmax::{full_loss, full_loss_grad, Negative, PredictionMode, SampleBatch};

use super::config::ExperimentConfig;
use super::data::{Example, SyntheticDataset};
use super::sampler::{NegativeSampler, SamplerKind};

const INIT_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;

/// Largest incremental-vs-rebuilt summary gap tolerated by the tree audit.
pub const AUDIT_TOLERANCE: f64 = 1e-6;

/// `o_i = <w_i, h_q>` with a free embedding per query.
#[derive(Debug, Clone, PartialEq)]
pub struct DotModel {
    pub queries: EmbeddingMatrix,
    pub classes: EmbeddingMatrix,
}

impl DotModel {
    pub fn init(num_queries: usize, n: usize, d: usize, scale: f64, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, INIT_STREAM);
        Ok(DotModel {
            queries: EmbeddingMatrix::random_normal(num_queries, d, scale, &mut rng)?,
            classes: EmbeddingMatrix::random_normal(n, d, scale, &mut rng)?,
        })
    }

    pub fn logits(&self, query: usize) -> Vec<f64> {
        self.classes.logits(self.queries.row(query))
    }

    /// Mean full-softmax cross-entropy over `examples`.
    pub fn eval_loss(&self, examples: &[Example], mode: PredictionMode) -> f64 {
        let total: f64 = examples
            .iter()
            .map(|e| full_loss(&self.logits(e.query), e.label, mode))
            .sum();
        total / examples.len() as f64
    }
}

/// One training run: which sampler, how many negatives, which seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub sampler: SamplerKind,
    pub m: usize,
    pub seed: u64,
    pub mode: PredictionMode,
}

impl RunSpec {
    pub fn new(config: &ExperimentConfig, sampler: SamplerKind, m: usize, seed: u64) -> Self {
        RunSpec {
            sampler,
            m,
            seed,
            mode: config.mode_for(&sampler),
        }
    }

    /// The sampler name, suffixed with the prediction mode when it is not
    /// the sampler's default.
    pub fn label(&self) -> String {
        if self.mode == self.sampler.default_mode() {
            self.sampler.to_string()
        } else {
            format!("{}/{}", self.sampler, self.mode)
        }
    }
}

pub const CSV_HEADER: [&str; 7] = [
    "epoch",
    "sampler",
    "m",
    "seed",
    "train_loss",
    "eval_loss",
    "wall_ms",
];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub sampler: String,
    pub m: usize,
    pub seed: u64,
    pub train_loss: f64,
    pub eval_loss: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn extend(&mut self, other: MetricsTable) {
        self.rows.extend(other.rows);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.epoch.to_string(),
                r.sampler.clone(),
                r.m.to_string(),
                r.seed.to_string(),
                r.train_loss.to_string(),
                r.eval_loss.to_string(),
                r.wall_ms.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        if header != CSV_HEADER {
            return Err(Error::Format(format!("unexpected CSV header {header:?}")));
        }
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record?;
            let field = |i: usize| record.get(i).unwrap_or("");
            let num = |i: usize| -> Result<f64> {
                field(i)
                    .parse()
                    .map_err(|_| Error::Format(format!("bad number `{}`", field(i))))
            };
            let int = |i: usize| -> Result<u64> {
                field(i)
                    .parse()
                    .map_err(|_| Error::Format(format!("bad integer `{}`", field(i))))
            };
            rows.push(MetricsRow {
                epoch: int(0)? as usize,
                sampler: field(1).to_string(),
                m: int(2)? as usize,
                seed: int(3)?,
                train_loss: num(4)?,
                eval_loss: num(5)?,
                wall_ms: int(6)?,
            });
        }
        Ok(MetricsTable { rows })
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub table: MetricsTable,
    pub best_eval_loss: f64,
    pub final_eval_loss: f64,
    pub final_train_loss: f64,
    pub epochs_run: usize,
    pub wall_ms: u64,
    /// Largest tree drift seen by the periodic audit.
    pub max_audit_deviation: f64,
    pub model: DotModel,
}

/// Dense gradient accumulator that remembers which rows it touched.
struct RowGrads {
    d: usize,
    values: Vec<f64>,
    touched: Vec<bool>,
    order: Vec<usize>,
}

impl RowGrads {
    fn new(rows: usize, d: usize) -> Self {
        RowGrads {
            d,
            values: vec![0.0; rows * d],
            touched: vec![false; rows],
            order: Vec::new(),
        }
    }

    #[inline]
    fn add_scaled(&mut self, row: usize, scale: f64, v: &[f64]) {
        if !self.touched[row] {
            self.touched[row] = true;
            self.order.push(row);
        }
        for (g, x) in self.values[row * self.d..(row + 1) * self.d].iter_mut().zip(v) {
            *g += scale * x;
        }
    }

    /// Applies `row -= step * grad` for every touched row and calls `after`
    /// on each updated row.
    fn apply(
        &mut self,
        target: &mut EmbeddingMatrix,
        step: f64,
        mut after: impl FnMut(usize, &[f64]) -> Result<()>,
    ) -> Result<()> {
        let d = self.d;
        for &row in &self.order {
            let g = &mut self.values[row * d..(row + 1) * d];
            for (w, gi) in target.row_mut(row).iter_mut().zip(g.iter_mut()) {
                *w -= step * *gi;
                *gi = 0.0;
            }
            self.touched[row] = false;
            after(row, target.row(row))?;
        }
        self.order.clear();
        Ok(())
    }
}

/// Trains a fresh model with plain constant-step SGD.
///
/// Per batch, negatives are drawn for every example from the current
/// parameters, gradients are averaged, and only then are parameters and the
/// sampling tree updated. Eval always uses the full softmax loss. With
/// `config.epochs == 0` the returned table is empty.
pub fn train(config: &ExperimentConfig, data: &SyntheticDataset, run: &RunSpec) -> Result<TrainOutcome> {
    let n = data.n();
    let d = config.d;
    let mode = run.mode;
    let label = run.label();
    let mut model = DotModel::init(data.num_queries(), n, d, config.init_scale, run.seed)?;
    let mut sampler = NegativeSampler::new(
        &run.sampler,
        &model.classes,
        &data.train,
        mode,
        config.leaf_capacity,
    )?;
    let mut rng = rng::stream(run.seed, TRAIN_STREAM);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut class_grads = RowGrads::new(n, d);
    let mut query_grads = RowGrads::new(data.num_queries(), d);
    let mut draws: Vec<(usize, f64)> = Vec::with_capacity(run.m);
    let mut negatives: Vec<Negative> = Vec::with_capacity(run.m);
    let mut grad_h = vec![0.0; d];

    let start = Instant::now();
    let mut table = MetricsTable::default();
    let mut history: Vec<f64> = Vec::new();
    let mut final_train_loss = f64::NAN;
    let mut max_audit_deviation: f64 = 0.0;
    let mut epochs_run = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            for &idx in batch {
                let ex = data.train[idx];
                let h = model.queries.row(ex.query);
                grad_h.iter_mut().for_each(|g| *g = 0.0);
                let loss = if sampler.is_full() {
                    let o = model.classes.logits(h);
                    let (loss, g) = full_loss_grad(&o, ex.label, mode)?;
                    for (class, &gi) in g.iter().enumerate() {
                        class_grads.add_scaled(class, gi, h);
                        for (gh, w) in grad_h.iter_mut().zip(model.classes.row(class)) {
                            *gh += gi * w;
                        }
                    }
                    loss
                } else {
                    draws.clear();
                    sampler.draw(&model.classes, h, ex.label, run.m, &mut rng, &mut draws)?;
                    negatives.clear();
                    negatives.extend(draws.iter().map(|&(class, q)| Negative {
                        class,
                        q,
                        logit: mode.transform(dot(model.classes.row(class), h)),
                    }));
                    let positive_raw = dot(model.classes.row(ex.label), h);
                    let sample = SampleBatch::new(ex.label, mode.transform(positive_raw), &negatives)?;
                    for (class, g) in sample.class_gradients() {
                        let w = model.classes.row(class);
                        let gi = g * mode.derivative(dot(w, h));
                        class_grads.add_scaled(class, gi, h);
                        for (gh, wk) in grad_h.iter_mut().zip(w) {
                            *gh += gi * wk;
                        }
                    }
                    sample.loss()
                };
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch, loss });
                }
                loss_sum += loss;
                query_grads.add_scaled(ex.query, 1.0, &grad_h);
            }
            let step = config.learning_rate / batch.len() as f64;
            class_grads.apply(&mut model.classes, step, |class, w| {
                sampler.on_class_update(class, w)
            })?;
            query_grads.apply(&mut model.queries, step, |_, _| Ok(()))?;
        }
        epochs_run = epoch;
        final_train_loss = loss_sum / data.train.len() as f64;
        if !final_train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: final_train_loss,
            });
        }

        if config.audit_every > 0 && epoch % config.audit_every == 0 {
            if let Some(tree) = sampler.tree() {
                let deviation = tree.max_deviation(&tree.rebuilt());
                max_audit_deviation = max_audit_deviation.max(deviation);
                if deviation > AUDIT_TOLERANCE {
                    return Err(Error::TreeAudit { epoch, deviation });
                }
            }
        }

        if epoch % config.eval_every == 0 || epoch == config.epochs {
            let eval_loss = model.eval_loss(&data.eval, mode);
            if !eval_loss.is_finite() {
                return Err(Error::Diverged { epoch, loss: eval_loss });
            }
            table.rows.push(MetricsRow {
                epoch,
                sampler: label.clone(),
                m: run.m,
                seed: run.seed,
                train_loss: final_train_loss,
                eval_loss,
                wall_ms: start.elapsed().as_millis() as u64,
            });
            history.push(eval_loss);
            if config.stop_on_plateau && plateaued(&history, config.plateau_window, config.plateau_tolerance) {
                break;
            }
        }
    }

    let best_eval_loss = history.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(TrainOutcome {
        final_eval_loss: history.last().copied().unwrap_or(f64::NAN),
        best_eval_loss,
        final_train_loss,
        epochs_run,
        wall_ms: start.elapsed().as_millis() as u64,
        max_audit_deviation,
        table,
        model,
    })
}

/// True once the best loss improved by less than `tolerance` (relative)
/// over the last `window` evaluations.
pub fn plateaued(history: &[f64], window: usize, tolerance: f64) -> bool {
    if history.len() <= window {
        return false;
    }
    let split = history.len() - window;
    let before = history[..split].iter().copied().fold(f64::INFINITY, f64::min);
    let now = history.iter().copied().fold(f64::INFINITY, f64::min);
    (before - now) / before.abs().max(f64::MIN_POSITIVE) < tolerance
}
