//! Optimization loop: class-grouped batches, per-method loss, stepped
//! learning-rate decay, periodic validation on validation classes, and
//! best-checkpoint selection with patience.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::episodic::{sample_training_batch, BatchSpec, TrainingBatch};
use crate::error::{Error, Result};
use crate::losses::{
    je_loss, we_loss, BatchItem, EmbeddingBatch, HistogramConfig, MetricLoss, MultiSimConfig,
    PairedBatch,
};
use crate::model::{EmbeddingModel, LabelTrace, Method, VideoTrace};
use crate::numcore::{AdamConfig, AdamState};
use crate::splits::SplitResult;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub dml: MetricLoss,
    /// Weight of the metric term in the WE objective.
    pub lambda: f64,
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub val_every: usize,
    pub val_batches: usize,
    pub max_batches: usize,
    pub patience: usize,
    pub batch: BatchSpec,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::VE,
            dml: MetricLoss::MultiSim(MultiSimConfig::default()),
            lambda: 0.0,
            lr0: 1e-3,
            decay_factor: 0.8,
            decay_every: 1000,
            val_every: 100,
            val_batches: 50,
            max_batches: 5000,
            patience: 1500,
            batch: BatchSpec::default(),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Full-scale schedule: lr 1e-5 decayed by 0.8 every 15000 batches,
    /// validation every 500 batches over 250 batches, at most 75000 batches.
    pub fn full_scale(method: Method, dml: MetricLoss) -> Self {
        Self {
            method,
            dml,
            lr0: 1e-5,
            decay_every: 15000,
            val_every: 500,
            val_batches: 250,
            max_batches: 75000,
            patience: 15000,
            ..Self::default()
        }
    }

    pub fn histogram(method: Method) -> Self {
        Self {
            method,
            dml: MetricLoss::Histogram(HistogramConfig::default()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("decay_every", self.decay_every),
            ("val_every", self.val_every),
            ("val_batches", self.val_batches),
            ("patience", self.patience),
            ("batch.classes", self.batch.classes),
            ("batch.max_per_class", self.batch.max_per_class),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(format!("decay_factor {} outside (0, 1]", self.decay_factor)));
        }
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("lr0 {} must be finite and non-negative", self.lr0)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda {} must be finite and non-negative", self.lambda)));
        }
        Ok(())
    }
}

/// `lr0 · decay_factor^⌊step / decay_every⌋`.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> f64 {
    let k = (step / cfg.decay_every.max(1)) as i32;
    cfg.lr0 * cfg.decay_factor.powi(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxBatches,
    Patience,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxBatches => "max",
            StopReason::Patience => "patience",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    /// `(step, training loss)`; step counts completed updates, from 1.
    pub losses: Vec<(usize, f64)>,
    /// `(step, mean validation loss)`.
    pub validations: Vec<(usize, f64)>,
    pub best_step: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub stop_reason: StopReason,
    /// Training batches redrawn because the loss was undefined on them.
    pub degenerate_resamples: usize,
    /// Why validation was not run, if it was not.
    pub validation_skipped: Option<String>,
}

pub const TRAIN_LOG_HEADER: &str = "kind,step,loss";

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAIN_LOG_HEADER);
        out.push('\n');
        for (s, l) in &self.losses {
            out.push_str(&format!("train,{s},{l}\n"));
        }
        for (s, l) in &self.validations {
            out.push_str(&format!("val,{s},{l}\n"));
        }
        out
    }

    /// `key=value` lines describing how training ended.
    pub fn summary(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        format!(
            "steps={}\nstop_reason={}\nbest_step={}\nbest_val_loss={}\ndegenerate_resamples={}\nvalidation={}\n",
            self.losses.len(),
            self.stop_reason,
            opt(self.best_step.map(|s| s.to_string())),
            opt(self.best_val_loss.map(|l| l.to_string())),
            self.degenerate_resamples,
            self.validation_skipped.as_deref().unwrap_or("enabled"),
        )
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ctx = || format!("writing {}", path.display());
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(ctx(), e))?);
        w.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(ctx(), e))?;
        w.flush().map_err(|e| Error::io(ctx(), e))
    }
}

/// Loss of `model` on one batch. With `backprop`, gradients are accumulated
/// into the model.
fn batch_loss(
    model: &mut EmbeddingModel,
    dataset: &Dataset,
    batch: &TrainingBatch,
    cfg: &TrainConfig,
    backprop: bool,
) -> Result<f64> {
    let members: Vec<(u32, usize)> = batch.members().collect();
    let frozen: &EmbeddingModel = model;
    let traces: Vec<VideoTrace<'_>> = members
        .iter()
        .map(|&(_, i)| frozen.embed_video(dataset.instance(i)))
        .collect::<Result<_>>()?;
    let video = EmbeddingBatch::new(
        traces
            .iter()
            .zip(&members)
            .map(|(t, &(c, _))| BatchItem::video(t.embedding().to_vec(), c))
            .collect(),
    )?;

    let label_of = |c: u32| {
        dataset
            .label_embedding(c)
            .ok_or_else(|| Error::Precondition(format!("class {c} has no label embedding")))
    };

    // Label traces and their gradients exist only for JE.
    type LabelPart = Option<(Vec<LabelTrace>, Vec<Vec<f64>>)>;
    let (value, video_grads, label_part): (f64, Vec<Vec<f64>>, LabelPart) =
        match cfg.method {
            Method::VE => {
                let out = cfg.dml.evaluate(&video)?;
                (out.value, out.grads, None)
            }
            Method::WE => {
                let pairs = traces
                    .iter()
                    .zip(&members)
                    .map(|(t, &(c, _))| Ok((t.embedding().to_vec(), label_of(c)?.to_vec())))
                    .collect::<Result<Vec<_>>>()?;
                let out = we_loss(&video, &PairedBatch::new(pairs)?, cfg.lambda, &cfg.dml)?;
                let grads = out
                    .video_grads
                    .iter()
                    .zip(&out.paired_grads)
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                    .collect();
                (out.value, grads, None)
            }
            Method::JE => {
                let label_traces: Vec<LabelTrace> = batch
                    .groups
                    .iter()
                    .map(|(c, _)| frozen.embed_label(label_of(*c)?))
                    .collect::<Result<_>>()?;
                let labels = EmbeddingBatch::new(
                    label_traces
                        .iter()
                        .zip(&batch.groups)
                        .map(|(t, (c, _))| BatchItem::label(t.embedding().to_vec(), *c))
                        .collect(),
                )?;
                let out = je_loss(&video, &labels, &cfg.dml)?;
                (out.value, out.video_grads, Some((label_traces, out.label_grads)))
            }
        };

    if !value.is_finite() {
        return Err(Error::NonFinite(format!(
            "{} loss is {value} on a batch of {} instances over {} classes",
            cfg.method,
            members.len(),
            batch.groups.len()
        )));
    }
    if backprop {
        for (t, g) in traces.iter().zip(&video_grads) {
            model.backward_video(t, g)?;
        }
        if let Some((label_traces, label_grads)) = label_part {
            for (t, g) in label_traces.iter().zip(&label_grads) {
                model.backward_label(t, g)?;
            }
        }
    }
    Ok(value)
}

/// Batch shape for validation: the class count is capped by the number of
/// validation classes and the minimum size shrinks in proportion.
fn validation_spec(spec: &BatchSpec, n_classes: usize) -> BatchSpec {
    let classes = spec.classes.min(n_classes);
    BatchSpec {
        classes,
        min_total: (spec.min_total * classes).div_ceil(spec.classes.max(1)),
        ..*spec
    }
}

fn mean_validation_loss(
    model: &mut EmbeddingModel,
    dataset: &Dataset,
    batches: &[TrainingBatch],
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut total = 0.0;
    let mut used = 0usize;
    for b in batches {
        match batch_loss(model, dataset, b, cfg, false) {
            Ok(v) => {
                total += v;
                used += 1;
            }
            Err(Error::Degenerate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::Degenerate("every validation batch was degenerate".into()));
    }
    Ok(total / used as f64)
}

/// Trains `model` on the split's training classes and returns the checkpoint
/// with the lowest validation loss (the final model when validation is not
/// possible) together with the log.
///
/// Validation runs every `val_every` updates on a fixed set of `val_batches`
/// batches drawn once from the validation classes. Training stops after
/// `max_batches` updates, or when the best validation loss is `patience` or
/// more updates old.
pub fn train(
    mut model: EmbeddingModel,
    dataset: &Dataset,
    split: &SplitResult,
    cfg: &TrainConfig,
) -> Result<(EmbeddingModel, TrainLog)> {
    cfg.validate()?;
    if model.method() != cfg.method {
        return Err(Error::Config(format!(
            "model was built for {}, training config says {}",
            model.method(),
            cfg.method
        )));
    }
    let train_classes: Vec<u32> = split.train.iter().copied().collect();
    if train_classes.len() < cfg.batch.classes {
        return Err(Error::Precondition(format!(
            "{} training classes, batches need {}",
            train_classes.len(),
            cfg.batch.classes
        )));
    }

    let val_classes: Vec<u32> = split.validation.iter().copied().collect();
    let mut validation_skipped = None;
    let mut val_set = Vec::new();
    if cfg.max_batches > 0 {
        if val_classes.len() < 2 {
            validation_skipped = Some(format!(
                "skipped: {} validation classes, at least 2 needed",
                val_classes.len()
            ));
        } else {
            let spec = validation_spec(&cfg.batch, val_classes.len());
            let mut vrng = ChaCha8Rng::seed_from_u64(cfg.seed);
            vrng.set_stream(1);
            val_set = (0..cfg.val_batches)
                .map(|_| sample_training_batch(dataset, &val_classes, &mut vrng, &spec))
                .collect::<Result<_>>()?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(cfg.adam, model.blocks());
    let mut log = TrainLog {
        losses: Vec::with_capacity(cfg.max_batches),
        validations: Vec::new(),
        best_step: None,
        best_val_loss: None,
        stop_reason: StopReason::MaxBatches,
        degenerate_resamples: 0,
        validation_skipped,
    };
    let mut best: Option<EmbeddingModel> = None;

    for step in 0..cfg.max_batches {
        let mut redraws = 0;
        let loss = loop {
            let batch = sample_training_batch(dataset, &train_classes, &mut rng, &cfg.batch)?;
            match batch_loss(&mut model, dataset, &batch, cfg, true) {
                Ok(v) => break v,
                Err(Error::Degenerate(msg)) => {
                    model.zero_grad();
                    log.degenerate_resamples += 1;
                    redraws += 1;
                    if redraws >= cfg.batch.max_retries.max(1) {
                        return Err(Error::Sampling(format!(
                            "{redraws} consecutive degenerate batches at step {step}: {msg}"
                        )));
                    }
                }
                Err(e) => return Err(e),
            }
        };
        let mut blocks = model.blocks_mut();
        adam.step(&mut blocks, lr_at(step, cfg))?;
        let done = step + 1;
        log.losses.push((done, loss));

        if !val_set.is_empty() && done % cfg.val_every == 0 {
            let v = mean_validation_loss(&mut model, dataset, &val_set, cfg)?;
            log.validations.push((done, v));
            if log.best_val_loss.is_none_or(|b| v < b) {
                log.best_val_loss = Some(v);
                log.best_step = Some(done);
                best = Some(model.clone());
            } else if done - log.best_step.unwrap_or(0) >= cfg.patience {
                log.stop_reason = StopReason::Patience;
                break;
            }
        }
    }

    Ok((best.unwrap_or(model), log))
}
