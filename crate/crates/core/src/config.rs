//! Flat `key = value` run configuration shared by all commands.
//!
//! ```text
//! # comment
//! synth.seed = 3
//! train.method = JE
//! eval.episodes = 500
//! ```

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::data::SynthConfig;
use crate::episodic::{EvalSpec, Task};
use crate::error::{Error, Result};
use crate::losses::{DmlKind, HistogramConfig, MetricLoss, MultiSimConfig};
use crate::model::{Method, ModelConfig};
use crate::splits::SplitSpec;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSettings {
    pub spec: SplitSpec,
    /// Number of splits, seeded `seed, seed + 1, ...`.
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSettings {
    pub hidden: usize,
    /// Ignored for WE, whose embedding lives in the label space.
    pub embed_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub task: Task,
    pub spec: EvalSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub split: SplitSettings,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub dml: DmlKind,
    pub histogram: HistogramConfig,
    pub multisim: MultiSimConfig,
    pub eval: EvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            split: SplitSettings {
                spec: SplitSpec::default(),
                count: 1,
            },
            model: ModelSettings {
                hidden: 64,
                embed_dim: 32,
            },
            train: TrainConfig::default(),
            dml: DmlKind::MultiSim,
            histogram: HistogramConfig::default(),
            multisim: MultiSimConfig::default(),
            eval: EvalSettings {
                task: Task::Fsg,
                spec: EvalSpec::default(),
            },
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

macro_rules! run_config_keys {
    ($($key:literal => $($field:ident).+),* $(,)?) => {
        /// Every recognized key, in echo order.
        pub const KEYS: &[&str] = &[$($key),*];

        impl RunConfig {
            /// Sets one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => self $(.$field)+ = parse_value(key, value)?,)*
                    _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
                }
                Ok(())
            }

            /// `(key, value)` for every key.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, self $(.$field)+ .to_string())),*]
            }
        }
    };
}

run_config_keys! {
    "synth.n_verbs" => synth.n_verbs,
    "synth.n_nouns" => synth.n_nouns,
    "synth.class_density" => synth.class_density,
    "synth.instances_min" => synth.instances_min,
    "synth.instances_max" => synth.instances_max,
    "synth.d_latent" => synth.d_latent,
    "synth.d_in" => synth.d_in,
    "synth.frames" => synth.frames,
    "synth.d_label" => synth.d_label,
    "synth.sigma_frame" => synth.sigma_frame,
    "synth.sigma_instance" => synth.sigma_instance,
    "synth.seed" => synth.seed,
    "split.verb_lower" => split.spec.verb_lower,
    "split.verb_upper" => split.spec.verb_upper,
    "split.noun_lower" => split.spec.noun_lower,
    "split.noun_upper" => split.spec.noun_upper,
    "split.held_verbs" => split.spec.held_verbs,
    "split.held_nouns" => split.spec.held_nouns,
    "split.verb_test_frac" => split.spec.verb_test_frac,
    "split.noun_test_frac" => split.spec.noun_test_frac,
    "split.seed" => split.spec.seed,
    "split.count" => split.count,
    "model.hidden" => model.hidden,
    "model.embed_dim" => model.embed_dim,
    "train.method" => train.method,
    "train.dml" => dml,
    "train.lambda" => train.lambda,
    "train.lr0" => train.lr0,
    "train.decay_factor" => train.decay_factor,
    "train.decay_every" => train.decay_every,
    "train.val_every" => train.val_every,
    "train.val_batches" => train.val_batches,
    "train.max_batches" => train.max_batches,
    "train.patience" => train.patience,
    "train.batch_classes" => train.batch.classes,
    "train.batch_max_per_class" => train.batch.max_per_class,
    "train.batch_min_total" => train.batch.min_total,
    "train.batch_max_retries" => train.batch.max_retries,
    "train.seed" => train.seed,
    "train.histogram_bins" => histogram.bins,
    "train.multisim_alpha" => multisim.alpha,
    "train.multisim_beta" => multisim.beta,
    "train.multisim_lambda" => multisim.lambda,
    "train.multisim_margin" => multisim.margin,
    "train.adam_beta1" => train.adam.beta1,
    "train.adam_beta2" => train.adam.beta2,
    "train.adam_epsilon" => train.adam.epsilon,
    "eval.task" => eval.task,
    "eval.n" => eval.spec.episode.n,
    "eval.k" => eval.spec.episode.k,
    "eval.m" => eval.spec.episode.m,
    "eval.episodes" => eval.spec.episodes,
    "eval.seed" => eval.spec.seed,
}

/// Splits `key=value` into trimmed halves.
pub fn split_assignment(s: &str) -> Option<(&str, &str)> {
    let (k, v) = s.split_once('=')?;
    Some((k.trim(), v.trim()))
}

impl RunConfig {
    /// Applies every assignment in `text` on top of `self`. Keys may appear once.
    pub fn merge_text(&mut self, text: &str, path: &Path) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (k, v) = split_assignment(line).ok_or_else(|| parse_err(format!("expected key = value, got {line:?}")))?;
            if !seen.insert(k.to_string()) {
                return Err(parse_err(format!("key {k:?} set twice")));
            }
            self.set(k, v).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut cfg = Self::default();
        cfg.merge_text(&text, path)?;
        Ok(cfg)
    }

    /// Fully resolved configuration, one `key = value` line per key. Parsing
    /// the result reproduces `self`.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn metric_loss(&self) -> MetricLoss {
        match self.dml {
            DmlKind::Histogram => MetricLoss::Histogram(self.histogram),
            DmlKind::MultiSim => MetricLoss::MultiSim(self.multisim),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            dml: self.metric_loss(),
            ..self.train
        }
    }

    pub fn model_config(&self, d_in: usize, label_dim: usize) -> ModelConfig {
        let method = self.train.method;
        ModelConfig {
            method,
            d_in,
            hidden: self.model.hidden,
            embed_dim: if method == Method::WE { label_dim } else { self.model.embed_dim },
            label_dim,
        }
    }
}
