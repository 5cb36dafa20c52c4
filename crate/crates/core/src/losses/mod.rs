//! Metric-learning losses and the cross-modal objectives built on them.
//!
//! Every loss returns its value together with the gradient with respect to
//! each input embedding. Similarity is the dot product of unit vectors.

mod histogram;
mod multisim;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

pub use histogram::{histogram_loss, HistogramConfig};
pub use multisim::{mine, multisim_loss, multisim_loss_with_mining, Mining, MultiSimConfig};

use crate::error::{Error, Result};
use crate::numcore::norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Video,
    Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub embedding: Vec<f64>,
    pub class_id: u32,
    pub modality: Modality,
}

impl BatchItem {
    pub fn video(embedding: Vec<f64>, class_id: u32) -> Self {
        Self { embedding, class_id, modality: Modality::Video }
    }

    pub fn label(embedding: Vec<f64>, class_id: u32) -> Self {
        Self { embedding, class_id, modality: Modality::Label }
    }
}

/// Unit-norm embeddings of equal dimension, each tagged with a class.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    items: Vec<BatchItem>,
    dim: usize,
}

const UNIT_TOLERANCE: f64 = 1e-6;

impl EmbeddingBatch {
    pub fn new(items: Vec<BatchItem>) -> Result<Self> {
        let dim = items.first().map_or(0, |i| i.embedding.len());
        for (k, it) in items.iter().enumerate() {
            if it.embedding.len() != dim {
                return Err(Error::Dimension(format!(
                    "batch item {k} has dimension {}, expected {dim}",
                    it.embedding.len()
                )));
            }
            let n = norm(&it.embedding);
            if !n.is_finite() {
                return Err(Error::NonFinite(format!("batch item {k}")));
            }
            if (n - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::Precondition(format!("batch item {k} has norm {n}, expected 1")));
            }
        }
        Ok(Self { items, dim })
    }

    pub fn items(&self) -> &[BatchItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `self ∪ other`, keeping item order (self first).
    pub fn union(&self, other: &EmbeddingBatch) -> Result<EmbeddingBatch> {
        let mut items = self.items.clone();
        items.extend(other.items.iter().cloned());
        EmbeddingBatch::new(items)
    }
}

/// Video embeddings paired with the label embedding of their class.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedBatch {
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

impl PairedBatch {
    pub fn new(pairs: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let dim = pairs.first().map_or(0, |p| p.0.len());
        for (k, (v, l)) in pairs.iter().enumerate() {
            if v.len() != dim || l.len() != dim {
                return Err(Error::Dimension(format!(
                    "pair {k}: video dim {}, label dim {}, expected {dim}",
                    v.len(),
                    l.len()
                )));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    /// One gradient per batch item, in batch order.
    pub grads: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DmlKind {
    Histogram,
    MultiSim,
}

impl fmt::Display for DmlKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DmlKind::Histogram => "histogram",
            DmlKind::MultiSim => "multisim",
        })
    }
}

impl FromStr for DmlKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "histogram" => Ok(DmlKind::Histogram),
            "multisim" | "multi-sim" => Ok(DmlKind::MultiSim),
            _ => Err(Error::Config(format!("unknown metric loss {s:?} (expected histogram or multisim)"))),
        }
    }
}

/// A configured metric-learning loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricLoss {
    Histogram(HistogramConfig),
    MultiSim(MultiSimConfig),
}

impl MetricLoss {
    pub fn kind(&self) -> DmlKind {
        match self {
            MetricLoss::Histogram(_) => DmlKind::Histogram,
            MetricLoss::MultiSim(_) => DmlKind::MultiSim,
        }
    }

    pub fn evaluate(&self, batch: &EmbeddingBatch) -> Result<LossOutput> {
        match self {
            MetricLoss::Histogram(c) => histogram_loss(batch, c),
            MetricLoss::MultiSim(c) => multisim_loss(batch, c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedLossOutput {
    pub value: f64,
    pub video_grads: Vec<Vec<f64>>,
    pub label_grads: Vec<Vec<f64>>,
}

/// Mean over pairs of `‖video − label‖²`.
pub fn alignment_mse(paired: &PairedBatch) -> Result<PairedLossOutput> {
    if paired.is_empty() {
        return Err(Error::Degenerate("alignment loss over an empty batch".into()));
    }
    let w = 1.0 / paired.len() as f64;
    let mut value = 0.0;
    let mut video_grads = Vec::with_capacity(paired.len());
    let mut label_grads = Vec::with_capacity(paired.len());
    for (v, l) in paired.pairs() {
        let diff: Vec<f64> = v.iter().zip(l).map(|(a, b)| a - b).collect();
        value += w * diff.iter().map(|d| d * d).sum::<f64>();
        video_grads.push(diff.iter().map(|d| 2.0 * w * d).collect());
        label_grads.push(diff.iter().map(|d| -2.0 * w * d).collect());
    }
    Ok(PairedLossOutput { value, video_grads, label_grads })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeLossOutput {
    pub value: f64,
    /// `None` when the metric term is switched off (`lambda = 0`).
    pub dml: Option<f64>,
    pub alignment: f64,
    /// Gradients for the items of the video batch (all zero when `lambda = 0`).
    pub video_grads: Vec<Vec<f64>>,
    /// Gradients for the video side of each pair.
    pub paired_grads: Vec<Vec<f64>>,
}

/// `lambda · dml(video) + alignment_mse(paired)`. The metric term is skipped
/// entirely, including its batch preconditions, when `lambda` is zero.
pub fn we_loss(
    video: &EmbeddingBatch,
    paired: &PairedBatch,
    lambda: f64,
    dml: &MetricLoss,
) -> Result<WeLossOutput> {
    let align = alignment_mse(paired)?;
    let (dml_value, video_grads) = if lambda == 0.0 {
        (None, vec![vec![0.0; video.dim()]; video.len()])
    } else {
        let out = dml.evaluate(video)?;
        let g = out
            .grads
            .into_iter()
            .map(|g| g.into_iter().map(|x| lambda * x).collect())
            .collect();
        (Some(out.value), g)
    };
    Ok(WeLossOutput {
        value: lambda * dml_value.unwrap_or(0.0) + align.value,
        dml: dml_value,
        alignment: align.value,
        video_grads,
        paired_grads: align.video_grads,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JeLossOutput {
    pub value: f64,
    pub video_grads: Vec<Vec<f64>>,
    pub label_grads: Vec<Vec<f64>>,
}

/// Metric loss over the union of video and projected-label embeddings, with
/// exactly one label item per class.
pub fn je_loss(video: &EmbeddingBatch, labels: &EmbeddingBatch, dml: &MetricLoss) -> Result<JeLossOutput> {
    let mut seen = BTreeSet::new();
    for it in labels.items() {
        if !seen.insert(it.class_id) {
            return Err(Error::Precondition(format!(
                "label batch holds more than one item for class {}",
                it.class_id
            )));
        }
    }
    let joint = video.union(labels)?;
    let mut out = dml.evaluate(&joint)?;
    let label_grads = out.grads.split_off(video.len());
    Ok(JeLossOutput {
        value: out.value,
        video_grads: out.grads,
        label_grads,
    })
}
