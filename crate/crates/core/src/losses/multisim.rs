use super::{EmbeddingBatch, LossOutput};
use crate::error::Result;
use crate::numcore::dot;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiSimConfig {
    /// Positive-pair scale.
    pub alpha: f64,
    /// Negative-pair scale.
    pub beta: f64,
    /// Similarity offset.
    pub lambda: f64,
    /// Mining margin.
    pub margin: f64,
}

impl Default for MultiSimConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 50.0,
            lambda: 1.0,
            margin: 0.1,
        }
    }
}

/// Pairs kept by hard mining, per anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mining {
    pub positives: Vec<Vec<usize>>,
    pub negatives: Vec<Vec<usize>>,
}

fn similarities(batch: &EmbeddingBatch) -> Vec<Vec<f64>> {
    let items = batch.items();
    let n = items.len();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = dot(&items[i].embedding, &items[j].embedding);
            s[i][j] = v;
            s[j][i] = v;
        }
    }
    s
}

/// Keeps negatives more similar than the hardest positive minus the margin,
/// and positives less similar than the hardest negative plus the margin.
/// When one side is empty the other side is kept unfiltered.
pub fn mine(batch: &EmbeddingBatch, cfg: &MultiSimConfig) -> Mining {
    let sim = similarities(batch);
    mine_from(batch, &sim, cfg)
}

fn mine_from(batch: &EmbeddingBatch, sim: &[Vec<f64>], cfg: &MultiSimConfig) -> Mining {
    let items = batch.items();
    let n = items.len();
    let mut positives = Vec::with_capacity(n);
    let mut negatives = Vec::with_capacity(n);
    for i in 0..n {
        let (p, q): (Vec<usize>, Vec<usize>) = (0..n)
            .filter(|&j| j != i)
            .partition(|&j| items[j].class_id == items[i].class_id);
        let min_pos = p.iter().map(|&j| sim[i][j]).fold(f64::INFINITY, f64::min);
        let max_neg = q.iter().map(|&j| sim[i][j]).fold(f64::NEG_INFINITY, f64::max);
        let kept_neg = if p.is_empty() {
            q.clone()
        } else {
            q.iter().copied().filter(|&j| sim[i][j] > min_pos - cfg.margin).collect()
        };
        let kept_pos = if q.is_empty() {
            p
        } else {
            p.into_iter().filter(|&j| sim[i][j] < max_neg + cfg.margin).collect()
        };
        positives.push(kept_pos);
        negatives.push(kept_neg);
    }
    Mining {
        positives,
        negatives,
    }
}

/// Multi-similarity loss with mining recomputed from the batch.
pub fn multisim_loss(batch: &EmbeddingBatch, cfg: &MultiSimConfig) -> Result<LossOutput> {
    let sim = similarities(batch);
    let mining = mine_from(batch, &sim, cfg);
    Ok(evaluate(batch, &sim, &mining, cfg))
}

/// Multi-similarity loss for a given mining, which is treated as constant.
pub fn multisim_loss_with_mining(batch: &EmbeddingBatch, mining: &Mining, cfg: &MultiSimConfig) -> LossOutput {
    let sim = similarities(batch);
    evaluate(batch, &sim, mining, cfg)
}

fn evaluate(batch: &EmbeddingBatch, sim: &[Vec<f64>], mining: &Mining, cfg: &MultiSimConfig) -> LossOutput {
    let items = batch.items();
    let n = items.len();
    let mut grads = vec![vec![0.0; batch.dim()]; n];
    if n == 0 {
        return LossOutput { value: 0.0, grads };
    }
    let scale = 1.0 / n as f64;
    let mut total = 0.0;
    // d loss / d S_ij, accumulated then pushed onto both embeddings.
    let mut dsim = vec![vec![0.0; n]; n];
    for i in 0..n {
        let pos = &mining.positives[i];
        if !pos.is_empty() {
            let terms: Vec<f64> = pos.iter().map(|&j| (-cfg.alpha * (sim[i][j] - cfg.lambda)).exp()).collect();
            let sum: f64 = terms.iter().sum();
            total += sum.ln_1p() / cfg.alpha;
            for (&j, t) in pos.iter().zip(&terms) {
                dsim[i][j] -= scale * t / (1.0 + sum);
            }
        }
        let neg = &mining.negatives[i];
        if !neg.is_empty() {
            let terms: Vec<f64> = neg.iter().map(|&j| (cfg.beta * (sim[i][j] - cfg.lambda)).exp()).collect();
            let sum: f64 = terms.iter().sum();
            total += sum.ln_1p() / cfg.beta;
            for (&j, t) in neg.iter().zip(&terms) {
                dsim[i][j] += scale * t / (1.0 + sum);
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let d = dsim[i][j];
            if d == 0.0 {
                continue;
            }
            let (a, b) = (&items[i].embedding, &items[j].embedding);
            for (g, x) in grads[i].iter_mut().zip(b) {
                *g += d * x;
            }
            for (g, x) in grads[j].iter_mut().zip(a) {
                *g += d * x;
            }
        }
    }
    LossOutput {
        value: scale * total,
        grads,
    }
}
