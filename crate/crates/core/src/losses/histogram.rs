use super::{EmbeddingBatch, LossOutput};
use crate::error::{Error, Result};
use crate::numcore::dot;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramConfig {
    /// Number of histogram nodes spread uniformly over `[-1, 1]`.
    pub bins: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self { bins: 100 }
    }
}

struct Pair {
    i: usize,
    j: usize,
    lower: usize,
    frac: f64,
}

/// Estimated probability that a random negative pair is at least as similar
/// as a random positive pair, from linearly interpolated similarity
/// histograms. Pairs are positive when their class ids match, whatever the
/// modality.
pub fn histogram_loss(batch: &EmbeddingBatch, cfg: &HistogramConfig) -> Result<LossOutput> {
    let r = cfg.bins;
    if r < 2 {
        return Err(Error::Config("histogram loss needs at least 2 bins".into()));
    }
    let step = 2.0 / (r - 1) as f64;
    let items = batch.items();

    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            let s = dot(&items[i].embedding, &items[j].embedding).clamp(-1.0, 1.0);
            let lower = (((s + 1.0) / step).floor() as usize).min(r - 2);
            let frac = (s - (-1.0 + lower as f64 * step)) / step;
            let p = Pair { i, j, lower, frac };
            if items[i].class_id == items[j].class_id {
                pos.push(p);
            } else {
                neg.push(p);
            }
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Degenerate(format!(
            "histogram loss needs positive and negative pairs (have {} and {})",
            pos.len(),
            neg.len()
        )));
    }

    let histogram = |pairs: &[Pair]| {
        let mut h = vec![0.0; r];
        let w = 1.0 / pairs.len() as f64;
        for p in pairs {
            h[p.lower] += w * (1.0 - p.frac);
            h[p.lower + 1] += w * p.frac;
        }
        h
    };
    let h_pos = histogram(&pos);
    let h_neg = histogram(&neg);

    let mut cdf_pos = h_pos.clone();
    for k in 1..r {
        cdf_pos[k] += cdf_pos[k - 1];
    }
    let value: f64 = h_neg.iter().zip(&cdf_pos).map(|(a, b)| a * b).sum();

    // d loss / d h_pos[q] = sum_{k >= q} h_neg[k]; d loss / d h_neg[k] = cdf_pos[k].
    let mut tail_neg = h_neg.clone();
    for k in (0..r - 1).rev() {
        tail_neg[k] += tail_neg[k + 1];
    }

    let mut grads = vec![vec![0.0; batch.dim()]; items.len()];
    let mut push = |pairs: &[Pair], dh: &[f64]| {
        let w = 1.0 / pairs.len() as f64;
        for p in pairs {
            let ds = w * (dh[p.lower + 1] - dh[p.lower]) / step;
            let (a, b) = (&items[p.i].embedding, &items[p.j].embedding);
            for (g, x) in grads[p.i].iter_mut().zip(b) {
                *g += ds * x;
            }
            for (g, x) in grads[p.j].iter_mut().zip(a) {
                *g += ds * x;
            }
        }
    };
    push(&pos, &tail_neg);
    push(&neg, &cdf_pos);

    Ok(LossOutput { value, grads })
}
