use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::sampling::choose;

/// Class-grouped training batch shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSpec {
    pub classes: usize,
    pub max_per_class: usize,
    /// Batches with fewer instances are redrawn.
    pub min_total: usize,
    pub max_retries: usize,
}

impl Default for BatchSpec {
    fn default() -> Self {
        Self {
            classes: 12,
            max_per_class: 8,
            min_total: 36,
            max_retries: 100,
        }
    }
}

/// Instance indices grouped by class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingBatch {
    pub groups: Vec<(u32, Vec<usize>)>,
}

impl TrainingBatch {
    pub fn total(&self) -> usize {
        self.groups.iter().map(|(_, v)| v.len()).sum()
    }

    /// `(class_id, instance index)` in group order.
    pub fn members(&self) -> impl Iterator<Item = (u32, usize)> + '_ {
        self.groups
            .iter()
            .flat_map(|(c, idx)| idx.iter().map(move |&i| (*c, i)))
    }
}

/// Draws `spec.classes` distinct classes and up to `spec.max_per_class`
/// instances of each, without replacement. The whole batch is redrawn while it
/// holds fewer than `spec.min_total` instances.
pub fn sample_training_batch<R: Rng + ?Sized>(
    dataset: &Dataset,
    classes: &[u32],
    rng: &mut R,
    spec: &BatchSpec,
) -> Result<TrainingBatch> {
    if classes.len() < spec.classes {
        return Err(Error::Config(format!(
            "batch needs {} classes, only {} available",
            spec.classes,
            classes.len()
        )));
    }
    for _ in 0..spec.max_retries.max(1) {
        let picked = choose(rng, classes, spec.classes);
        let groups: Vec<(u32, Vec<usize>)> = picked
            .into_iter()
            .map(|c| {
                let pool = dataset.instances_of(c);
                (c, choose(rng, pool, spec.max_per_class))
            })
            .collect();
        let batch = TrainingBatch { groups };
        if batch.total() >= spec.min_total {
            return Ok(batch);
        }
    }
    Err(Error::Sampling(format!(
        "no batch with at least {} instances after {} attempts",
        spec.min_total,
        spec.max_retries.max(1)
    )))
}
