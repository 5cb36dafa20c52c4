use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::sampling::choose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Task {
    /// Few-shot: support items are video instances.
    Fsg,
    /// Cross-modal few-shot: support items are class label embeddings.
    CmFsg,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Fsg => "FSG",
            Task::CmFsg => "CM-FSG",
        })
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "FSG" => Ok(Task::Fsg),
            "CM-FSG" | "CMFSG" => Ok(Task::CmFsg),
            _ => Err(Error::Config(format!("unknown task {s:?} (expected FSG or CM-FSG)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportItem {
    /// Index into the dataset's instances.
    Instance(usize),
    /// The label embedding of a class.
    Label(u32),
}

/// n-way, k-shot, up to m queries per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSpec {
    pub n: usize,
    pub k: usize,
    pub m: usize,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        Self { n: 5, k: 1, m: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub task: Task,
    pub classes: Vec<u32>,
    pub support: Vec<(SupportItem, u32)>,
    /// `(instance index, true class)`.
    pub queries: Vec<(usize, u32)>,
}

/// Classes of `pool` that can appear in an episode of this task and shot count.
pub fn episode_eligible(dataset: &Dataset, pool: &[u32], task: Task, k: usize) -> Vec<u32> {
    let need = match task {
        Task::Fsg => k + 1,
        Task::CmFsg => 1,
    };
    pool.iter()
        .copied()
        .filter(|&c| dataset.instances_of(c).len() >= need)
        .collect()
}

/// Samples one episode over `spec.n` classes of `eval_classes`.
///
/// FSG draws `k` support and `min(m, available − k)` query instances per
/// class, disjointly. CM-FSG uses the class label as the single support item
/// and draws `min(m, available)` queries.
pub fn sample_episode<R: Rng + ?Sized>(
    dataset: &Dataset,
    eval_classes: &[u32],
    task: Task,
    rng: &mut R,
    spec: &EpisodeSpec,
) -> Result<Episode> {
    if spec.n == 0 || spec.k == 0 {
        return Err(Error::Config("episodes need n >= 1 and k >= 1".into()));
    }
    if task == Task::CmFsg && spec.k != 1 {
        return Err(Error::Unsupported(format!(
            "CM-FSG with k={} (one label embedding per class)",
            spec.k
        )));
    }
    let eligible = episode_eligible(dataset, eval_classes, task, spec.k);
    if eligible.len() < spec.n {
        return Err(Error::Sampling(format!(
            "{}-way episode needs {} classes with enough instances, found {}",
            spec.n,
            spec.n,
            eligible.len()
        )));
    }
    let classes = choose(rng, &eligible, spec.n);
    let mut support = Vec::new();
    let mut queries = Vec::new();
    for &c in &classes {
        let pool = dataset.instances_of(c);
        match task {
            Task::Fsg => {
                let q = spec.m.min(pool.len() - spec.k);
                let drawn = choose(rng, pool, spec.k + q);
                support.extend(drawn[..spec.k].iter().map(|&i| (SupportItem::Instance(i), c)));
                queries.extend(drawn[spec.k..].iter().map(|&i| (i, c)));
            }
            Task::CmFsg => {
                support.push((SupportItem::Label(c), c));
                let drawn = choose(rng, pool, spec.m.min(pool.len()));
                queries.extend(drawn.into_iter().map(|i| (i, c)));
            }
        }
    }
    Ok(Episode {
        task,
        classes,
        support,
        queries,
    })
}
