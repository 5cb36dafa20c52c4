use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::episode::{episode_eligible, sample_episode, EpisodeSpec, SupportItem, Task};
use super::knn::knn_classify;
use crate::data::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::model::{EmbeddingModel, Method};
use crate::splits::{Category, SplitResult, Subset};

/// Where CM-FSG support embeddings come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportSpace {
    /// Support items are video instances through the video encoder (FSG).
    VideoEncoder,
    /// Label embeddings through the learned label projector (JE).
    LabelProjector,
    /// Raw label embeddings, which share the video embedding space (WE).
    RawLabel,
}

/// Anything that maps instances, and optionally labels, to unit embeddings.
pub trait Embedder: Sync {
    fn embed_instance(&self, instance: &Instance) -> Result<Vec<f64>>;

    /// Embedding of a class's label when used as a CM-FSG support item.
    fn embed_label_support(&self, class_id: u32, label_embedding: &[f64]) -> Result<Vec<f64>>;

    /// How support items are embedded for `task`, or an error when the task is
    /// out of reach for this embedder.
    fn support_space(&self, task: Task) -> Result<SupportSpace>;
}

impl Embedder for EmbeddingModel {
    fn embed_instance(&self, instance: &Instance) -> Result<Vec<f64>> {
        Ok(self.embed_video(instance)?.embedding().to_vec())
    }

    fn embed_label_support(&self, _class_id: u32, label_embedding: &[f64]) -> Result<Vec<f64>> {
        match self.support_space(Task::CmFsg)? {
            SupportSpace::LabelProjector => Ok(self.embed_label(label_embedding)?.embedding().to_vec()),
            _ => Ok(label_embedding.to_vec()),
        }
    }

    fn support_space(&self, task: Task) -> Result<SupportSpace> {
        match (task, self.method()) {
            (Task::Fsg, _) => Ok(SupportSpace::VideoEncoder),
            (Task::CmFsg, Method::JE) => Ok(SupportSpace::LabelProjector),
            (Task::CmFsg, Method::WE) => Ok(SupportSpace::RawLabel),
            (Task::CmFsg, Method::VE) => Err(Error::Capability {
                method: "VE".into(),
                what: "CM-FSG (no label embedding path)".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EvalSubset {
    All,
    HoV,
    HoN,
}

impl EvalSubset {
    pub const ALL: [EvalSubset; 3] = [EvalSubset::All, EvalSubset::HoV, EvalSubset::HoN];

    fn stream(self) -> u64 {
        match self {
            EvalSubset::All => 0,
            EvalSubset::HoV => 1,
            EvalSubset::HoN => 2,
        }
    }

    /// Test classes belonging to this subset, ascending.
    pub fn classes(self, split: &SplitResult) -> Vec<u32> {
        match self {
            EvalSubset::All => split.test.iter().copied().collect(),
            EvalSubset::HoV => split.with_category(Subset::Test, Category::HoV).into_iter().collect(),
            EvalSubset::HoN => split.with_category(Subset::Test, Category::HoN).into_iter().collect(),
        }
    }
}

impl fmt::Display for EvalSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalSubset::All => "All",
            EvalSubset::HoV => "HoV",
            EvalSubset::HoN => "HoN",
        })
    }
}

impl FromStr for EvalSubset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "All" => Ok(EvalSubset::All),
            "HoV" => Ok(EvalSubset::HoV),
            "HoN" => Ok(EvalSubset::HoN),
            _ => Err(Error::Format(format!("unknown evaluation subset {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalSpec {
    pub episode: EpisodeSpec,
    pub episodes: usize,
    pub seed: u64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            episode: EpisodeSpec::default(),
            episodes: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeOutcome {
    pub queries: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetReport {
    pub subset: EvalSubset,
    pub episodes: Vec<EpisodeOutcome>,
    pub queries: usize,
    pub correct: usize,
    /// Pooled over all episodes: `correct / queries`.
    pub accuracy: f64,
    /// Set when the subset was too small to evaluate.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: Task,
    pub spec: EvalSpec,
    pub support_space: SupportSpace,
    pub subsets: Vec<SubsetReport>,
}

pub const EVAL_CSV_HEADER: &str = "task,subset,n,k,m,episodes,queries,correct,accuracy,seed";

impl EvalReport {
    pub fn subset(&self, s: EvalSubset) -> Option<&SubsetReport> {
        self.subsets.iter().find(|r| r.subset == s)
    }

    /// One row per evaluated subset; skipped subsets are omitted.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(EVAL_CSV_HEADER);
        out.push('\n');
        let EpisodeSpec { n, k, m } = self.spec.episode;
        for r in self.subsets.iter().filter(|r| r.skipped.is_none()) {
            out.push_str(&format!(
                "{},{},{n},{k},{m},{},{},{},{},{}\n",
                self.task,
                r.subset,
                r.episodes.len(),
                r.queries,
                r.correct,
                r.accuracy,
                self.spec.seed
            ));
        }
        out
    }
}

/// Per-episode RNG derived from `(seed, subset, episode)`, so episodes can be
/// generated in any order.
fn episode_rng(seed: u64, subset: EvalSubset, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((subset.stream() << 48) | episode as u64);
    rng
}

/// Pooled κ-NN accuracy (κ = k) over `spec.episodes` episodes for each of the
/// All/HoV/HoN test subsets. Episode classes are drawn from the subset.
pub fn evaluate<E: Embedder + ?Sized>(
    model: &E,
    dataset: &Dataset,
    split: &SplitResult,
    task: Task,
    spec: &EvalSpec,
) -> Result<EvalReport> {
    let support_space = model.support_space(task)?;
    if task == Task::CmFsg && spec.episode.k != 1 {
        return Err(Error::Unsupported(format!(
            "CM-FSG with k={} (one label embedding per class)",
            spec.episode.k
        )));
    }

    let test: Vec<u32> = split.test.iter().copied().collect();
    let indices: Vec<usize> = test.iter().flat_map(|&c| dataset.instances_of(c).iter().copied()).collect();
    let video: HashMap<usize, Vec<f64>> = indices
        .par_iter()
        .map(|&i| model.embed_instance(dataset.instance(i)).map(|e| (i, e)))
        .collect::<Result<_>>()?;
    let labels: HashMap<u32, Vec<f64>> = if task == Task::CmFsg {
        test.iter()
            .map(|&c| {
                let b = dataset
                    .label_embedding(c)
                    .ok_or_else(|| Error::Precondition(format!("class {c} has no label embedding")))?;
                model.embed_label_support(c, b).map(|e| (c, e))
            })
            .collect::<Result<_>>()?
    } else {
        HashMap::new()
    };

    let mut subsets = Vec::with_capacity(3);
    for subset in EvalSubset::ALL {
        let classes = subset.classes(split);
        let eligible = episode_eligible(dataset, &classes, task, spec.episode.k);
        if eligible.len() < spec.episode.n {
            subsets.push(SubsetReport {
                subset,
                episodes: Vec::new(),
                queries: 0,
                correct: 0,
                accuracy: f64::NAN,
                skipped: Some(format!(
                    "{subset}: {} usable classes, {}-way episodes need {}",
                    eligible.len(),
                    spec.episode.n,
                    spec.episode.n
                )),
            });
            continue;
        }
        let episodes: Vec<EpisodeOutcome> = (0..spec.episodes)
            .into_par_iter()
            .map(|e| {
                let mut rng = episode_rng(spec.seed, subset, e);
                let ep = sample_episode(dataset, &classes, task, &mut rng, &spec.episode)?;
                let support: Vec<(&[f64], u32)> = ep
                    .support
                    .iter()
                    .map(|(item, c)| {
                        let emb = match item {
                            SupportItem::Instance(i) => &video[i],
                            SupportItem::Label(l) => &labels[l],
                        };
                        (emb.as_slice(), *c)
                    })
                    .collect();
                let mut correct = 0;
                for (qi, truth) in &ep.queries {
                    if knn_classify(&support, &video[qi], spec.episode.k)? == *truth {
                        correct += 1;
                    }
                }
                Ok(EpisodeOutcome {
                    queries: ep.queries.len(),
                    correct,
                })
            })
            .collect::<Result<_>>()?;
        let queries: usize = episodes.iter().map(|e| e.queries).sum();
        let correct: usize = episodes.iter().map(|e| e.correct).sum();
        subsets.push(SubsetReport {
            subset,
            accuracy: if queries == 0 { f64::NAN } else { correct as f64 / queries as f64 },
            episodes,
            queries,
            correct,
            skipped: None,
        });
    }

    Ok(EvalReport {
        task,
        spec: *spec,
        support_space,
        subsets,
    })
}
