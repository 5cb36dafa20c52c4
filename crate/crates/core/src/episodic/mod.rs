//! Training-batch sampling, FSG/CM-FSG episodes, κ-NN classification and
//! pooled episodic evaluation.

mod batch;
mod episode;
mod eval;
mod knn;

pub use batch::{sample_training_batch, BatchSpec, TrainingBatch};
pub use episode::{episode_eligible, sample_episode, Episode, EpisodeSpec, SupportItem, Task};
pub use eval::{
    evaluate, Embedder, EpisodeOutcome, EvalReport, EvalSpec, EvalSubset, SubsetReport,
    SupportSpace, EVAL_CSV_HEADER,
};
pub use knn::knn_classify;
