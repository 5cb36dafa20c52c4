use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ActionLabel, ClassEntry, ClassTable, Dataset, Instance};
use crate::error::{Error, Result};
use crate::numcore::{l2_normalize, Tensor2};

/// Parameters of the synthetic verb–noun compositional dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_verbs: usize,
    pub n_nouns: usize,
    /// Fraction of verb–noun pairs realized as classes.
    pub class_density: f64,
    pub instances_min: usize,
    pub instances_max: usize,
    pub d_latent: usize,
    pub d_in: usize,
    pub frames: usize,
    pub d_label: usize,
    pub sigma_frame: f64,
    pub sigma_instance: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_verbs: 10,
            n_nouns: 10,
            class_density: 0.7,
            instances_min: 30,
            instances_max: 30,
            d_latent: 8,
            d_in: 64,
            frames: 4,
            d_label: 32,
            sigma_frame: 0.1,
            sigma_instance: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_verbs", self.n_verbs),
            ("n_nouns", self.n_nouns),
            ("instances_min", self.instances_min),
            ("d_latent", self.d_latent),
            ("d_in", self.d_in),
            ("frames", self.frames),
            ("d_label", self.d_label),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("synth.{name} must be at least 1")));
        }
        if self.instances_max < self.instances_min {
            return Err(Error::Config(
                "synth.instances_max must be >= synth.instances_min".into(),
            ));
        }
        if !(self.class_density > 0.0 && self.class_density <= 1.0) {
            return Err(Error::Config("synth.class_density must be in (0, 1]".into()));
        }
        for (name, s) in [
            ("sigma_frame", self.sigma_frame),
            ("sigma_instance", self.sigma_instance),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("synth.{name} must be >= 0")));
            }
        }
        if self.n_verbs * self.n_nouns > u32::MAX as usize {
            return Err(Error::Config("too many classes".into()));
        }
        Ok(())
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor2 {
    let mut t = Tensor2::zeros(rows, cols);
    for v in t.values_mut() {
        *v = scale * rng.sample::<f64, _>(StandardNormal);
    }
    t
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn mix(m: &Tensor2, code: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|r| m.row(r).iter().zip(code).map(|(a, b)| a * b).sum())
        .collect()
}

/// Values are rounded to `f32` so that a dataset survives a trip through the
/// on-disk formats unchanged.
fn storage_round(v: f64) -> f64 {
    f64::from(v as f32)
}

/// Generates a dataset where each class code is the concatenation of a verb
/// latent and a noun latent, seen through one random linear mixing per
/// modality. Deterministic in `config.seed`.
pub fn synth_generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dl = config.d_latent;
    let code_dim = 2 * dl;

    let verbs: Vec<Vec<f64>> = (0..config.n_verbs).map(|_| normal_vec(&mut rng, dl, 1.0)).collect();
    let nouns: Vec<Vec<f64>> = (0..config.n_nouns).map(|_| normal_vec(&mut rng, dl, 1.0)).collect();
    let scale = 1.0 / (code_dim as f64).sqrt();
    let m_video = normal_matrix(&mut rng, config.d_in, code_dim, scale);
    let m_label = normal_matrix(&mut rng, config.d_label, code_dim, scale);

    // Realize a fixed fraction of the verb × noun grid via partial Fisher–Yates.
    let n_pairs = config.n_verbs * config.n_nouns;
    let n_classes = ((config.class_density * n_pairs as f64).round() as usize).clamp(1, n_pairs);
    let mut pairs: Vec<usize> = (0..n_pairs).collect();
    for i in 0..n_classes {
        let j = rng.gen_range(i..n_pairs);
        pairs.swap(i, j);
    }
    let mut realized = pairs[..n_classes].to_vec();
    realized.sort_unstable();

    let mut entries = Vec::with_capacity(n_classes);
    let mut instances = Vec::new();
    let mut labels = BTreeMap::new();
    let mut next_instance = 0u32;
    for (class_idx, &pair) in realized.iter().enumerate() {
        let (v, n) = (pair / config.n_nouns, pair % config.n_nouns);
        let class_id = class_idx as u32;
        let code: Vec<f64> = verbs[v].iter().chain(&nouns[n]).copied().collect();

        let label = l2_normalize(&mix(&m_label, &code))?;
        labels.insert(class_id, label.unit.into_iter().map(storage_round).collect());

        let count = rng.gen_range(config.instances_min..=config.instances_max);
        for _ in 0..count {
            let offset = normal_vec(&mut rng, code_dim, config.sigma_instance);
            let shifted: Vec<f64> = code.iter().zip(&offset).map(|(c, d)| c + d).collect();
            let clean = mix(&m_video, &shifted);
            let mut features = Tensor2::zeros(config.frames, config.d_in);
            for t in 0..config.frames {
                for (dst, &x) in features.row_mut(t).iter_mut().zip(&clean) {
                    let noise = config.sigma_frame * rng.sample::<f64, _>(StandardNormal);
                    *dst = storage_round(x + noise);
                }
            }
            instances.push(Instance {
                instance_id: next_instance,
                class_id,
                features,
            });
            next_instance += 1;
        }
        entries.push(ClassEntry {
            class_id,
            label: ActionLabel {
                verb_id: v as u32,
                noun_id: n as u32,
                verb_text: format!("verb{v}"),
                noun_text: format!("noun{n}"),
            },
            n_instances: count as u32,
        });
    }

    Dataset::new(ClassTable::new(entries)?, instances, labels)
}
