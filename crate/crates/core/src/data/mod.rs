//! Class tables, per-instance features, label embeddings and the synthetic
//! compositional generator.

mod class_table;
mod files;
mod synth;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

pub use class_table::{
    load_class_table, save_class_table, ActionLabel, ClassEntry, ClassTable, CLASS_TABLE_HEADER,
};
pub use files::{
    load_features, load_label_embeddings, read_features, read_label_embeddings, save_features,
    save_label_embeddings, write_features, write_label_embeddings,
};
pub use synth::{synth_generate, SynthConfig};

use crate::error::{Error, Result};
use crate::numcore::{norm, Tensor2};

/// One video instance as a sequence of per-frame feature vectors (`F × D_in`).
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub instance_id: u32,
    pub class_id: u32,
    pub features: Tensor2,
}

impl Instance {
    pub fn frames(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// Arithmetic mean over frames.
pub fn frame_mean(instance: &Instance) -> Vec<f64> {
    let f = &instance.features;
    let mut out = vec![0.0; f.cols()];
    for r in 0..f.rows() {
        for (o, v) in out.iter_mut().zip(f.row(r)) {
            *o += v;
        }
    }
    let n = f.rows() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Instances plus one frozen unit-norm label embedding per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    class_table: ClassTable,
    instances: Vec<Instance>,
    label_embeddings: BTreeMap<u32, Vec<f64>>,
    by_class: BTreeMap<u32, Vec<usize>>,
}

impl Dataset {
    pub fn new(
        class_table: ClassTable,
        instances: Vec<Instance>,
        label_embeddings: BTreeMap<u32, Vec<f64>>,
    ) -> Result<Self> {
        let mut by_class: BTreeMap<u32, Vec<usize>> =
            class_table.class_ids().map(|c| (c, Vec::new())).collect();
        let mut ids = HashSet::new();
        let shape = instances.first().map(|i| i.features.shape());
        for (idx, inst) in instances.iter().enumerate() {
            if !ids.insert(inst.instance_id) {
                return Err(Error::DuplicateId {
                    kind: "instance",
                    id: inst.instance_id,
                });
            }
            if inst.frames() == 0 || inst.dim() == 0 {
                return Err(Error::Dimension(format!(
                    "instance {} has no frames or zero feature dimension",
                    inst.instance_id
                )));
            }
            if Some(inst.features.shape()) != shape {
                return Err(Error::Dimension(format!(
                    "instance {} has shape {:?}, expected {:?}",
                    inst.instance_id,
                    inst.features.shape(),
                    shape.unwrap_or_default()
                )));
            }
            by_class
                .get_mut(&inst.class_id)
                .ok_or_else(|| {
                    Error::Precondition(format!(
                        "instance {} has unknown class {}",
                        inst.instance_id, inst.class_id
                    ))
                })?
                .push(idx);
        }

        let label_dim = label_embeddings.values().next().map_or(0, Vec::len);
        for class_id in class_table.class_ids() {
            let v = label_embeddings.get(&class_id).ok_or_else(|| {
                Error::Precondition(format!("class {class_id} has no label embedding"))
            })?;
            if v.len() != label_dim {
                return Err(Error::Dimension(format!(
                    "label embedding of class {class_id} has length {}",
                    v.len()
                )));
            }
            if (norm(v) - 1.0).abs() > 1e-6 {
                return Err(Error::Precondition(format!(
                    "label embedding of class {class_id} is not unit norm"
                )));
            }
        }
        if let Some(extra) = label_embeddings.keys().find(|c| !class_table.contains(**c)) {
            return Err(Error::Precondition(format!(
                "label embedding for unknown class {extra}"
            )));
        }

        Ok(Self {
            class_table,
            instances,
            label_embeddings,
            by_class,
        })
    }

    /// Loads `classes.csv`, `features.osf` and `labels.osl` from a directory.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Self::new(
            load_class_table(dir.join(CLASSES_FILE))?,
            load_features(dir.join(FEATURES_FILE))?,
            load_label_embeddings(dir.join(LABELS_FILE))?,
        )
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        save_class_table(dir.join(CLASSES_FILE), &self.class_table)?;
        save_features(dir.join(FEATURES_FILE), &self.instances)?;
        save_label_embeddings(dir.join(LABELS_FILE), &self.label_embeddings)
    }

    pub fn class_table(&self) -> &ClassTable {
        &self.class_table
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn instance(&self, idx: usize) -> &Instance {
        &self.instances[idx]
    }

    /// Indices into [`Dataset::instances`] for a class, in file order.
    pub fn instances_of(&self, class_id: u32) -> &[usize] {
        self.by_class.get(&class_id).map_or(&[], Vec::as_slice)
    }

    pub fn label_embedding(&self, class_id: u32) -> Option<&[f64]> {
        self.label_embeddings.get(&class_id).map(Vec::as_slice)
    }

    pub fn label_embeddings(&self) -> &BTreeMap<u32, Vec<f64>> {
        &self.label_embeddings
    }

    /// `(F, D_in)` shared by every instance.
    pub fn feature_shape(&self) -> (usize, usize) {
        self.instances.first().map_or((0, 0), |i| i.features.shape())
    }

    pub fn label_dim(&self) -> usize {
        self.label_embeddings.values().next().map_or(0, Vec::len)
    }
}

pub const CLASSES_FILE: &str = "classes.csv";
pub const FEATURES_FILE: &str = "features.osf";
pub const LABELS_FILE: &str = "labels.osl";
