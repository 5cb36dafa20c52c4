//! OSF1 (per-instance frame features) and OSL1 (per-class label embeddings).
//!
//! ```text
//! OSF1: "OSF1" u32 version=1, u32 n_instances, u32 F, u32 D_in,
//!       then per instance: u32 instance_id, u32 class_id, F*D_in f32
//! OSL1: "OSL1" u32 version=1, u32 n_classes, u32 d_b,
//!       then per class: u32 class_id, d_b f32
//! ```
//! All integers and floats are little-endian.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Instance;
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::numcore::{l2_normalize, Tensor2};

const FEATURE_MAGIC: &[u8; 4] = b"OSF1";
const LABEL_MAGIC: &[u8; 4] = b"OSL1";
const VERSION: u32 = 1;

pub fn write_features<W: Write>(out: W, instances: &[Instance]) -> Result<W> {
    let (frames, dim) = instances
        .first()
        .map_or((0, 0), |i| i.features.shape());
    let mut w = Writer::new(out, "feature file");
    w.header(FEATURE_MAGIC, VERSION)?;
    w.count(instances.len())?;
    w.count(frames)?;
    w.count(dim)?;
    for inst in instances {
        if inst.features.shape() != (frames, dim) {
            return Err(Error::Dimension(format!(
                "instance {} has shape {:?}, file uses {frames}x{dim}",
                inst.instance_id,
                inst.features.shape()
            )));
        }
        w.u32(inst.instance_id)?;
        w.u32(inst.class_id)?;
        w.f32s(inst.features.values())?;
    }
    w.finish()
}

pub fn read_features<R: Read>(input: R) -> Result<Vec<Instance>> {
    let mut r = Reader::new(input, "feature file");
    r.expect_magic(FEATURE_MAGIC, VERSION)?;
    let n = r.u32()? as usize;
    let frames = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if n > 0 && (frames == 0 || dim == 0) {
        return Err(Error::Format(format!(
            "feature file declares {frames} frames of dimension {dim}"
        )));
    }
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let instance_id = r.u32()?;
        let class_id = r.u32()?;
        let values = r.f32s(frames * dim)?;
        out.push(Instance {
            instance_id,
            class_id,
            features: Tensor2::from_vec(frames, dim, values)?,
        });
    }
    r.expect_end()?;
    Ok(out)
}

pub fn save_features(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    write_features(BufWriter::new(f), instances)?;
    Ok(())
}

pub fn load_features(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_features(BufReader::new(f))
}

pub fn write_label_embeddings<W: Write>(out: W, labels: &BTreeMap<u32, Vec<f64>>) -> Result<W> {
    let dim = labels.values().next().map_or(0, Vec::len);
    let mut w = Writer::new(out, "label file");
    w.header(LABEL_MAGIC, VERSION)?;
    w.count(labels.len())?;
    w.count(dim)?;
    for (&class_id, v) in labels {
        if v.len() != dim {
            return Err(Error::Dimension(format!(
                "label embedding of class {class_id} has length {}, expected {dim}",
                v.len()
            )));
        }
        w.u32(class_id)?;
        w.f32s(v)?;
    }
    w.finish()
}

/// Reads label embeddings as stored, without normalizing.
pub fn read_label_embeddings<R: Read>(input: R) -> Result<BTreeMap<u32, Vec<f64>>> {
    let mut r = Reader::new(input, "label file");
    r.expect_magic(LABEL_MAGIC, VERSION)?;
    let n = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if n > 0 && dim == 0 {
        return Err(Error::Format("label file declares dimension 0".into()));
    }
    let mut out = BTreeMap::new();
    for _ in 0..n {
        let class_id = r.u32()?;
        let v = r.f32s(dim)?;
        if out.insert(class_id, v).is_some() {
            return Err(Error::DuplicateId {
                kind: "label class",
                id: class_id,
            });
        }
    }
    r.expect_end()?;
    Ok(out)
}

pub fn save_label_embeddings(path: impl AsRef<Path>, labels: &BTreeMap<u32, Vec<f64>>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    write_label_embeddings(BufWriter::new(f), labels)?;
    Ok(())
}

/// Loads label embeddings and L2-normalizes any that are not already unit length.
pub fn load_label_embeddings(path: impl AsRef<Path>) -> Result<BTreeMap<u32, Vec<f64>>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut labels = read_label_embeddings(BufReader::new(f))?;
    for v in labels.values_mut() {
        let n = l2_normalize(v)?;
        if (n.norm - 1.0).abs() > 1e-6 {
            *v = n.unit;
        }
    }
    Ok(labels)
}
