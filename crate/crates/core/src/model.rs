//! Trainable encoders.
//!
//! The video encoder applies a shared per-frame affine layer with `tanh`,
//! averages over frames, projects to the embedding dimension and
//! L2-normalizes. The label projector (joint embedding only) is a single
//! affine layer followed by L2 normalization. Label embeddings themselves are
//! frozen and live in the [`Dataset`](crate::data::Dataset).

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::{Reader, Writer};
use crate::data::Instance;
use crate::error::{Error, Result};
use crate::numcore::{
    affine_backward, affine_backward_vec, affine_forward, affine_forward_vec, l2_normalize,
    Normalized, ParamBlock, Tensor2,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Video-only embedding.
    VE,
    /// Video mapped into the frozen label-embedding space.
    WE,
    /// Video and labels mapped into a shared learned space.
    JE,
}

impl Method {
    fn tag(self) -> u32 {
        match self {
            Method::VE => 0,
            Method::WE => 1,
            Method::JE => 2,
        }
    }

    fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(Method::VE),
            1 => Ok(Method::WE),
            2 => Ok(Method::JE),
            _ => Err(Error::Format(format!("unknown method tag {tag}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::VE => "VE",
            Method::WE => "WE",
            Method::JE => "JE",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "VE" => Ok(Method::VE),
            "WE" => Ok(Method::WE),
            "JE" => Ok(Method::JE),
            _ => Err(Error::Config(format!("unknown method {s:?} (expected VE, WE or JE)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub method: Method,
    pub d_in: usize,
    pub hidden: usize,
    /// Must equal `label_dim` for [`Method::WE`].
    pub embed_dim: usize,
    pub label_dim: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.hidden == 0 || self.embed_dim == 0 || self.label_dim == 0 {
            return Err(Error::Config("model dimensions must be at least 1".into()));
        }
        if self.method == Method::WE && self.embed_dim != self.label_dim {
            return Err(Error::Config(format!(
                "WE embeds into the label space: embed_dim {} must equal label_dim {}",
                self.embed_dim, self.label_dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    config: ModelConfig,
    pub frame_layer: ParamBlock,
    pub projection: ParamBlock,
    pub label_projector: Option<ParamBlock>,
}

/// Normal initialization scaled by `1/sqrt(fan_in)`, deterministic in `seed`.
pub fn init_model(config: ModelConfig, seed: u64) -> Result<EmbeddingModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame_layer = ParamBlock::random_normal("frame", config.d_in, config.hidden, &mut rng);
    let projection = ParamBlock::random_normal("projection", config.hidden, config.embed_dim, &mut rng);
    let label_projector = (config.method == Method::JE).then(|| {
        ParamBlock::random_normal("label_projector", config.label_dim, config.embed_dim, &mut rng)
    });
    Ok(EmbeddingModel {
        config,
        frame_layer,
        projection,
        label_projector,
    })
}

/// Intermediate values of one video forward pass, needed for backprop.
#[derive(Debug, Clone)]
pub struct VideoTrace<'a> {
    input: &'a Tensor2,
    hidden: Tensor2,
    pooled: Vec<f64>,
    output: Normalized,
}

impl VideoTrace<'_> {
    pub fn embedding(&self) -> &[f64] {
        &self.output.unit
    }
}

#[derive(Debug, Clone)]
pub struct LabelTrace {
    input: Vec<f64>,
    output: Normalized,
}

impl LabelTrace {
    pub fn embedding(&self) -> &[f64] {
        &self.output.unit
    }
}

/// Column means over rows. Each column is summed in sorted order, so the
/// result depends only on the multiset of rows.
fn pool_frames(h: &Tensor2) -> Vec<f64> {
    let n = h.rows() as f64;
    let mut column = Vec::with_capacity(h.rows());
    (0..h.cols())
        .map(|j| {
            column.clear();
            column.extend((0..h.rows()).map(|t| h.get(t, j)));
            column.sort_unstable_by(f64::total_cmp);
            column.iter().sum::<f64>() / n
        })
        .collect()
}

impl EmbeddingModel {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn method(&self) -> Method {
        self.config.method
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn embed_video<'a>(&self, instance: &'a Instance) -> Result<VideoTrace<'a>> {
        let x = &instance.features;
        if x.rows() == 0 {
            return Err(Error::Dimension(format!("instance {} has no frames", instance.instance_id)));
        }
        if x.cols() != self.config.d_in {
            return Err(Error::Dimension(format!(
                "instance {} has feature dimension {}, model expects {}",
                instance.instance_id,
                x.cols(),
                self.config.d_in
            )));
        }
        let mut hidden = affine_forward(x, &self.frame_layer)?;
        hidden.values_mut().iter_mut().for_each(|v| *v = v.tanh());
        let pooled = pool_frames(&hidden);
        let z = affine_forward_vec(&pooled, &self.projection)?;
        Ok(VideoTrace {
            input: x,
            hidden,
            pooled,
            output: l2_normalize(&z)?,
        })
    }

    /// Accumulates video-encoder gradients for `d loss / d embedding`.
    pub fn backward_video(&mut self, trace: &VideoTrace<'_>, grad: &[f64]) -> Result<()> {
        if grad.len() != self.config.embed_dim {
            return Err(Error::Dimension("embedding gradient length".into()));
        }
        let grad_z = trace.output.backward(grad);
        let grad_pooled = affine_backward_vec(&trace.pooled, &mut self.projection, &grad_z)?;
        let frames = trace.hidden.rows();
        let mut grad_pre = Tensor2::zeros(frames, self.config.hidden);
        for t in 0..frames {
            for (j, g) in grad_pre.row_mut(t).iter_mut().enumerate() {
                let h = trace.hidden.get(t, j);
                *g = grad_pooled[j] / frames as f64 * (1.0 - h * h);
            }
        }
        affine_backward(trace.input, &mut self.frame_layer, &grad_pre)?;
        Ok(())
    }

    pub fn embed_label(&self, label_embedding: &[f64]) -> Result<LabelTrace> {
        let proj = self.label_projector.as_ref().ok_or_else(|| Error::Capability {
            method: self.config.method.to_string(),
            what: "label projection".into(),
        })?;
        let z = affine_forward_vec(label_embedding, proj)?;
        Ok(LabelTrace {
            input: label_embedding.to_vec(),
            output: l2_normalize(&z)?,
        })
    }

    pub fn backward_label(&mut self, trace: &LabelTrace, grad: &[f64]) -> Result<()> {
        let method = self.config.method;
        let proj = self.label_projector.as_mut().ok_or_else(|| Error::Capability {
            method: method.to_string(),
            what: "label projection".into(),
        })?;
        let grad_z = trace.output.backward(grad);
        affine_backward_vec(&trace.input, proj, &grad_z)?;
        Ok(())
    }

    pub fn blocks(&self) -> Vec<&ParamBlock> {
        let mut v = vec![&self.frame_layer, &self.projection];
        v.extend(self.label_projector.as_ref());
        v
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        let mut v = vec![&mut self.frame_layer, &mut self.projection];
        v.extend(self.label_projector.as_mut());
        v
    }

    pub fn zero_grad(&mut self) {
        self.blocks_mut().into_iter().for_each(ParamBlock::zero_grad);
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|b| b.flat_params()).collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|b| b.flat_grads()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut at = 0;
        for b in self.blocks_mut() {
            let n = b.num_params();
            b.set_flat_params(&flat[at..at + n]);
            at += n;
        }
        assert_eq!(at, flat.len(), "flat parameter length");
    }

    pub fn write_checkpoint<W: Write>(&self, out: W) -> Result<W> {
        let c = &self.config;
        let mut w = Writer::new(out, "checkpoint");
        w.header(MODEL_MAGIC, MODEL_VERSION)?;
        w.u32(c.method.tag())?;
        for d in [c.d_in, c.hidden, c.embed_dim, c.label_dim] {
            w.count(d)?;
        }
        let blocks = self.blocks();
        w.count(blocks.len())?;
        for b in blocks {
            w.count(b.fan_in())?;
            w.count(b.fan_out())?;
            w.f64s(b.weights.values())?;
            w.f64s(&b.bias)?;
        }
        w.finish()
    }

    pub fn read_checkpoint<R: Read>(input: R) -> Result<Self> {
        let mut r = Reader::new(input, "checkpoint");
        r.expect_magic(MODEL_MAGIC, MODEL_VERSION)?;
        let method = Method::from_tag(r.u32()?)?;
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let config = ModelConfig {
            method,
            d_in: dims[0],
            hidden: dims[1],
            embed_dim: dims[2],
            label_dim: dims[3],
        };
        config.validate().map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let expected: Vec<(&str, usize, usize)> = {
            let mut v = vec![
                ("frame", config.d_in, config.hidden),
                ("projection", config.hidden, config.embed_dim),
            ];
            if method == Method::JE {
                v.push(("label_projector", config.label_dim, config.embed_dim));
            }
            v
        };
        let n_blocks = r.u32()? as usize;
        if n_blocks != expected.len() {
            return Err(Error::Format(format!(
                "{method} checkpoint must hold {} blocks, found {n_blocks}",
                expected.len()
            )));
        }
        let mut blocks = Vec::with_capacity(n_blocks);
        for (name, fan_in, fan_out) in expected {
            let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
            if (rows, cols) != (fan_in, fan_out) {
                return Err(Error::Format(format!(
                    "block '{name}' declared {rows}x{cols}, expected {fan_in}x{fan_out}"
                )));
            }
            let weights = Tensor2::from_vec(rows, cols, r.f64s(rows * cols)?)?;
            let bias = r.f64s(cols)?;
            if bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite(format!("bias of '{name}'")));
            }
            blocks.push(ParamBlock::new(name, weights, bias)?);
        }
        r.expect_end()?;
        let mut it = blocks.into_iter();
        Ok(Self {
            config,
            frame_layer: it.next().expect("frame block"),
            projection: it.next().expect("projection block"),
            label_projector: it.next(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        self.write_checkpoint(BufWriter::new(f))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::read_checkpoint(BufReader::new(f))
    }
}

const MODEL_MAGIC: &[u8; 4] = b"OSM1";
const MODEL_VERSION: u32 = 1;

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use rand::Rng;

    use super::*;
    use crate::numcore::{check_gradient, dot, norm};

    fn cfg(method: Method) -> ModelConfig {
        ModelConfig {
            method,
            d_in: 6,
            hidden: 5,
            embed_dim: if method == Method::WE { 4 } else { 3 },
            label_dim: 4,
        }
    }

    fn random_instance(rng: &mut ChaCha8Rng, frames: usize, d: usize) -> Instance {
        let vals = (0..frames * d).map(|_| rng.gen_range(-1.5..1.5)).collect();
        Instance {
            instance_id: 0,
            class_id: 0,
            features: Tensor2::from_vec(frames, d, vals).unwrap(),
        }
    }

    #[test]
    fn output_is_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for m in [Method::VE, Method::WE, Method::JE] {
            let model = init_model(cfg(m), 1).unwrap();
            let inst = random_instance(&mut rng, 3, 6);
            let e = model.embed_video(&inst).unwrap();
            assert_eq!(e.embedding().len(), model.embed_dim());
            assert!((norm(e.embedding()) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn identical_instances_identical_embeddings() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = init_model(cfg(Method::VE), 1).unwrap();
        let a = random_instance(&mut rng, 4, 6);
        let b = a.clone();
        assert_eq!(
            model.embed_video(&a).unwrap().embedding(),
            model.embed_video(&b).unwrap().embedding()
        );
    }

    #[test]
    fn frame_permutation_is_exactly_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = init_model(cfg(Method::JE), 3).unwrap();
        for _ in 0..20 {
            let a = random_instance(&mut rng, 5, 6);
            let mut b = a.clone();
            let order = [3, 0, 4, 2, 1];
            for (dst, &src) in order.iter().enumerate() {
                b.features.row_mut(dst).copy_from_slice(a.features.row(src));
            }
            let ea = model.embed_video(&a).unwrap().embedding().to_vec();
            let eb = model.embed_video(&b).unwrap().embedding().to_vec();
            assert_eq!(ea, eb);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = init_model(cfg(Method::VE), 1).unwrap();
        let inst = random_instance(&mut rng, 2, 7);
        assert!(matches!(model.embed_video(&inst), Err(Error::Dimension(_))));
    }

    #[test]
    fn video_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for m in [Method::VE, Method::JE] {
            let base = init_model(cfg(m), 7).unwrap();
            let inst = random_instance(&mut rng, 3, 6);
            let target: Vec<f64> = (0..base.embed_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = |theta: &[f64]| {
                let mut model = base.clone();
                model.set_flat_params(theta);
                let trace = model.embed_video(&inst).unwrap();
                let value = dot(trace.embedding(), &target);
                model.zero_grad();
                model.backward_video(&trace, &target).unwrap();
                (value, model.flat_grads())
            };
            let err = check_gradient(f, &base.flat_params(), 1e-5);
            assert!(err < 1e-6, "{m}: rel err {err}");
        }
    }

    #[test]
    fn label_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = init_model(cfg(Method::JE), 9).unwrap();
        let b: Vec<f64> = l2_normalize(&[0.3, -0.2, 0.9, 0.1]).unwrap().unit;
        assert!((norm(base.embed_label(&b).unwrap().embedding()) - 1.0).abs() < 1e-12);

        let target: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = |theta: &[f64]| {
            let mut model = base.clone();
            model.set_flat_params(theta);
            let trace = model.embed_label(&b).unwrap();
            let value = dot(trace.embedding(), &target);
            model.zero_grad();
            model.backward_label(&trace, &target).unwrap();
            (value, model.flat_grads())
        };
        assert!(check_gradient(f, &base.flat_params(), 1e-5) < 1e-6);
    }

    #[test]
    fn label_projection_requires_joint_embedding() {
        let model = init_model(cfg(Method::VE), 1).unwrap();
        assert!(matches!(model.embed_label(&[1.0, 0.0, 0.0, 0.0]), Err(Error::Capability { .. })));
        let we = init_model(cfg(Method::WE), 1).unwrap();
        assert!(we.embed_label(&[1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn we_dimension_rule() {
        let bad = ModelConfig { embed_dim: 3, ..cfg(Method::WE) };
        assert!(init_model(bad, 0).is_err());
    }

    #[test]
    fn seeds() {
        let a = init_model(cfg(Method::JE), 1).unwrap();
        assert_eq!(a, init_model(cfg(Method::JE), 1).unwrap());
        assert_ne!(a.flat_params(), init_model(cfg(Method::JE), 2).unwrap().flat_params());
    }

    #[test]
    fn init_variance_tracks_fan_in() {
        let c = ModelConfig {
            method: Method::VE,
            d_in: 128,
            hidden: 96,
            embed_dim: 8,
            label_dim: 8,
        };
        let m = init_model(c, 11).unwrap();
        let w = m.frame_layer.weights.values();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
        let expected = 1.0 / 128.0;
        assert!((var / expected - 1.0).abs() < 0.2, "variance {var}");
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        for m in [Method::VE, Method::WE, Method::JE] {
            let model = init_model(cfg(m), 21).unwrap();
            let bytes = model.write_checkpoint(Vec::new()).unwrap();
            assert_eq!(&bytes[..4], b"OSM1");
            let back = EmbeddingModel::read_checkpoint(Cursor::new(&bytes)).unwrap();
            assert_eq!(back, model);
            assert_eq!(back.write_checkpoint(Vec::new()).unwrap(), bytes);
        }
    }

    #[test]
    fn checkpoint_errors() {
        let model = init_model(cfg(Method::JE), 21).unwrap();
        let bytes = model.write_checkpoint(Vec::new()).unwrap();
        assert!(matches!(
            EmbeddingModel::read_checkpoint(Cursor::new(&bytes[..bytes.len() - 3])),
            Err(Error::Truncated(_))
        ));
        let mut bad = bytes.clone();
        bad[8] = 7;
        assert!(matches!(EmbeddingModel::read_checkpoint(Cursor::new(&bad)), Err(Error::Format(_))));
    }
}
