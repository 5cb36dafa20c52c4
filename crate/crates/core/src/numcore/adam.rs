use super::param::ParamBlock;
use super::tensor::Tensor2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    weights: Tensor2,
    bias: Vec<f64>,
}

impl Moments {
    fn zeros_like(p: &ParamBlock) -> Self {
        let (r, c) = p.weights.shape();
        Self {
            weights: Tensor2::zeros(r, c),
            bias: vec![0.0; p.bias.len()],
        }
    }
}

/// Adam optimizer state for a fixed, ordered list of parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    first: Vec<Moments>,
    second: Vec<Moments>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, blocks: impl IntoIterator<Item = &'a ParamBlock>) -> Self {
        let first: Vec<Moments> = blocks.into_iter().map(Moments::zeros_like).collect();
        Self {
            config,
            step_count: 0,
            second: first.clone(),
            first,
        }
    }

    /// One bias-corrected Adam update over `blocks`, which must be given in the
    /// same order as at construction. Gradients are zeroed afterwards.
    pub fn step(&mut self, blocks: &mut [&mut ParamBlock], lr: f64) -> Result<()> {
        if blocks.len() != self.first.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} blocks, got {}",
                self.first.len(),
                blocks.len()
            )));
        }
        for (b, m) in blocks.iter().zip(&self.first) {
            if b.weights.shape() != m.weights.shape() || b.bias.len() != m.bias.len() {
                return Err(Error::Dimension(format!("block '{}' changed shape", b.name)));
            }
            if !b.grad_weights.is_finite() || b.grad_bias.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of '{}'", b.name)));
            }
        }

        self.step_count += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
        };

        for ((block, m), v) in blocks.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let ParamBlock {
                weights,
                bias,
                grad_weights,
                grad_bias,
                ..
            } = &mut **block;
            for (((p, &g), mm), vv) in weights
                .values_mut()
                .iter_mut()
                .zip(grad_weights.values())
                .zip(m.weights.values_mut())
                .zip(v.weights.values_mut())
            {
                update(p, g, mm, vv);
            }
            for (((p, &g), mm), vv) in bias
                .iter_mut()
                .zip(grad_bias.iter())
                .zip(&mut m.bias)
                .zip(&mut v.bias)
            {
                update(p, g, mm, vv);
            }
            block.zero_grad();
        }
        Ok(())
    }
}
