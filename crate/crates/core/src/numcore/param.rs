use rand::Rng;
use rand_distr::StandardNormal;

use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Weights and bias of one affine layer together with their accumulated gradients.
///
/// The layer maps a row vector `x` (length `weights.rows()`) to `x·W + b`
/// (length `weights.cols()`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub weights: Tensor2,
    pub bias: Vec<f64>,
    pub grad_weights: Tensor2,
    pub grad_bias: Vec<f64>,
}

impl ParamBlock {
    pub fn zeros(name: impl Into<String>, fan_in: usize, fan_out: usize) -> Self {
        Self {
            name: name.into(),
            weights: Tensor2::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
            grad_weights: Tensor2::zeros(fan_in, fan_out),
            grad_bias: vec![0.0; fan_out],
        }
    }

    pub fn new(name: impl Into<String>, weights: Tensor2, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::Dimension(format!(
                "bias of length {} for {} outputs",
                bias.len(),
                weights.cols()
            )));
        }
        let (r, c) = weights.shape();
        Ok(Self {
            name: name.into(),
            grad_weights: Tensor2::zeros(r, c),
            grad_bias: vec![0.0; c],
            weights,
            bias,
        })
    }

    /// Standard-normal entries scaled by `1/sqrt(fan_in)`, for weights and bias alike.
    pub fn random_normal<R: Rng + ?Sized>(
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let scale = 1.0 / (fan_in as f64).sqrt();
        let mut block = Self::zeros(name, fan_in, fan_out);
        for w in block.weights.values_mut() {
            *w = scale * rng.sample::<f64, _>(StandardNormal);
        }
        for b in &mut block.bias {
            *b = scale * rng.sample::<f64, _>(StandardNormal);
        }
        block
    }

    #[inline]
    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    pub fn zero_grad(&mut self) {
        self.grad_weights.fill(0.0);
        self.grad_bias.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn num_params(&self) -> usize {
        self.weights.values().len() + self.bias.len()
    }

    /// Flat view `[weights..., bias...]`, in the order used by gradient checks.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = self.weights.values().to_vec();
        out.extend_from_slice(&self.bias);
        out
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        let mut out = self.grad_weights.values().to_vec();
        out.extend_from_slice(&self.grad_bias);
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let nw = self.weights.values().len();
        assert_eq!(flat.len(), nw + self.bias.len(), "flat parameter length");
        self.weights.values_mut().copy_from_slice(&flat[..nw]);
        self.bias.copy_from_slice(&flat[nw..]);
    }
}

/// Row-wise `input·W + b`.
pub fn affine_forward(input: &Tensor2, params: &ParamBlock) -> Result<Tensor2> {
    if input.cols() != params.fan_in() {
        return Err(Error::Dimension(format!(
            "input has {} columns, layer '{}' expects {}",
            input.cols(),
            params.name,
            params.fan_in()
        )));
    }
    let mut out = input.matmul(&params.weights)?;
    for r in 0..out.rows() {
        for (o, b) in out.row_mut(r).iter_mut().zip(&params.bias) {
            *o += b;
        }
    }
    Ok(out)
}

/// Single-vector form of [`affine_forward`].
pub fn affine_forward_vec(input: &[f64], params: &ParamBlock) -> Result<Vec<f64>> {
    if input.len() != params.fan_in() {
        return Err(Error::Dimension(format!(
            "input has length {}, layer '{}' expects {}",
            input.len(),
            params.name,
            params.fan_in()
        )));
    }
    let mut out = params.bias.clone();
    for (k, &x) in input.iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(params.weights.row(k)) {
            *o += x * w;
        }
    }
    Ok(out)
}

/// Accumulates parameter gradients of an affine layer and returns the gradient
/// with respect to its input.
pub fn affine_backward(
    input: &Tensor2,
    params: &mut ParamBlock,
    grad_out: &Tensor2,
) -> Result<Tensor2> {
    if grad_out.shape() != (input.rows(), params.fan_out()) || input.cols() != params.fan_in() {
        return Err(Error::Dimension(format!(
            "affine backward through '{}': input {:?}, grad {:?}",
            params.name,
            input.shape(),
            grad_out.shape()
        )));
    }
    let mut grad_in = Tensor2::zeros(input.rows(), input.cols());
    for r in 0..input.rows() {
        let g = grad_out.row(r);
        for (gb, &gi) in params.grad_bias.iter_mut().zip(g) {
            *gb += gi;
        }
        let x = input.row(r);
        for (k, &xk) in x.iter().enumerate() {
            let w_row = params.weights.row(k);
            grad_in.set(r, k, w_row.iter().zip(g).map(|(w, gi)| w * gi).sum());
            if xk != 0.0 {
                for (gw, &gi) in params.grad_weights.row_mut(k).iter_mut().zip(g) {
                    *gw += xk * gi;
                }
            }
        }
    }
    Ok(grad_in)
}

/// Single-vector form of [`affine_backward`].
pub fn affine_backward_vec(
    input: &[f64],
    params: &mut ParamBlock,
    grad_out: &[f64],
) -> Result<Vec<f64>> {
    let x = Tensor2::from_vec(1, input.len(), input.to_vec())?;
    let g = Tensor2::from_vec(1, grad_out.len(), grad_out.to_vec())?;
    Ok(affine_backward(&x, params, &g)?.values().to_vec())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::numcore::check_gradient;

    fn naive_affine(input: &Tensor2, p: &ParamBlock) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..input.rows() {
            for j in 0..p.fan_out() {
                let mut acc = 0.0;
                for k in 0..input.cols() {
                    acc += input.get(i, k) * p.weights.get(k, j);
                }
                out.push(acc + p.bias[j]);
            }
        }
        out
    }

    fn random_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor2 {
        let v = (0..r * c).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Tensor2::from_vec(r, c, v).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&mut rng, 3, 5);
        let p = ParamBlock::new("id", Tensor2::identity(5), vec![0.0; 5]).unwrap();
        assert_eq!(affine_forward(&x, &p).unwrap(), x);
    }

    #[test]
    fn hand_arithmetic() {
        let x = Tensor2::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
        let p = ParamBlock::new("p", Tensor2::identity(2), vec![1.0, -1.0]).unwrap();
        assert_eq!(affine_forward(&x, &p).unwrap().values(), &[2.0, 0.0]);
    }

    #[test]
    fn matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (n, din, dout) = (
                rng.gen_range(1..=16),
                rng.gen_range(1..=16),
                rng.gen_range(1..=16),
            );
            let x = random_tensor(&mut rng, n, din);
            let p = ParamBlock::random_normal("p", din, dout, &mut rng);
            let got = affine_forward(&x, &p).unwrap();
            for (a, b) in got.values().iter().zip(naive_affine(&x, &p)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let x = Tensor2::zeros(2, 3);
        let p = ParamBlock::zeros("p", 4, 2);
        assert!(matches!(affine_forward(&x, &p), Err(Error::Dimension(_))));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_tensor(&mut rng, 3, 4);
        let base = ParamBlock::random_normal("p", 4, 5, &mut rng);
        let upstream = random_tensor(&mut rng, 3, 5);
        // scalar = <upstream, affine(x)>
        let f = |theta: &[f64]| {
            let mut p = base.clone();
            p.set_flat_params(theta);
            let out = affine_forward(&x, &p).unwrap();
            let value = out
                .values()
                .iter()
                .zip(upstream.values())
                .map(|(a, b)| a * b)
                .sum();
            p.zero_grad();
            affine_backward(&x, &mut p, &upstream).unwrap();
            (value, p.flat_grads())
        };
        let err = check_gradient(f, &base.flat_params(), 1e-5);
        assert!(err < 1e-8, "rel err {err}");
    }
}
