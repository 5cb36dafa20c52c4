//! Dense linear-algebra substrate: tensors, affine layers with explicit
//! gradient accumulation, L2 normalization, Adam, and gradient checking.

mod adam;
mod gradcheck;
mod normalize;
mod param;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::check_gradient;
pub use normalize::{l2_normalize, Normalized};
pub use param::{
    affine_backward, affine_backward_vec, affine_forward, affine_forward_vec, ParamBlock,
};
pub use tensor::{dot, norm, Tensor2};
