//! Dense f64 tensors, the handful of kernels the pipeline needs (each with a
//! hand-derived backward), a seeded PRNG and a central-difference gradient
//! checker.

mod gradcheck;
mod ops;
mod rng;
mod tensor;

pub use gradcheck::{grad_check, grad_check_coords};
pub(crate) use ops::{gemm_strided, softmax_in_place};
pub use ops::{
    gelu, gelu_backward, layer_norm, layer_norm_backward, layer_norm_forward, matmul, matmul_nt,
    matmul_tn, softmax, softmax_backward_rows, LayerNormCache, GELU_COEFF, GELU_SQRT_2_OVER_PI,
};
pub use rng::Rng;
pub use tensor::Tensor;
