//! Dense linear algebra, nonlinearities, optimizer and seeded randomness.

mod adam;
mod matrix;
mod ops;
mod rng;
mod scalar;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use matrix::{Matrix, Trans};
pub use ops::{
    argmax, finite_diff_grad, log_sum_exp, sample_categorical, sigmoid, softmax, softmax_in_place,
};
pub use rng::{stream_key, RngStream};
pub use scalar::Scalar;
