//! Length-extrapolation experiments on Dyck-(k,m) and SCAN.
//!
//! Models are trained either to predict an end-of-sequence token (`+EOS`)
//! or not (`-EOS`, optionally with random truncation). Everything numeric is
//! generic over [`numerics::Scalar`]; the aliases below fix the precision.
// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod artifacts;
pub mod condition;
pub mod error;
pub mod evalx;
pub mod experiment;
pub mod langgen;
pub mod models;
pub mod numerics;
pub mod training;

pub use condition::Condition;
pub use error::{Error, Result};

pub type Matrix64 = numerics::Matrix<f64>;
pub type Matrix32 = numerics::Matrix<f32>;
pub type LstmLm64 = models::LstmLm<f64>;
pub type LstmLm32 = models::LstmLm<f32>;
pub type Seq2Seq64 = models::Seq2Seq<f64>;
pub type Seq2Seq32 = models::Seq2Seq<f32>;
pub type StateTrace64 = models::StateTrace<f64>;
pub type StateTrace32 = models::StateTrace<f32>;
