//! FWin: window attention with Fourier token mixing for long-horizon
//! forecasting with known covariates.
//!
//! The crate is self-contained: a small dense tensor type with a
//! reverse-mode tape ([`tensor`], [`tape`]), mixed-radix FFTs ([`fft`]),
//! attention kernels ([`attention`]), the encoder-decoder model ([`model`]),
//! the weekly data pipeline ([`data`]) and the training loop ([`training`]).

pub mod attention;
pub mod data;
pub mod error;
pub mod fft;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod par;
pub mod param;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use param::{GradMap, ParamId, ParamStore, Parameter};
pub use tape::{Gradients, OpKind, Tape, Var};
pub use tensor::Tensor;
