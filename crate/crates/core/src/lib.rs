//! Numerical core for studying how over-parameterized linear networks (and a
//! symmetric two-layer ReLU model) converge along the principal components of
//! their training data.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs plus an explicit seeded RNG; file formats, the
//! experiment runner and the command line live in the `pcbias` crate.
//!
//! Conventions used throughout:
//!
//! * data matrices are `q × n`, one example per column;
//! * the data covariance is the unnormalized `X Xᵀ`;
//! * a network's compact representation `Ŵ = W_L ⋯ W_1` is `K × q`;
//! * principal components are indexed from 0 in the API, largest first.

#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod dataset;
pub mod datagen;
pub mod error;
pub mod linalg;
pub mod linnet;
pub mod metrics;
pub mod relu2;
pub mod rng;
pub mod spectra;
pub mod stats;
pub mod theory;

pub use dataset::{Dataset, Moments};
pub use error::{Error, Result};
pub use linnet::DeepLinearNet;
pub use spectra::SpectralBasis;

/// Dense matrix type used across the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense column vector type used across the crate.
pub type Vector = nalgebra::DVector<f64>;
