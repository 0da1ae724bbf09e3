//! Core of the AV-Net artery-vein classifier.
//!
//! Everything in this crate is pure computation over in-memory buffers: a
//! small N-dimensional tensor type with reverse-mode differentiation, the
//! dense encoder-decoder network built on top of it, the dice and focal
//! losses, Adam, pixel metrics, the synthetic OCT/OCTA generator and the
//! cross-validation training protocol. File formats, PNG handling and the
//! command-line front end live in the `avnet` crate.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. Enabling `std` only switches dependencies to their std builds,
//! which lets the GEMM backend pick SIMD kernels at runtime.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod archive;
pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use autodiff::{Graph, OpKind, Var};
pub use error::{Error, Result};
pub use kernels::Mode;
pub use scalar::Scalar;
pub use tensor::Tensor;
