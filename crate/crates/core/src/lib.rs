//! Discretization-agnostic learning on surfaces.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: meshes, point clouds, file I/O, synthetic shapes and resampling.
//! * [`sparse`] and [`cholesky`]: compressed sparse rows and an envelope factorization.
//! * [`operators`]: Laplacian, lumped mass, tangent frames, gradient matrix and the on-disk cache.
//! * [`spectral`]: generalized eigenbasis, implicit/spectral diffusion, heat kernel signatures.
//! * [`autodiff`]: a small reverse-mode tape over dense 64-bit tensors.
//! * [`net`]: the network blocks, parameters and checkpoints.
//! * [`train`]: losses, ADAM, schedule, augmentation and the fit/evaluate loops.
//! * [`parallel`]: the worker-thread setting and an order-preserving parallel map.
//! * [`experiments`]: verification suites and the desk-scale experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod autodiff;
mod blas;
pub mod cholesky;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod net;
pub mod operators;
pub mod parallel;
pub mod rng;
pub mod sparse;
pub mod spectral;
pub mod train;

pub use error::{Error, Result};
