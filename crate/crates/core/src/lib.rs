//! Learned least-action regularization for linear inverse problems.
//!
//! A latent trajectory `z_0 → z_N` is driven by learned convex potentials and
//! pulled onto the data by a regularized least-squares solve. Two solvers are
//! provided: block-tridiagonal fixed-point sweeps ([`leastaction::la_net`])
//! and a learned shooting method ([`shooting::hyper_resnet`]).

pub mod conv;
pub mod error;
pub mod experiments;
pub mod formats;
pub mod leastaction;
pub mod linalg;
pub mod operators;
pub mod potential;
pub mod seeding;
pub mod shooting;
pub mod solvers;
pub mod training;

pub use conv::LatentShape;
pub use error::{DripError, Result};
pub use operators::{LinearMap, Operator};
