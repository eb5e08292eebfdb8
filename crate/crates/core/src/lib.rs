//! Macroscale level-set topology optimization of structures made of an
//! uncertain random microstructure.
//!
//! The pipeline: random two-phase microstructures ([`microstructure`]) are
//! homogenized into a catalog of constitutive tensors ([`homogenization`]);
//! a macroscale design on a structured 2D mesh ([`macro_model`]) is evaluated
//! for random assignments of catalog entries to elements, differentiated by
//! the adjoint method ([`sensitivity`]) and advanced with mini-batch
//! stochastic optimizers ([`optim`]). [`driver`] ties it together.

pub mod driver;
pub mod error;
pub mod homogenization;
pub mod io;
pub mod linalg;
pub mod macro_model;
pub mod microstructure;
pub mod optim;
pub mod par;
pub mod rng;
pub mod sensitivity;

pub use error::{Error, Result};
pub use par::Exec;
pub use rng::{Purpose, RandomStream};
