//! PAC-Bayesian generalization analysis for layered quantum-channel models.

pub mod channel;
pub mod clusterdata;
pub mod equivariant;
pub mod error;
pub mod io;
pub mod linalg;
pub mod models;
pub mod norms;
pub mod pacbayes;
pub mod perturb;
pub mod seed;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
