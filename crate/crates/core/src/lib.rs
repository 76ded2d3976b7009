//! Joint ensemble separation and affine system identification from aggregate
//! snapshot observations.
//!
//! A population observed only as unlabeled point clouds at `T` time instants
//! is split into `K` ensembles, each following its own affine dynamics
//! `x⁺ = A_k x + b_k`. The split and the dynamics are estimated jointly by
//! alternating between a coupled optimal-transport linear program (plans and
//! per-ensemble marginals, dynamics fixed) and weighted least squares
//! (dynamics, plans fixed).

pub mod bcd;
pub mod dynamics;
pub mod eval;
pub mod error;
pub mod measures;
pub mod synth;
pub mod transport;

pub use error::{Error, Result};
