//! Simulation and verification core for nonlinear state observers.
//!
//! Luenberger-type designs from a coordinate change (`Kklo`), parameter
//! estimation based observers (`Pebo`), their block combination
//! (`KklPebo`) and generalised immersion-and-invariance observers
//! (`IioGeneric`), with the benchmark plants they are tested on and numerical
//! checks of the identities behind them.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod numerics;
pub mod observers;
pub mod plants;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use numerics::RealVec;
