//! Demand forecasting under a negative price-elasticity constraint.
//!
//! The pipeline is: Chebyshev least-squares denoising of input features
//! ([`denoise`]), lag selection and min-max normalization ([`dataset`]), a
//! GRU with a linear head whose price Jacobian and mixed second derivatives
//! are computed exactly ([`gru`]), a composite MSE + hinge loss ([`loss`]),
//! NAdam and L-BFGS inner optimizers ([`optim`]), and a population-based
//! trainer that evolves the learning rate and physics weight ([`pbt`]).
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. File formats, the CLI and threaded evaluation live in the
//! companion `preig` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dataset;
pub mod denoise;
mod error;
pub mod gru;
pub mod loss;
mod math;
pub mod metrics;
pub mod optim;
pub mod pbt;
pub mod synthetic;

pub use error::{Error, Result};
