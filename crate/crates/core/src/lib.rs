//! Reduced-order Burgers modelling with LSTM nudging data assimilation.

pub mod assimilation;
mod binio;
pub mod burgers;
pub mod error;
pub mod grom;
pub mod lstm;
pub mod numerics;
pub mod pod;
pub mod rng;

pub use error::{Error, Result};
