//! Domain-separated self-supervised depth estimation for day and night
//! driving imagery.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod losses;
pub mod network;
pub mod trainer;

pub use error::{AddsError, Result};
