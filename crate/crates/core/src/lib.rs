//! Subject-invariant human activity recognition.
//!
//! A convolutional encoder `F` is trained with a reconstructor `R`, an
//! activity classifier `C` and a discriminator `D` that decides whether two
//! windows of the same activity come from the same person. Training then
//! pushes `F` to fool `D`, which removes subject identity from the latent
//! space while keeping what `C` needs.
//!
//! Start with [`presets::desk_synthetic`] and [`evaluation::run_loso`], or
//! see the runnable programs under `examples/`.

pub mod cache;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod model;
pub mod nn;
pub mod pairs;
pub mod plot;
pub mod presets;
pub mod records;
pub mod segmentation;
pub mod shift;
pub mod trainer;

pub use error::{Error, Result};
