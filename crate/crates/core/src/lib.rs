//! Text-conditioned multi-view 2D motion diffusion with lifting to global 3D
//! motion.
//!
//! The pipeline learns a single-view 2D local-motion denoiser, extends it with
//! frozen-base multi-view adapters (view attention, camera embedding, root
//! velocity head), and lifts sampled multi-view motion to 3D by least-squares
//! triangulation plus root-velocity integration.

pub mod camera;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod denoiser;
pub mod diffusion;
pub mod evaluation;
pub mod generate;
mod error;
pub mod lifting;
pub mod motion;
pub mod nn;
pub mod par;
pub mod pipeline;
pub mod plot;
pub mod text;
pub mod training;

pub use error::{Error, Result};
