//! Small dense and convolutional building blocks with explicit backward passes.
//!
//! Everything is `f64` and row-major. Batches are flat slices of
//! `batch × features`; images are NHWC.

pub mod adam;
pub mod conv;
pub mod linalg;
pub mod mlp;
pub mod params;

pub use adam::{Adam, AdamConfig};
pub use conv::{Conv2d, ConvGeometry, ConvTranspose2d};
pub use mlp::{Activation, Linear, Mlp, MlpTape};
pub use params::{soft_update, ParamView, Parameters};
