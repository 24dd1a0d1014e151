//! Differentiable simulation of photographing an LCD monitor, and adversarial
//! attacks that optimize sensor noise injected in the Bayer raw domain.
//!
//! The capture chain is:
//!
//! ```text
//! image -> resize (alpha) -> subpixel mosaic -> rotate + lens distortion
//!       -> Bayer CFA -> + sensor noise -> bilinear demosaic -> denoise
//! ```
//!
//! Every stage that sits between the noise and the classifier is linear with a
//! hand-written adjoint, so gradients of a classifier loss can be pulled back
//! onto the raw-domain noise exactly.

pub mod attack;
pub mod classifier;
mod error;
pub mod gratings;
pub mod imagecore;
pub mod lcdsim;
pub mod robustness;
pub mod sensor;

pub use error::{Error, Result};
