//! Certification of image classifiers against semantic perturbations.
//!
//! Semantic transforms (hue, saturation, lightness, brightness/contrast,
//! rotation) are expressed as functions of a few real parameters and either
//! compiled into ReLU layers prepended to the classifier or linearly bounded
//! by sampling; a linear-relaxation bound engine then certifies that every
//! class margin stays positive over a parameter box. Translation and
//! occlusion are certified by exhaustive enumeration.

pub mod attack;
pub mod bounds;
pub mod certify;
pub mod color;
pub mod conv;
pub mod data;
pub mod error;
pub mod experiment;
pub mod format;
pub mod model;
pub mod pwl;
pub mod rotation;
pub mod threat;

pub use error::{Error, Result};
