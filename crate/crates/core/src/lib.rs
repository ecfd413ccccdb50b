//! Clifford neural layers for PDE surrogates: algebra, fields, transforms,
//! layers, gradients, models and data generation.

pub mod algebra;
pub mod autodiff;
pub mod datagen;
pub mod error;
pub mod fields;
pub mod layers;
pub mod models;
pub mod transforms;

pub use error::{Error, Result};
