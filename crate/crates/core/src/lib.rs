//! Hyperbolic motion of closed plane curves in a radial potential with inner
//! pressure: spectral geometry, time integration, conservation diagnostics,
//! linearization and a Nash–Moser iteration at desk scale.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod geometry;
pub mod harness;
pub mod linearized;
pub mod nashmoser;
pub mod potential;
pub mod spectral;

pub use error::{Error, Result};
pub use field::VectorField;
