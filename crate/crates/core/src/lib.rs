//! OTFS modulation with receive antenna selection.
//!
//! The crate covers the discrete delay-Doppler signal model (transforms,
//! effective channels, symbol matrices, phase rotation), random channel
//! generation for integer and fractional taps, multi-antenna stacking with
//! Frobenius-norm receive antenna selection and Alamouti space-time coding,
//! ML/MMSE detection, closed-form pairwise error bounds with the diversity
//! orders they imply, and a deterministic Monte Carlo BER engine.

pub mod analysis;
pub mod channel;
pub mod dd;
pub mod detect;
pub mod error;
pub mod grid;
pub mod multiant;
pub mod sim;
pub mod transform;

pub use error::{Error, Result};
pub use grid::{DdGrid, DdVector};
