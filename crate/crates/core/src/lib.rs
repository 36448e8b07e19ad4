//! Simulation of planar ultrasound phased arrays powering millimetre-scale
//! implants: directivity analytics, layered-medium propagation, implant and
//! clutter scenes, beamforming, and intensity-limited link budgets.
//!
//! Units throughout: mm, µs, MHz, m/s, kg/m³, dB/cm. Intensities are in
//! mW/cm², pressures in Pa.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamform;
pub mod dsp;
pub mod error;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod layout;
pub mod medium;
pub mod metrics;
pub mod scene;
pub mod signal;

pub use error::{Error, Result};
pub use geometry::Point3;
pub use grid::SampleGrid;
pub use layout::{build_array_layout, ArrayLayout, Element};
pub use medium::{LayeredMedium, Medium, RayPath, Slab};
pub use scene::{Clutter, Implant, LoadState, Scene};
pub use signal::{delayed_tone_burst, tone_burst, ExcitationSet, Waveform};

/// Library version, recorded in result manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
