//! Directivity analytics and numerical propagation.

pub mod analytics;
pub mod engine;
pub mod io;
pub mod propagation;

pub use analytics::*;
pub use engine::{
    receive_at_points, receive_from_sources, simulate_field, EvaluationMethod, FieldData, FieldEngine, FieldSettings,
    PressureField,
};
pub use propagation::{PathTerm, PropagationSettings, Propagator};
