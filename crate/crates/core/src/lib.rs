//! Multi-granular explanations for video summarizers: which fragments of a
//! video drive its summary scores, which objects inside those fragments
//! matter, and how faithful those explanations are.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod fragment_explainer;
pub mod fragmentation;
pub mod lime;
pub mod model;
pub mod object_explainer;
pub mod oracle;
pub mod overlay;
pub mod surrogate;
pub mod synth;

pub use error::{Error, Result};
