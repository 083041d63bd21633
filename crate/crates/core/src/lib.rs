//! Desk-scale benchmark of transformer-encoder variants and hidden
//! activations on judgment-outcome classification.

pub mod activations;
pub mod bench;
pub mod data;
pub mod model;
pub mod objectives;
pub mod rng;
pub mod tensor;
pub mod train;
