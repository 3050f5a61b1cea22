//! Planning and density oracles, in known-model and sample-based forms.

pub mod exact;
pub mod sample;
