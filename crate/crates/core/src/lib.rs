//! Masked-trajectory pretraining toolkit for multi-agent motion forecasting.

pub mod masking;
pub mod metrics;
pub mod model;
pub mod occlusion;
pub mod rng;
pub mod scene;
pub mod synth;
pub mod tape;
pub mod training;
