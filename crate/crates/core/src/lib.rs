//! Person-centric dense video captioning.
//!
//! Person tracks become decoder queries; a multi-scale deformable
//! transformer localizes each person's temporal extent and an LSTM with
//! deformable soft attention writes one caption per person. The crate also
//! carries the evaluation protocol and a seeded synthetic corpus generator.

pub mod annotation;
pub mod diffcore;
pub mod geometry;
pub mod gradsuite;
pub mod metrics;
pub mod model;
pub mod msdatt;
pub mod scalar;
pub mod setcrit;
pub mod synth;
pub mod text;

pub use scalar::Scalar;

pub type Tensor64 = diffcore::Tensor<f64>;
pub type Tensor32 = diffcore::Tensor<f32>;
pub type Tape64 = diffcore::Tape<f64>;
pub type Tape32 = diffcore::Tape<f32>;
