//! Tools for measuring how much of an input survives in the hidden-layer
//! representations of small neural networks.
//!
//! Three complementary probes are provided:
//!
//! * [`inversion`]: gradient descent on an input so that its layer-`l`
//!   embedding approaches a target embedding, with per-iteration metrics
//!   (`m_g`, `m_i`) and the shifted-input reference `m_s`.
//! * [`analytic`]: exact layer-by-layer inversion of bias-and-weights linear
//!   models, a conditioning probe, and the ReLU width-capacity calculator.
//! * [`trainer`]: toy classification training so untrained, pattern-trained
//!   and noise-trained models can be compared.
//!
//! Everything is deterministic under a fixed seed.

pub mod analytic;
pub mod autodiff;
pub mod error;
pub mod gates;
pub mod inversion;
pub mod model;
pub mod pattern;
pub mod rng;
pub mod sweep;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{Layer, Model, Stage};
pub use rng::SeededRng;
pub use tensor::{Precision, Tensor};
