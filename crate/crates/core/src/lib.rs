//! αβ-HMM belief filtering over a finite set of hidden states, with the
//! classical baselines, the deterministic reference system that describes
//! its steady state, closed-form bounds, and a Monte Carlo harness.

pub mod dynamics;
pub mod error;
pub mod filter;
pub mod model;
pub mod numeric;
pub mod sim;

pub use error::{Error, Result};
pub use filter::{Belief, FilterConfig, TransitionMatrix};
pub use model::{InfoProfile, Model, ModelConfig, ObservationModel};
