//! Gradient-enhanced training of two-layer ReLU networks: models, losses,
//! optimizer, approximation/generalization checks, and an elliptic PDE
//! pipeline for building gradient-enhanced surrogate data.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod losses;
pub mod network;
pub mod optimizer;
pub mod pde;
pub mod rng;
pub mod targets;
pub mod theory;

pub use dataset::{Dataset, EnhancementSpec, LabeledSample};
pub use error::{Error, Result};
pub use losses::Objective;
pub use network::TwoLayerNet;
pub use optimizer::{train, TrainConfig};
pub use targets::Target;
