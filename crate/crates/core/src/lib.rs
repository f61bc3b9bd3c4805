//! Graph convolutional networks for graphs with missing node features.
//!
//! Missing features are represented by a diagonal Gaussian mixture; the first
//! layer computes the expected activation of each neuron under that mixture
//! in closed form, and the mixture is trained jointly with the network.

pub mod activation;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gmm;
pub mod graph;
pub mod impute;
pub mod linalg;
pub mod mask;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
