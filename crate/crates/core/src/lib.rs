//! Cellular sheaves on graphs, sheaf diffusion operators and sheaf neural
//! networks, together with a synthetic signed-graph node classification
//! benchmark comparing sheaf networks against graph convolutional networks.

pub mod checks;
pub mod error;
pub mod exec;
pub mod harness;
pub mod linalg;
pub mod neural;
pub mod sheaf;
pub mod synth;

pub(crate) mod eigen;
pub(crate) mod oracle;

pub use error::{Error, Result};
pub use exec::Execution;
pub use linalg::{FeatureMatrix, Matrix};
