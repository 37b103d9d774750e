//! Sheaf neural network and GCN layers, trained with hand-written
//! reverse-mode gradients and Adam.
//!
//! Every layer exposes `forward(X) -> Y` and `backward(dL/dY) -> dL/dX`;
//! `backward` accumulates parameter gradients into the layer's [`Param`]
//! slots. A [`Model`] chains layers and runs full-graph training steps.

mod activation;
mod adam;
mod combine;
pub mod gradcheck;
mod layers;
mod loss;
mod model;
mod param;

pub use activation::{relu, relu_grad, Activation};
pub use adam::{AdamConfig, AdamState};
pub use combine::{CombineMode, CombinedLayer};
pub use layers::{kron_apply, kron_apply_t, GcnLayer, SheafConvLayer};
pub use loss::softmax_cross_entropy;
pub use model::{Layer, LayerCheckpoint, Model, ModelCheckpoint};
pub use param::{InitScheme, Param};
