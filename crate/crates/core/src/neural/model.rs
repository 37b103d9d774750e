use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::adam::AdamState;
use super::combine::CombinedLayer;
use super::layers::{GcnLayer, SheafConvLayer};
use super::loss::softmax_cross_entropy;
use super::param::{InitScheme, Param};
use crate::error::{shape_err, Error, Result};
use crate::exec::Execution;
use crate::linalg::Matrix;
use crate::sheaf::BlockSparseMatrix;

#[derive(Clone, Debug)]
pub enum Layer {
    SheafConv(SheafConvLayer),
    Gcn(GcnLayer),
    Combined(CombinedLayer),
}

impl Layer {
    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        match self {
            Layer::SheafConv(l) => l.forward(x),
            Layer::Gcn(l) => l.forward(x),
            Layer::Combined(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, dy: &Matrix) -> Result<Matrix> {
        match self {
            Layer::SheafConv(l) => l.backward(dy),
            Layer::Gcn(l) => l.backward(dy),
            Layer::Combined(l) => l.backward(dy),
        }
    }

    pub fn in_features(&self) -> usize {
        match self {
            Layer::SheafConv(l) => l.in_features(),
            Layer::Gcn(l) => l.in_features(),
            Layer::Combined(l) => l.in_features(),
        }
    }

    pub fn out_features(&self) -> usize {
        match self {
            Layer::SheafConv(l) => l.out_features(),
            Layer::Gcn(l) => l.out_features(),
            Layer::Combined(l) => l.out_features(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::SheafConv(l) => l.params_mut(),
            Layer::Gcn(l) => l.params_mut(),
            Layer::Combined(l) => l.params_mut(),
        }
    }

    pub fn set_execution(&mut self, exec: Execution) {
        match self {
            Layer::SheafConv(l) => l.set_execution(exec),
            Layer::Gcn(l) => l.set_execution(exec),
            Layer::Combined(l) => l.set_execution(exec),
        }
    }

    /// Cached pre-activation of the last forward pass, for ReLU layers.
    pub(crate) fn relu_preactivation(&self) -> Option<&Matrix> {
        match self {
            Layer::SheafConv(l) if l.activation() == Activation::Relu => l.preactivation(),
            Layer::Gcn(l) if l.activation() == Activation::Relu => l.preactivation(),
            Layer::Combined(l) if l.activation() == Activation::Relu => l.preactivation(),
            _ => None,
        }
    }
}

impl From<SheafConvLayer> for Layer {
    fn from(l: SheafConvLayer) -> Self {
        Layer::SheafConv(l)
    }
}

impl From<GcnLayer> for Layer {
    fn from(l: GcnLayer) -> Self {
        Layer::Gcn(l)
    }
}

impl From<CombinedLayer> for Layer {
    fn from(l: CombinedLayer) -> Self {
        Layer::Combined(l)
    }
}

/// A stack of layers evaluated in order; the output of the last layer is
/// used as class logits.
#[derive(Clone, Debug)]
pub struct Model {
    layers: Vec<Layer>,
    stalk_dim: usize,
}

impl Model {
    pub fn new(layers: Vec<Layer>, stalk_dim: usize) -> Result<Self> {
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_features() != pair[1].in_features() {
                return Err(shape_err(
                    "Model::new",
                    format!("layer {} input of {} features", i + 1, pair[0].out_features()),
                    pair[1].in_features(),
                ));
            }
        }
        Ok(Model { layers, stalk_dim })
    }

    fn widths(in_features: usize, hidden: usize, depth: usize, classes: usize) -> Result<Vec<usize>> {
        if depth == 0 {
            return Err(Error::InvalidConfig("model needs at least one layer".into()));
        }
        let mut w = vec![in_features];
        w.extend(std::iter::repeat_n(hidden, depth - 1));
        w.push(classes);
        Ok(w)
    }

    fn activation_for(i: usize, depth: usize) -> Activation {
        if i + 1 == depth {
            Activation::Identity
        } else {
            Activation::Relu
        }
    }

    /// `depth` SheafConv layers `in -> hidden -> ... -> hidden -> classes`
    /// sharing one diffusion operator; ReLU everywhere except the logits.
    pub fn sheaf_nn(
        rng: &mut impl Rng,
        scheme: &InitScheme,
        diffusion: Arc<BlockSparseMatrix>,
        stalk_dim: usize,
        in_features: usize,
        hidden: usize,
        depth: usize,
        classes: usize,
    ) -> Result<Self> {
        let w = Self::widths(in_features, hidden, depth, classes)?;
        let layers = (0..depth)
            .map(|i| {
                SheafConvLayer::init(
                    rng,
                    scheme,
                    diffusion.clone(),
                    stalk_dim,
                    w[i],
                    w[i + 1],
                    Self::activation_for(i, depth),
                )
                .map(Layer::from)
            })
            .collect::<Result<Vec<_>>>()?;
        Model::new(layers, stalk_dim)
    }

    /// Same shape as [`Model::sheaf_nn`] with GCN layers.
    pub fn gcn(
        rng: &mut impl Rng,
        scheme: &InitScheme,
        propagation: Arc<BlockSparseMatrix>,
        in_features: usize,
        hidden: usize,
        depth: usize,
        classes: usize,
    ) -> Result<Self> {
        let w = Self::widths(in_features, hidden, depth, classes)?;
        let layers = (0..depth)
            .map(|i| {
                GcnLayer::init(rng, scheme, propagation.clone(), w[i], w[i + 1], Self::activation_for(i, depth))
                    .map(Layer::from)
            })
            .collect::<Result<Vec<_>>>()?;
        Model::new(layers, 1)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn stalk_dim(&self) -> usize {
        self.stalk_dim
    }

    pub fn set_execution(&mut self, exec: Execution) {
        self.layers.iter_mut().for_each(|l| l.set_execution(exec));
    }

    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h)?;
        }
        Ok(h)
    }

    /// Backpropagates `dlogits`; returns the gradient with respect to the input.
    pub fn backward(&mut self, dlogits: &Matrix) -> Result<Matrix> {
        let mut g = dlogits.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn num_parameters(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    /// One full-graph step: forward, cross-entropy on `mask`, backward, Adam.
    /// Returns the loss at the parameters before the update.
    pub fn train_step(&mut self, x: &Matrix, labels: &[usize], mask: &[usize], adam: &mut AdamState) -> Result<f64> {
        self.zero_grad();
        let logits = self.forward(x)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, labels, mask)?;
        self.backward(&dlogits)?;
        adam.step(&mut self.params_mut())?;
        Ok(loss)
    }

    /// Signs of every ReLU pre-activation from the last forward pass.
    pub(crate) fn relu_pattern(&self) -> Vec<bool> {
        self.layers
            .iter()
            .filter_map(Layer::relu_preactivation)
            .flat_map(|p| p.as_slice().iter().map(|&v| v > 0.0))
            .collect()
    }

    pub fn to_checkpoint(&self) -> Result<ModelCheckpoint> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::SheafConv(s) => Ok(LayerCheckpoint::SheafConv {
                    a: s.a().clone(),
                    b: s.b().clone(),
                    activation: s.activation(),
                }),
                Layer::Gcn(g) => Ok(LayerCheckpoint::Gcn {
                    w: g.w().clone(),
                    activation: g.activation(),
                }),
                Layer::Combined(_) => Err(Error::Unsupported("checkpointing combined layers".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelCheckpoint {
            layers,
            k: self.stalk_dim,
        })
    }

    /// Rebuilds a model from a checkpoint; every layer uses `operator`.
    pub fn from_checkpoint(ckpt: &ModelCheckpoint, operator: Arc<BlockSparseMatrix>) -> Result<Self> {
        let layers = ckpt
            .layers
            .iter()
            .map(|l| match l {
                LayerCheckpoint::SheafConv { a, b, activation } => {
                    if b.rows() != ckpt.k {
                        return Err(shape_err("Model::from_checkpoint", format!("{0}x{0} B", ckpt.k), format!("{:?}", b.shape())));
                    }
                    SheafConvLayer::new(a.clone(), b.clone(), operator.clone(), *activation).map(Layer::from)
                }
                LayerCheckpoint::Gcn { w, activation } => {
                    GcnLayer::new(w.clone(), operator.clone(), *activation).map(Layer::from)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Model::new(layers, ckpt.k)
    }
}

/// Serialized weights, `{"layers": [...], "k": int}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub layers: Vec<LayerCheckpoint>,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum LayerCheckpoint {
    #[serde(rename = "sheafconv")]
    SheafConv {
        #[serde(rename = "A")]
        a: Matrix,
        #[serde(rename = "B")]
        b: Matrix,
        activation: Activation,
    },
    #[serde(rename = "gcn")]
    Gcn {
        #[serde(rename = "W")]
        w: Matrix,
        activation: Activation,
    },
}
