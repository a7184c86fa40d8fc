use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use crate::error::{shape_err, Error, Result};
use crate::math::{gemm, Matrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Sigmoid => 2,
            Activation::Identity => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Activation::Relu,
            1 => Activation::Tanh,
            2 => Activation::Sigmoid,
            3 => Activation::Identity,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Identity => x,
        }
    }
}

/// How the final layer's output is interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    Linear,
    Logits,
    /// Two equal-width blocks: mean then log-variance.
    GaussianParams,
}

impl Head {
    pub(crate) fn code(self) -> u8 {
        match self {
            Head::Linear => 0,
            Head::Logits => 1,
            Head::GaussianParams => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Head::Linear,
            1 => Head::Logits,
            2 => Head::GaussianParams,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

/// Dense multilayer network layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: usize,
    pub layers: Vec<LayerSpec>,
    pub head: Head,
}

impl NetworkSpec {
    /// Hidden layers share `hidden_act`; the output layer is affine.
    pub fn mlp(input: usize, hidden: &[usize], hidden_act: Activation, output: usize, head: Head) -> Self {
        let mut layers: Vec<LayerSpec> = hidden
            .iter()
            .map(|&width| LayerSpec {
                width,
                activation: hidden_act,
            })
            .collect();
        layers.push(LayerSpec {
            width: output,
            activation: Activation::Identity,
        });
        Self { input, layers, head }
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.width)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if self.input == 0 || self.layers.iter().any(|l| l.width == 0) {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if self.head == Head::GaussianParams && self.output_width() % 2 != 0 {
            return Err(Error::Config("gaussian-params head needs an even output width".into()));
        }
        Ok(())
    }

    fn fan_io(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let ins = std::iter::once(self.input).chain(self.layers.iter().map(|l| l.width));
        ins.zip(self.layers.iter().map(|l| l.width))
    }

    pub fn param_count(&self) -> usize {
        self.fan_io().map(|(i, o)| i * o + o).sum()
    }
}

/// Weights (`in x out`) and biases (`1 x out`) per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub layers: Vec<(Matrix, Matrix)>,
}

impl ParamSet {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            layers: spec
                .fan_io()
                .map(|(i, o)| (Matrix::zeros(i, o), Matrix::zeros(1, o)))
                .collect(),
        }
    }

    /// Uniform Glorot initialization, zero biases.
    pub fn init(spec: &NetworkSpec, rng: &mut RngStream) -> Self {
        let mut p = Self::zeros(spec);
        for (w, _) in &mut p.layers {
            let limit = (6.0 / (w.rows() + w.cols()) as f64).sqrt();
            for v in w.data_mut() {
                *v = rng.random_range(-limit..limit);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|(w, b)| (Matrix::zeros(w.rows(), w.cols()), Matrix::zeros(b.rows(), b.cols())))
                .collect(),
        }
    }

    pub fn total_count(&self) -> usize {
        self.layers.iter().map(|(w, b)| w.data().len() + b.data().len()).sum()
    }

    pub fn same_shape(&self, other: &ParamSet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|((w1, b1), (w2, b2))| w1.shape() == w2.shape() && b1.shape() == b2.shape())
    }

    pub fn matches(&self, spec: &NetworkSpec) -> bool {
        self.same_shape(&ParamSet::zeros(spec))
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|(w, b)| w.is_finite() && b.is_finite())
    }

    /// All entries in layer order, weights before biases.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|(w, b)| w.data().iter().chain(b.data()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|(w, b)| w.data_mut().iter_mut().chain(b.data_mut().iter_mut()))
    }
}

/// Graph handles for a [`ParamSet`] registered on a tape.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub layers: Vec<(Var, Var)>,
}

impl ParamVars {
    pub fn register(g: &mut Graph, params: &ParamSet, trainable: bool) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|(w, b)| {
                if trainable {
                    (g.param(w.clone()), g.param(b.clone()))
                } else {
                    (g.constant(w.clone()), g.constant(b.clone()))
                }
            })
            .collect();
        Self { layers }
    }

    pub fn gradient(&self, grads: &super::Gradients, like: &ParamSet) -> ParamSet {
        ParamSet {
            layers: self
                .layers
                .iter()
                .zip(&like.layers)
                .map(|((wv, bv), (w, b))| (grads.wrt(*wv, w.shape()), grads.wrt(*bv, b.shape())))
                .collect(),
        }
    }
}

/// A network layout together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: ParamSet,
}

impl Network {
    pub fn new(spec: NetworkSpec, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        let params = ParamSet::init(&spec, rng);
        Ok(Self { spec, params })
    }

    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        forward(&self.spec, &self.params, batch)
    }

    pub fn forward_graph(&self, g: &mut Graph, vars: &ParamVars, x: Var) -> Var {
        forward_graph(&self.spec, vars, g, x)
    }
}

/// Row-wise network outputs.
pub fn forward(spec: &NetworkSpec, params: &ParamSet, batch: &Matrix) -> Result<Matrix> {
    if batch.cols() != spec.input {
        return Err(shape_err!("batch has {} columns, network expects {}", batch.cols(), spec.input));
    }
    if !params.matches(spec) {
        return Err(shape_err!("parameter shapes do not match the network layout"));
    }
    let mut h = batch.clone();
    for ((w, b), layer) in params.layers.iter().zip(&spec.layers) {
        let mut out = Matrix::zeros(h.rows(), w.cols());
        gemm(&h, false, w, false, &mut out, 0.0);
        let bias = b.data();
        for r in 0..out.rows() {
            for (v, bb) in out.row_mut(r).iter_mut().zip(bias) {
                *v = layer.activation.apply(*v + bb);
            }
        }
        h = out;
    }
    Ok(h)
}

/// Recorded forward pass; shapes are assumed validated by the caller.
pub fn forward_graph(spec: &NetworkSpec, vars: &ParamVars, g: &mut Graph, x: Var) -> Var {
    let mut h = x;
    for ((w, b), layer) in vars.layers.iter().zip(&spec.layers) {
        let z = g.matmul(h, *w);
        let z = g.add_bias(z, *b);
        h = match layer.activation {
            Activation::Relu => g.relu(z),
            Activation::Tanh => g.tanh(z),
            Activation::Sigmoid => g.sigmoid(z),
            Activation::Identity => z,
        };
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let spec = NetworkSpec::mlp(3, &[4], Activation::Tanh, 2, Head::Linear);
        let out = forward(&spec, &ParamSet::zeros(&spec), &Matrix::filled(5, 3, 0.7)).unwrap();
        assert_eq!(out, Matrix::zeros(5, 2));
    }

    #[test]
    fn identity_network() {
        let spec = NetworkSpec::mlp(3, &[], Activation::Relu, 3, Head::Linear);
        let mut p = ParamSet::zeros(&spec);
        p.layers[0].0 = Matrix::identity(3);
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.0, -0.5]]).unwrap();
        assert_eq!(forward(&spec, &p, &x).unwrap(), x);
    }

    #[test]
    fn small_net_matches_hand_computation() {
        // 2 -> 2 (relu) -> 1
        let spec = NetworkSpec::mlp(2, &[2], Activation::Relu, 1, Head::Linear);
        let p = ParamSet {
            layers: vec![
                (
                    Matrix::from_rows(&[[1.0, -1.0], [2.0, 0.5]]).unwrap(),
                    Matrix::row_vector(&[0.0, 1.0]),
                ),
                (Matrix::from_rows(&[[3.0], [-2.0]]).unwrap(), Matrix::row_vector(&[0.5])),
            ],
        };
        let x = Matrix::from_rows(&[[1.0, 1.0], [-1.0, 2.0]]).unwrap();
        // row 0: h = relu([3, -0.5] + [0, 1]) = [3, 0.5]; y = 9 - 1 + 0.5 = 8.5
        // row 1: h = relu([3, 2] + [0, 1]) = [3, 3]; y = 9 - 6 + 0.5 = 3.5
        let out = forward(&spec, &p, &x).unwrap();
        assert_eq!(out.data(), &[8.5, 3.5]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let spec = NetworkSpec::mlp(3, &[], Activation::Relu, 1, Head::Linear);
        assert!(forward(&spec, &ParamSet::zeros(&spec), &Matrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn gaussian_head_requires_even_width() {
        let spec = NetworkSpec::mlp(3, &[], Activation::Relu, 3, Head::GaussianParams);
        assert!(spec.validate().is_err());
    }
}
