use rand::Rng;

use super::matrix::{axpy, Matrix};
use super::{check_dim, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative at `pre`; the ReLU subgradient at 0 is 0.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "identity" | "none" | "linear" => Ok(Activation::Identity),
            other => Err(format!("unknown activation {other:?}")),
        }
    }
}

/// Fully connected layer, `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self, NnError> {
        check_dim("layer bias", weight.rows(), bias.len())?;
        Ok(Self { weight, bias })
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn pre_activation(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut z = self.weight.matvec(x)?;
        axpy(&mut z, 1.0, &self.bias);
        Ok(z)
    }
}

/// Three fully connected layers, ReLU after the first two and
/// `final_activation` after the third.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadModule {
    layers: [DenseLayer; 3],
    final_activation: Activation,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    /// `inputs[l]` is the input to layer `l`.
    inputs: [Vec<f64>; 3],
    pre: [Vec<f64>; 3],
    pub output: Vec<f64>,
}

/// Gradients with the same layout as [`HeadModule`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub layers: [DenseLayer; 3],
}

impl HeadGrads {
    pub fn zeros_like(head: &HeadModule) -> Self {
        Self {
            layers: head
                .layers
                .each_ref()
                .map(|l| DenseLayer::zeros(l.out_dim(), l.in_dim())),
        }
    }

    pub fn add_assign(&mut self, other: &HeadGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            axpy(a.weight.data_mut(), 1.0, b.weight.data());
            axpy(&mut a.bias, 1.0, &b.bias);
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }
}

impl HeadModule {
    pub fn new(layers: [DenseLayer; 3], final_activation: Activation) -> Result<Self, NnError> {
        check_dim("head layer 2 input", layers[0].out_dim(), layers[1].in_dim())?;
        check_dim("head layer 3 input", layers[1].out_dim(), layers[2].in_dim())?;
        Ok(Self {
            layers,
            final_activation,
        })
    }

    /// He-uniform weights, zero biases. `widths` are the three output sizes.
    pub fn init(
        in_dim: usize,
        widths: [usize; 3],
        final_activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let mut fan_in = in_dim;
        let layers = widths.map(|out| {
            let bound = (6.0 / fan_in.max(1) as f64).sqrt();
            let layer = DenseLayer {
                weight: Matrix::uniform(out, fan_in, bound, rng),
                bias: vec![0.0; out],
            };
            fan_in = out;
            layer
        });
        Self {
            layers,
            final_activation,
        }
    }

    pub fn layers(&self) -> &[DenseLayer; 3] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer; 3] {
        &mut self.layers
    }

    pub fn final_activation(&self) -> Activation {
        self.final_activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[2].out_dim()
    }

    pub fn same_shape(&self, other: &HeadModule) -> bool {
        self.final_activation == other.final_activation
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.shape() == b.weight.shape())
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer == 2 {
            self.final_activation
        } else {
            Activation::Relu
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_trace(x)?.output)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<HeadTrace, NnError> {
        check_dim("head input", self.input_dim(), x.len())?;
        let mut inputs: [Vec<f64>; 3] = Default::default();
        let mut pre: [Vec<f64>; 3] = Default::default();
        let mut h = x.to_vec();
        for l in 0..3 {
            let z = self.layers[l].pre_activation(&h)?;
            let act = self.activation(l);
            let next = z.iter().map(|&v| act.apply(v)).collect();
            inputs[l] = std::mem::replace(&mut h, next);
            pre[l] = z;
        }
        Ok(HeadTrace {
            inputs,
            pre,
            output: h,
        })
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the head input.
    pub fn backward_trace(
        &self,
        trace: &HeadTrace,
        upstream: &[f64],
        grads: &mut HeadGrads,
    ) -> Result<Vec<f64>, NnError> {
        check_dim("head upstream", self.output_dim(), upstream.len())?;
        let mut g = upstream.to_vec();
        for l in (0..3).rev() {
            let act = self.activation(l);
            let delta: Vec<f64> = g
                .iter()
                .zip(&trace.pre[l])
                .map(|(&gi, &z)| gi * act.derivative(z))
                .collect();
            grads.layers[l].weight.add_outer(&delta, &trace.inputs[l]);
            axpy(&mut grads.layers[l].bias, 1.0, &delta);
            g = self.layers[l].weight.matvec_t(&delta)?;
        }
        Ok(g)
    }

    /// Gradients of `upstream · f(x)` with respect to all head parameters
    /// and to `x`.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(HeadGrads, Vec<f64>), NnError> {
        let trace = self.forward_trace(x)?;
        let mut grads = HeadGrads::zeros_like(self);
        let dx = self.backward_trace(&trace, upstream, &mut grads)?;
        Ok((grads, dx))
    }

    /// Flat views in canonical order: `W0, b0, W1, b1, W2, b2`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }
}
