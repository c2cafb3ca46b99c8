//! Sequential layer stacks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, BatchNorm1d, Conv1d, Mode, NnError, Padding, Param, Scalar, Tensor};

/// Architecture description of one layer; enough to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum LayerSpec {
    Conv1d {
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        padding: Padding,
        activation: Activation,
    },
    BatchNorm1d {
        channels: usize,
        momentum: f64,
        epsilon: f64,
    },
    /// Per-sample re-view as `[length, channels]`.
    Reshape { length: usize, channels: usize },
}

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv1d(Conv1d<T>),
    BatchNorm1d(BatchNorm1d<T>),
    Reshape { length: usize, channels: usize },
}

impl<T: Scalar> Layer<T> {
    /// Builds a layer with fan-in scaled uniform weights `U(-1/sqrt(k·in), 1/sqrt(k·in))`.
    pub fn from_spec<R: Rng + ?Sized>(spec: &LayerSpec, rng: &mut R) -> Result<Self, NnError> {
        Ok(match *spec {
            LayerSpec::Conv1d {
                kernel,
                in_channels,
                out_channels,
                stride,
                padding,
                activation,
            } => {
                let fan_in = (kernel * in_channels) as f64;
                let bound = 1.0 / fan_in.sqrt();
                let mut draw = |n: usize| -> Vec<T> {
                    (0..n)
                        .map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
                        .collect()
                };
                let w = draw(kernel * in_channels * out_channels);
                let b = draw(out_channels);
                Layer::Conv1d(Conv1d::new(
                    Param::new(vec![kernel, in_channels, out_channels], w),
                    Param::new(vec![out_channels], b),
                    stride,
                    padding,
                    activation,
                )?)
            }
            LayerSpec::BatchNorm1d {
                channels,
                momentum,
                epsilon,
            } => Layer::BatchNorm1d(BatchNorm1d::new(channels, momentum, epsilon)?),
            LayerSpec::Reshape { length, channels } => Layer::Reshape { length, channels },
        })
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv1d(c) => LayerSpec::Conv1d {
                kernel: c.kernel_size(),
                in_channels: c.in_channels(),
                out_channels: c.out_channels(),
                stride: c.stride,
                padding: c.padding,
                activation: c.activation,
            },
            Layer::BatchNorm1d(bn) => LayerSpec::BatchNorm1d {
                channels: bn.channels(),
                momentum: bn.momentum,
                epsilon: bn.epsilon,
            },
            Layer::Reshape { length, channels } => LayerSpec::Reshape {
                length: *length,
                channels: *channels,
            },
        }
    }
}

fn reshape<T: Scalar>(x: Tensor<T>, length: usize, channels: usize) -> Result<Tensor<T>, NnError> {
    let batch = x.batch();
    x.reshape(vec![batch, length, channels])
}

/// Named view of every persistent tensor in a network (parameters and
/// batch-norm running statistics), in a fixed order.
pub struct StateEntry<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

/// A feed-forward stack of layers.
#[derive(Debug, Clone)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
    input_shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self {
            layers,
            input_shapes: Vec::new(),
        }
    }

    pub fn from_specs<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self, NnError> {
        let layers = specs
            .iter()
            .map(|s| Layer::from_spec(s, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(layers))
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Per-layer output shapes for a `[batch, len, ch]` input, without
    /// running any arithmetic.
    pub fn output_shapes(&self, input: &[usize]) -> Result<Vec<Vec<usize>>, NnError> {
        let mut shape = input.to_vec();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = match layer {
                Layer::Conv1d(c) => {
                    if shape.len() != 3 || shape[2] != c.in_channels() {
                        return Err(NnError::Shape(format!("conv cannot take {shape:?}")));
                    }
                    vec![shape[0], c.output_len(shape[1])?, c.out_channels()]
                }
                Layer::BatchNorm1d(bn) => {
                    if shape.last() != Some(&bn.channels()) {
                        return Err(NnError::Shape(format!("batch-norm cannot take {shape:?}")));
                    }
                    shape
                }
                Layer::Reshape { length, channels } => {
                    if shape[1..].iter().product::<usize>() != length * channels {
                        return Err(NnError::Shape(format!(
                            "cannot reshape {shape:?} to ({length}, {channels})"
                        )));
                    }
                    vec![shape[0], *length, *channels]
                }
            };
            shapes.push(shape.clone());
        }
        Ok(shapes)
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        if mode == Mode::Infer {
            return self.infer(input);
        }
        self.input_shapes.clear();
        let mut x = input.clone();
        for layer in &mut self.layers {
            self.input_shapes.push(x.shape().to_vec());
            x = match layer {
                Layer::Conv1d(c) => c.forward(&x, mode)?,
                Layer::BatchNorm1d(bn) => bn.forward(&x, mode)?,
                Layer::Reshape { length, channels } => reshape(x, *length, *channels)?,
            };
        }
        Ok(x)
    }

    /// Forward pass in inference mode; leaves all state untouched.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv1d(c) => c.infer(&x)?,
                Layer::BatchNorm1d(bn) => bn.infer(&x)?,
                Layer::Reshape { length, channels } => reshape(x, *length, *channels)?,
            };
        }
        Ok(x)
    }

    /// Backpropagates `grad` (w.r.t. the network output) and accumulates
    /// parameter gradients. Returns the gradient w.r.t. the input.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.backward_from(grad.clone(), false)
    }

    /// Like [`backward`](Self::backward), but `grad_logits` is taken w.r.t.
    /// the pre-activation of the final convolution.
    pub fn backward_logits(&mut self, grad_logits: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        if !matches!(self.layers.last(), Some(Layer::Conv1d(_))) {
            return Err(NnError::Config("last layer is not a convolution".into()));
        }
        self.backward_from(grad_logits.clone(), true)
    }

    fn backward_from(&mut self, mut g: Tensor<T>, logits: bool) -> Result<Tensor<T>, NnError> {
        if self.input_shapes.len() != self.layers.len() {
            return Err(NnError::NoForwardContext);
        }
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            g = match layer {
                Layer::Conv1d(c) if logits && i == last => c.backward_preactivation(g.into_data())?,
                Layer::Conv1d(c) => c.backward(&g)?,
                Layer::BatchNorm1d(bn) => bn.backward(&g)?,
                Layer::Reshape { .. } => g.reshape(self.input_shapes[i].clone())?,
            };
        }
        self.input_shapes.clear();
        Ok(g)
    }

    /// Drops any stored forward context.
    pub fn clear_cache(&mut self) {
        self.input_shapes.clear();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv1d(c) => c.clear_cache(),
                Layer::BatchNorm1d(bn) => bn.clear_cache(),
                Layer::Reshape { .. } => {}
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv1d(c) => out.extend(c.params_mut()),
                Layer::BatchNorm1d(bn) => out.extend(bn.params_mut()),
                Layer::Reshape { .. } => {}
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv1d(c) => out.extend(c.params()),
                Layer::BatchNorm1d(bn) => out.extend(bn.params()),
                Layer::Reshape { .. } => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    /// Every persistent tensor, including running statistics.
    pub fn state(&self) -> Vec<StateEntry<'_, T>> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv1d(c) => {
                    out.push(StateEntry {
                        name: format!("{i}.kernel"),
                        shape: c.kernel.shape.clone(),
                        data: &c.kernel.value,
                    });
                    out.push(StateEntry {
                        name: format!("{i}.bias"),
                        shape: c.bias.shape.clone(),
                        data: &c.bias.value,
                    });
                }
                Layer::BatchNorm1d(bn) => {
                    let ch = vec![bn.channels()];
                    for (name, data) in [
                        ("gamma", &bn.gamma.value),
                        ("beta", &bn.beta.value),
                        ("running_mean", &bn.running_mean),
                        ("running_var", &bn.running_var),
                    ] {
                        out.push(StateEntry {
                            name: format!("{i}.{name}"),
                            shape: ch.clone(),
                            data,
                        });
                    }
                }
                Layer::Reshape { .. } => {}
            }
        }
        out
    }

    /// Mutable slices in the same order as [`state`](Self::state).
    pub fn state_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv1d(c) => {
                    out.push(&mut c.kernel.value);
                    out.push(&mut c.bias.value);
                }
                Layer::BatchNorm1d(bn) => {
                    out.push(&mut bn.gamma.value);
                    out.push(&mut bn.beta.value);
                    out.push(&mut bn.running_mean);
                    out.push(&mut bn.running_var);
                }
                Layer::Reshape { .. } => {}
            }
        }
        out
    }
}
