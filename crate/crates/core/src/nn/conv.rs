//! One-dimensional convolution over `[batch, length, channels]` activations.

use serde::{Deserialize, Serialize};

use super::scalar::{gemm, Op};
use super::{Mode, NnError, Param, Scalar, Tensor};

/// Pointwise non-linearity applied after the affine part of a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Elu,
    Sigmoid,
    Linear,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Elu => {
                if z > T::zero() {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Elu => {
                if y > T::zero() {
                    T::one()
                } else {
                    y + T::one()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Linear => T::one(),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Self::Relu),
            "elu" => Ok(Self::Elu),
            "sigmoid" => Ok(Self::Sigmoid),
            "linear" => Ok(Self::Linear),
            other => Err(format!("unknown activation {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    /// Left zero padding of `kernel - 1` positions.
    SameCausal,
    Valid,
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    cols: Vec<T>,
    output: Vec<T>,
    batch: usize,
    in_len: usize,
    out_len: usize,
}

/// 1-D convolution with kernel stored as `[k, in_ch, out_ch]`.
#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    pub kernel: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    pub padding: Padding,
    pub activation: Activation,
    cache: Option<ConvCache<T>>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new(
        kernel: Param<T>,
        bias: Param<T>,
        stride: usize,
        padding: Padding,
        activation: Activation,
    ) -> Result<Self, NnError> {
        if kernel.shape.len() != 3 || kernel.shape.contains(&0) {
            return Err(NnError::Shape(format!(
                "conv kernel must be [k, in, out], got {:?}",
                kernel.shape
            )));
        }
        if bias.shape != [kernel.shape[2]] {
            return Err(NnError::Shape(format!(
                "conv bias {:?} does not match {} output channels",
                bias.shape, kernel.shape[2]
            )));
        }
        if stride == 0 {
            return Err(NnError::Config("conv stride must be positive".into()));
        }
        Ok(Self {
            kernel,
            bias,
            stride,
            padding,
            activation,
            cache: None,
        })
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.shape[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape[2]
    }

    fn left_pad(&self) -> usize {
        match self.padding {
            Padding::SameCausal => self.kernel_size() - 1,
            Padding::Valid => 0,
        }
    }

    /// `floor((padded_len - k) / stride) + 1`.
    pub fn output_len(&self, in_len: usize) -> Result<usize, NnError> {
        let padded = in_len + self.left_pad();
        let k = self.kernel_size();
        if padded < k {
            return Err(NnError::Shape(format!(
                "input length {in_len} shorter than kernel {k}"
            )));
        }
        Ok((padded - k) / self.stride + 1)
    }

    fn im2col(&self, input: &Tensor<T>, out_len: usize) -> Vec<T> {
        let (batch, in_len, in_ch) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let k = self.kernel_size();
        let pad = self.left_pad();
        let width = k * in_ch;
        let mut cols = vec![T::zero(); batch * out_len * width];
        let data = input.data();
        for b in 0..batch {
            for t in 0..out_len {
                let row = &mut cols[(b * out_len + t) * width..(b * out_len + t + 1) * width];
                for j in 0..k {
                    let p = (t * self.stride + j) as isize - pad as isize;
                    if p < 0 || p as usize >= in_len {
                        continue;
                    }
                    let src = (b * in_len + p as usize) * in_ch;
                    row[j * in_ch..(j + 1) * in_ch].copy_from_slice(&data[src..src + in_ch]);
                }
            }
        }
        cols
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(), NnError> {
        if input.shape().len() != 3 || input.shape()[2] != self.in_channels() {
            return Err(NnError::Shape(format!(
                "conv expects [batch, len, {}], got {:?}",
                self.in_channels(),
                input.shape()
            )));
        }
        Ok(())
    }

    fn affine(&self, cols: &[T], rows: usize) -> Vec<T> {
        let width = self.kernel_size() * self.in_channels();
        let out_ch = self.out_channels();
        let mut z = Vec::with_capacity(rows * out_ch);
        for _ in 0..rows {
            z.extend_from_slice(&self.bias.value);
        }
        gemm(rows, width, out_ch, cols, Op::N, &self.kernel.value, Op::N, &mut z, true);
        let act = self.activation;
        z.iter_mut().for_each(|v| *v = act.apply(*v));
        z
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        self.check_input(input)?;
        let (batch, in_len) = (input.shape()[0], input.shape()[1]);
        let out_len = self.output_len(in_len)?;
        let cols = self.im2col(input, out_len);
        let out = self.affine(&cols, batch * out_len);
        if !out.iter().all(|v| v.is_finite()) {
            return Err(NnError::NonFinite("conv1d forward".into()));
        }
        if mode == Mode::Train {
            self.cache = Some(ConvCache {
                cols,
                output: out.clone(),
                batch,
                in_len,
                out_len,
            });
        }
        Tensor::new(vec![batch, out_len, self.out_channels()], out)
    }

    /// Inference forward pass; never touches cached state.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.check_input(input)?;
        let (batch, in_len) = (input.shape()[0], input.shape()[1]);
        let out_len = self.output_len(in_len)?;
        let cols = self.im2col(input, out_len);
        let out = self.affine(&cols, batch * out_len);
        if !out.iter().all(|v| v.is_finite()) {
            return Err(NnError::NonFinite("conv1d forward".into()));
        }
        Tensor::new(vec![batch, out_len, self.out_channels()], out)
    }

    /// Backpropagates a gradient taken w.r.t. the activation output.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForwardContext)?;
        if grad_out.len() != cache.output.len() {
            return Err(NnError::Shape("conv1d backward: gradient shape".into()));
        }
        let act = self.activation;
        let grad_z: Vec<T> = grad_out
            .data()
            .iter()
            .zip(&cache.output)
            .map(|(&g, &y)| g * act.derivative_from_output(y))
            .collect();
        self.backward_preactivation(grad_z)
    }

    /// Backpropagates a gradient already taken w.r.t. the pre-activation.
    pub fn backward_preactivation(&mut self, grad_z: Vec<T>) -> Result<Tensor<T>, NnError> {
        let cache = self.cache.take().ok_or(NnError::NoForwardContext)?;
        let rows = cache.batch * cache.out_len;
        let out_ch = self.out_channels();
        let in_ch = self.in_channels();
        let k = self.kernel_size();
        let width = k * in_ch;
        if grad_z.len() != rows * out_ch {
            return Err(NnError::Shape("conv1d backward: gradient shape".into()));
        }
        gemm(width, rows, out_ch, &cache.cols, Op::T, &grad_z, Op::N, &mut self.kernel.grad, true);
        for r in 0..rows {
            for (b, &g) in self.bias.grad.iter_mut().zip(&grad_z[r * out_ch..(r + 1) * out_ch]) {
                *b = *b + g;
            }
        }
        let mut grad_cols = vec![T::zero(); rows * width];
        gemm(rows, out_ch, width, &grad_z, Op::N, &self.kernel.value, Op::T, &mut grad_cols, false);

        let pad = self.left_pad();
        let mut grad_in = vec![T::zero(); cache.batch * cache.in_len * in_ch];
        for b in 0..cache.batch {
            for t in 0..cache.out_len {
                let row = &grad_cols[(b * cache.out_len + t) * width..(b * cache.out_len + t + 1) * width];
                for j in 0..k {
                    let p = (t * self.stride + j) as isize - pad as isize;
                    if p < 0 || p as usize >= cache.in_len {
                        continue;
                    }
                    let dst = (b * cache.in_len + p as usize) * in_ch;
                    for (d, &g) in grad_in[dst..dst + in_ch].iter_mut().zip(&row[j * in_ch..(j + 1) * in_ch]) {
                        *d = *d + g;
                    }
                }
            }
        }
        if !grad_in.iter().all(|v| v.is_finite()) {
            return Err(NnError::NonFinite("conv1d backward".into()));
        }
        Tensor::new(vec![cache.batch, cache.in_len, in_ch], grad_in)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.kernel, &mut self.bias]
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.kernel, &self.bias]
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = None;
    }
}
