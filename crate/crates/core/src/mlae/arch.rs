//! Per-level encoder and decoder layer stacks.
//!
//! Encoder, for `B` bits and blocklength `n`:
//!
//! | layer | filters | kernel | activation | output |
//! |---|---|---|---|---|
//! | input | | | | `(B, 1)` |
//! | conv + BN | 200 | 2 | relu | `(B, 200)` |
//! | conv + BN | 200 | 2 | relu | `(B, 200)` |
//! | conv | `4n/B` | 1 | relu | `(B, 4n/B)` |
//! | reshape | | | | `(n, 4)` |
//! | conv + BN | 150 | 2 | relu | `(n, 150)` |
//! | conv | 2 | 1 | linear | `(n, 2)` |
//!
//! Decoder: conv 150/k2/relu, BN, conv 150/k1/linear, BN, conv 200/k2/relu,
//! BN, conv 200/k2/relu, BN, then a sigmoid conv with one filter whose kernel
//! and stride are both `n/B`, producing `(B, 1)`.

use crate::nn::{Activation, LayerSpec, Padding};

use super::{ArchConfig, CodeConfig};

fn conv(kernel: usize, input: usize, output: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Conv1d {
        kernel,
        in_channels: input,
        out_channels: output,
        stride: 1,
        padding: Padding::SameCausal,
        activation,
    }
}

fn bn(channels: usize, arch: &ArchConfig) -> LayerSpec {
    LayerSpec::BatchNorm1d {
        channels,
        momentum: arch.bn_momentum,
        epsilon: arch.bn_epsilon,
    }
}

pub fn encoder_specs(code: &CodeConfig, arch: &ArchConfig) -> Vec<LayerSpec> {
    let n = code.blocklength;
    let b = code.bits_per_level;
    let act = arch.encoder_activation;
    let wide = arch.encoder_bit_filters;
    let sym = arch.encoder_symbol_filters;
    vec![
        conv(2, 1, wide, act),
        bn(wide, arch),
        conv(2, wide, wide, act),
        bn(wide, arch),
        conv(1, wide, 4 * n / b, act),
        LayerSpec::Reshape {
            length: n,
            channels: 4,
        },
        conv(2, 4, sym, act),
        bn(sym, arch),
        conv(1, sym, 2, Activation::Linear),
    ]
}

pub fn decoder_specs(code: &CodeConfig, arch: &ArchConfig) -> Vec<LayerSpec> {
    let pool = code.blocklength / code.bits_per_level;
    let act = arch.decoder_activation;
    let front = arch.decoder_front_filters;
    let back = arch.decoder_back_filters;
    vec![
        conv(2, 2, front, act),
        bn(front, arch),
        conv(1, front, front, Activation::Linear),
        bn(front, arch),
        conv(2, front, back, act),
        bn(back, arch),
        conv(2, back, back, act),
        bn(back, arch),
        LayerSpec::Conv1d {
            kernel: pool,
            in_channels: back,
            out_channels: 1,
            stride: pool,
            padding: Padding::Valid,
            activation: Activation::Sigmoid,
        },
    ]
}
