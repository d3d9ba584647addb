//! Network architecture description and the shape-preservation rules.
//!
//! Every convolution unit must keep the `Q × I` plane unchanged. With stride
//! one this needs `p = (k − 1)/2`; with stride `s > 1` it needs
//! `p = (in·s − in − s + k)/2`. Both must be integers. The last unit has to
//! emit `2M` channels so the output splits into real and imaginary parts.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerSpec {
    pub kernel_w: usize,
    pub kernel_h: usize,
    pub padding_w: usize,
    pub padding_h: usize,
    pub stride_w: usize,
    pub stride_h: usize,
    pub out_channels: usize,
    pub activation: Activation,
}

impl LayerSpec {
    /// Stride-one layer with the shape-preserving padding `(k − 1)/2`.
    pub fn same(kernel_w: usize, kernel_h: usize, out_channels: usize, activation: Activation) -> Self {
        LayerSpec {
            kernel_w,
            kernel_h,
            padding_w: kernel_w.saturating_sub(1) / 2,
            padding_h: kernel_h.saturating_sub(1) / 2,
            stride_w: 1,
            stride_h: 1,
            out_channels,
            activation,
        }
    }

    /// Stride-`s` layer with padding chosen to keep an `in_w × in_h` plane.
    /// Returns `None` when that padding is not an integer.
    pub fn strided(
        kernel_w: usize,
        kernel_h: usize,
        stride: usize,
        in_w: usize,
        in_h: usize,
        out_channels: usize,
        activation: Activation,
    ) -> Option<Self> {
        let pad = |input: usize, k: usize| {
            let twice = (input * stride + k).checked_sub(input + stride)?;
            (twice % 2 == 0).then_some(twice / 2)
        };
        Some(LayerSpec {
            kernel_w,
            kernel_h,
            padding_w: pad(in_w, kernel_w)?,
            padding_h: pad(in_h, kernel_h)?,
            stride_w: stride,
            stride_h: stride,
            out_channels,
            activation,
        })
    }

    /// Output plane size `⌊(in + 2p − k)/s⌋ + 1`, or `None` if the kernel
    /// does not fit.
    pub fn output_dims(&self, in_w: usize, in_h: usize) -> Option<(usize, usize)> {
        let out = |input: usize, p: usize, k: usize, s: usize| {
            if s == 0 {
                return None;
            }
            (input + 2 * p).checked_sub(k).map(|span| span / s + 1)
        };
        Some((
            out(in_w, self.padding_w, self.kernel_w, self.stride_w)?,
            out(in_h, self.padding_h, self.kernel_h, self.stride_h)?,
        ))
    }

    pub fn pointwise(out_channels: usize, activation: Activation) -> Self {
        Self::same(1, 1, out_channels, activation)
    }
}

/// Reduction over the channel dimension used for thresholds and gating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Pooling {
    #[default]
    Mean,
    Max,
}

/// Per-AP power projection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Projection {
    /// `v ← v · P_max / P` when `P > P_max`.
    #[default]
    PowerRatio,
    /// `v ← v · sqrt(P_max / P)` when `P > P_max`.
    NormRatio,
}

/// Normalization applied to the CSI moduli before they enter the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InputScaling {
    /// Raw moduli.
    None,
    /// `ln(1 + x / mean(x))` per sample.
    #[default]
    MeanLog,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    /// 1×1 convolution of the identity branch (`2M` outputs, no activation).
    pub identity_map: LayerSpec,
    /// 1×1 convolution of the spatial attention (1 output, sigmoid).
    pub attention: LayerSpec,
    /// Gate sharpness `k`.
    pub amplification: f64,
    pub pooling: Pooling,
    pub projection: Projection,
    pub input_scaling: InputScaling,
}

impl NetworkSpec {
    /// `depth` stride-one layers of `k_w × k_h` kernels: `depth − 1` ReLU
    /// units with `channels` outputs followed by a `2M`-channel tanh unit.
    pub fn uniform(depth: usize, kernel_w: usize, kernel_h: usize, channels: usize, antennas: usize) -> Self {
        let mut layers: Vec<LayerSpec> = (1..depth.max(1))
            .map(|_| LayerSpec::same(kernel_w, kernel_h, channels, Activation::Relu))
            .collect();
        layers.push(LayerSpec::same(kernel_w, kernel_h, 2 * antennas, Activation::Tanh));
        NetworkSpec {
            layers,
            identity_map: LayerSpec::pointwise(2 * antennas, Activation::Identity),
            attention: LayerSpec::pointwise(1, Activation::Sigmoid),
            amplification: 50.0,
            pooling: Pooling::Mean,
            projection: Projection::PowerRatio,
            input_scaling: InputScaling::MeanLog,
        }
    }

    /// Input channel count of every layer for `M` antennas.
    pub fn in_channels(&self, antennas: usize) -> Vec<usize> {
        let mut out = vec![antennas];
        out.extend(self.layers.iter().take(self.layers.len().saturating_sub(1)).map(|l| l.out_channels));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Axis {
    Width,
    Height,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Width => "width",
            Axis::Height => "height",
        })
    }
}

/// First violated architecture condition. `layer` indexes the main branch
/// from zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArchViolation {
    EmptyNetwork,
    ZeroKernel { layer: usize, axis: Axis },
    ZeroStride { layer: usize, axis: Axis },
    ZeroChannels { layer: usize },
    /// The shape-preserving padding `twice_padding / 2` is not an integer.
    NonIntegralPadding { layer: usize, axis: Axis, twice_padding: usize },
    /// Padding is integral but differs from the shape-preserving value.
    PaddingMismatch { layer: usize, axis: Axis, expected: usize, found: usize },
    /// Last layer does not emit `2M` channels.
    OutputChannels { expected: usize, found: usize },
    /// Identity branch is not a 1×1, stride-one, `2M`-channel convolution.
    IdentityMap,
    /// Attention is not a 1×1, stride-one, single-channel convolution.
    Attention,
    NonPositiveAmplification,
}

impl fmt::Display for ArchViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ArchViolation::EmptyNetwork => write!(f, "network has no layers"),
            ArchViolation::ZeroKernel { layer, axis } => write!(f, "layer {layer}: zero kernel {axis}"),
            ArchViolation::ZeroStride { layer, axis } => write!(f, "layer {layer}: zero stride along {axis}"),
            ArchViolation::ZeroChannels { layer } => write!(f, "layer {layer}: zero output channels"),
            ArchViolation::NonIntegralPadding {
                layer,
                axis,
                twice_padding,
            } => write!(
                f,
                "layer {layer}: shape-preserving {axis} padding {twice_padding}/2 is not an integer"
            ),
            ArchViolation::PaddingMismatch {
                layer,
                axis,
                expected,
                found,
            } => write!(f, "layer {layer}: {axis} padding {found}, shape preservation needs {expected}"),
            ArchViolation::OutputChannels { expected, found } => {
                write!(f, "last layer emits {found} channels, expected 2M = {expected}")
            }
            ArchViolation::IdentityMap => write!(f, "identity map must be a 1x1 stride-1 convolution with 2M outputs"),
            ArchViolation::Attention => write!(f, "attention must be a 1x1 stride-1 convolution with one output"),
            ArchViolation::NonPositiveAmplification => write!(f, "amplification must be positive"),
        }
    }
}

fn check_axis(
    layer: usize,
    axis: Axis,
    input: usize,
    kernel: usize,
    padding: usize,
    stride: usize,
) -> Result<(), ArchViolation> {
    if kernel == 0 {
        return Err(ArchViolation::ZeroKernel { layer, axis });
    }
    if stride == 0 {
        return Err(ArchViolation::ZeroStride { layer, axis });
    }
    // stride 1: 2p = k − 1; stride s: 2p = in·s − in − s + k
    let twice = input * stride + kernel - input - stride;
    if !twice.is_multiple_of(2) {
        return Err(ArchViolation::NonIntegralPadding {
            layer,
            axis,
            twice_padding: twice,
        });
    }
    if padding != twice / 2 {
        return Err(ArchViolation::PaddingMismatch {
            layer,
            axis,
            expected: twice / 2,
            found: padding,
        });
    }
    Ok(())
}

fn is_pointwise(l: &LayerSpec, channels: usize) -> bool {
    l.kernel_w == 1
        && l.kernel_h == 1
        && l.padding_w == 0
        && l.padding_h == 0
        && l.stride_w == 1
        && l.stride_h == 1
        && l.out_channels == channels
}

/// Accepts the spec iff every layer keeps the `Q × I` plane and the last
/// layer emits `2M` channels.
pub fn validate_architecture(
    spec: &NetworkSpec,
    aps: usize,
    users: usize,
    antennas: usize,
) -> Result<(), ArchViolation> {
    if spec.layers.is_empty() {
        return Err(ArchViolation::EmptyNetwork);
    }
    for (l, layer) in spec.layers.iter().enumerate() {
        check_axis(l, Axis::Width, aps, layer.kernel_w, layer.padding_w, layer.stride_w)?;
        check_axis(l, Axis::Height, users, layer.kernel_h, layer.padding_h, layer.stride_h)?;
        if layer.out_channels == 0 {
            return Err(ArchViolation::ZeroChannels { layer: l });
        }
    }
    let last = spec.layers[spec.layers.len() - 1].out_channels;
    if last != 2 * antennas {
        return Err(ArchViolation::OutputChannels {
            expected: 2 * antennas,
            found: last,
        });
    }
    if !is_pointwise(&spec.identity_map, 2 * antennas) {
        return Err(ArchViolation::IdentityMap);
    }
    if !is_pointwise(&spec.attention, 1) {
        return Err(ArchViolation::Attention);
    }
    if !(spec.amplification > 0.0) {
        return Err(ArchViolation::NonPositiveAmplification);
    }
    Ok(())
}
