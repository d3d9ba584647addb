use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use super::spec::{LayerSpec, NetworkSpec};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSlots {
    /// Weights laid out `[out][in][k_w][k_h]`.
    pub weight: Range<usize>,
    pub bias: Range<usize>,
    pub in_channels: usize,
    pub out_channels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitSlots {
    pub conv: ConvSlots,
    pub bn_scale: Range<usize>,
    pub bn_shift: Range<usize>,
}

/// Offsets of every trainable tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub units: Vec<UnitSlots>,
    pub identity: ConvSlots,
    pub attention: ConvSlots,
    pub total: usize,
}

fn conv_slots(cursor: &mut usize, layer: &LayerSpec, in_channels: usize) -> ConvSlots {
    let n = layer.out_channels * in_channels * layer.kernel_w * layer.kernel_h;
    let weight = *cursor..*cursor + n;
    *cursor += n;
    let bias = *cursor..*cursor + layer.out_channels;
    *cursor += layer.out_channels;
    ConvSlots {
        weight,
        bias,
        in_channels,
        out_channels: layer.out_channels,
    }
}

impl ParamLayout {
    pub fn new(spec: &NetworkSpec, antennas: usize) -> Self {
        let mut cursor = 0;
        let units = spec
            .layers
            .iter()
            .zip(spec.in_channels(antennas))
            .map(|(layer, cin)| {
                let conv = conv_slots(&mut cursor, layer, cin);
                let bn_scale = cursor..cursor + layer.out_channels;
                cursor += layer.out_channels;
                let bn_shift = cursor..cursor + layer.out_channels;
                cursor += layer.out_channels;
                UnitSlots {
                    conv,
                    bn_scale,
                    bn_shift,
                }
            })
            .collect();
        let identity = conv_slots(&mut cursor, &spec.identity_map, antennas);
        let attention = conv_slots(&mut cursor, &spec.attention, 1);
        ParamLayout {
            units,
            identity,
            attention,
            total: cursor,
        }
    }
}

/// All trainable parameters in one flat vector plus batch-norm running
/// statistics (one entry per unit and channel).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetParams {
    pub values: Vec<f64>,
    pub running_mean: Vec<Vec<f64>>,
    pub running_var: Vec<Vec<f64>>,
}

fn glorot<R: Rng + ?Sized>(values: &mut [f64], slots: &ConvSlots, kernel: usize, rng: &mut R) {
    let fan_in = (slots.in_channels * kernel) as f64;
    let fan_out = (slots.out_channels * kernel) as f64;
    let bound = (6.0 / (fan_in + fan_out)).sqrt();
    for w in &mut values[slots.weight.clone()] {
        *w = rng.random_range(-bound..bound);
    }
}

impl NetParams {
    /// Every trainable value zero, running statistics at (0, 1).
    pub fn zeros(spec: &NetworkSpec, antennas: usize) -> Self {
        let layout = ParamLayout::new(spec, antennas);
        NetParams {
            values: vec![0.0; layout.total],
            running_mean: spec.layers.iter().map(|l| vec![0.0; l.out_channels]).collect(),
            running_var: spec.layers.iter().map(|l| vec![1.0; l.out_channels]).collect(),
        }
    }

    /// Glorot-uniform weights, zero biases, unit batch-norm scale.
    pub fn init<R: Rng + ?Sized>(spec: &NetworkSpec, antennas: usize, rng: &mut R) -> Self {
        let layout = ParamLayout::new(spec, antennas);
        let mut p = Self::zeros(spec, antennas);
        for (unit, layer) in layout.units.iter().zip(&spec.layers) {
            glorot(&mut p.values, &unit.conv, layer.kernel_w * layer.kernel_h, rng);
            p.values[unit.bn_scale.clone()].iter_mut().for_each(|g| *g = 1.0);
        }
        glorot(&mut p.values, &layout.identity, 1, rng);
        glorot(&mut p.values, &layout.attention, 1, rng);
        p
    }

    /// Uniform draws in `±scale` for every trainable value, including
    /// biases and batch-norm parameters.
    pub fn random<R: Rng + ?Sized>(spec: &NetworkSpec, antennas: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(spec, antennas);
        for v in &mut p.values {
            *v = rng.random_range(-scale..scale);
        }
        p
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
            && self.running_var.iter().flatten().all(|v| v.is_finite() && *v > 0.0)
            && self.running_mean.iter().flatten().all(|v| v.is_finite())
    }

    /// True when the parameter vector and statistics fit `spec` with `M` antennas.
    pub fn matches(&self, spec: &NetworkSpec, antennas: usize) -> bool {
        ParamLayout::new(spec, antennas).total == self.values.len()
            && self.running_mean.len() == spec.layers.len()
            && self.running_var.len() == spec.layers.len()
            && spec
                .layers
                .iter()
                .zip(self.running_mean.iter().zip(&self.running_var))
                .all(|(l, (m, v))| m.len() == l.out_channels && v.len() == l.out_channels)
    }
}
