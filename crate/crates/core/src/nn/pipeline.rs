//! End-to-end forward pass from estimated CSI to a sparse, power-feasible
//! beamformer, and its exact reverse pass.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::layers::{
    activation_backward, activation_forward, batchnorm_backward, batchnorm_forward, conv2d_backward,
    conv2d_forward, sigmoid, BatchNormCache,
};
use super::params::{ConvSlots, NetParams, ParamLayout};
use super::spec::{validate_architecture, Activation, InputScaling, NetworkSpec, Pooling, Projection};
use crate::tensor::{CTensor3, Tensor3};
use crate::{Error, Result, C64};

/// Gate value at which a soft cluster entry hardens to one.
pub const HARD_THRESHOLD: f64 = 0.5;

/// `Train` uses batch statistics and the soft gate; `Eval` uses running
/// statistics and the hardened gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-link thresholds `t_i^q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMatrix {
    aps: usize,
    users: usize,
    values: Vec<f64>,
}

impl ThresholdMatrix {
    pub fn get(&self, q: usize, i: usize) -> f64 {
        self.values[q * self.users + i]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.aps, self.users)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// AP clustering `DT_i^q`, soft in `[0, 1]` or hardened to `{0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMatrix {
    aps: usize,
    users: usize,
    values: Vec<f64>,
}

impl ClusterMatrix {
    pub fn from_vec(aps: usize, users: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != aps * users {
            return Err(Error::shape(format!("{} entries", aps * users), format!("{}", values.len())));
        }
        Ok(ClusterMatrix { aps, users, values })
    }

    pub fn get(&self, q: usize, i: usize) -> f64 {
        self.values[q * self.users + i]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.aps, self.users)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn harden(&self) -> ClusterMatrix {
        ClusterMatrix {
            aps: self.aps,
            users: self.users,
            values: self.values.iter().map(|&c| if c >= HARD_THRESHOLD { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Number of serving links (entries ≥ 0.5).
    pub fn active_links(&self) -> usize {
        self.values.iter().filter(|&&c| c >= HARD_THRESHOLD).count()
    }
}

/// Moduli `|ĥ_i^q[m]|` as a `Q × I × M` real tensor.
pub fn csi_conversion(est_h: &CTensor3) -> Tensor3 {
    let (q, i, m) = est_h.dims();
    Tensor3::from_vec(q, i, m, est_h.as_slice().iter().map(|z| z.norm()).collect())
        .expect("dimensions agree by construction")
}

pub fn scale_input(x: &Tensor3, scaling: InputScaling) -> Tensor3 {
    match scaling {
        InputScaling::None => x.clone(),
        InputScaling::MeanLog => {
            let n = x.as_slice().len().max(1) as f64;
            let mean = x.as_slice().iter().sum::<f64>() / n;
            if mean > 0.0 {
                x.map(|v| (v / mean).ln_1p())
            } else {
                x.map(|_| 0.0)
            }
        }
    }
}

/// Channel reduction to a single-channel plane. For max pooling the
/// flat index of the selected value is returned per position.
fn pool(x: &Tensor3, pooling: Pooling) -> (Tensor3, Vec<usize>) {
    let (w, h, c) = x.dims();
    let mut out = Tensor3::zeros(w, h, 1);
    let mut arg = Vec::new();
    for (k, fibre) in x.as_slice().chunks(c).enumerate() {
        out.as_mut_slice()[k] = match pooling {
            Pooling::Mean => fibre.iter().sum::<f64>() / c as f64,
            Pooling::Max => {
                let mut best = 0;
                for (j, v) in fibre.iter().enumerate() {
                    if *v > fibre[best] {
                        best = j;
                    }
                }
                arg.push(k * c + best);
                fibre[best]
            }
        };
    }
    (out, arg)
}

fn pool_backward(grad: &[f64], channels: usize, pooling: Pooling, arg: &[usize], into: &mut [f64]) {
    match pooling {
        Pooling::Mean => {
            for (k, g) in grad.iter().enumerate() {
                for v in &mut into[k * channels..(k + 1) * channels] {
                    *v += g / channels as f64;
                }
            }
        }
        Pooling::Max => {
            for (g, &a) in grad.iter().zip(arg) {
                into[a] += g;
            }
        }
    }
}

fn conv_params<'a>(params: &'a NetParams, slots: &ConvSlots) -> (&'a [f64], &'a [f64]) {
    (&params.values[slots.weight.clone()], &params.values[slots.bias.clone()])
}

/// Logistic gate `1/(1 + e^{−k(pv − t)})`.
pub fn diff_threshold(pv: f64, t: f64, k: f64) -> f64 {
    sigmoid(k * (pv - t))
}

/// Entrywise gate of the channel-pooled beamformer against the thresholds.
pub fn cluster_matrix(v_r: &Tensor3, thresholds: &ThresholdMatrix, k: f64, pooling: Pooling) -> Result<ClusterMatrix> {
    let (w, h, _) = v_r.dims();
    if (w, h) != thresholds.dims() {
        return Err(Error::shape(format!("{w}x{h} thresholds"), format!("{:?}", thresholds.dims())));
    }
    let (pv, _) = pool(v_r, pooling);
    let values = pv
        .as_slice()
        .iter()
        .zip(&thresholds.values)
        .map(|(&p, &t)| diff_threshold(p, t, k))
        .collect();
    ClusterMatrix::from_vec(w, h, values)
}

/// Multiplies every channel of block `(q, i)` by `C[q, i]`.
pub fn sparsify(v_r: &Tensor3, clusters: &ClusterMatrix) -> Result<Tensor3> {
    let (w, h, c) = v_r.dims();
    if (w, h) != clusters.dims() {
        return Err(Error::shape(format!("{w}x{h} cluster matrix"), format!("{:?}", clusters.dims())));
    }
    let mut out = v_r.clone();
    for (fibre, &g) in out.as_mut_slice().chunks_mut(c).zip(&clusters.values) {
        fibre.iter_mut().for_each(|v| *v *= g);
    }
    Ok(out)
}

/// First `M` channels are real parts, last `M` imaginary parts.
pub fn to_complex(v: &Tensor3) -> Result<CTensor3> {
    let (w, h, c) = v.dims();
    if c % 2 != 0 {
        return Err(Error::shape("even channel count", format!("{c} channels")));
    }
    let m = c / 2;
    Ok(CTensor3::from_fn(w, h, m, |q, i, a| C64::new(v.get(q, i, a), v.get(q, i, m + a))))
}

pub fn split_complex(v: &CTensor3) -> Tensor3 {
    let (q, i, m) = v.dims();
    Tensor3::from_fn(q, i, 2 * m, |x, y, c| {
        let z = v.get(x, y, c % m);
        if c < m {
            z.re
        } else {
            z.im
        }
    })
}

fn projection_scale(power: f64, max_power: f64, projection: Projection) -> f64 {
    if power <= max_power {
        return 1.0;
    }
    match projection {
        Projection::PowerRatio => max_power / power,
        Projection::NormRatio => (max_power / power).sqrt(),
    }
}

/// Scales every AP whose power `Σ_i ‖v_i^q‖²` exceeds `P_max`.
pub fn power_project(v: &CTensor3, max_power: f64, projection: Projection) -> CTensor3 {
    let mut out = v.clone();
    for q in 0..v.aps() {
        let s = projection_scale(v.ap_power(q), max_power, projection);
        if s != 1.0 {
            for i in 0..v.users() {
                out.block_mut(q, i).iter_mut().for_each(|z| *z *= s);
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
struct SampleTrace {
    input: Tensor3,
    conv_out: Vec<Tensor3>,
    bn_out: Vec<Tensor3>,
    act_out: Vec<Tensor3>,
    residual_sum: Tensor3,
    v_r: Tensor3,
    pooled_input: Tensor3,
    pooled_input_arg: Vec<usize>,
    attention_pre: Tensor3,
    thresholds: Tensor3,
    pv_arg: Vec<usize>,
    soft: Vec<f64>,
    gate: Vec<f64>,
    pre_projection: CTensor3,
    ap_power: Vec<f64>,
}

/// Result of a batched forward pass together with everything the reverse
/// pass needs.
#[derive(Debug, Clone)]
pub struct Forward {
    pub mode: Mode,
    /// Projected beamformers, one per sample.
    pub beamformers: Vec<CTensor3>,
    /// Gate applied in the pass: soft in `Train`, hardened in `Eval`.
    pub clusters: Vec<ClusterMatrix>,
    /// Running statistics after this pass (updated only in `Train`).
    pub running_mean: Vec<Vec<f64>>,
    pub running_var: Vec<Vec<f64>>,
    max_power: f64,
    samples: Vec<SampleTrace>,
    bn: Vec<BatchNormCache>,
}

impl Forward {
    /// Soft gate values before hardening.
    pub fn soft_clusters(&self) -> Vec<ClusterMatrix> {
        self.samples
            .iter()
            .zip(&self.clusters)
            .map(|(s, c)| ClusterMatrix {
                aps: c.aps,
                users: c.users,
                values: s.soft.clone(),
            })
            .collect()
    }

    pub fn thresholds(&self) -> Vec<ThresholdMatrix> {
        self.samples
            .iter()
            .map(|s| ThresholdMatrix {
                aps: s.thresholds.width(),
                users: s.thresholds.height(),
                values: s.thresholds.as_slice().to_vec(),
            })
            .collect()
    }

    /// Residual-network outputs `V_R` (`Q × I × 2M`).
    pub fn residual_outputs(&self) -> Vec<&Tensor3> {
        self.samples.iter().map(|s| &s.v_r).collect()
    }

    /// Discrete state of every piecewise branch taken: ReLU signs,
    /// max-pool selections, hardened gates and projection branches. Two
    /// parameter points with equal signatures lie on the same smooth piece.
    pub fn kink_signature(&self, spec: &NetworkSpec) -> Vec<u64> {
        let mut sig = Vec::new();
        for s in &self.samples {
            for (l, layer) in spec.layers.iter().enumerate() {
                if layer.activation == Activation::Relu {
                    sig.extend(s.bn_out[l].as_slice().iter().map(|&v| (v > 0.0) as u64));
                }
            }
            sig.extend(s.pooled_input_arg.iter().map(|&a| a as u64));
            sig.extend(s.pv_arg.iter().map(|&a| a as u64));
            if self.mode == Mode::Eval {
                sig.extend(s.soft.iter().map(|&c| (c >= HARD_THRESHOLD) as u64));
            }
            sig.extend(s.ap_power.iter().map(|&p| (p > self.max_power) as u64));
        }
        sig
    }
}

fn check_inputs(spec: &NetworkSpec, params: &NetParams, inputs: &[&CTensor3]) -> Result<(usize, usize, usize)> {
    let first = inputs.first().ok_or_else(|| Error::shape("non-empty batch", "empty batch"))?;
    let (q, i, m) = first.dims();
    if let Some(bad) = inputs.iter().find(|h| h.dims() != (q, i, m)) {
        return Err(Error::shape(format!("{q}x{i}x{m} channel"), format!("{:?}", bad.dims())));
    }
    validate_architecture(spec, q, i, m).map_err(Error::Architecture)?;
    if !params.matches(spec, m) {
        return Err(Error::shape(
            format!("{} parameters", ParamLayout::new(spec, m).total),
            format!("{}", params.values.len()),
        ));
    }
    Ok((q, i, m))
}

/// Runs the full pipeline on a batch of estimated channels.
pub fn forward_batch(
    inputs: &[&CTensor3],
    spec: &NetworkSpec,
    params: &NetParams,
    max_power: f64,
    mode: Mode,
) -> Result<Forward> {
    let (_, _, m) = check_inputs(spec, params, inputs)?;
    if !(max_power > 0.0) {
        return Err(Error::domain("maximum power must be positive"));
    }
    let layout = ParamLayout::new(spec, m);
    let training = mode == Mode::Train;

    let scaled: Vec<Tensor3> = inputs.iter().map(|h| scale_input(&csi_conversion(h), spec.input_scaling)).collect();
    let mut running_mean = params.running_mean.clone();
    let mut running_var = params.running_var.clone();
    let mut conv_out: Vec<Vec<Tensor3>> = vec![Vec::new(); inputs.len()];
    let mut bn_out: Vec<Vec<Tensor3>> = vec![Vec::new(); inputs.len()];
    let mut act_out: Vec<Vec<Tensor3>> = vec![Vec::new(); inputs.len()];
    let mut bn = Vec::with_capacity(spec.layers.len());
    for (l, (layer, unit)) in spec.layers.iter().zip(&layout.units).enumerate() {
        let (w, b) = conv_params(params, &unit.conv);
        let mut zs = Vec::with_capacity(inputs.len());
        for (s, x) in scaled.iter().enumerate() {
            let input = if l == 0 { x } else { &act_out[s][l - 1] };
            zs.push(conv2d_forward(input, layer, w, b)?);
        }
        let (ys, cache) = batchnorm_forward(
            &zs,
            &params.values[unit.bn_scale.clone()],
            &params.values[unit.bn_shift.clone()],
            &mut running_mean[l],
            &mut running_var[l],
            training,
        )?;
        for (s, (z, y)) in zs.into_iter().zip(ys).enumerate() {
            act_out[s].push(activation_forward(layer.activation, &y));
            conv_out[s].push(z);
            bn_out[s].push(y);
        }
        bn.push(cache);
    }

    let out_act = spec.layers[spec.layers.len() - 1].activation;
    let (iw, ib) = conv_params(params, &layout.identity);
    let (aw, ab) = conv_params(params, &layout.attention);
    let mut samples = Vec::with_capacity(inputs.len());
    let mut beamformers = Vec::with_capacity(inputs.len());
    let mut clusters = Vec::with_capacity(inputs.len());
    for (s, input) in scaled.into_iter().enumerate() {
        let mut residual_sum = conv2d_forward(&input, &spec.identity_map, iw, ib)?;
        for (r, a) in residual_sum.as_mut_slice().iter_mut().zip(act_out[s].last().unwrap().as_slice()) {
            *r += a;
        }
        let v_r = activation_forward(out_act, &residual_sum);

        let (pooled_input, pooled_input_arg) = pool(&input, spec.pooling);
        let attention_pre = conv2d_forward(&pooled_input, &spec.attention, aw, ab)?;
        let thresholds = activation_forward(spec.attention.activation, &attention_pre);
        let (pv, pv_arg) = pool(&v_r, spec.pooling);
        let soft: Vec<f64> = pv
            .as_slice()
            .iter()
            .zip(thresholds.as_slice())
            .map(|(&p, &t)| diff_threshold(p, t, spec.amplification))
            .collect();
        let applied = ClusterMatrix {
            aps: v_r.width(),
            users: v_r.height(),
            values: soft.clone(),
        };
        let applied = if training { applied } else { applied.harden() };
        let sparse = sparsify(&v_r, &applied)?;
        let pre_projection = to_complex(&sparse)?;
        let ap_power = (0..pre_projection.aps()).map(|q| pre_projection.ap_power(q)).collect();
        beamformers.push(power_project(&pre_projection, max_power, spec.projection));
        samples.push(SampleTrace {
            input,
            conv_out: core::mem::take(&mut conv_out[s]),
            bn_out: core::mem::take(&mut bn_out[s]),
            act_out: core::mem::take(&mut act_out[s]),
            residual_sum,
            v_r,
            pooled_input,
            pooled_input_arg,
            attention_pre,
            thresholds,
            pv_arg,
            soft,
            gate: applied.values.clone(),
            pre_projection,
            ap_power,
        });
        clusters.push(applied);
    }
    Ok(Forward {
        mode,
        beamformers,
        clusters,
        running_mean,
        running_var,
        max_power,
        samples,
        bn,
    })
}

/// Single-sample evaluation: running statistics and hardened clustering.
pub fn forward(est_h: &CTensor3, spec: &NetworkSpec, params: &NetParams, max_power: f64) -> Result<(CTensor3, ClusterMatrix)> {
    let mut f = forward_batch(&[est_h], spec, params, max_power, Mode::Eval)?;
    Ok((f.beamformers.pop().unwrap(), f.clusters.pop().unwrap()))
}

/// Residual network output `V_R` of one sample in evaluation mode.
pub fn residual_forward(est_h: &CTensor3, spec: &NetworkSpec, params: &NetParams) -> Result<Tensor3> {
    let f = forward_batch(&[est_h], spec, params, 1.0, Mode::Eval)?;
    Ok(f.samples.into_iter().next().unwrap().v_r)
}

/// Thresholds of one sample.
pub fn spatial_attention(est_h: &CTensor3, spec: &NetworkSpec, params: &NetParams) -> Result<ThresholdMatrix> {
    let f = forward_batch(&[est_h], spec, params, 1.0, Mode::Eval)?;
    Ok(f.thresholds().pop().unwrap())
}

/// Gradient of a scalar loss with respect to every trainable parameter,
/// given `∂L/∂Re v + i·∂L/∂Im v` for each projected beamformer.
pub fn backward(spec: &NetworkSpec, params: &NetParams, fwd: &Forward, grads: &[CTensor3]) -> Result<Vec<f64>> {
    if grads.len() != fwd.samples.len() {
        return Err(Error::shape(format!("{} gradients", fwd.samples.len()), format!("{}", grads.len())));
    }
    let m = fwd.beamformers[0].antennas();
    let layout = ParamLayout::new(spec, m);
    let mut out = vec![0.0; layout.total];
    let out_act = spec.layers[spec.layers.len() - 1].activation;
    let (iw, _) = conv_params(params, &layout.identity);
    let (aw, _) = conv_params(params, &layout.attention);
    let mut upstream = Vec::with_capacity(grads.len());

    for ((s, g), v) in fwd.samples.iter().zip(grads).zip(&fwd.beamformers) {
        if g.dims() != v.dims() {
            return Err(Error::shape(format!("{:?} gradient", v.dims()), format!("{:?}", g.dims())));
        }
        // power projection
        let pre = &s.pre_projection;
        let mut g_pre = g.clone();
        for q in 0..pre.aps() {
            let power = s.ap_power[q];
            if power <= fwd.max_power {
                continue;
            }
            let scale = projection_scale(power, fwd.max_power, spec.projection);
            let slope = match spec.projection {
                Projection::PowerRatio => -fwd.max_power / (power * power),
                Projection::NormRatio => -0.5 * fwd.max_power.sqrt() * power.powf(-1.5),
            };
            let mut dot = 0.0;
            for i in 0..pre.users() {
                for (gz, vz) in g.block(q, i).iter().zip(pre.block(q, i)) {
                    dot += gz.re * vz.re + gz.im * vz.im;
                }
            }
            for i in 0..pre.users() {
                for (gz, vz) in g_pre.block_mut(q, i).iter_mut().zip(pre.block(q, i)) {
                    *gz = *gz * scale + *vz * (2.0 * slope * dot);
                }
            }
        }
        let g_sparse = split_complex(&g_pre);
        let c = g_sparse.channels();

        // gate and sparsification
        let mut g_vr = g_sparse.clone();
        let mut g_pv = vec![0.0; s.gate.len()];
        let mut g_t = Tensor3::zeros(s.thresholds.width(), s.thresholds.height(), 1);
        for (k, ((gf, vf), &gate)) in g_vr
            .as_mut_slice()
            .chunks_mut(c)
            .zip(s.v_r.as_slice().chunks(c))
            .zip(&s.gate)
            .enumerate()
        {
            let g_gate: f64 = gf.iter().zip(vf).map(|(a, b)| a * b).sum();
            gf.iter_mut().for_each(|x| *x *= gate);
            if fwd.mode == Mode::Train {
                let d = spec.amplification * gate * (1.0 - gate) * g_gate;
                g_pv[k] = d;
                g_t.as_mut_slice()[k] = -d;
            }
        }
        pool_backward(&g_pv, c, spec.pooling, &s.pv_arg, g_vr.as_mut_slice());

        // attention
        let g_att = activation_backward(spec.attention.activation, &s.attention_pre, &s.thresholds, &g_t);
        let (gw, gb) = split_conv_grads(&mut out, &layout.attention);
        conv2d_backward(&s.pooled_input, &spec.attention, aw, &g_att, gw, gb)?;

        // outer activation and identity branch
        let g_sum = activation_backward(out_act, &s.residual_sum, &s.v_r, &g_vr);
        let (gw, gb) = split_conv_grads(&mut out, &layout.identity);
        conv2d_backward(&s.input, &spec.identity_map, iw, &g_sum, gw, gb)?;
        upstream.push(g_sum);
    }

    // main branch, layer by layer because batch normalization couples samples
    for (l, (layer, unit)) in spec.layers.iter().zip(&layout.units).enumerate().rev() {
        let g_bn: Vec<Tensor3> = fwd
            .samples
            .iter()
            .zip(&upstream)
            .map(|(s, g)| activation_backward(layer.activation, &s.bn_out[l], &s.act_out[l], g))
            .collect();
        let scale = params.values[unit.bn_scale.clone()].to_vec();
        let mut g_scale = vec![0.0; layer.out_channels];
        let mut g_shift = vec![0.0; layer.out_channels];
        let g_conv = batchnorm_backward(&fwd.bn[l], &scale, &g_bn, &mut g_scale, &mut g_shift);
        for (o, g) in out[unit.bn_scale.clone()].iter_mut().zip(&g_scale) {
            *o += g;
        }
        for (o, g) in out[unit.bn_shift.clone()].iter_mut().zip(&g_shift) {
            *o += g;
        }
        let (w, _) = conv_params(params, &unit.conv);
        let mut next = Vec::with_capacity(upstream.len());
        for (s, g) in fwd.samples.iter().zip(&g_conv) {
            let input = if l == 0 { &s.input } else { &s.act_out[l - 1] };
            debug_assert_eq!(s.conv_out[l].dims(), g.dims());
            let (gw, gb) = split_conv_grads(&mut out, &unit.conv);
            next.push(conv2d_backward(input, layer, w, g, gw, gb)?);
        }
        upstream = next;
    }
    Ok(out)
}

fn split_conv_grads<'a>(out: &'a mut [f64], slots: &ConvSlots) -> (&'a mut [f64], &'a mut [f64]) {
    // bias directly follows the weights
    debug_assert_eq!(slots.weight.end, slots.bias.start);
    let (w, rest) = out[slots.weight.start..slots.bias.end].split_at_mut(slots.weight.len());
    (w, rest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::LayerSpec;
    use crate::seeded_rng;
    use rand::Rng as _;

    fn random_channel(q: usize, i: usize, m: usize, rng: &mut crate::Rng) -> CTensor3 {
        CTensor3::from_fn(q, i, m, |_, _, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn modulus_conversion() {
        let h = CTensor3::from_vec(1, 1, 2, vec![C64::new(-3.0, 4.0), C64::new(0.0, 0.0)]).unwrap();
        assert_eq!(csi_conversion(&h).as_slice(), &[5.0, 0.0]);
        let z = CTensor3::zeros(16, 16, 4);
        let x = csi_conversion(&z);
        assert_eq!(x.dims(), (16, 16, 4));
        assert!(x.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gate_values() {
        assert_eq!(diff_threshold(0.3, 0.3, 50.0), 0.5);
        assert!((diff_threshold(0.2, 0.0, 50.0) - 0.999_954_602_131_297_6).abs() < 1e-12);
        assert!((diff_threshold(-0.2, 0.0, 50.0) - 4.539_786_870_243_439e-5).abs() < 1e-15);
    }

    #[test]
    fn cluster_matrix_matches_entrywise_gate() {
        let v = Tensor3::from_vec(2, 1, 2, vec![0.4, 0.2, -0.1, 0.1]).unwrap();
        let t = ThresholdMatrix {
            aps: 2,
            users: 1,
            values: vec![0.25, 0.1],
        };
        let c = cluster_matrix(&v, &t, 50.0, Pooling::Mean).unwrap();
        assert_eq!(c.get(0, 0), diff_threshold(0.3, 0.25, 50.0));
        assert_eq!(c.get(1, 0), diff_threshold(0.0, 0.1, 50.0));
        let hi = ThresholdMatrix {
            aps: 2,
            users: 1,
            values: vec![-5.0, -5.0],
        };
        assert!(cluster_matrix(&v, &hi, 50.0, Pooling::Mean).unwrap().as_slice().iter().all(|&c| c > 1.0 - 1e-12));
        let lo = ThresholdMatrix {
            aps: 2,
            users: 1,
            values: vec![5.0, 5.0],
        };
        assert!(cluster_matrix(&v, &lo, 50.0, Pooling::Mean).unwrap().as_slice().iter().all(|&c| c < 1e-12));
    }

    #[test]
    fn sparsify_and_complex_packing() {
        let mut rng = seeded_rng(2);
        let v = Tensor3::from_fn(3, 2, 4, |_, _, _| rng.random_range(0.5..1.0));
        let ones = ClusterMatrix::from_vec(3, 2, vec![1.0; 6]).unwrap();
        assert_eq!(sparsify(&v, &ones).unwrap(), v);
        let zeros = ClusterMatrix::from_vec(3, 2, vec![0.0; 6]).unwrap();
        assert!(sparsify(&v, &zeros).unwrap().as_slice().iter().all(|&x| x == 0.0));
        let mut one_off = vec![1.0; 6];
        one_off[3] = 0.0;
        let s = sparsify(&v, &ClusterMatrix::from_vec(3, 2, one_off).unwrap()).unwrap();
        assert_eq!(s.as_slice().iter().filter(|&&x| x == 0.0).count(), 4);
        let c = to_complex(&s).unwrap();
        assert_eq!(c.block(1, 1), &[C64::new(0.0, 0.0); 2]);
        assert_eq!(split_complex(&c), s);

        let mut t = Tensor3::zeros(1, 1, 4);
        t.set(0, 0, 0, 1.0);
        t.set(0, 0, 2, 1.0);
        assert_eq!(to_complex(&t).unwrap().get(0, 0, 0), C64::new(1.0, 1.0));
        assert!(to_complex(&Tensor3::zeros(1, 1, 3)).is_err());
    }

    #[test]
    fn projection_examples() {
        let v = CTensor3::from_vec(1, 1, 1, vec![C64::new(2.0, 0.0)]).unwrap();
        let p = power_project(&v, 1.0, Projection::PowerRatio);
        assert!((p.ap_power(0) - 0.25).abs() < 1e-15);
        let n = power_project(&v, 1.0, Projection::NormRatio);
        assert!((n.ap_power(0) - 1.0).abs() < 1e-15);
        let small = CTensor3::from_vec(1, 2, 1, vec![C64::new(0.5, 0.0), C64::new(0.0, 0.5)]).unwrap();
        assert_eq!(power_project(&small, 1.0, Projection::PowerRatio), small);
    }

    #[test]
    fn zero_parameters_give_zero_beamformer() {
        let mut rng = seeded_rng(3);
        let spec = NetworkSpec::uniform(3, 3, 3, 4, 2);
        let params = NetParams::zeros(&spec, 2);
        let h = random_channel(4, 4, 2, &mut rng);
        let (v, _) = forward(&h, &spec, &params, 1.0).unwrap();
        assert!(v.as_slice().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn shapes_and_feasibility() {
        let mut rng = seeded_rng(4);
        let spec = NetworkSpec::uniform(3, 3, 3, 6, 2);
        let params = NetParams::random(&spec, 2, 1.0, &mut rng);
        let h = random_channel(4, 4, 2, &mut rng);
        let v_r = residual_forward(&h, &spec, &params).unwrap();
        assert_eq!(v_r.dims(), (4, 4, 4));
        let (v, c) = forward(&h, &spec, &params, 0.3).unwrap();
        assert_eq!(v.dims(), (4, 4, 2));
        for q in 0..4 {
            assert!(v.ap_power(q) <= 0.3 + 1e-9);
            for i in 0..4 {
                if c.get(q, i) == 0.0 {
                    assert!(v.block(q, i).iter().all(|z| *z == C64::new(0.0, 0.0)));
                }
            }
        }
    }

    #[test]
    fn main_branch_silenced_leaves_identity() {
        let mut rng = seeded_rng(5);
        let spec = NetworkSpec::uniform(2, 3, 3, 4, 2);
        let mut params = NetParams::random(&spec, 2, 0.5, &mut rng);
        let layout = ParamLayout::new(&spec, 2);
        let last = layout.units.last().unwrap().clone();
        params.values[last.bn_scale].iter_mut().for_each(|v| *v = 0.0);
        params.values[last.bn_shift].iter_mut().for_each(|v| *v = 0.0);
        let h = random_channel(3, 3, 2, &mut rng);
        let v_r = residual_forward(&h, &spec, &params).unwrap();
        let x = scale_input(&csi_conversion(&h), spec.input_scaling);
        let (w, b) = conv_params(&params, &layout.identity);
        let id = conv2d_forward(&x, &spec.identity_map, w, b).unwrap();
        assert_eq!(v_r, id.map(|v| v.tanh()));
    }

    #[test]
    fn attention_sharing_and_monotonicity() {
        let spec = NetworkSpec::uniform(1, 1, 1, 2, 1);
        let mut params = NetParams::zeros(&spec, 1);
        let layout = ParamLayout::new(&spec, 1);
        params.values[layout.attention.weight.start] = 0.7;
        params.values[layout.attention.bias.start] = -0.2;
        let h = CTensor3::from_vec(
            3,
            1,
            1,
            vec![C64::new(0.1, 0.0), C64::new(0.1, 0.0), C64::new(0.5, 0.0)],
        )
        .unwrap();
        let t = spatial_attention(&h, &spec, &params).unwrap();
        assert_eq!(t.get(0, 0), t.get(1, 0));
        assert!(t.get(0, 0) < t.get(2, 0));
        params.values[layout.attention.weight.start] = 0.0;
        let t = spatial_attention(&h, &spec, &params).unwrap();
        assert!(t.as_slice().iter().all(|&v| v == sigmoid(-0.2)));
    }

    fn probe_loss(fwd: &Forward, r: &[CTensor3]) -> f64 {
        fwd.beamformers
            .iter()
            .zip(r)
            .map(|(v, g)| v.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a.re * b.re + a.im * b.im).sum::<f64>())
            .sum()
    }

    fn check_gradients(spec: &NetworkSpec, mode: Mode, max_power: f64, seed: u64) {
        let mut rng = seeded_rng(seed);
        let m = 2;
        let params = NetParams::random(spec, m, 0.6, &mut rng);
        let hs: Vec<CTensor3> = (0..3).map(|_| random_channel(3, 4, m, &mut rng)).collect();
        let refs: Vec<&CTensor3> = hs.iter().collect();
        let fwd = forward_batch(&refs, spec, &params, max_power, mode).unwrap();
        let r: Vec<CTensor3> = (0..3).map(|_| random_channel(3, 4, m, &mut rng)).collect();
        let grad = backward(spec, &params, &fwd, &r).unwrap();
        let sig = fwd.kink_signature(spec);
        let mut checked = 0;
        for (k, &g) in grad.iter().enumerate() {
            let step = 1e-5 * params.values[k].abs().max(1.0);
            let mut p = params.clone();
            p.values[k] += step;
            let fp = forward_batch(&refs, spec, &p, max_power, mode).unwrap();
            p.values[k] -= 2.0 * step;
            let fm = forward_batch(&refs, spec, &p, max_power, mode).unwrap();
            if fp.kink_signature(spec) != sig || fm.kink_signature(spec) != sig {
                continue;
            }
            let fd = (probe_loss(&fp, &r) - probe_loss(&fm, &r)) / (2.0 * step);
            let err = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-6);
            assert!(err < 1e-4, "param {k}: analytic {g} numeric {fd}");
            checked += 1;
        }
        assert!(checked > params.values.len() / 2);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut spec = NetworkSpec::uniform(3, 3, 3, 3, 2);
        spec.amplification = 2.0;
        check_gradients(&spec, Mode::Train, 1.0, 10);
        check_gradients(&spec, Mode::Train, 0.05, 11);
        check_gradients(&spec, Mode::Eval, 0.05, 12);
        spec.projection = Projection::NormRatio;
        spec.pooling = Pooling::Max;
        spec.input_scaling = InputScaling::None;
        check_gradients(&spec, Mode::Train, 0.05, 13);
        let mut strided = NetworkSpec::uniform(2, 3, 3, 3, 2);
        strided.layers[0] = LayerSpec::strided(3, 2, 2, 3, 4, 3, Activation::Relu).unwrap();
        strided.amplification = 3.0;
        check_gradients(&strided, Mode::Train, 0.1, 14);
    }
}
