//! Neural clustering and beamforming network.
//!
//! The pipeline maps estimated CSI to moduli, runs a residual
//! convolutional network producing a `Q × I × 2M` tensor, gates every
//! (AP, user) block against a learned threshold, packs the result into a
//! complex beamformer and projects it onto the per-AP power budget.

pub mod layers;
mod params;
mod pipeline;
mod spec;

pub use params::{ConvSlots, NetParams, ParamLayout, UnitSlots};
pub use pipeline::{
    backward, cluster_matrix, csi_conversion, diff_threshold, forward, forward_batch, power_project,
    residual_forward, scale_input, sparsify, spatial_attention, split_complex, to_complex, ClusterMatrix,
    Forward, Mode, ThresholdMatrix, HARD_THRESHOLD,
};
pub use spec::{
    validate_architecture, Activation, ArchViolation, Axis, InputScaling, LayerSpec, NetworkSpec, Pooling,
    Projection,
};
