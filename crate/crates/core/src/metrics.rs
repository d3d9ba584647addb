//! Link metrics: nominal SINR, sum rate, the penalized sparse sum rate,
//! average serving-AP count and the network multiplication count.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::inner;
use crate::{CTensor3, Error, Result};

fn check_dims(h: &CTensor3, v: &CTensor3, noise: &[f64]) -> Result<()> {
    if h.dims() != v.dims() {
        return Err(Error::shape(format!("{:?}", h.dims()), format!("{:?}", v.dims())));
    }
    if noise.len() != h.users() {
        return Err(Error::shape(
            format!("{} noise powers", h.users()),
            format!("{}", noise.len()),
        ));
    }
    Ok(())
}

/// `|h_iᴴ v_i|² / (Σ_{j≠i} |h_iᴴ v_j|² + σ_i²)` for every user.
pub fn nominal_sinr(h: &CTensor3, v: &CTensor3, noise: &[f64]) -> Result<Vec<f64>> {
    check_dims(h, v, noise)?;
    let users = h.users();
    let beams: Vec<_> = (0..users).map(|j| v.user_vector(j)).collect();
    Ok((0..users)
        .map(|i| {
            let hi = h.user_vector(i);
            let mut signal = 0.0;
            let mut interference = noise[i];
            for (j, vj) in beams.iter().enumerate() {
                let g = inner(&hi, vj).norm_sqr();
                if j == i {
                    signal = g;
                } else {
                    interference += g;
                }
            }
            signal / interference
        })
        .collect())
}

/// `Σ_i log₂(1 + SINR_i)`.
pub fn sum_rate(sinr: &[f64]) -> f64 {
    sinr.iter().map(|&s| (1.0 + s).log2()).sum()
}

/// Real-valued ℓ₁ norm of the stacked real/imaginary representation,
/// `Σ_{q,i,m} |Re v| + |Im v|`.
pub fn l1_norm(v: &CTensor3) -> f64 {
    v.as_slice().iter().map(|z| z.re.abs() + z.im.abs()).sum()
}

/// Sum rate minus `λ · Σ_i Σ_q ‖v_i^q‖₁`.
pub fn penalized_sparse_sum_rate(sinr: &[f64], v: &CTensor3, lambda: f64) -> f64 {
    sum_rate(sinr) - lambda * l1_norm(v)
}

/// Default modulus below which a beamformer entry counts as zero.
pub fn zero_tolerance(max_power: f64) -> f64 {
    1e-9 * max_power.sqrt()
}

/// Number of complex entries with modulus below `zero_tol`.
pub fn zero_count(v: &CTensor3, zero_tol: f64) -> usize {
    v.as_slice().iter().filter(|z| z.norm() < zero_tol).count()
}

/// Average number of serving APs per user, `Q(1 − V_zero/(QIM))`.
pub fn q_ave(v: &CTensor3, zero_tol: f64) -> f64 {
    let total = v.as_slice().len();
    if total == 0 {
        return 0.0;
    }
    let zeros = zero_count(v, zero_tol);
    v.aps() as f64 * (total - zeros) as f64 / total as f64
}

/// Multiplications of one forward pass of the clustering network:
/// `Q²I²C + QIMC + QI + QIMC·k_w·k_h + (L−1)·QIC²·k_w·k_h`.
pub fn mult_count_rjapcbn(
    aps: u64,
    users: u64,
    antennas: u64,
    channels: u64,
    layers: u64,
    kernel_w: u64,
    kernel_h: u64,
) -> u64 {
    let (q, i, m, c) = (aps, users, antennas, channels);
    let k = kernel_w * kernel_h;
    q * q * i * i * c + q * i * m * c + q * i + q * i * m * c * k + layers.saturating_sub(1) * q * i * c * c * k
}
