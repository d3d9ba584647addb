//! Differentiable worst-case SINR surrogate and the penalized loss.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{inner, norm};
use crate::metrics::l1_norm;
use crate::{CTensor3, Error, Result, C64};

/// `(max(|ĥ_iᴴv_i| − ε‖v_i‖, 0))² / (Σ_{j≠i} (|ĥ_iᴴv_j| + ε‖v_j‖)² + σ²)`.
///
/// Exact worst-case signal over a denominator that never undercuts the
/// worst-case interference, so the value lower-bounds the certified SINR.
pub fn surrogate_gamma(est_h: &CTensor3, v: &CTensor3, user: usize, eps: f64, noise: f64) -> Result<f64> {
    if est_h.dims() != v.dims() {
        return Err(Error::shape(format!("{:?}", est_h.dims()), format!("{:?}", v.dims())));
    }
    let h = est_h.user_vector(user);
    let mut num = 0.0;
    let mut den = noise;
    for j in 0..v.users() {
        let vj = v.user_vector(j);
        let a = inner(&h, &vj);
        if eps == 0.0 {
            if j == user {
                num = a.norm_sqr();
            } else {
                den += a.norm_sqr();
            }
            continue;
        }
        let n = norm(&vj);
        if j == user {
            num = (a.norm() - eps * n).max(0.0).powi(2);
        } else {
            den += (a.norm() + eps * n).powi(2);
        }
    }
    Ok(num / den)
}

/// Surrogate sum rate of one sample with its gradient in packed form
/// (`∂/∂Re + i·∂/∂Im`) and the numerator clipping pattern.
#[derive(Debug, Clone)]
pub struct SampleRate {
    pub gammas: Vec<f64>,
    pub rate: f64,
    pub grad: CTensor3,
    /// `true` where `|ĥ_iᴴv_i| > ε_i‖v_i‖`.
    pub active: Vec<bool>,
}

fn scaled_direction(a: C64, h: &[C64]) -> Vec<C64> {
    // ∇_v |ĥᴴv| = (ĥᴴv) ĥ / |ĥᴴv|
    let m = a.norm();
    if m == 0.0 {
        return vec![C64::new(0.0, 0.0); h.len()];
    }
    h.iter().map(|z| *z * (a / m)).collect()
}

pub fn surrogate_rate(est_h: &CTensor3, v: &CTensor3, eps: &[f64], noise: &[f64]) -> Result<SampleRate> {
    let (q, users, m) = v.dims();
    if est_h.dims() != v.dims() || eps.len() != users || noise.len() != users {
        return Err(Error::shape(format!("{q}x{users}x{m} with {users} radii"), "mismatch"));
    }
    let h: Vec<Vec<C64>> = (0..users).map(|i| est_h.user_vector(i)).collect();
    let beams: Vec<Vec<C64>> = (0..users).map(|j| v.user_vector(j)).collect();
    let norms: Vec<f64> = beams.iter().map(|b| norm(b)).collect();
    let unit: Vec<Vec<C64>> = beams
        .iter()
        .zip(&norms)
        .map(|(b, &n)| if n > 0.0 { b.iter().map(|z| *z / n).collect() } else { vec![C64::new(0.0, 0.0); b.len()] })
        .collect();
    let mut grads: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); q * m]; users];
    let mut gammas = Vec::with_capacity(users);
    let mut active = Vec::with_capacity(users);
    let mut rate = 0.0;
    let ln2 = core::f64::consts::LN_2;
    for i in 0..users {
        let a: Vec<C64> = beams.iter().map(|b| inner(&h[i], b)).collect();
        let gap = a[i].norm() - eps[i] * norms[i];
        let num = match (eps[i] == 0.0, gap > 0.0) {
            (true, _) => a[i].norm_sqr(),
            (false, true) => gap * gap,
            (false, false) => 0.0,
        };
        let mut den = noise[i];
        for j in (0..users).filter(|&j| j != i) {
            den += if eps[i] == 0.0 { a[j].norm_sqr() } else { (a[j].norm() + eps[i] * norms[j]).powi(2) };
        }
        let gamma = num / den;
        rate += gamma.ln_1p() / ln2;
        gammas.push(gamma);
        active.push(gap > 0.0);
        // d log2(1 + num/den) = (d num − γ d den) / (ln2 (den + num))
        let scale = 1.0 / (ln2 * (den + num));
        if gap > 0.0 {
            let c = 2.0 * gap * scale;
            let dir = scaled_direction(a[i], &h[i]);
            for ((g, d), u) in grads[i].iter_mut().zip(&dir).zip(&unit[i]) {
                *g += (*d - *u * eps[i]) * c;
            }
        }
        for j in (0..users).filter(|&j| j != i) {
            let c = -2.0 * gamma * (a[j].norm() + eps[i] * norms[j]) * scale;
            let dir = scaled_direction(a[j], &h[i]);
            for ((g, d), u) in grads[j].iter_mut().zip(&dir).zip(&unit[j]) {
                *g += (*d + *u * eps[i]) * c;
            }
        }
    }
    let mut grad = CTensor3::zeros(q, users, m);
    for (j, g) in grads.iter().enumerate() {
        grad.set_user_vector(j, g);
    }
    Ok(SampleRate {
        gammas,
        rate,
        grad,
        active,
    })
}

/// Gradient of the real-valued ℓ₁ norm, `sign(Re) + i·sign(Im)`.
pub fn l1_gradient(v: &CTensor3) -> CTensor3 {
    let sign = |x: f64| {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    let (q, i, m) = v.dims();
    CTensor3::from_vec(q, i, m, v.as_slice().iter().map(|z| C64::new(sign(z.re), sign(z.im))).collect())
        .expect("same dimensions")
}

/// Batch-averaged loss components. `total = −(rate − λ·sparsity)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossReport {
    pub total: f64,
    /// Mean surrogate sum rate `Σ_i log₂(1 + γ̃_i)`.
    pub rate: f64,
    /// Mean ℓ₁ norm of the beamformers.
    pub sparsity: f64,
    /// Mean certified worst-case sum rate, when certification ran.
    pub certified_rate: Option<f64>,
    pub q_ave: f64,
}

impl LossReport {
    pub fn new(rate: f64, sparsity: f64, lambda: f64) -> Self {
        LossReport {
            total: -(rate - lambda * sparsity),
            rate,
            sparsity,
            certified_rate: None,
            q_ave: 0.0,
        }
    }
}

/// Loss over a batch of projected beamformers together with the packed
/// gradient for each one and a signature of every piecewise branch taken.
pub struct BatchLoss {
    pub report: LossReport,
    pub grads: Vec<CTensor3>,
    pub signature: Vec<u64>,
}

pub fn batch_loss(
    est_h: &[&CTensor3],
    beamformers: &[CTensor3],
    eps: &[&[f64]],
    noise: &[f64],
    lambda: f64,
) -> Result<BatchLoss> {
    if est_h.len() != beamformers.len() || eps.len() != beamformers.len() || beamformers.is_empty() {
        return Err(Error::shape(format!("{} samples", beamformers.len()), "mismatch"));
    }
    let b = beamformers.len() as f64;
    let mut rate = 0.0;
    let mut sparsity = 0.0;
    let mut grads = Vec::with_capacity(beamformers.len());
    let mut signature = Vec::new();
    for ((h, v), e) in est_h.iter().zip(beamformers).zip(eps) {
        let s = surrogate_rate(h, v, e, noise)?;
        rate += s.rate;
        sparsity += l1_norm(v);
        let l1 = l1_gradient(v);
        let mut g = s.grad;
        for (gz, lz) in g.as_mut_slice().iter_mut().zip(l1.as_slice()) {
            *gz = (*lz * lambda - *gz) / b;
        }
        signature.extend(s.active.iter().map(|&a| a as u64));
        signature.extend(l1.as_slice().iter().map(|z| ((z.re + 1.0) * 3.0 + z.im + 1.0) as u64));
        grads.push(g);
    }
    Ok(BatchLoss {
        report: LossReport::new(rate / b, sparsity / b, lambda),
        grads,
        signature,
    })
}
