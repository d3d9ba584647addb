//! Network topology, channel and CSI-error generation.
//!
//! Large-scale fading follows `(200/d)³ · L` with `10·log10(L) ~ N(0, σ_sh²)`
//! and `σ_sh = 8 dB`; small-scale fading is i.i.d. unit-variance circularly
//! symmetric complex Gaussian per antenna. CSI errors are drawn uniformly on
//! the sphere `‖Δh_i‖₂ = η‖h_i‖₂`, so the bounded-error radius is attained.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::norm;
use crate::{CTensor3, Error, Result, C64};

/// Reference distance of the path-loss law, in meters.
pub const REFERENCE_DISTANCE: f64 = 200.0;
/// Path-loss exponent.
pub const PATH_LOSS_EXPONENT: i32 = 3;
/// Shadowing standard deviation in dB (variance 64 dB²).
pub const SHADOW_STD_DB: f64 = 8.0;
/// Minimum AP–user distance enforced by placement, in meters.
pub const MIN_DISTANCE: f64 = 10.0;

const MAX_PLACEMENT_ATTEMPTS: usize = 100_000;

/// Fading switches. Disabling shadowing or small-scale fading yields the
/// deterministic limits used by tests.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelModel {
    pub shadow_std_db: f64,
    pub small_scale: bool,
    pub min_distance: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            shadow_std_db: SHADOW_STD_DB,
            small_scale: true,
            min_distance: MIN_DISTANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystemConfig {
    pub num_aps: usize,
    pub num_users: usize,
    pub num_antennas: usize,
    /// Per-AP power budget in watts.
    pub max_power: f64,
    /// Per-user noise power in watts (length `num_users`).
    pub noise_power: Vec<f64>,
    /// Side of the square deployment area in meters.
    pub area_side: f64,
    pub rng_seed: u64,
    pub channel: ChannelModel,
}

impl SystemConfig {
    /// Defaults: 1 W per AP, 10 mW noise per user, 1 km square, seed 0.
    pub fn new(num_aps: usize, num_users: usize, num_antennas: usize) -> Self {
        SystemConfig {
            num_aps,
            num_users,
            num_antennas,
            max_power: 1.0,
            noise_power: vec![1e-2; num_users],
            area_side: 1000.0,
            rng_seed: 0,
            channel: ChannelModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_aps == 0 || self.num_users == 0 || self.num_antennas == 0 {
            return Err(Error::Config("Q, I and M must all be at least 1".into()));
        }
        if !(self.max_power > 0.0) {
            return Err(Error::Config(format!("P_max must be positive, got {}", self.max_power)));
        }
        if self.noise_power.len() != self.num_users {
            return Err(Error::Config(format!(
                "expected {} noise powers, got {}",
                self.num_users,
                self.noise_power.len()
            )));
        }
        if self.noise_power.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("noise powers must be positive".into()));
        }
        if !(self.area_side > 0.0) || !self.area_side.is_finite() {
            return Err(Error::Config(format!(
                "area side must be positive, got {}",
                self.area_side
            )));
        }
        if !(self.channel.min_distance >= 0.0) || !(self.channel.shadow_std_db >= 0.0) {
            return Err(Error::Config("channel model parameters must be nonnegative".into()));
        }
        Ok(())
    }
}

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Topology {
    pub ap_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
}

impl Topology {
    pub fn distance(&self, q: usize, i: usize) -> f64 {
        let a = self.ap_positions[q];
        let u = self.user_positions[i];
        ((a[0] - u[0]).powi(2) + (a[1] - u[1]).powi(2)).sqrt()
    }
}

/// True channel, its estimate and the error radii.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelPair {
    pub true_h: CTensor3,
    pub est_h: CTensor3,
    /// `ε_i^q`, indexed `q * I + i`.
    pub per_link_eps: Vec<f64>,
    /// `ε_i = sqrt(Σ_q (ε_i^q)²)`.
    pub per_user_eps: Vec<f64>,
    pub error_level: f64,
}

impl ChannelPair {
    pub fn link_eps(&self, q: usize, i: usize) -> f64 {
        self.per_link_eps[q * self.true_h.users() + i]
    }
}

/// Places APs and users uniformly in the square, redrawing any user closer
/// than `min_distance` (and never at distance zero) to some AP.
pub fn sample_topology<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Result<Topology> {
    config.validate()?;
    let side = config.area_side;
    let d_min = config.channel.min_distance;
    let draw = |rng: &mut R| -> Point { [rng.random::<f64>() * side, rng.random::<f64>() * side] };
    let ap_positions: Vec<Point> = (0..config.num_aps).map(|_| draw(rng)).collect();
    let mut user_positions = Vec::with_capacity(config.num_users);
    for _ in 0..config.num_users {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let u = draw(rng);
            let ok = ap_positions.iter().all(|a| {
                let d = ((a[0] - u[0]).powi(2) + (a[1] - u[1]).powi(2)).sqrt();
                d > 0.0 && d >= d_min
            });
            if ok {
                placed = Some(u);
                break;
            }
        }
        match placed {
            Some(u) => user_positions.push(u),
            None => {
                return Err(Error::Config(format!(
                    "could not place a user at least {d_min} m from every AP in a {side} m square"
                )))
            }
        }
    }
    Ok(Topology {
        ap_positions,
        user_positions,
    })
}

/// `(200/d)³ · L`, `L` lognormal with `shadow_std_db` standard deviation in dB.
pub fn large_scale_gain<R: Rng + ?Sized>(d: f64, shadow_std_db: f64, rng: &mut R) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::domain(format!("distance must be positive, got {d}")));
    }
    let path = (REFERENCE_DISTANCE / d).powi(PATH_LOSS_EXPONENT);
    if shadow_std_db == 0.0 {
        return Ok(path);
    }
    let z: f64 = StandardNormal.sample(rng);
    Ok(path * 10f64.powf(shadow_std_db * z / 10.0))
}

/// Unit-variance circularly symmetric complex Gaussian.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
}

/// Draws `h_i^q = sqrt(gain(d_i^q)) · g` with one large-scale draw per link.
pub fn sample_channel<R: Rng + ?Sized>(
    config: &SystemConfig,
    topo: &Topology,
    rng: &mut R,
) -> Result<CTensor3> {
    let (nq, ni, nm) = (config.num_aps, config.num_users, config.num_antennas);
    if topo.ap_positions.len() != nq || topo.user_positions.len() != ni {
        return Err(Error::shape(
            format!("{nq} APs and {ni} users"),
            format!(
                "{} APs and {} users",
                topo.ap_positions.len(),
                topo.user_positions.len()
            ),
        ));
    }
    let mut h = CTensor3::zeros(nq, ni, nm);
    for q in 0..nq {
        for i in 0..ni {
            let amp = large_scale_gain(topo.distance(q, i), config.channel.shadow_std_db, rng)?.sqrt();
            for m in 0..nm {
                let g = if config.channel.small_scale {
                    complex_gaussian(rng)
                } else {
                    C64::new(1.0, 0.0)
                };
                h.set(q, i, m, g * amp);
            }
        }
    }
    Ok(h)
}

/// Uniform draw on the unit sphere of `C^n`.
pub fn unit_sphere<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..n).map(|_| complex_gaussian(rng)).collect();
        let r = norm(&v);
        if r > 1e-300 {
            return v.into_iter().map(|z| z / r).collect();
        }
    }
}

/// Builds the estimate `ĥ_i = h_i − Δh_i` with `‖Δh_i‖₂ = η‖h_i‖₂` exactly.
pub fn perturb_channel<R: Rng + ?Sized>(h: &CTensor3, eta: f64, rng: &mut R) -> Result<ChannelPair> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::domain(format!("error level must be nonnegative, got {eta}")));
    }
    let (nq, ni, nm) = h.dims();
    let mut est = h.clone();
    let mut per_link = vec![0.0; nq * ni];
    let mut per_user = vec![0.0; ni];
    if eta > 0.0 {
        for i in 0..ni {
            let hi = h.user_vector(i);
            let radius = eta * norm(&hi);
            let dir = unit_sphere(nq * nm, rng);
            let est_i: Vec<C64> = hi.iter().zip(&dir).map(|(a, d)| a - d * radius).collect();
            est.set_user_vector(i, &est_i);
            per_user[i] = radius;
            for q in 0..nq {
                per_link[q * ni + i] = radius * norm(&dir[q * nm..(q + 1) * nm]);
            }
        }
    }
    Ok(ChannelPair {
        true_h: h.clone(),
        est_h: est,
        per_link_eps: per_link,
        per_user_eps: per_user,
        error_level: eta,
    })
}

/// `sqrt(Σ_q (ε^q)²)`.
pub fn epsilon_aggregate(per_link: &[f64]) -> Result<f64> {
    if let Some(bad) = per_link.iter().find(|&&e| !(e >= 0.0)) {
        return Err(Error::domain(format!("per-link radius must be nonnegative, got {bad}")));
    }
    let scale = per_link.iter().fold(0.0f64, |a, &b| a.max(b));
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(scale * per_link.iter().map(|e| (e / scale).powi(2)).sum::<f64>().sqrt())
}

/// Topology, channel and perturbation in one call.
pub fn sample_pair<R: Rng + ?Sized>(config: &SystemConfig, eta: f64, rng: &mut R) -> Result<ChannelPair> {
    let topo = sample_topology(config, rng)?;
    let h = sample_channel(config, &topo, rng)?;
    perturb_channel(&h, eta, rng)
}
