//! WMMSE sum-rate beamforming.
//!
//! Block-coordinate ascent on the weighted MSE reformulation under a total
//! power budget `Q·P_max`. The per-AP budget is enforced afterwards by
//! the same projection the network uses.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{hermitian_eigen, inner, norm, CMat};
use crate::metrics::{nominal_sinr, sum_rate};
use crate::nn::{power_project, Projection};
use crate::{CTensor3, Error, Result, C64};

pub const DEFAULT_ITERATIONS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WmmseConfig {
    pub iterations: usize,
    pub projection: Projection,
}

impl Default for WmmseConfig {
    fn default() -> Self {
        WmmseConfig {
            iterations: DEFAULT_ITERATIONS,
            projection: Projection::PowerRatio,
        }
    }
}

/// Auxiliary variables and beamformer at the end of an iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct WmmseState {
    pub receivers: Vec<C64>,
    pub weights: Vec<f64>,
    /// Beamformer under the total-power relaxation.
    pub beamformer: CTensor3,
    /// Nominal sum rate of `beamformer` in bits/s/Hz.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmmseSolution {
    /// Per-AP feasible beamformer.
    pub beamformer: CTensor3,
    /// Nominal sum rate of `beamformer`.
    pub sum_rate: f64,
    pub state: WmmseState,
    /// Relaxed objective after initialization and after every iteration.
    pub objective_trace: Vec<f64>,
}

fn mmse_receivers(h: &[Vec<C64>], v: &[Vec<C64>], noise: &[f64]) -> (Vec<C64>, Vec<f64>) {
    let mut u = Vec::with_capacity(h.len());
    let mut w = Vec::with_capacity(h.len());
    for (i, hi) in h.iter().enumerate() {
        let total: f64 = noise[i] + v.iter().map(|vj| inner(hi, vj).norm_sqr()).sum::<f64>();
        let own = inner(hi, &v[i]);
        let sinr = own.norm_sqr() / (total - own.norm_sqr());
        u.push(own / total);
        w.push(1.0 + sinr);
    }
    (u, w)
}

/// `v_i = w_i u_i (A + νI)⁻¹ h_i` with the smallest `ν ≥ 0` meeting the
/// power budget.
fn transmit_update(h: &[Vec<C64>], u: &[C64], w: &[f64], budget: f64) -> Result<Vec<Vec<C64>>> {
    let n = h[0].len();
    let mut a = CMat::zeros(n, n);
    for ((hj, uj), wj) in h.iter().zip(u).zip(w) {
        let c = wj * uj.norm_sqr();
        for r in 0..n {
            for s in 0..n {
                a[(r, s)] += hj[r] * hj[s].conj() * c;
            }
        }
    }
    let eig = hermitian_eigen(&a)?;
    let floor = 1e-13 * eig.values.last().copied().unwrap_or(0.0).abs();
    // coordinates of the right-hand sides in the eigenbasis
    let rhs: Vec<Vec<C64>> = h
        .iter()
        .zip(u)
        .zip(w)
        .map(|((hi, ui), wi)| {
            (0..n)
                .map(|k| {
                    let uk: Vec<C64> = (0..n).map(|r| eig.vectors[(r, k)]).collect();
                    inner(&uk, hi) * *ui * *wi
                })
                .collect()
        })
        .collect();
    let power = |nu: f64| -> f64 {
        rhs.iter()
            .flat_map(|b| b.iter().zip(&eig.values))
            .filter(|(_, &l)| l + nu > floor)
            .map(|(b, &l)| b.norm_sqr() / (l + nu).powi(2))
            .sum()
    };
    let nu = if eig.values[0] > floor && power(0.0) <= budget {
        0.0
    } else {
        let total: f64 = rhs.iter().flatten().map(|b| b.norm_sqr()).sum();
        let (mut lo, mut hi) = (0.0, (total / budget).sqrt().max(floor));
        while power(hi) > budget {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-15 * hi {
                break;
            }
            if power(mid) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    Ok(rhs
        .iter()
        .map(|b| {
            let mut v = vec![C64::new(0.0, 0.0); n];
            for (k, (bk, &l)) in b.iter().zip(&eig.values).enumerate() {
                if l + nu <= floor {
                    continue;
                }
                let c = *bk / (l + nu);
                for (r, vr) in v.iter_mut().enumerate() {
                    *vr += eig.vectors[(r, k)] * c;
                }
            }
            v
        })
        .collect())
}

fn pack(v: &[Vec<C64>], aps: usize, users: usize, antennas: usize) -> CTensor3 {
    let mut out = CTensor3::zeros(aps, users, antennas);
    for (i, vi) in v.iter().enumerate() {
        out.set_user_vector(i, vi);
    }
    out
}

/// Runs WMMSE on the estimated channel and projects the result onto the
/// per-AP power budget.
pub fn wmmse_solve(est_h: &CTensor3, max_power: f64, noise: &[f64], config: &WmmseConfig) -> Result<WmmseSolution> {
    let (aps, users, antennas) = est_h.dims();
    if config.iterations == 0 {
        return Err(Error::Config("WMMSE needs at least one iteration".into()));
    }
    if !(max_power > 0.0) {
        return Err(Error::domain("maximum power must be positive"));
    }
    if noise.len() != users || noise.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::domain("one positive noise power per user is required"));
    }
    let h: Vec<Vec<C64>> = (0..users).map(|i| est_h.user_vector(i)).collect();
    let budget = aps as f64 * max_power;
    let zero = CTensor3::zeros(aps, users, antennas);
    if h.iter().all(|hi| norm(hi) == 0.0) {
        return Ok(WmmseSolution {
            beamformer: zero.clone(),
            sum_rate: 0.0,
            state: WmmseState {
                receivers: vec![C64::new(0.0, 0.0); users],
                weights: vec![1.0; users],
                beamformer: zero,
                objective: 0.0,
            },
            objective_trace: vec![0.0; config.iterations + 1],
        });
    }

    let share = (budget / users as f64).sqrt();
    let mut v: Vec<Vec<C64>> = h
        .iter()
        .map(|hi| {
            let n = norm(hi);
            if n > 0.0 {
                hi.iter().map(|z| *z * (share / n)).collect()
            } else {
                vec![C64::new(0.0, 0.0); hi.len()]
            }
        })
        .collect();
    let rate = |v: &[Vec<C64>]| -> Result<f64> {
        Ok(sum_rate(&nominal_sinr(est_h, &pack(v, aps, users, antennas), noise)?))
    };
    let mut trace = vec![rate(&v)?];
    let (mut u, mut w) = mmse_receivers(&h, &v, noise);
    for _ in 0..config.iterations {
        v = transmit_update(&h, &u, &w, budget)?;
        trace.push(rate(&v)?);
        (u, w) = mmse_receivers(&h, &v, noise);
    }
    let relaxed = pack(&v, aps, users, antennas);
    let beamformer = power_project(&relaxed, max_power, config.projection);
    let sum_rate = sum_rate(&nominal_sinr(est_h, &beamformer, noise)?);
    Ok(WmmseSolution {
        beamformer,
        sum_rate,
        state: WmmseState {
            receivers: u,
            weights: w,
            beamformer: relaxed,
            objective: *trace.last().unwrap(),
        },
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_sqr;
    use crate::sysmodel::{sample_pair, SystemConfig};
    use crate::seeded_rng;

    #[test]
    fn zero_channel_gives_zero_beamformer() {
        let h = CTensor3::zeros(2, 3, 2);
        let s = wmmse_solve(&h, 1.0, &[0.1; 3], &WmmseConfig::default()).unwrap();
        assert!(s.beamformer.as_slice().iter().all(|z| z.norm() == 0.0));
        assert_eq!(s.sum_rate, 0.0);
    }

    #[test]
    fn rejects_zero_iterations() {
        let h = CTensor3::zeros(1, 1, 1);
        let config = WmmseConfig {
            iterations: 0,
            ..WmmseConfig::default()
        };
        assert!(wmmse_solve(&h, 1.0, &[0.1], &config).is_err());
    }

    #[test]
    fn single_user_converges_to_matched_filter() {
        let h = CTensor3::from_vec(2, 1, 1, vec![C64::new(0.6, -0.3), C64::new(-0.2, 0.9)]).unwrap();
        let s = wmmse_solve(&h, 1.0, &[0.05], &WmmseConfig::default()).unwrap();
        let v = s.state.beamformer.user_vector(0);
        let hv = h.user_vector(0);
        let cosine = inner(&hv, &v).norm() / (norm(&hv) * norm(&v));
        assert!(cosine > 0.999, "{cosine}");
        assert!((norm_sqr(&v) - 2.0).abs() < 1e-9);

        // exhaustive direction search over the unit sphere of C²
        let mut best = 0.0f64;
        let steps = 200;
        for a in 0..=steps {
            let theta = core::f64::consts::FRAC_PI_2 * a as f64 / steps as f64;
            for b in 0..steps {
                let phi = 2.0 * core::f64::consts::PI * b as f64 / steps as f64;
                let d = [C64::new(theta.cos(), 0.0), C64::from_polar(theta.sin(), phi)];
                best = best.max(inner(&hv, &d).norm());
            }
        }
        let achieved = inner(&hv, &v).norm() / norm(&v);
        assert!(achieved >= best - 1e-9);
    }

    #[test]
    fn objective_is_monotone_and_output_feasible() {
        let mut rng = seeded_rng(21);
        let config = SystemConfig::new(4, 4, 2);
        for _ in 0..5 {
            let pair = sample_pair(&config, 0.1, &mut rng).unwrap();
            let s = wmmse_solve(&pair.est_h, 1.0, &config.noise_power, &WmmseConfig::default()).unwrap();
            for w in s.objective_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "{:?}", s.objective_trace);
            }
            for q in 0..4 {
                assert!(s.beamformer.ap_power(q) <= 1.0 + 1e-9);
            }
            assert!(s.state.weights.iter().all(|&w| w >= 1.0));
        }
    }

    #[test]
    fn deterministic() {
        let mut rng = seeded_rng(22);
        let config = SystemConfig::new(3, 3, 2);
        let pair = sample_pair(&config, 0.1, &mut rng).unwrap();
        let a = wmmse_solve(&pair.est_h, 1.0, &config.noise_power, &WmmseConfig::default()).unwrap();
        let b = wmmse_solve(&pair.est_h, 1.0, &config.noise_power, &WmmseConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
