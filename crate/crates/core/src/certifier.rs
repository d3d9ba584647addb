//! Worst-case SINR certification under bounded CSI error.
//!
//! For every user the signal-power lower bound `α_i` and the interference
//! upper bound `β_i` are certified through two linear matrix inequalities:
//!
//! ```text
//! C4:  [ E_ii + δI          e_ii              ]
//!      [ e_iiᴴ     ĥᴴE_iiĥ − α − δε²          ]  ⪰ 0,   δ ≥ 0
//!
//! C5:  [ β − σ² − μ    ĥᴴV₋ᵢ     0    ]
//!      [ V₋ᵢᴴĥ        I         εV₋ᵢᴴ ]  ⪰ 0,   μ ≥ 0
//!      [ 0            εV₋ᵢ      μI    ]
//! ```
//!
//! The slack problem is separable in the users and each side involves a
//! single scalar slack plus one multiplier, so it is solved exactly by an
//! outer bisection on the slack and an inner maximization of the (concave)
//! minimum eigenvalue over the multiplier.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::linalg::{hermitian_eigen, inner, norm, CMat};
use crate::sysmodel::unit_sphere;
use crate::{CTensor3, Error, Result, C64};

/// Relative width at which the outer slack bisection stops.
pub const BISECTION_REL_WIDTH: f64 = 1e-10;
/// Relative width at which the inner multiplier search stops.
pub const MULTIPLIER_REL_WIDTH: f64 = 1e-13;
/// A matrix is accepted as feasible when `λ_min ≥ −FEASIBILITY_TOL·‖M‖_F`.
pub const FEASIBILITY_TOL: f64 = 1e-12;
/// Witness tolerance reported for certificates: `λ_min ≥ −PSD_TOL·‖M‖_F`.
pub const PSD_TOL: f64 = 1e-7;

const MAX_INNER_STEPS: usize = 200;

/// Blocks of the C4 inequality for one user.
#[derive(Debug, Clone)]
pub struct LmiBlocks {
    /// `E_ii = v_i v_iᴴ`.
    pub signal: CMat,
    /// `e_ii = E_ii ĥ_i`.
    pub cross: Vec<C64>,
    /// `V₋ᵢ`, the other users' stacked beamformers as columns.
    pub interference: CMat,
}

impl LmiBlocks {
    pub fn new(h_hat: &[C64], own: &[C64], interference: CMat) -> Result<Self> {
        if own.len() != h_hat.len() || interference.rows() != h_hat.len() {
            return Err(Error::shape(
                format!("vectors of length {}", h_hat.len()),
                format!("{} and {} rows", own.len(), interference.rows()),
            ));
        }
        let n = own.len();
        let signal = CMat::from_fn(n, n, |r, c| own[r] * own[c].conj());
        let cross = signal.mul_vec(h_hat);
        Ok(LmiBlocks {
            signal,
            cross,
            interference,
        })
    }

    pub fn for_user(est_h: &CTensor3, v: &CTensor3, user: usize) -> Result<Self> {
        Self::new(&est_h.user_vector(user), &v.user_vector(user), interference_matrix(v, user))
    }
}

/// `V₋ᵢ`: all beamformers except user `i`'s, stacked as `QM × (I−1)` columns.
pub fn interference_matrix(v: &CTensor3, user: usize) -> CMat {
    let cols: Vec<Vec<C64>> = (0..v.users()).filter(|&j| j != user).map(|j| v.user_vector(j)).collect();
    CMat::from_columns(v.aps() * v.antennas(), &cols)
}

fn check_nonneg(name: &str, x: f64) -> Result<()> {
    if !(x >= 0.0) {
        return Err(Error::domain(format!("{name} must be nonnegative, got {x}")));
    }
    Ok(())
}

/// The C4 matrix `[[E + δI, e], [eᴴ, ĥᴴEĥ − α − δε²]]`.
pub fn build_c4_lmi(blocks: &LmiBlocks, h_hat: &[C64], alpha: f64, delta: f64, eps: f64) -> Result<CMat> {
    check_nonneg("delta", delta)?;
    check_nonneg("epsilon", eps)?;
    let n = blocks.signal.rows();
    if h_hat.len() != n || blocks.cross.len() != n {
        return Err(Error::shape(format!("length {n}"), format!("length {}", h_hat.len())));
    }
    let corner = blocks.signal.quadratic_form(h_hat) - alpha - delta * eps * eps;
    Ok(CMat::from_fn(n + 1, n + 1, |r, c| match (r < n, c < n) {
        (true, true) => blocks.signal[(r, c)] + if r == c { C64::new(delta, 0.0) } else { C64::new(0.0, 0.0) },
        (true, false) => blocks.cross[r],
        (false, true) => blocks.cross[c].conj(),
        (false, false) => C64::new(corner, 0.0),
    }))
}

/// The C5 matrix of size `1 + (I−1) + QM`.
pub fn build_c5_lmi(
    h_hat: &[C64],
    interference: &CMat,
    beta: f64,
    mu: f64,
    eps: f64,
    noise: f64,
) -> Result<CMat> {
    check_nonneg("mu", mu)?;
    check_nonneg("beta", beta)?;
    check_nonneg("epsilon", eps)?;
    let n = h_hat.len();
    if interference.rows() != n {
        return Err(Error::shape(
            format!("{n} rows"),
            format!("{} rows", interference.rows()),
        ));
    }
    let k = interference.cols();
    let projections: Vec<C64> = (0..k).map(|j| inner(h_hat, &interference.column(j))).collect();
    let size = 1 + k + n;
    let zero = C64::new(0.0, 0.0);
    Ok(CMat::from_fn(size, size, |r, c| {
        let block = |x: usize| if x == 0 { 0 } else if x <= k { 1 } else { 2 };
        match (block(r), block(c)) {
            (0, 0) => C64::new(beta - noise - mu, 0.0),
            (0, 1) => projections[c - 1],
            (1, 0) => projections[r - 1].conj(),
            (1, 1) => {
                if r == c {
                    C64::new(1.0, 0.0)
                } else {
                    zero
                }
            }
            // ε V₋ᵢᴴ: row j (interferer), column m (antenna)
            (1, 2) => interference[(c - 1 - k, r - 1)].conj() * eps,
            (2, 1) => interference[(r - 1 - k, c - 1)] * eps,
            (2, 2) => {
                if r == c {
                    C64::new(mu, 0.0)
                } else {
                    zero
                }
            }
            _ => zero,
        }
    }))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMat) -> Result<f64> {
    Ok(hermitian_eigen(m)?.values[0])
}

/// One evaluation of `f(x) = λ_min(M(x))` with a supergradient.
#[derive(Debug, Clone, Copy)]
struct Probe {
    x: f64,
    value: f64,
    slope: f64,
    norm: f64,
}

impl Probe {
    fn feasible(&self) -> bool {
        self.value >= -FEASIBILITY_TOL * self.norm
    }
}

/// Maximizes a concave function on `[lo, hi]` by bisection on the sign of its
/// supergradient, returning as soon as a feasible point is seen or the tangent
/// lines at the bracket ends prove that none exists.
fn maximize_concave(mut eval: impl FnMut(f64) -> Result<Probe>, lo: f64, hi: f64) -> Result<Probe> {
    let mut a = eval(lo)?;
    if a.feasible() || a.slope <= 0.0 || hi <= lo {
        return Ok(a);
    }
    let mut b = eval(hi)?;
    if b.feasible() || b.slope >= 0.0 {
        return Ok(b);
    }
    let mut best = if a.value >= b.value { a } else { b };
    for _ in 0..MAX_INNER_STEPS {
        // tangent lines from both ends bound the concave maximum from above
        let cross = (b.value - a.value + a.slope * a.x - b.slope * b.x) / (a.slope - b.slope);
        let bound = a.value + a.slope * (cross - a.x);
        if bound < -FEASIBILITY_TOL * a.norm.max(b.norm) {
            return Ok(best);
        }
        if b.x - a.x <= MULTIPLIER_REL_WIDTH * b.x.abs().max(f64::MIN_POSITIVE) {
            return Ok(best);
        }
        let mid = eval(0.5 * (a.x + b.x))?;
        if mid.value > best.value {
            best = mid;
        }
        if mid.feasible() || mid.slope == 0.0 {
            return Ok(mid);
        }
        if mid.slope > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(best)
}

fn probe_c4(blocks: &LmiBlocks, h_hat: &[C64], alpha: f64, delta: f64, eps: f64) -> Result<Probe> {
    let m = build_c4_lmi(blocks, h_hat, alpha, delta, eps)?;
    let eig = hermitian_eigen(&m)?;
    let (value, u) = eig.min_pair();
    let n = h_hat.len();
    // ∂M/∂δ = diag(I_n, −ε²)
    let slope = u[..n].iter().map(|z| z.norm_sqr()).sum::<f64>() - eps * eps * u[n].norm_sqr();
    Ok(Probe {
        x: delta,
        value,
        slope,
        norm: m.frobenius_norm(),
    })
}

fn probe_c5(
    h_hat: &[C64],
    interference: &CMat,
    beta: f64,
    mu: f64,
    eps: f64,
    noise: f64,
) -> Result<Probe> {
    let m = build_c5_lmi(h_hat, interference, beta, mu, eps, noise)?;
    let eig = hermitian_eigen(&m)?;
    let (value, u) = eig.min_pair();
    let k = interference.cols();
    // ∂M/∂μ = diag(−1, 0_k, I_n)
    let slope = -u[0].norm_sqr() + u[1 + k..].iter().map(|z| z.norm_sqr()).sum::<f64>();
    Ok(Probe {
        x: mu,
        value,
        slope,
        norm: m.frobenius_norm(),
    })
}

/// Largest `α` for which some `δ ≥ 0` makes the C4 matrix PSD, with that `δ`.
pub fn max_alpha(h_hat: &[C64], own: &[C64], eps: f64) -> Result<(f64, f64)> {
    check_nonneg("epsilon", eps)?;
    if own.len() != h_hat.len() {
        return Err(Error::shape(format!("length {}", h_hat.len()), format!("length {}", own.len())));
    }
    let nominal = inner(h_hat, own).norm_sqr();
    if nominal == 0.0 {
        return Ok((0.0, 0.0));
    }
    if eps == 0.0 {
        return Ok((nominal, 0.0));
    }
    let n = own.len();
    let blocks = LmiBlocks::new(h_hat, own, CMat::zeros(n, 0))?;
    let feasible = |alpha: f64| -> Result<Probe> {
        // the corner must stay nonnegative, which caps δ
        let delta_max = ((nominal - alpha) / (eps * eps)).max(0.0);
        maximize_concave(|d| probe_c4(&blocks, h_hat, alpha, d, eps), 0.0, delta_max)
    };
    let top = feasible(nominal)?;
    if top.feasible() {
        return Ok((nominal, top.x));
    }
    // α = 0 is feasible at δ = 0: the matrix is then a rank-one outer product
    let (mut lo, mut hi, mut witness) = (0.0, nominal, 0.0);
    while hi - lo > BISECTION_REL_WIDTH * nominal {
        let mid = 0.5 * (lo + hi);
        let p = feasible(mid)?;
        if p.feasible() {
            lo = mid;
            witness = p.x;
        } else {
            hi = mid;
        }
    }
    Ok((lo, witness))
}

/// `(max(|ĥᴴv| − ε‖v‖₂, 0))²`: the minimum of `|(ĥ+Δ)ᴴv|²` over `‖Δ‖₂ ≤ ε`.
pub fn closed_form_numerator(h_hat: &[C64], own: &[C64], eps: f64) -> f64 {
    let gap = inner(h_hat, own).norm() - eps * norm(own);
    if gap > 0.0 {
        gap * gap
    } else {
        0.0
    }
}

/// `Σ_j (|ĥᴴv_j| + ε‖v_j‖₂)² + σ²`, an upper bound on the worst-case
/// interference-plus-noise power.
pub fn envelope_denominator(h_hat: &[C64], interference: &CMat, eps: f64, noise: f64) -> f64 {
    noise
        + (0..interference.cols())
            .map(|j| {
                let vj = interference.column(j);
                (inner(h_hat, &vj).norm() + eps * norm(&vj)).powi(2)
            })
            .sum::<f64>()
}

/// Smallest `β` for which some `μ ≥ 0` makes the C5 matrix PSD, with that `μ`.
pub fn min_beta(h_hat: &[C64], interference: &CMat, eps: f64, noise: f64) -> Result<(f64, f64)> {
    check_nonneg("epsilon", eps)?;
    if interference.rows() != h_hat.len() {
        return Err(Error::shape(
            format!("{} rows", h_hat.len()),
            format!("{} rows", interference.rows()),
        ));
    }
    if interference.frobenius_norm() == 0.0 {
        return Ok((noise, 0.0));
    }
    let feasible = |beta: f64| -> Result<Probe> {
        // the top-left entry must stay nonnegative, which caps μ
        let mu_max = (beta - noise).max(0.0);
        maximize_concave(|mu| probe_c5(h_hat, interference, beta, mu, eps, noise), 0.0, mu_max)
    };
    let mut hi = envelope_denominator(h_hat, interference, eps, noise);
    let mut top = feasible(hi)?;
    // the envelope is feasible in exact arithmetic; allow for rounding at the boundary
    let mut grow = 0;
    while !top.feasible() {
        grow += 1;
        if grow > 40 {
            return Err(Error::NonFinite("C5 bracket could not be made feasible".into()));
        }
        hi += (hi - noise).max(hi * f64::EPSILON) * 1e-9 * (1u64 << grow) as f64;
        top = feasible(hi)?;
    }
    let mut witness = top.x;
    let mut lo = noise;
    while hi - lo > BISECTION_REL_WIDTH * hi {
        let mid = 0.5 * (lo + hi);
        let p = feasible(mid)?;
        if p.feasible() {
            hi = mid;
            witness = p.x;
        } else {
            lo = mid;
        }
    }
    Ok((hi, witness))
}

/// Certified slacks for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UserCertificate {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub mu: f64,
    /// `λ_min` of the C4 matrix at `(α, δ)`.
    pub c4_min_eig: f64,
    /// `λ_min` of the C5 matrix at `(β, μ)`.
    pub c5_min_eig: f64,
    /// Frobenius norms of the two witness matrices.
    pub c4_norm: f64,
    pub c5_norm: f64,
}

impl UserCertificate {
    /// Both witnesses pass `λ_min ≥ −PSD_TOL·‖M‖_F`.
    pub fn witnesses_hold(&self) -> bool {
        self.c4_min_eig >= -PSD_TOL * self.c4_norm && self.c5_min_eig >= -PSD_TOL * self.c5_norm
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RobustCertificate {
    pub users: Vec<UserCertificate>,
}

impl RobustCertificate {
    pub fn gammas(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.gamma).collect()
    }
}

/// Certifies user `i` given the estimate, all beamformers and its radius.
pub fn certify_user(est_h: &CTensor3, v: &CTensor3, user: usize, eps: f64, noise: f64) -> Result<UserCertificate> {
    let h_hat = est_h.user_vector(user);
    let own = v.user_vector(user);
    let interference = interference_matrix(v, user);
    let (alpha, delta) = max_alpha(&h_hat, &own, eps)?;
    let (beta, mu) = min_beta(&h_hat, &interference, eps, noise)?;
    let blocks = LmiBlocks::new(&h_hat, &own, interference.clone())?;
    let c4 = build_c4_lmi(&blocks, &h_hat, alpha, delta, eps)?;
    let c5 = build_c5_lmi(&h_hat, &interference, beta, mu, eps, noise)?;
    Ok(UserCertificate {
        alpha,
        beta,
        gamma: alpha / beta,
        delta,
        mu,
        c4_min_eig: min_eigenvalue(&c4)?,
        c5_min_eig: min_eigenvalue(&c5)?,
        c4_norm: c4.frobenius_norm(),
        c5_norm: c5.frobenius_norm(),
    })
}

/// Per-user certification of a beamformer against the estimated channel.
pub fn certify(est_h: &CTensor3, v: &CTensor3, eps: &[f64], noise: &[f64]) -> Result<RobustCertificate> {
    if est_h.dims() != v.dims() {
        return Err(Error::shape(format!("{:?}", est_h.dims()), format!("{:?}", v.dims())));
    }
    let users = est_h.users();
    if eps.len() != users || noise.len() != users {
        return Err(Error::shape(
            format!("{users} radii and noise powers"),
            format!("{} and {}", eps.len(), noise.len()),
        ));
    }
    let users = (0..users)
        .map(|i| certify_user(est_h, v, i, eps[i], noise[i]))
        .collect::<Result<Vec<_>>>()?;
    Ok(RobustCertificate { users })
}

/// `Σ_i log₂(1 + γ_i)`.
pub fn worst_case_sum_rate(cert: &RobustCertificate) -> f64 {
    cert.users.iter().map(|u| (1.0 + u.gamma.max(0.0)).log2()).sum()
}

/// SINR of user `i` when its true channel is `h`.
pub fn user_sinr(h: &[C64], v: &CTensor3, user: usize, noise: f64) -> f64 {
    let mut signal = 0.0;
    let mut interference = noise;
    for j in 0..v.users() {
        let g = inner(h, &v.user_vector(j)).norm_sqr();
        if j == user {
            signal = g;
        } else {
            interference += g;
        }
    }
    signal / interference
}

/// Minimum SINR of user `i` over `n` error draws uniform on `‖Δh_i‖₂ = ε`.
pub fn sampling_oracle<R: Rng + ?Sized>(
    h_hat: &[C64],
    v: &CTensor3,
    user: usize,
    eps: f64,
    noise: f64,
    n: usize,
    rng: &mut R,
) -> f64 {
    if eps == 0.0 {
        return user_sinr(h_hat, v, user, noise);
    }
    let own = v.user_vector(user);
    let others: Vec<Vec<C64>> = (0..v.users()).filter(|&j| j != user).map(|j| v.user_vector(j)).collect();
    let mut worst = f64::INFINITY;
    let mut h = h_hat.to_vec();
    for _ in 0..n.max(1) {
        let dir = unit_sphere(h_hat.len(), rng);
        for (k, z) in h.iter_mut().enumerate() {
            *z = h_hat[k] + dir[k] * eps;
        }
        let signal = inner(&h, &own).norm_sqr();
        let interference = noise + others.iter().map(|vj| inner(&h, vj).norm_sqr()).sum::<f64>();
        worst = worst.min(signal / interference);
    }
    worst
}

/// Certified bound next to the sampled minimum for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrBound {
    pub certified: f64,
    pub sampled_min: f64,
    pub samples: usize,
}

impl SinrBound {
    pub fn is_sound(&self, tolerance: f64) -> bool {
        self.certified <= self.sampled_min + tolerance
    }
}

/// Certifies user `i` and checks it against `n` sampled error draws.
pub fn sinr_bound<R: Rng + ?Sized>(
    est_h: &CTensor3,
    v: &CTensor3,
    user: usize,
    eps: f64,
    noise: f64,
    n: usize,
    rng: &mut R,
) -> Result<SinrBound> {
    let cert = certify_user(est_h, v, user, eps, noise)?;
    let sampled_min = sampling_oracle(&est_h.user_vector(user), v, user, eps, noise, n, rng);
    Ok(SinrBound {
        certified: cert.gamma,
        sampled_min,
        samples: n.max(1),
    })
}
