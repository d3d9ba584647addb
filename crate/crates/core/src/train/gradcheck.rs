//! Central finite-difference verification of analytic gradients.

use alloc::vec::Vec;

use crate::Result;

/// Relative error floor applied to the denominator, so that entries whose
/// true gradient is zero are judged by absolute error.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    /// Probes compared against finite differences.
    pub checked: usize,
    /// Probes skipped because the perturbation crossed a kink.
    pub kinks: usize,
    pub max_rel_error: f64,
    /// Parameter index of the largest error.
    pub worst: Option<usize>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `analytic[k]` with central differences of `f` at every index
/// in `probes`. `f` returns the value and a signature of the piecewise
/// branch it evaluated; a probe whose `θ ± h` signatures differ from the
/// base point is counted as a kink and skipped. The step is
/// `1e-5 · max(|θ_k|, 1)`.
pub fn check_gradient<F>(mut f: F, theta: &[f64], analytic: &[f64], probes: &[usize]) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<u64>)>,
{
    let (_, base) = f(theta)?;
    let mut report = GradCheckReport::default();
    let mut x = theta.to_vec();
    for &k in probes {
        let step = 1e-5 * theta[k].abs().max(1.0);
        x[k] = theta[k] + step;
        let (fp, sp) = f(&x)?;
        x[k] = theta[k] - step;
        let (fm, sm) = f(&x)?;
        x[k] = theta[k];
        if sp != base || sm != base {
            report.kinks += 1;
            continue;
        }
        let err = relative_error(analytic[k], (fp - fm) / (2.0 * step));
        report.checked += 1;
        if report.worst.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some(k);
        }
    }
    Ok(report)
}
