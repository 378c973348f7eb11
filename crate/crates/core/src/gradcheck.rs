//! Central-difference gradient checking.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Magnitude below which errors are judged absolutely rather than relatively.
pub const REL_FLOOR: f64 = 1e-3;

/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub numeric: Vec<f64>,
    pub errors: Vec<f64>,
    pub worst_index: usize,
    pub max_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_error <= tol
    }
}

/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every coordinate.
pub fn central_differences(mut f: impl FnMut(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe)?;
        probe[i] = x[i] - h;
        let down = f(&probe)?;
        probe[i] = x[i];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Compares `analytic` against central differences of `f` at `x`.
pub fn check_gradient(
    f: impl FnMut(&[f64]) -> Result<f64>,
    x: &[f64],
    analytic: &[f64],
    h: f64,
) -> Result<GradCheckReport> {
    if analytic.len() != x.len() {
        return Err(Error::shape("check_gradient", x.len(), analytic.len()));
    }
    let numeric = central_differences(f, x, h)?;
    let errors: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| relative_error(*a, *n)).collect();
    let (worst_index, max_error) = errors
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
    Ok(GradCheckReport {
        numeric,
        errors,
        worst_index,
        max_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_passes_and_wrong_gradient_fails() {
        let f = |x: &[f64]| Ok(x[0] * x[0] + 3.0 * x[0] * x[1]);
        let x = [0.7, -1.2];
        let good = [2.0 * 0.7 + 3.0 * -1.2, 3.0 * 0.7];
        assert!(check_gradient(f, &x, &good, 1e-6).unwrap().passes(1e-8));
        let bad = [good[0], good[1] * 1.01];
        let report = check_gradient(f, &x, &bad, 1e-6).unwrap();
        assert_eq!(report.worst_index, 1);
        assert!(!report.passes(1e-5));
    }

    #[test]
    fn tiny_gradients_are_judged_absolutely() {
        assert!(relative_error(1e-12, 2e-12) < 1e-8);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
        assert!(check_gradient(|_| Ok(0.0), &[1.0], &[0.0, 0.0], 1e-6).is_err());
    }
}
