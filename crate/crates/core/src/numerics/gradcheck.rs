//! Central finite-difference validation of analytic gradients.

use super::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub h: f64,
    /// Relative tolerance per coordinate.
    pub tol: f64,
    /// Absolute floor for the relative-error denominator, scaled by
    /// `max(1, |f(p)|)`.
    pub abs_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            abs_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordFailure {
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub failures: Vec<CoordFailure>,
    /// Coordinates that disagreed but sit on a non-differentiable point.
    pub kinks: Vec<(usize, usize)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares `analytic[i]` against `(f(p + h eᵢ) − f(p − h eᵢ)) / 2h` for every
/// coordinate of every parameter.
///
/// A disagreeing coordinate whose one-sided slopes differ sharply is treated
/// as a kink (ReLU/abs at zero) and excluded from the failure list and from
/// `max_rel_error`.
pub fn finite_diff_check<F>(f: F, params: &[Tensor], analytic: &[Tensor], opts: GradCheckOptions) -> GradCheckReport
where
    F: Fn(&[Tensor]) -> f64,
{
    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor> = params.to_vec();
    let f0 = f(&work);
    let floor = opts.abs_floor * f0.abs().max(1.0);

    for (pi, p) in params.iter().enumerate() {
        for idx in 0..p.numel() {
            let orig = p.data()[idx];
            work[pi].data_mut()[idx] = orig + opts.h;
            let fp = f(&work);
            work[pi].data_mut()[idx] = orig - opts.h;
            let fm = f(&work);
            work[pi].data_mut()[idx] = orig;

            let numeric = (fp - fm) / (2.0 * opts.h);
            let a = analytic[pi].data()[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            if rel <= opts.tol {
                report.max_rel_error = report.max_rel_error.max(rel);
                continue;
            }
            let fwd = (fp - f0) / opts.h;
            let bwd = (f0 - fm) / opts.h;
            let jump = (fwd - bwd).abs();
            if jump > 1e-2 * fwd.abs().max(bwd.abs()).max(floor) {
                report.kinks.push((pi, idx));
            } else {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.failures.push(CoordFailure {
                    param: pi,
                    index: idx,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    report
}
