//! Central-difference gradient checking.

use super::DenseParams;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// Coordinate where `max_rel_err` occurred.
    pub worst: usize,
    pub numeric: Vec<f64>,
}

/// Compares `analytic` against `(f(p+ε) - f(p-ε)) / 2ε` per coordinate.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn finite_diff_check<F>(mut f: F, params: &[f64], analytic: &[f64], eps: f64) -> GradCheck
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(eps > 0.0, "epsilon must be positive");
    assert_eq!(params.len(), analytic.len(), "gradient length");
    let mut p = params.to_vec();
    let mut numeric = Vec::with_capacity(p.len());
    let mut max_rel_err = 0.0;
    let mut worst = 0;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + eps;
        let hi = f(&p);
        p[i] = orig - eps;
        let lo = f(&p);
        p[i] = orig;
        let n = (hi - lo) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        if rel > max_rel_err {
            max_rel_err = rel;
            worst = i;
        }
        numeric.push(n);
    }
    GradCheck {
        max_rel_err,
        worst,
        numeric,
    }
}

/// [`finite_diff_check`] over every parameter of a dense network.
pub fn finite_diff_check_params<F>(params: &DenseParams, analytic: &DenseParams, mut f: F, eps: f64) -> GradCheck
where
    F: FnMut(&DenseParams) -> f64,
{
    let mut scratch = params.clone();
    finite_diff_check(
        |flat| {
            scratch.set_flat(flat);
            f(&scratch)
        },
        &params.to_flat(),
        &analytic.to_flat(),
        eps,
    )
}
