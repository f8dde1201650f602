use crate::error::{Error, Result};

/// Central-difference gradient check.
///
/// Returns `max_j |fd_j − g_j| / max(1, |fd_j|, |g_j|)` where
/// `fd_j = (f(θ + h e_j) − f(θ − h e_j)) / 2h`.
pub fn finite_diff_check<F>(
    mut loss_fn: F,
    params: &[f64],
    analytic_grads: &[f64],
    h: f64,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {h}")));
    }
    if params.len() != analytic_grads.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: analytic_grads.len(),
        });
    }
    let mut theta = params.to_vec();
    let mut worst = 0.0f64;
    for j in 0..theta.len() {
        let orig = theta[j];
        theta[j] = orig + h;
        let plus = loss_fn(&theta);
        theta[j] = orig - h;
        let minus = loss_fn(&theta);
        theta[j] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::numerical(format!("loss at coordinate {j}")));
        }
        let fd = (plus - minus) / (2.0 * h);
        let g = analytic_grads[j];
        let rel = (fd - g).abs() / 1f64.max(fd.abs()).max(g.abs());
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_sq(t: &[f64]) -> f64 {
        0.5 * t.iter().map(|x| x * x).sum::<f64>()
    }

    #[test]
    fn quadratic_is_exact() {
        let theta = [0.3, -1.7, 2.2];
        let err = finite_diff_check(half_sq, &theta, &theta, 1e-4).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn sine_error_is_second_order() {
        let theta = [0.4, 1.1, -2.0];
        let g: Vec<f64> = theta.iter().map(|t: &f64| t.cos()).collect();
        let f = |t: &[f64]| t.iter().map(|x| x.sin()).sum::<f64>();
        let e1 = finite_diff_check(f, &theta, &g, 1e-2).unwrap();
        let e2 = finite_diff_check(f, &theta, &g, 5e-3).unwrap();
        // Taylor remainder h²/6 · |cos|: halving h quarters the error.
        assert!(e1 < 1e-2 * 1e-2 / 6.0 + 1e-12);
        assert!((e1 / e2 - 4.0).abs() < 0.05, "{e1} {e2}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        // g = 2θ for ½‖θ‖²: |θ − 2θ| / max(1, |θ|, 2|θ|) = 0.5 at θ = 2.
        let theta = [2.0];
        let err = finite_diff_check(half_sq, &theta, &[4.0], 1e-4).unwrap();
        assert!((err - 0.5).abs() < 1e-6, "{err}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(finite_diff_check(half_sq, &[1.0], &[1.0], 0.0).is_err());
        assert!(finite_diff_check(|_| f64::NAN, &[1.0], &[1.0], 1e-3).is_err());
    }
}
