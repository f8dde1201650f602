use nalgebra::{DMatrix, SymmetricEigen};

use super::GeometryReport;
use crate::error::{Error, Result};
use crate::numeric::squared_distance;

fn covariance(points: &[Vec<f64>]) -> DMatrix<f64> {
    let d = points[0].len();
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n)
        .collect();
    DMatrix::from_fn(d, d, |i, j| {
        points
            .iter()
            .map(|p| (p[i] - mean[i]) * (p[j] - mean[j]))
            .sum::<f64>()
            / n
    })
}

fn op_norm(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0, |acc: f64, e| acc.max(e.abs()))
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Quadratic model of mask-induced drift.
///
/// Each mask offset `g_b` gives an unregularized minimizer `a_b = −H⁻¹ g_b`
/// of `½(μ − a)ᵀH(μ − a)` with `H = diag(hessian_eigs)`. Alignment to
/// `centroid` adds `λ‖μ − ē‖²`, moving the minimizer to
/// `M a_b + (I − M) ē` with `M = (H + 2λI)⁻¹H`. Reports the variance-trace,
/// operator-norm and drift ratios against `τ = L / (L + 2λ)`. The drift ratio
/// is the RMS ratio `sqrt(E‖μ_A − ē‖² / E‖a − ē‖²)`; its square is reported
/// as `sq_drift_ratio`.
pub fn quadratic_toy(
    hessian_eigs: &[f64],
    mask_offsets: &[Vec<f64>],
    lambda_a: f64,
    centroid: &[f64],
) -> Result<GeometryReport> {
    let d = hessian_eigs.len();
    if d == 0 || hessian_eigs.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::Config("hessian eigenvalues must be positive".into()));
    }
    if mask_offsets.len() < 2 {
        return Err(Error::Config("at least two mask offsets are required".into()));
    }
    if let Some(g) = mask_offsets.iter().find(|g| g.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: g.len(),
        });
    }
    if centroid.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: centroid.len(),
        });
    }
    if !(lambda_a >= 0.0) {
        return Err(Error::Config(format!("lambda {lambda_a} must be >= 0")));
    }

    let m: Vec<f64> = hessian_eigs.iter().map(|h| h / (h + 2.0 * lambda_a)).collect();
    let unaligned: Vec<Vec<f64>> = mask_offsets
        .iter()
        .map(|g| g.iter().zip(hessian_eigs).map(|(g, h)| -g / h).collect())
        .collect();
    let aligned: Vec<Vec<f64>> = unaligned
        .iter()
        .map(|a| {
            a.iter()
                .zip(&m)
                .zip(centroid)
                .map(|((a, m), e)| m * a + (1.0 - m) * e)
                .collect()
        })
        .collect();

    let l = hessian_eigs.iter().copied().fold(f64::MIN, f64::max);
    let tau = l / (l + 2.0 * lambda_a);
    let (v, va) = (covariance(&unaligned), covariance(&aligned));
    let trace_ratio = ratio(va.trace(), v.trace());
    let opnorm_ratio = ratio(op_norm(&va), op_norm(&v));
    let drift = |pts: &[Vec<f64>]| {
        pts.iter().map(|p| squared_distance(p, centroid)).sum::<f64>() / pts.len() as f64
    };
    let sq_drift_ratio = ratio(drift(&aligned), drift(&unaligned));
    let drift_ratio = sq_drift_ratio.sqrt();

    let mut values = vec![
        ("tau", tau),
        ("trace_ratio", trace_ratio),
        ("opnorm_ratio", opnorm_ratio),
        ("drift_ratio", drift_ratio),
        ("sq_drift_ratio", sq_drift_ratio),
        ("trace_excess", trace_ratio - tau * tau),
        ("drift_excess", drift_ratio - tau),
    ];
    let mut tolerances = vec![("trace_excess", 1e-12), ("drift_excess", 1e-12)];

    // Löwner order Var[aligned] ≼ τ² Var[unaligned] holds when the
    // unaligned covariance commutes with H.
    let h = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(hessian_eigs));
    let commutator = (&h * &v - &v * &h).abs().max();
    if commutator <= 1e-12 * v.abs().max().max(f64::MIN_POSITIVE) {
        let gap = v.scale(tau * tau) - &va;
        let min_eig = SymmetricEigen::new(gap).eigenvalues.min();
        values.push(("lowner_min_eig", min_eig));
        values.push(("lowner_violation", -min_eig));
        tolerances.push(("lowner_violation", 1e-12));
    }
    Ok(GeometryReport::from_checks("quadratic_toy", values, tolerances))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn offsets() -> Vec<Vec<f64>> {
        vec![vec![1.0, -0.5], vec![-0.2, 0.3], vec![0.4, 0.9], vec![-1.1, 0.0]]
    }

    #[test]
    fn no_alignment_is_identity() {
        let r = quadratic_toy(&[0.7, 2.0], &offsets(), 0.0, &[0.3, -0.1]).unwrap();
        assert_eq!(r.value("tau"), 1.0);
        assert_eq!(r.value("trace_ratio"), 1.0);
        assert_eq!(r.value("drift_ratio"), 1.0);
        assert!(r.pass);
    }

    #[test]
    fn identity_hessian_halves() {
        let r = quadratic_toy(&[1.0, 1.0], &offsets(), 0.5, &[0.2, 0.4]).unwrap();
        assert_eq!(r.value("tau"), 0.5);
        assert!((r.value("trace_ratio") - 0.25).abs() < 1e-12);
        assert!((r.value("drift_ratio") - 0.5).abs() < 1e-12);
        assert!((r.value("sq_drift_ratio") - 0.25).abs() < 1e-12);
        // H = I commutes with everything.
        assert!(r.values.contains_key("lowner_min_eig"));
        assert!(r.pass);
    }

    #[test]
    fn identical_masks_have_zero_ratios() {
        let g = vec![vec![0.5, 0.5]; 3];
        let r = quadratic_toy(&[1.0, 2.0], &g, 1.0, &[0.0, 0.0]).unwrap();
        assert_eq!(r.value("trace_ratio"), 0.0);
        assert!(r.pass);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(quadratic_toy(&[1.0, -1.0], &offsets(), 1.0, &[0.0, 0.0]).is_err());
        assert!(quadratic_toy(&[1.0, 1.0], &offsets()[..1], 1.0, &[0.0, 0.0]).is_err());
        assert!(quadratic_toy(&[1.0], &offsets(), 1.0, &[0.0]).is_err());
    }
}
