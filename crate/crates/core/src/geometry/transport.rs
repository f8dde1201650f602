use rand::Rng as _;
use statrs::distribution::{ContinuousCDF, Normal};

use super::GeometryReport;
use crate::corpus::InteractionMatrix;
use crate::error::{Error, Result};
use crate::numeric::{kl_to_isotropic_prior, l2_norm, squared_distance, GaussianPosterior};
use crate::vae::{apply_mask, encode, ModelParams};

/// Quadrature points used by [`t1_bound_check`] in one dimension.
pub const DEFAULT_W1_QUADRATURE: usize = 100_000;

fn same_dim(a: &GaussianPosterior, b: &GaussianPosterior) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(())
}

/// `W₂(a, b) = sqrt(‖μ_a − μ_b‖² + ‖σ_a − σ_b‖²)` for diagonal Gaussians.
pub fn w2_diag_gaussian(a: &GaussianPosterior, b: &GaussianPosterior) -> Result<f64> {
    same_dim(a, b)?;
    Ok((squared_distance(a.mean(), b.mean()) + squared_distance(&a.std(), &b.std())).sqrt())
}

fn one_dim(q: &GaussianPosterior) -> Result<(f64, f64)> {
    if q.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: q.dim(),
        });
    }
    Ok((q.mean()[0], q.std()[0]))
}

/// `∫₀¹ |F_a⁻¹(t) − F_b⁻¹(t)| dt` by the midpoint rule on `n_quad` cells.
pub fn w1_1d_numeric(a: &GaussianPosterior, b: &GaussianPosterior, n_quad: usize) -> Result<f64> {
    if n_quad < 100 {
        return Err(Error::Config(format!("n_quad {n_quad} below 100")));
    }
    let (ma, sa) = one_dim(a)?;
    let (mb, sb) = one_dim(b)?;
    let (dm, ds) = (ma - mb, sa - sb);
    let std_normal = Normal::standard();
    let h = 1.0 / n_quad as f64;
    let sum: f64 = (0..n_quad)
        .map(|k| {
            let t = (k as f64 + 0.5) * h;
            (dm + ds * std_normal.inverse_cdf(t)).abs()
        })
        .sum();
    Ok(sum * h)
}

/// `E|Δμ + Δσ Z|` for standard normal `Z`, the exact 1-D Gaussian `W₁`.
pub fn w1_1d_closed_form(a: &GaussianPosterior, b: &GaussianPosterior) -> Result<f64> {
    let (ma, sa) = one_dim(a)?;
    let (mb, sb) = one_dim(b)?;
    let (m, s) = (ma - mb, (sa - sb).abs());
    if s == 0.0 {
        return Ok(m.abs());
    }
    let std_normal = Normal::standard();
    let r = m / s;
    Ok(s * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * r * r).exp()
        + m * (1.0 - 2.0 * std_normal.cdf(-r)))
}

/// [`t1_bound_check_with`] at [`DEFAULT_W1_QUADRATURE`] points.
pub fn t1_bound_check(
    q_u: &GaussianPosterior,
    q_v: &GaussianPosterior,
    prior_var: f64,
) -> Result<GeometryReport> {
    t1_bound_check_with(q_u, q_v, prior_var, DEFAULT_W1_QUADRATURE)
}

/// Transport-entropy bound against the prior `N(0, C·I)`, `C = prior_var`:
/// `W₁(q_u, q_v) ≤ √(2C·KL(q_u‖p)) + √(2C·KL(q_v‖p))`. One-dimensional
/// inputs compare `W₁` by quadrature; higher dimensions compare the mean gap
/// `‖μ_u − μ_v‖ ≤ W₁`.
pub fn t1_bound_check_with(
    q_u: &GaussianPosterior,
    q_v: &GaussianPosterior,
    prior_var: f64,
    n_quad: usize,
) -> Result<GeometryReport> {
    same_dim(q_u, q_v)?;
    if !(prior_var > 0.0) {
        return Err(Error::Config(format!("prior variance {prior_var} must be positive")));
    }
    let kl_u = kl_to_isotropic_prior(q_u, prior_var);
    let kl_v = kl_to_isotropic_prior(q_v, prior_var);
    let bound = (2.0 * prior_var * kl_u).sqrt() + (2.0 * prior_var * kl_v).sqrt();
    let (name, lhs_key, lhs) = if q_u.dim() == 1 {
        ("t1_1d", "w1", w1_1d_numeric(q_u, q_v, n_quad)?)
    } else {
        let gap = squared_distance(q_u.mean(), q_v.mean()).sqrt();
        ("t1_mean_gap", "mean_gap", gap)
    };
    Ok(GeometryReport::from_checks(
        name,
        [
            (lhs_key, lhs),
            ("bound", bound),
            ("kl_u", kl_u),
            ("kl_v", kl_v),
            ("excess", lhs - bound),
        ],
        [("excess", 1e-8)],
    ))
}

/// Dataset-average bound on latent distances of masked users.
///
/// Samples `n_pairs` user pairs from `rows`, masks each input, and compares
/// the mean of `‖μ_u − μ_v‖` with `2√(2C · mean KL)`, where the mean KL
/// runs over the same `2·n_pairs` masked posteriors. Mean `W₂` is reported as
/// the upper proxy.
pub fn dataset_bound_report(
    p: &ModelParams,
    rows: &InteractionMatrix,
    keep_prob: f64,
    prior_var: f64,
    n_pairs: usize,
    rng: &mut crate::Rng,
) -> Result<GeometryReport> {
    if n_pairs == 0 {
        return Err(Error::Config("n_pairs must be >= 1".into()));
    }
    if rows.n_users() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(prior_var > 0.0) {
        return Err(Error::Config(format!("prior variance {prior_var} must be positive")));
    }
    let n = rows.n_users();
    let (mut kl_sum, mut gap_sum, mut w2_sum, mut pair_bound_sum) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n_pairs {
        let u = rng.random_range(0..n);
        let v = if n > 1 {
            (u + rng.random_range(1..n)) % n
        } else {
            u
        };
        let qu = encode(p, &apply_mask(rows.row(u), keep_prob, rng), p.normalize_input)?;
        let qv = encode(p, &apply_mask(rows.row(v), keep_prob, rng), p.normalize_input)?;
        let (ku, kv) = (
            kl_to_isotropic_prior(&qu, prior_var),
            kl_to_isotropic_prior(&qv, prior_var),
        );
        kl_sum += ku + kv;
        gap_sum += l2_norm(
            &qu.mean()
                .iter()
                .zip(qv.mean())
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        w2_sum += w2_diag_gaussian(&qu, &qv)?;
        pair_bound_sum += (2.0 * prior_var * ku).sqrt() + (2.0 * prior_var * kv).sqrt();
    }
    let np = n_pairs as f64;
    let mean_kl = kl_sum / (2.0 * np);
    let rhs = 2.0 * (2.0 * prior_var * mean_kl).sqrt();
    let mean_gap = gap_sum / np;
    Ok(GeometryReport::from_checks(
        "dataset_bound",
        [
            ("mean_kl", mean_kl),
            ("rhs", rhs),
            ("mean_gap", mean_gap),
            ("mean_w2", w2_sum / np),
            ("mean_pair_bound", pair_bound_sum / np),
            ("excess", mean_gap - rhs),
        ],
        [("excess", 1e-8)],
    ))
}
