use super::GeometryReport;
use crate::error::{Error, Result};
use crate::numeric::{kl_diag_gaussian, GaussianPosterior};

fn xlogx(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        t * t.ln()
    }
}

/// Convex conjugate of the Bernoulli log-partition, `A*(t) = Σ t ln t + (1−t) ln(1−t)`.
pub fn bernoulli_conjugate(t: &[f64]) -> f64 {
    t.iter().map(|&t| xlogx(t) + xlogx(1.0 - t)).sum()
}

/// `α A*(t₁) + (1−α) A*(t₂) − A*(α t₁ + (1−α) t₂)`, nonnegative by convexity.
pub fn jensen_gap_bernoulli(t1: &[f64], t2: &[f64], alpha: f64) -> Result<f64> {
    if t1.len() != t2.len() {
        return Err(Error::DimensionMismatch {
            expected: t1.len(),
            actual: t2.len(),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    if t1.iter().chain(t2).any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Config("mean parameters must lie in [0, 1]".into()));
    }
    if t1 == t2 || alpha == 0.0 || alpha == 1.0 {
        return Ok(0.0);
    }
    let mix: Vec<f64> = t1
        .iter()
        .zip(t2)
        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
        .collect();
    Ok(alpha * bernoulli_conjugate(t1) + (1.0 - alpha) * bernoulli_conjugate(t2)
        - bernoulli_conjugate(&mix))
}

/// One-dimensional quadrature layout: a trapezoid grid on
/// `μ ± half_width·σ` around each posterior, merged when the windows overlap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadSpec {
    pub points_per_window: usize,
    pub half_width: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            points_per_window: 4001,
            half_width: 8.0,
        }
    }
}

/// Trapezoid nodes and weights.
fn grid(spec: QuadSpec, a: (f64, f64), b: (f64, f64)) -> Vec<(f64, f64)> {
    let win = |(m, s): (f64, f64)| (m - spec.half_width * s, m + spec.half_width * s);
    let (wa, wb) = (win(a), win(b));
    let windows = if wa.1 < wb.0 || wb.1 < wa.0 {
        vec![wa, wb]
    } else {
        vec![(wa.0.min(wb.0), wa.1.max(wb.1))]
    };
    let n = spec.points_per_window;
    let mut nodes = Vec::with_capacity(n * windows.len());
    for (lo, hi) in windows {
        let h = (hi - lo) / (n - 1) as f64;
        for k in 0..n {
            let w = if k == 0 || k == n - 1 { 0.5 * h } else { h };
            nodes.push((lo + k as f64 * h, w));
        }
    }
    nodes
}

fn log_density(z: f64, (m, s): (f64, f64)) -> f64 {
    let r = (z - m) / s;
    -0.5 * r * r - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `min_η Σ_j A(η_j) − η_j t_j` for the Bernoulli log-partition
/// `A(η) = ln(1 + e^η)`, attained at `η = logit(t)` (or in the limit when
/// `t ∈ {0, 1}`, where the infimum is 0).
fn min_log_partition_gap(t: &[f64]) -> f64 {
    t.iter()
        .map(|&t| {
            if t <= 0.0 || t >= 1.0 {
                0.0
            } else {
                let eta = (t / (1.0 - t)).ln();
                softplus(eta) - eta * t
            }
        })
        .sum()
}

/// Checks the pairwise decomposition of the β-regularized objective for a
/// Bernoulli decoder with a free natural parameter `η(z)` and 1-D
/// posteriors against the prior `N(0, 1)`.
///
/// The left side minimizes the reconstruction integrand point by point
/// through the log-partition and integrates the KL numerically. The right
/// side is `C + ∫(q_u+q_v) Δ_{A*}(x_u, x_v; α(z)) dz + β(KL_u + KL_v)` with
/// `C = −A*(x_u) − A*(x_v)` and closed-form KL.
pub fn pairwise_decomposition_check(
    x_u: &[f64],
    x_v: &[f64],
    q_u: &GaussianPosterior,
    q_v: &GaussianPosterior,
    beta: f64,
    spec: QuadSpec,
) -> Result<GeometryReport> {
    if x_u.len() != x_v.len() {
        return Err(Error::DimensionMismatch {
            expected: x_u.len(),
            actual: x_v.len(),
        });
    }
    if x_u.len() > 5 {
        return Err(Error::Config(format!("{} items exceeds the limit of 5", x_u.len())));
    }
    if x_u.iter().chain(x_v).any(|&x| x != 0.0 && x != 1.0) {
        return Err(Error::Config("inputs must be binary".into()));
    }
    if q_u.dim() != 1 || q_v.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: q_u.dim().max(q_v.dim()),
        });
    }
    if spec.points_per_window < 2000 || spec.half_width < 8.0 {
        return Err(Error::Config("quadrature needs >= 2000 points over ±8σ".into()));
    }
    let a = (q_u.mean()[0], q_u.std()[0]);
    let b = (q_v.mean()[0], q_v.std()[0]);
    let prior = (0.0, 1.0);

    let c = -bernoulli_conjugate(x_u) - bernoulli_conjugate(x_v);
    let (mut recon_lhs, mut gap, mut kl_u_quad, mut kl_v_quad) = (0.0, 0.0, 0.0, 0.0);
    let mut t = vec![0.0; x_u.len()];
    for (z, w) in grid(spec, a, b) {
        let (lu, lv, lp) = (log_density(z, a), log_density(z, b), log_density(z, prior));
        let (qu, qv) = (lu.exp(), lv.exp());
        if qu + qv == 0.0 {
            continue;
        }
        let alpha = 1.0 / (1.0 + (lv - lu).exp());
        for ((t, xu), xv) in t.iter_mut().zip(x_u).zip(x_v) {
            *t = alpha * xu + (1.0 - alpha) * xv;
        }
        recon_lhs += w * (qu + qv) * min_log_partition_gap(&t);
        gap += w * (qu + qv) * jensen_gap_bernoulli(x_u, x_v, alpha)?;
        kl_u_quad += w * qu * (lu - lp);
        kl_v_quad += w * qv * (lv - lp);
    }
    let (kl_u, kl_v) = (kl_diag_gaussian(q_u), kl_diag_gaussian(q_v));
    let lhs = recon_lhs + beta * (kl_u_quad + kl_v_quad);
    let rhs = c + gap + beta * (kl_u + kl_v);
    if !(lhs.is_finite() && rhs.is_finite()) {
        return Err(Error::numerical("decomposition quadrature"));
    }
    let rel_error = (lhs - rhs).abs() / lhs.abs().max(1.0);
    Ok(GeometryReport::from_checks(
        "pairwise_decomposition",
        [
            ("lhs", lhs),
            ("rhs", rhs),
            ("c", c),
            ("gap_integral", gap),
            ("kl_u", kl_u),
            ("kl_v", kl_v),
            ("rel_error", rel_error),
        ],
        [("rel_error", 1e-6)],
    ))
}
