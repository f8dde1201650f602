//! Numerical building blocks shared by the model and the geometry lab.

mod adam;
mod gaussian;
mod gradcheck;
mod matrix;

pub use adam::{adam_step, AdamState};
pub use gaussian::{
    kl_diag_gaussian, kl_to_isotropic_prior, log_softmax, multinomial_loglik, reparameterize,
    GaussianPosterior, LOGVAR_MAX, LOGVAR_MIN,
};
pub use gradcheck::finite_diff_check;
pub use matrix::DenseMatrix;

/// Euclidean norm.
pub fn l2_norm(v: &[f64]) -> f64 {
    squared_norm(v).sqrt()
}

pub fn squared_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Squared Euclidean distance between equal-length slices.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `log(sum(exp(v)))` with max-shift stabilization. Returns `-inf` for an
/// empty slice.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
