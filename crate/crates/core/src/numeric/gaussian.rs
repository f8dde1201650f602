use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOGVAR_MIN: f64 = -20.0;
pub const LOGVAR_MAX: f64 = 20.0;

/// Diagonal Gaussian `N(mean, diag(exp(logvar)))` produced by the encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior {
    mean: Vec<f64>,
    logvar: Vec<f64>,
}

impl GaussianPosterior {
    /// Builds a posterior, clamping `logvar` into `[LOGVAR_MIN, LOGVAR_MAX]`.
    pub fn new(mean: Vec<f64>, logvar: Vec<f64>) -> Result<Self> {
        if mean.len() != logvar.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: logvar.len(),
            });
        }
        if mean.iter().chain(&logvar).any(|x| !x.is_finite()) {
            return Err(Error::numerical("posterior parameters"));
        }
        let logvar = logvar
            .into_iter()
            .map(|lv| lv.clamp(LOGVAR_MIN, LOGVAR_MAX))
            .collect();
        Ok(Self { mean, logvar })
    }

    /// Standard-normal posterior of dimension `d`.
    pub fn standard(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            logvar: vec![0.0; d],
        }
    }

    /// Zero-variance limit (a point mass at `mean`). This is the only way to
    /// get `logvar = -inf`; its KL to any Gaussian prior is infinite.
    pub fn point_mass(mean: Vec<f64>) -> Self {
        let d = mean.len();
        Self {
            mean,
            logvar: vec![f64::NEG_INFINITY; d],
        }
    }

    pub fn from_std(mean: Vec<f64>, std: &[f64]) -> Result<Self> {
        let logvar = std.iter().map(|s| 2.0 * s.ln()).collect();
        Self::new(mean, logvar)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn logvar(&self) -> &[f64] {
        &self.logvar
    }

    pub fn variance(&self) -> Vec<f64> {
        self.logvar.iter().map(|lv| lv.exp()).collect()
    }

    pub fn std(&self) -> Vec<f64> {
        self.logvar.iter().map(|lv| (0.5 * lv).exp()).collect()
    }

    /// `tr Σ`.
    pub fn trace(&self) -> f64 {
        self.logvar.iter().map(|lv| lv.exp()).sum()
    }
}

/// `KL(q ‖ N(0, I)) = ½ Σ_j (μ_j² + σ_j² − 1 − log σ_j²)`.
pub fn kl_diag_gaussian(q: &GaussianPosterior) -> f64 {
    0.5 * q
        .mean
        .iter()
        .zip(&q.logvar)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

/// `KL(q ‖ N(0, c·I))` for an isotropic Gaussian prior with variance `c`.
pub fn kl_to_isotropic_prior(q: &GaussianPosterior, prior_var: f64) -> f64 {
    let log_c = prior_var.ln();
    0.5 * q
        .mean
        .iter()
        .zip(&q.logvar)
        .map(|(m, lv)| (m * m + lv.exp()) / prior_var - 1.0 - lv + log_c)
        .sum::<f64>()
}

/// `z_j = μ_j + ε_j · exp(logvar_j / 2)`.
pub fn reparameterize(q: &GaussianPosterior, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            actual: noise.len(),
        });
    }
    Ok(q.mean
        .iter()
        .zip(&q.logvar)
        .zip(noise)
        .map(|((m, lv), e)| m + e * (0.5 * lv).exp())
        .collect())
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = super::log_sum_exp(logits);
    logits.iter().map(|l| l - lse).collect()
}

/// `Σ_i x_i log softmax(logits)_i` for a binary `x` given by its positive
/// indices.
pub fn multinomial_loglik(logits: &[f64], positives: &[u32]) -> f64 {
    if positives.is_empty() {
        return 0.0;
    }
    let lse = super::log_sum_exp(logits);
    positives.iter().map(|&i| logits[i as usize] - lse).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kl_hand_values() {
        assert_eq!(kl_diag_gaussian(&GaussianPosterior::standard(3)), 0.0);
        let q = GaussianPosterior::new(vec![1.0], vec![0.0]).unwrap();
        assert!((kl_diag_gaussian(&q) - 0.5).abs() < 1e-15);
        let q = GaussianPosterior::new(vec![0.0], vec![4f64.ln()]).unwrap();
        assert!((kl_diag_gaussian(&q) - 0.806853).abs() < 1e-6);
        assert!((kl_diag_gaussian(&q) - 0.5 * (4.0 - 1.0 - 4f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn isotropic_prior_kl_reduces_to_standard() {
        let q = GaussianPosterior::new(vec![0.3, -1.2], vec![0.4, -0.7]).unwrap();
        assert!((kl_to_isotropic_prior(&q, 1.0) - kl_diag_gaussian(&q)).abs() < 1e-15);
        // N(0, c) against itself.
        let q = GaussianPosterior::new(vec![0.0], vec![2.5f64.ln()]).unwrap();
        assert!(kl_to_isotropic_prior(&q, 2.5).abs() < 1e-15);
    }

    #[test]
    fn logvar_is_clamped() {
        let q = GaussianPosterior::new(vec![0.0, 0.0], vec![-100.0, 100.0]).unwrap();
        assert_eq!(q.logvar(), &[LOGVAR_MIN, LOGVAR_MAX]);
        assert!(kl_diag_gaussian(&q).is_finite());
        assert!(GaussianPosterior::new(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn multinomial_hand_values() {
        let logits = [0.0; 4];
        assert_eq!(multinomial_loglik(&logits, &[]), 0.0);
        assert!((multinomial_loglik(&logits, &[0]) + 1.386294).abs() < 1e-6);
        assert!((multinomial_loglik(&logits, &[1, 3]) + 2.772589).abs() < 1e-6);
        // Large logits do not overflow.
        assert!(multinomial_loglik(&[1000.0, 0.0], &[0]).abs() < 1e-12);
    }

    #[test]
    fn reparameterize_hand_values() {
        let q = GaussianPosterior::new(vec![0.5, -2.0], vec![0.3, 1.0]).unwrap();
        assert_eq!(reparameterize(&q, &[0.0, 0.0]).unwrap(), q.mean());
        let q = GaussianPosterior::standard(2);
        assert_eq!(reparameterize(&q, &[1.0, -1.0]).unwrap(), vec![1.0, -1.0]);
        let q = GaussianPosterior::new(vec![1.0], vec![4f64.ln()]).unwrap();
        assert!((reparameterize(&q, &[0.5]).unwrap()[0] - 2.0).abs() < 1e-15);
        assert!(reparameterize(&q, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn reparameterize_monte_carlo_mean() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = crate::seeded_rng(11);
        let q = GaussianPosterior::new(vec![0.7, -1.5], vec![0.5, -0.3]).unwrap();
        let n = 100_000;
        let std = q.std();
        for (j, s) in std.iter().enumerate() {
            let mut acc = 0.0;
            for _ in 0..n {
                let mut noise = [0.0; 2];
                for e in &mut noise {
                    *e = StandardNormal.sample(&mut rng);
                }
                acc += reparameterize(&q, &noise).unwrap()[j];
            }
            let mean = acc / n as f64;
            let se = s / (n as f64).sqrt();
            assert!((mean - q.mean()[j]).abs() < 4.0 * se, "dim {j}: {mean}");
        }
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative(
            mean in prop::collection::vec(-5.0f64..5.0, 1..6),
            lv_seed in prop::collection::vec(-8.0f64..8.0, 6),
        ) {
            let logvar = lv_seed[..mean.len()].to_vec();
            let q = GaussianPosterior::new(mean, logvar).unwrap();
            prop_assert!(kl_diag_gaussian(&q) >= 0.0);
        }

        #[test]
        fn softmax_normalizes_over_one_hot_inputs(
            logits in prop::collection::vec(-30.0f64..30.0, 1..12),
        ) {
            let total: f64 = (0..logits.len() as u32)
                .map(|i| multinomial_loglik(&logits, &[i]).exp())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn reparameterize_is_affine_in_noise(
            a in -3.0f64..3.0, b in -3.0f64..3.0, t in 0.0f64..1.0,
            m in -2.0f64..2.0, lv in -3.0f64..3.0,
        ) {
            let q = GaussianPosterior::new(vec![m], vec![lv]).unwrap();
            let za = reparameterize(&q, &[a]).unwrap()[0];
            let zb = reparameterize(&q, &[b]).unwrap()[0];
            let zm = reparameterize(&q, &[t * a + (1.0 - t) * b]).unwrap()[0];
            prop_assert!((zm - (t * za + (1.0 - t) * zb)).abs() < 1e-12);
        }
    }
}
