//! Personalized item alignment: learnable item anchors that pull each masked
//! posterior toward the centroid of its positives' anchors, with an adaptive
//! alignment weight.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{squared_distance, DenseMatrix, GaussianPosterior};
use crate::vae::{draw_batch, loss_with_draws, Alignment, ModelParams, TrainConfig};

/// One latent anchor per item (`I × d`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorTable {
    pub anchors: DenseMatrix,
    pub init_scale: f64,
}

impl AnchorTable {
    pub fn new(anchors: DenseMatrix, init_scale: f64) -> Result<Self> {
        if !anchors.is_finite() {
            return Err(Error::numerical("anchor table"));
        }
        Ok(Self { anchors, init_scale })
    }

    /// I.i.d. `N(0, 1/d)` anchors.
    pub fn init(n_items: usize, dim: usize, rng: &mut crate::Rng) -> Self {
        let init_scale = 1.0 / (dim as f64).sqrt();
        let anchors = DenseMatrix::from_fn(n_items, dim, |_, _| {
            let e: f64 = StandardNormal.sample(rng);
            init_scale * e
        });
        Self { anchors, init_scale }
    }

    pub fn n_items(&self) -> usize {
        self.anchors.rows()
    }

    pub fn dim(&self) -> usize {
        self.anchors.cols()
    }

    pub fn anchor(&self, item: u32) -> &[f64] {
        self.anchors.row(item as usize)
    }
}

/// `ē_x`, the mean anchor over `positives`.
pub fn anchor_centroid(table: &AnchorTable, positives: &[u32]) -> Result<Vec<f64>> {
    if positives.is_empty() {
        return Err(Error::EmptySupport);
    }
    let inv = 1.0 / positives.len() as f64;
    let mut c = vec![0.0; table.dim()];
    for &i in positives {
        for (c, e) in c.iter_mut().zip(table.anchor(i)) {
            *c += e;
        }
    }
    c.iter_mut().for_each(|c| *c *= inv);
    Ok(c)
}

/// `mean_i ‖e_i‖² − ‖ē_x‖²`, the spread of the positives' anchors.
///
/// Evaluated as `(1 / 2n²) Σ_{i,j} ‖e_i − e_j‖²`, which is nonnegative
/// and exactly zero when all anchors coincide.
pub fn alignment_constant(table: &AnchorTable, positives: &[u32]) -> Result<f64> {
    if positives.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mut sum = 0.0;
    for (k, &i) in positives.iter().enumerate() {
        for &j in &positives[k + 1..] {
            sum += squared_distance(table.anchor(i), table.anchor(j));
        }
    }
    let n = positives.len() as f64;
    Ok(sum / (n * n))
}

/// `E_{z~q} mean_i ‖z − e_i‖² = ‖μ − ē_x‖² + tr Σ + const(x, E)`.
pub fn alignment_closed_form(
    q: &GaussianPosterior,
    table: &AnchorTable,
    positives: &[u32],
) -> Result<f64> {
    if q.dim() != table.dim() {
        return Err(Error::DimensionMismatch {
            expected: table.dim(),
            actual: q.dim(),
        });
    }
    let c = anchor_centroid(table, positives)?;
    Ok(squared_distance(q.mean(), &c) + q.trace() + alignment_constant(table, positives)?)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Sampling oracle for [`alignment_closed_form`].
pub fn alignment_mc_oracle(
    q: &GaussianPosterior,
    table: &AnchorTable,
    positives: &[u32],
    n_samples: usize,
    rng: &mut crate::Rng,
) -> Result<McEstimate> {
    if positives.is_empty() {
        return Err(Error::EmptySupport);
    }
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be >= 1".into()));
    }
    let std = q.std();
    let inv = 1.0 / positives.len() as f64;
    let mut z = vec![0.0; q.dim()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_samples {
        for ((z, m), s) in z.iter_mut().zip(q.mean()).zip(&std) {
            let e: f64 = StandardNormal.sample(rng);
            *z = m + s * e;
        }
        let v = inv
            * positives
                .iter()
                .map(|&i| squared_distance(&z, table.anchor(i)))
                .sum::<f64>();
        sum += v;
        sum_sq += v * v;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = if n_samples > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        std_error: (var / n).sqrt(),
    })
}

/// Adaptive alignment weight: `λ` is multiplied by `lambda_scale` whenever
/// validation NDCG has not improved for `patience` epochs since the last best
/// or the last increase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub lambda_a: f64,
    pub lambda_scale: f64,
    pub patience: usize,
    pub best_val: f64,
    pub best_epoch: usize,
    pub last_increase_epoch: usize,
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        Self::new(8.0, 2.0, 5).expect("valid defaults")
    }
}

impl LambdaSchedule {
    pub fn new(lambda_a: f64, lambda_scale: f64, patience: usize) -> Result<Self> {
        if !(lambda_a > 0.0 && lambda_a.is_finite()) {
            return Err(Error::Config(format!("lambda_a {lambda_a} must be positive")));
        }
        if !(lambda_scale > 1.0 && lambda_scale.is_finite()) {
            return Err(Error::Config(format!("lambda_scale {lambda_scale} must exceed 1")));
        }
        if patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        Ok(Self {
            lambda_a,
            lambda_scale,
            patience,
            best_val: 0.0,
            best_epoch: 0,
            last_increase_epoch: 0,
        })
    }
}

pub fn schedule_update(s: &LambdaSchedule, epoch: usize, epoch_ndcg: f64) -> LambdaSchedule {
    let mut next = s.clone();
    if epoch_ndcg > s.best_val {
        next.best_val = epoch_ndcg;
        next.best_epoch = epoch;
    } else if epoch.saturating_sub(s.best_epoch.max(s.last_increase_epoch)) >= s.patience {
        next.lambda_a *= s.lambda_scale;
        next.last_increase_epoch = epoch;
    }
    next
}

/// Loss and gradients of the aligned objective.
#[derive(Clone, Debug, PartialEq)]
pub struct PiaGrads {
    pub loss: f64,
    pub model: ModelParams,
    pub anchors: DenseMatrix,
}

/// VAE loss plus `λ · alignment_closed_form` per row (batch mean). Draws the
/// same masks and noise, in the same order, as
/// [`crate::vae::vae_loss_and_grads`].
pub fn pia_loss_and_grads(
    p: &ModelParams,
    table: &AnchorTable,
    batch: &[&[u32]],
    cfg: &TrainConfig,
    schedule: &LambdaSchedule,
    rng: &mut crate::Rng,
) -> Result<PiaGrads> {
    if let Some(r) = batch.iter().position(|row| row.is_empty()) {
        log::error!("batch row {r} has no positives");
        return Err(Error::EmptySupport);
    }
    let draws = draw_batch(batch, cfg.keep_prob, p.latent_dim(), rng);
    let alignment = Alignment {
        anchors: &table.anchors,
        lambda: schedule.lambda_a,
    };
    let (loss, model, anchors) = loss_with_draws(p, batch, &draws, cfg.beta, Some(alignment))?;
    Ok(PiaGrads {
        loss,
        model,
        anchors: anchors.expect("alignment requested"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: Vec<Vec<f64>>) -> AnchorTable {
        let d = rows[0].len();
        let n = rows.len();
        AnchorTable::new(DenseMatrix::from_vec(n, d, rows.concat()).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn centroid_cases() {
        let t = table(vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.3, 0.9]]);
        assert_eq!(anchor_centroid(&t, &[2]).unwrap(), vec![0.3, 0.9]);
        assert_eq!(anchor_centroid(&t, &[0, 1]).unwrap(), vec![0.0, 0.0]);
        let c = anchor_centroid(&t, &[0, 1, 2]).unwrap();
        assert!((c[0] - 0.1).abs() < 1e-15 && (c[1] - 0.3).abs() < 1e-15);
        assert!(matches!(anchor_centroid(&t, &[]), Err(Error::EmptySupport)));
    }

    #[test]
    fn closed_form_hand_cases() {
        let t = table(vec![vec![0.5, -0.5]]);
        let q = GaussianPosterior::point_mass(vec![0.5, -0.5]);
        assert_eq!(alignment_closed_form(&q, &t, &[0]).unwrap(), 0.0);

        let t = table(vec![vec![0.0, 0.0]]);
        let q = GaussianPosterior::standard(2);
        assert_eq!(alignment_closed_form(&q, &t, &[0]).unwrap(), 2.0);

        let t = table(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]);
        assert_eq!(alignment_closed_form(&q, &t, &[0, 1]).unwrap(), 3.0);
        assert_eq!(alignment_closed_form(&q, &t, &[1, 0]).unwrap(), 3.0);
    }

    #[test]
    fn oracle_zero_variance_is_exact_and_seeded() {
        let t = table(vec![vec![0.2, 0.7]]);
        let q = GaussianPosterior::point_mass(vec![0.2, 0.7]);
        let est = alignment_mc_oracle(&q, &t, &[0], 100, &mut crate::seeded_rng(1)).unwrap();
        assert_eq!(est.mean, 0.0);

        let q = GaussianPosterior::standard(2);
        let a = alignment_mc_oracle(&q, &t, &[0], 1000, &mut crate::seeded_rng(2)).unwrap();
        let b = alignment_mc_oracle(&q, &t, &[0], 1000, &mut crate::seeded_rng(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn schedule_improving_keeps_lambda() {
        let mut s = LambdaSchedule::default();
        for (e, v) in [0.1, 0.2, 0.3].into_iter().enumerate() {
            s = schedule_update(&s, e + 1, v);
            assert_eq!(s.lambda_a, 8.0);
        }
        assert_eq!(s.best_epoch, 3);
    }

    #[test]
    fn schedule_flat_doubles_after_patience() {
        let mut s = LambdaSchedule {
            best_val: 0.3,
            ..LambdaSchedule::default()
        };
        for epoch in 1..=5 {
            s = schedule_update(&s, epoch, 0.3);
            let expected = if epoch < 5 { 8.0 } else { 16.0 };
            assert_eq!(s.lambda_a, expected, "epoch {epoch}");
        }
        // The stall counter restarts after an increase.
        for epoch in 6..=10 {
            s = schedule_update(&s, epoch, 0.3);
        }
        assert_eq!(s.lambda_a, 32.0);
    }

    #[test]
    fn schedule_patience_one_alternating() {
        let mut s = LambdaSchedule::new(8.0, 2.0, 1).unwrap();
        let mut val = 0.0;
        let mut expected = 8.0;
        for epoch in 1..=8 {
            if epoch % 2 == 1 {
                val += 0.1;
                s = schedule_update(&s, epoch, val);
            } else {
                s = schedule_update(&s, epoch, 0.0);
                expected *= 2.0;
            }
            assert_eq!(s.lambda_a, expected, "epoch {epoch}");
        }
    }

    #[test]
    fn rejects_bad_schedule() {
        assert!(LambdaSchedule::new(0.0, 2.0, 5).is_err());
        assert!(LambdaSchedule::new(1.0, 1.0, 5).is_err());
        assert!(LambdaSchedule::new(1.0, 2.0, 0).is_err());
    }
}
