use rand_distr::{Distribution, StandardNormal};

use super::{apply_mask, decode, encoder_pass, ModelParams, TrainConfig};
use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, DenseMatrix, LOGVAR_MAX, LOGVAR_MIN};

/// Random draws consumed by one row: the surviving positives after masking
/// and the standard-normal noise of the reparameterization.
#[derive(Clone, Debug, PartialEq)]
pub struct RowDraws {
    pub kept: Vec<u32>,
    pub noise: Vec<f64>,
}

/// Draws masks and noise for a batch, row by row (mask then noise).
pub fn draw_batch(
    batch: &[&[u32]],
    keep_prob: f64,
    latent_dim: usize,
    rng: &mut crate::Rng,
) -> Vec<RowDraws> {
    batch
        .iter()
        .map(|row| {
            let kept = apply_mask(row, keep_prob, rng);
            let noise = (0..latent_dim).map(|_| StandardNormal.sample(rng)).collect();
            RowDraws { kept, noise }
        })
        .collect()
}

/// Anchor-alignment term added to every row: `λ · (mean_i ‖μ − e_i‖² + tr Σ)`
/// over the row's positives `i`.
#[derive(Clone, Copy, Debug)]
pub struct Alignment<'a> {
    pub anchors: &'a DenseMatrix,
    pub lambda: f64,
}

/// Batch-mean loss and gradients at fixed draws.
///
/// Returns the loss, the model gradient and, when `alignment` is given, the
/// anchor gradient. A non-finite row loss yields [`Error::Numerical`] with the
/// row's position in `batch`.
pub fn loss_with_draws(
    p: &ModelParams,
    batch: &[&[u32]],
    draws: &[RowDraws],
    beta: f64,
    alignment: Option<Alignment<'_>>,
) -> Result<(f64, ModelParams, Option<DenseMatrix>)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    if batch.len() != draws.len() {
        return Err(Error::DimensionMismatch {
            expected: batch.len(),
            actual: draws.len(),
        });
    }
    let d = p.latent_dim();
    let mut grads = p.zeros_like();
    let mut anchor_grads = alignment.map(|a| DenseMatrix::zeros(a.anchors.rows(), a.anchors.cols()));
    let w = 1.0 / batch.len() as f64;
    let mut total = 0.0;

    for (r, (row, draw)) in batch.iter().zip(draws).enumerate() {
        if draw.noise.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: draw.noise.len(),
            });
        }
        let pass = encoder_pass(p, &draw.kept, p.normalize_input);
        let std: Vec<f64> = pass.logvar.iter().map(|lv| (0.5 * lv).exp()).collect();
        let z: Vec<f64> = pass
            .mean
            .iter()
            .zip(&std)
            .zip(&draw.noise)
            .map(|((m, s), e)| m + e * s)
            .collect();
        let logits = decode(p, &z);
        let lse = log_sum_exp(&logits);
        let n = row.len() as f64;
        let recon = n * lse - row.iter().map(|&i| logits[i as usize]).sum::<f64>();
        let kl = 0.5
            * pass
                .mean
                .iter()
                .zip(&pass.logvar)
                .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
                .sum::<f64>();

        let mut row_loss = recon + beta * kl;

        // Decoder.
        let mut d_logits: Vec<f64> = logits.iter().map(|l| w * n * (l - lse).exp()).collect();
        for &i in row.iter() {
            d_logits[i as usize] -= w;
        }
        for (g, dl) in grads.dec_b.iter_mut().zip(&d_logits) {
            *g += dl;
        }
        grads.dec_w.add_outer(1.0, &d_logits, &z);
        let d_z = p.dec_w.matvec_transposed(&d_logits);

        // Latent heads: reparameterization plus KL.
        let mut d_mu: Vec<f64> = d_z
            .iter()
            .zip(&pass.mean)
            .map(|(dz, m)| dz + w * beta * m)
            .collect();
        let mut d_lv: Vec<f64> = d_z
            .iter()
            .zip(&draw.noise)
            .zip(&std)
            .zip(&pass.logvar)
            .map(|(((dz, e), s), lv)| dz * e * 0.5 * s + w * beta * 0.5 * (lv.exp() - 1.0))
            .collect();

        if let Some(a) = alignment.filter(|a| a.lambda != 0.0) {
            if row.is_empty() {
                return Err(Error::EmptySupport);
            }
            let inv = 1.0 / n;
            let mut centroid = vec![0.0; d];
            let mut mean_sq_dist = 0.0;
            for &i in row.iter() {
                let e = a.anchors.row(i as usize);
                for ((c, ei), m) in centroid.iter_mut().zip(e).zip(&pass.mean) {
                    *c += inv * ei;
                    mean_sq_dist += inv * (m - ei) * (m - ei);
                }
            }
            let trace: f64 = pass.logvar.iter().map(|lv| lv.exp()).sum();
            row_loss += a.lambda * (mean_sq_dist + trace);

            let scale = w * a.lambda;
            for ((dm, m), c) in d_mu.iter_mut().zip(&pass.mean).zip(&centroid) {
                *dm += scale * 2.0 * (m - c);
            }
            for (dl, lv) in d_lv.iter_mut().zip(&pass.logvar) {
                *dl += scale * lv.exp();
            }
            let ga = anchor_grads.as_mut().expect("anchor gradient allocated");
            for &i in row.iter() {
                let e = a.anchors.row(i as usize);
                for ((g, ei), m) in ga.row_mut(i as usize).iter_mut().zip(e).zip(&pass.mean) {
                    *g += scale * 2.0 * inv * (ei - m);
                }
            }
        }

        if !row_loss.is_finite() {
            return Err(Error::Numerical {
                context: "training loss".into(),
                row: Some(r),
            });
        }
        total += w * row_loss;

        // The clamp passes gradient only strictly inside its range.
        for (dl, raw) in d_lv.iter_mut().zip(&pass.logvar_raw) {
            if !(*raw > LOGVAR_MIN && *raw < LOGVAR_MAX) {
                *dl = 0.0;
            }
        }
        for (g, v) in grads.enc_b_mu.iter_mut().zip(&d_mu) {
            *g += v;
        }
        for (g, v) in grads.enc_b_lv.iter_mut().zip(&d_lv) {
            *g += v;
        }
        grads.enc_w_mu.add_outer(1.0, &d_mu, &pass.hidden);
        grads.enc_w_lv.add_outer(1.0, &d_lv, &pass.hidden);

        // Hidden layer and sparse input weights.
        let mut d_a1 = p.enc_w_mu.matvec_transposed(&d_mu);
        for (da, v) in d_a1.iter_mut().zip(p.enc_w_lv.matvec_transposed(&d_lv)) {
            *da += v;
        }
        for (da, h) in d_a1.iter_mut().zip(&pass.hidden) {
            *da *= 1.0 - h * h;
        }
        for (g, v) in grads.enc_b1.iter_mut().zip(&d_a1) {
            *g += v;
        }
        for &i in &draw.kept {
            for (g, v) in grads.enc_w1.row_mut(i as usize).iter_mut().zip(&d_a1) {
                *g += pass.input_scale * v;
            }
        }
    }
    Ok((total, grads, anchor_grads))
}

/// VAE loss at fixed draws.
pub fn vae_loss_with_draws(
    p: &ModelParams,
    batch: &[&[u32]],
    draws: &[RowDraws],
    beta: f64,
) -> Result<(f64, ModelParams)> {
    let (loss, grads, _) = loss_with_draws(p, batch, draws, beta, None)?;
    Ok((loss, grads))
}

/// Masked, β-regularized negative ELBO of a batch (mean over rows) and its
/// gradient. Encoder normalization follows `p.normalize_input`.
pub fn vae_loss_and_grads(
    p: &ModelParams,
    batch: &[&[u32]],
    cfg: &TrainConfig,
    rng: &mut crate::Rng,
) -> Result<(f64, ModelParams)> {
    let draws = draw_batch(batch, cfg.keep_prob, p.latent_dim(), rng);
    vae_loss_with_draws(p, batch, &draws, cfg.beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_diff_check;

    #[test]
    fn uniform_decoder_gives_k_log_i() {
        let mut p = ModelParams::init(12, 3, 2, &mut crate::seeded_rng(4));
        p.dec_w = DenseMatrix::zeros(12, 2);
        p.dec_b = vec![0.0; 12];
        let row: &[u32] = &[1, 5, 9];
        let cfg = TrainConfig {
            beta: 0.0,
            ..TrainConfig::default()
        };
        let (loss, _) = vae_loss_and_grads(&p, &[row], &cfg, &mut crate::seeded_rng(5)).unwrap();
        assert!((loss - 3.0 * 12f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn kl_vanishes_at_prior() {
        let p = ModelParams::zeros(6, 3, 2);
        let row: &[u32] = &[0, 2];
        let draws = draw_batch(&[row], 0.5, 2, &mut crate::seeded_rng(6));
        let (small, _) = vae_loss_with_draws(&p, &[row], &draws, 0.0).unwrap();
        let (large, _) = vae_loss_with_draws(&p, &[row], &draws, 1e6).unwrap();
        assert_eq!(small, large);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = crate::seeded_rng(7);
        let mut p = ModelParams::init(20, 8, 4, &mut rng);
        for b in p.enc_b_lv.iter_mut() {
            *b = -0.5;
        }
        let rows: Vec<Vec<u32>> = vec![vec![0, 3, 7, 11], vec![2, 5], vec![1, 8, 13, 17, 19], vec![4, 6, 15]];
        let batch: Vec<&[u32]> = rows.iter().map(|r| r.as_slice()).collect();
        let draws = draw_batch(&batch, 0.6, 4, &mut rng);
        let (_, g) = vae_loss_with_draws(&p, &batch, &draws, 0.3).unwrap();
        let mut probe = p.clone();
        let err = finite_diff_check(
            |flat| {
                probe.set_flat(flat).unwrap();
                vae_loss_with_draws(&probe, &batch, &draws, 0.3).unwrap().0
            },
            &p.to_flat(),
            &g.to_flat(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn non_finite_loss_reports_row() {
        let mut p = ModelParams::zeros(3, 2, 1);
        p.dec_b = vec![f64::INFINITY, 0.0, 0.0];
        let rows: [&[u32]; 2] = [&[1], &[0, 2]];
        let draws = draw_batch(&rows, 1.0, 1, &mut crate::seeded_rng(0));
        let err = vae_loss_with_draws(&p, &rows, &draws, 0.2).unwrap_err();
        assert!(matches!(err, Error::Numerical { row: Some(0), .. }), "{err}");
    }
}
