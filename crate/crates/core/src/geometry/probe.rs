use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{w2_diag_gaussian, GeometryReport};
use crate::corpus::InteractionMatrix;
use crate::error::{Error, Result};
use crate::numeric::{l2_norm, log_sum_exp, GaussianPosterior};
use crate::vae::{decode, encode, ModelParams};

/// Empirical sharing-radius diagnostics for a user pair. All gradients are
/// taken with respect to the decoder parameters only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharingDiagnostics {
    /// `W₂(q_u, q_v)`, an upper proxy for `W₁`.
    pub w2_latent: f64,
    /// `‖E_{q_u} ∇ℓ(x_u, z)‖`.
    pub grad_norm_u: f64,
    /// `‖E_{q_v}[∇ℓ(x_u, z) − ∇ℓ(x_v, z)]‖` with shared draws.
    pub delta_x: f64,
    /// Largest observed `‖∇ℓ(x_u, z) − ∇ℓ(x_u, z + ε)‖ / ‖ε‖`, a lower
    /// estimate of the latent Lipschitz constant.
    pub lipschitz_probe: f64,
    /// `max(0, grad_norm_u − delta_x) / lipschitz_probe`.
    pub r_share_estimate: f64,
}

impl SharingDiagnostics {
    pub fn to_report(&self) -> GeometryReport {
        GeometryReport::from_checks(
            "sharing_probe",
            [
                ("w2_latent", self.w2_latent),
                ("grad_norm_u", self.grad_norm_u),
                ("delta_x", self.delta_x),
                ("lipschitz_probe", self.lipschitz_probe),
                ("r_share_estimate", self.r_share_estimate),
            ],
            std::iter::empty::<(&str, f64)>(),
        )
    }
}

/// Flattened `(∂W_d, ∂b_d)` of `−Σ_i x_i log softmax(W_d z + b_d)_i`, added
/// into `out` with weight `w`.
fn add_decoder_grad(p: &ModelParams, x: &[u32], z: &[f64], w: f64, out: &mut [f64]) {
    let logits = decode(p, z);
    let lse = log_sum_exp(&logits);
    let n = x.len() as f64;
    let mut d: Vec<f64> = logits.iter().map(|l| n * (l - lse).exp()).collect();
    for &i in x {
        d[i as usize] -= 1.0;
    }
    let dz = z.len();
    let (gw, gb) = out.split_at_mut(d.len() * dz);
    for (r, dr) in d.iter().enumerate() {
        for (g, zc) in gw[r * dz..(r + 1) * dz].iter_mut().zip(z) {
            *g += w * dr * zc;
        }
        gb[r] += w * dr;
    }
}

fn sample(q: &GaussianPosterior, std: &[f64], rng: &mut crate::Rng) -> Vec<f64> {
    q.mean()
        .iter()
        .zip(std)
        .map(|(m, s)| {
            let e: f64 = StandardNormal.sample(rng);
            m + s * e
        })
        .collect()
}

/// Monte-Carlo sharing diagnostics over `n_samples` latent draws per
/// estimate; the Lipschitz probe perturbs draws from `q_u` by
/// `perturb_scale · N(0, I)`.
pub fn sharing_probe(
    p: &ModelParams,
    x_u: &[u32],
    x_v: &[u32],
    n_samples: usize,
    perturb_scale: f64,
    rng: &mut crate::Rng,
) -> Result<SharingDiagnostics> {
    if n_samples < 100 {
        return Err(Error::Config(format!("n_samples {n_samples} below 100")));
    }
    if !(perturb_scale > 0.0) {
        return Err(Error::Config("perturb_scale must be positive".into()));
    }
    let qu = encode(p, x_u, p.normalize_input)?;
    let qv = encode(p, x_v, p.normalize_input)?;
    let (su, sv) = (qu.std(), qv.std());
    let n_grad = p.n_items() * (p.latent_dim() + 1);
    let w = 1.0 / n_samples as f64;

    let mut g_u = vec![0.0; n_grad];
    for _ in 0..n_samples {
        let z = sample(&qu, &su, rng);
        add_decoder_grad(p, x_u, &z, w, &mut g_u);
    }

    let mut diff = vec![0.0; n_grad];
    for _ in 0..n_samples {
        let z = sample(&qv, &sv, rng);
        add_decoder_grad(p, x_u, &z, w, &mut diff);
        add_decoder_grad(p, x_v, &z, -w, &mut diff);
    }

    let mut lipschitz: f64 = 0.0;
    let mut a = vec![0.0; n_grad];
    let mut b = vec![0.0; n_grad];
    for _ in 0..n_samples {
        let z = sample(&qu, &su, rng);
        let eps: Vec<f64> = (0..z.len())
            .map(|_| {
                let e: f64 = StandardNormal.sample(rng);
                perturb_scale * e
            })
            .collect();
        let z2: Vec<f64> = z.iter().zip(&eps).map(|(a, e)| a + e).collect();
        a.fill(0.0);
        b.fill(0.0);
        add_decoder_grad(p, x_u, &z, 1.0, &mut a);
        add_decoder_grad(p, x_u, &z2, 1.0, &mut b);
        let num = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let den = l2_norm(&eps);
        if den > 0.0 {
            lipschitz = lipschitz.max(num / den);
        }
    }

    let grad_norm_u = l2_norm(&g_u);
    let delta_x = l2_norm(&diff);
    let excess = (grad_norm_u - delta_x).max(0.0);
    let r_share_estimate = if lipschitz > 0.0 {
        excess / lipschitz
    } else if excess > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(SharingDiagnostics {
        w2_latent: w2_diag_gaussian(&qu, &qv)?,
        grad_norm_u,
        delta_x,
        lipschitz_probe: lipschitz,
        r_share_estimate,
    })
}

/// Writes `user_index,interaction_count,mu_1..mu_d` for every row, using the
/// posterior mean of the clean input.
pub fn export_latents(p: &ModelParams, rows: &InteractionMatrix, path: &Path) -> Result<()> {
    if rows.n_users() == 0 {
        return Err(Error::EmptyDataset);
    }
    let to_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_owned(),
            message: format!("{other:?}"),
        },
    };
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    let mut header = vec!["user_index".to_owned(), "interaction_count".to_owned()];
    header.extend((1..=p.latent_dim()).map(|j| format!("mu_{j}")));
    w.write_record(&header).map_err(to_err)?;
    for (u, row) in rows.rows().enumerate() {
        let q = encode(p, row, p.normalize_input)?;
        let mut rec = vec![u.to_string(), row.len().to_string()];
        rec.extend(q.mean().iter().map(|m| m.to_string()));
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::DenseMatrix;

    #[test]
    fn identical_users_share_everything() {
        let p = ModelParams::init(8, 4, 2, &mut crate::seeded_rng(1));
        let d = sharing_probe(&p, &[1, 4], &[1, 4], 200, 0.1, &mut crate::seeded_rng(2)).unwrap();
        assert_eq!(d.w2_latent, 0.0);
        assert!(d.delta_x < 1e-12);
        assert!(d.lipschitz_probe > 0.0);
    }

    #[test]
    fn zero_decoder_bias_gradient_is_softmax_minus_x() {
        let mut p = ModelParams::init(4, 3, 2, &mut crate::seeded_rng(3));
        p.dec_w = DenseMatrix::zeros(4, 2);
        let (xu, xv): (&[u32], &[u32]) = (&[0, 1], &[2]);
        let mut out = vec![0.0; 4 * 3];
        add_decoder_grad(&p, xu, &[0.3, -0.2], 1.0, &mut out);
        // Uniform softmax: n·p − x = 2·0.25 − x.
        assert_eq!(&out[8..], &[-0.5, -0.5, 0.5, 0.5]);
        let d = sharing_probe(&p, xu, xv, 100, 0.1, &mut crate::seeded_rng(4)).unwrap();
        assert!(d.lipschitz_probe.is_finite() && d.delta_x > 0.0);
    }

    #[test]
    fn seeded_probe_is_deterministic() {
        let p = ModelParams::init(6, 3, 2, &mut crate::seeded_rng(5));
        let run = || sharing_probe(&p, &[0, 2], &[2, 5], 150, 0.05, &mut crate::seeded_rng(6)).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn export_matches_encoder() {
        let p = ModelParams::init(5, 3, 2, &mut crate::seeded_rng(7));
        let rows = InteractionMatrix::from_rows_anonymous(vec![vec![0], vec![1, 2], vec![4]], 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("latents.csv");
        export_latents(&p, &rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "user_index,interaction_count,mu_1,mu_2");
        assert_eq!(lines.len(), 4);
        let fields: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(fields[1], "2");
        let mu = encode(&p, &[1, 2], true).unwrap();
        assert_eq!(fields[2].parse::<f64>().unwrap().to_bits(), mu.mean()[0].to_bits());
    }
}
