//! Masked multinomial VAE: `|I| → hidden → (μ, logvar) ∈ ℝ^d → |I|`.
//!
//! Binary interaction vectors are passed as sorted lists of positive item
//! indices throughout.

mod checkpoint;
mod loss;
mod train;

use rand::Rng as _;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    checkpoint_bytes, parse_checkpoint, read_checkpoint, write_checkpoint, Checkpoint, ANCHOR_MAGIC,
    CHECKPOINT_MAGIC,
};
pub use loss::{
    draw_batch, loss_with_draws, vae_loss_and_grads, vae_loss_with_draws, Alignment, RowDraws,
};
pub use train::{fit, fit_with_validator, EpochRecord, FitOutcome, TrainLog, VALIDATION_K};

use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, GaussianPosterior, LOGVAR_MAX, LOGVAR_MIN};

pub const DEFAULT_HIDDEN_DIM: usize = 600;
pub const DEFAULT_LATENT_DIM: usize = 200;

/// Encoder and decoder weights.
///
/// `enc_w1` is stored input-major (`I × hidden`) so that a sparse input
/// gathers contiguous rows. The heads are `latent × hidden` and the decoder
/// is `I × latent`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub enc_w1: DenseMatrix,
    pub enc_b1: Vec<f64>,
    pub enc_w_mu: DenseMatrix,
    pub enc_b_mu: Vec<f64>,
    pub enc_w_lv: DenseMatrix,
    pub enc_b_lv: Vec<f64>,
    pub dec_w: DenseMatrix,
    pub dec_b: Vec<f64>,
    /// Whether the encoder input is L2-normalized.
    pub normalize_input: bool,
}

impl ModelParams {
    pub fn zeros(n_items: usize, hidden_dim: usize, latent_dim: usize) -> Self {
        Self {
            enc_w1: DenseMatrix::zeros(n_items, hidden_dim),
            enc_b1: vec![0.0; hidden_dim],
            enc_w_mu: DenseMatrix::zeros(latent_dim, hidden_dim),
            enc_b_mu: vec![0.0; latent_dim],
            enc_w_lv: DenseMatrix::zeros(latent_dim, hidden_dim),
            enc_b_lv: vec![0.0; latent_dim],
            dec_w: DenseMatrix::zeros(n_items, latent_dim),
            dec_b: vec![0.0; n_items],
            normalize_input: true,
        }
    }

    /// Xavier-uniform weights, zero biases.
    pub fn init(n_items: usize, hidden_dim: usize, latent_dim: usize, rng: &mut crate::Rng) -> Self {
        let mut p = Self::zeros(n_items, hidden_dim, latent_dim);
        let mut xavier = |m: &mut DenseMatrix, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite xavier limit");
            for w in m.as_mut_slice() {
                *w = dist.sample(rng);
            }
        };
        xavier(&mut p.enc_w1, n_items, hidden_dim);
        xavier(&mut p.enc_w_mu, hidden_dim, latent_dim);
        xavier(&mut p.enc_w_lv, hidden_dim, latent_dim);
        xavier(&mut p.dec_w, latent_dim, n_items);
        p
    }

    /// Zero tensor with the same shapes, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(self.n_items(), self.hidden_dim(), self.latent_dim());
        z.normalize_input = self.normalize_input;
        z
    }

    pub fn n_items(&self) -> usize {
        self.dec_b.len()
    }

    pub fn hidden_dim(&self) -> usize {
        self.enc_b1.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.enc_b_mu.len()
    }

    /// Tensors in checkpoint / flat order.
    pub fn segments(&self) -> [&[f64]; 8] {
        [
            self.enc_w1.as_slice(),
            &self.enc_b1,
            self.enc_w_mu.as_slice(),
            &self.enc_b_mu,
            self.enc_w_lv.as_slice(),
            &self.enc_b_lv,
            self.dec_w.as_slice(),
            &self.dec_b,
        ]
    }

    pub fn segments_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.enc_w1.as_mut_slice(),
            &mut self.enc_b1,
            self.enc_w_mu.as_mut_slice(),
            &mut self.enc_b_mu,
            self.enc_w_lv.as_mut_slice(),
            &mut self.enc_b_lv,
            self.dec_w.as_mut_slice(),
            &mut self.dec_b,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.segments().iter().map(|s| s.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.segments().concat()
    }

    /// Overwrites all tensors from a flat vector in [`Self::segments`] order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                actual: flat.len(),
            });
        }
        let mut offset = 0;
        for seg in self.segments_mut() {
            seg.copy_from_slice(&flat[offset..offset + seg.len()]);
            offset += seg.len();
        }
        Ok(())
    }

    /// Checks that every tensor agrees with `(I, hidden, latent)` and is finite.
    pub fn validate(&self) -> Result<()> {
        let (i, h, d) = (self.n_items(), self.hidden_dim(), self.latent_dim());
        let shapes = [
            ("enc_w1", self.enc_w1.rows(), self.enc_w1.cols(), i, h),
            ("enc_w_mu", self.enc_w_mu.rows(), self.enc_w_mu.cols(), d, h),
            ("enc_w_lv", self.enc_w_lv.rows(), self.enc_w_lv.cols(), d, h),
            ("dec_w", self.dec_w.rows(), self.dec_w.cols(), i, d),
        ];
        for (name, r, c, er, ec) in shapes {
            if (r, c) != (er, ec) {
                return Err(Error::Shape(format!("{name} is {r}x{c}, expected {er}x{ec}")));
            }
        }
        if self.enc_b_lv.len() != d {
            return Err(Error::Shape(format!(
                "enc_b_lv has {} entries, expected {d}",
                self.enc_b_lv.len()
            )));
        }
        if self.segments().iter().any(|s| s.iter().any(|x| !x.is_finite())) {
            return Err(Error::numerical("model parameters"));
        }
        Ok(())
    }
}

/// Input-masking configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub keep_prob: f64,
}

impl MaskConfig {
    pub fn new(keep_prob: f64) -> Result<Self> {
        if !(keep_prob > 0.0 && keep_prob <= 1.0) {
            return Err(Error::Config(format!("keep_prob {keep_prob} outside (0, 1]")));
        }
        Ok(Self { keep_prob })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub beta: f64,
    pub keep_prob: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub input_normalize: bool,
    pub hidden_dim: usize,
    pub latent_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.2,
            keep_prob: 0.5,
            batch_size: 500,
            epochs: 200,
            lr: 1e-3,
            seed: 0,
            input_normalize: true,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            latent_dim: DEFAULT_LATENT_DIM,
        }
    }
}

impl TrainConfig {
    /// Small, quick profile: 30 epochs with a 100-unit hidden layer and a
    /// 32-dimensional latent space.
    pub fn fast() -> Self {
        Self {
            epochs: 30,
            hidden_dim: 100,
            latent_dim: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        MaskConfig::new(self.keep_prob)?;
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta {} must be finite and >= 0", self.beta)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be >= 1".into()));
        }
        if self.hidden_dim == 0 || self.latent_dim == 0 {
            return Err(Error::Config("hidden_dim and latent_dim must be >= 1".into()));
        }
        Ok(())
    }
}

/// Keeps each positive independently with probability `keep_prob`.
pub fn apply_mask(x: &[u32], keep_prob: f64, rng: &mut crate::Rng) -> Vec<u32> {
    debug_assert!(keep_prob > 0.0 && keep_prob <= 1.0);
    x.iter()
        .copied()
        .filter(|_| rng.random_bool(keep_prob))
        .collect()
}

/// Intermediate activations of one encoder pass.
#[derive(Clone, Debug)]
pub(crate) struct EncoderPass {
    pub input_scale: f64,
    pub hidden: Vec<f64>,
    pub mean: Vec<f64>,
    pub logvar_raw: Vec<f64>,
    pub logvar: Vec<f64>,
}

pub(crate) fn encoder_pass(p: &ModelParams, x_h: &[u32], normalize: bool) -> EncoderPass {
    let input_scale = if normalize && !x_h.is_empty() {
        1.0 / (x_h.len() as f64).sqrt()
    } else {
        1.0
    };
    let mut a1 = p.enc_b1.clone();
    for &i in x_h {
        for (a, w) in a1.iter_mut().zip(p.enc_w1.row(i as usize)) {
            *a += input_scale * w;
        }
    }
    let hidden: Vec<f64> = a1.iter().map(|a| a.tanh()).collect();
    let mut mean = p.enc_w_mu.matvec(&hidden);
    for (m, b) in mean.iter_mut().zip(&p.enc_b_mu) {
        *m += b;
    }
    let mut logvar_raw = p.enc_w_lv.matvec(&hidden);
    for (l, b) in logvar_raw.iter_mut().zip(&p.enc_b_lv) {
        *l += b;
    }
    let logvar = logvar_raw
        .iter()
        .map(|l| l.clamp(LOGVAR_MIN, LOGVAR_MAX))
        .collect();
    EncoderPass {
        input_scale,
        hidden,
        mean,
        logvar_raw,
        logvar,
    }
}

/// Posterior `q(z | x_h)`. Panics if an index is `>= n_items`.
pub fn encode(p: &ModelParams, x_h: &[u32], normalize: bool) -> Result<GaussianPosterior> {
    let pass = encoder_pass(p, x_h, normalize);
    GaussianPosterior::new(pass.mean, pass.logvar)
}

/// Item logits `W_d z + b_d`.
pub fn decode(p: &ModelParams, z: &[f64]) -> Vec<f64> {
    let mut logits = p.dec_w.matvec(z);
    for (l, b) in logits.iter_mut().zip(&p.dec_b) {
        *l += b;
    }
    logits
}

/// Deterministic ranking scores: clean input, posterior mean, fold-in items
/// set to `-inf`.
pub fn predict_scores(p: &ModelParams, fold_in: &[u32]) -> Vec<f64> {
    let pass = encoder_pass(p, fold_in, p.normalize_input);
    let mut scores = decode(p, &pass.mean);
    for &i in fold_in {
        scores[i as usize] = f64::NEG_INFINITY;
    }
    scores
}
