use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{draw_batch, loss_with_draws, Alignment, ModelParams, TrainConfig};
use crate::corpus::{InteractionMatrix, SplitDataset};
use crate::error::{Error, Result};
use crate::numeric::AdamState;
use crate::pia::{schedule_update, AnchorTable, LambdaSchedule};

/// Cutoff of the validation metric used for checkpoint selection and the
/// alignment schedule.
pub const VALIDATION_K: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_ndcg100: f64,
    /// Alignment weight in effect during the epoch; `None` without PIA.
    pub lambda_a: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    /// Parameters from the best validation epoch.
    pub params: ModelParams,
    pub anchors: Option<AnchorTable>,
    pub log: TrainLog,
    pub best_epoch: usize,
    pub schedule: Option<LambdaSchedule>,
}

/// Trains on `data.train`, selecting the epoch with the best validation
/// NDCG@100. With `pia`, anchors are learned and the alignment weight
/// follows the schedule.
pub fn fit(data: &SplitDataset, cfg: &TrainConfig, pia: Option<&LambdaSchedule>) -> Result<FitOutcome> {
    if data.val_fold_in.n_users() == 0 {
        return Err(Error::Split("validation split has no users".into()));
    }
    fit_with_validator(&data.train, cfg, pia, |p, _| {
        crate::eval::mean_ndcg(p, &data.val_fold_in, &data.val_holdout, VALIDATION_K)
    })
}

/// [`fit`] with a caller-supplied validation metric, called once per epoch
/// with the current parameters and the 1-based epoch number.
pub fn fit_with_validator<F>(
    train: &InteractionMatrix,
    cfg: &TrainConfig,
    pia: Option<&LambdaSchedule>,
    mut validate: F,
) -> Result<FitOutcome>
where
    F: FnMut(&ModelParams, usize) -> Result<f64>,
{
    cfg.validate()?;
    if train.n_users() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = crate::seeded_rng(cfg.seed);
    let mut params = ModelParams::init(train.n_items(), cfg.hidden_dim, cfg.latent_dim, &mut rng);
    params.normalize_input = cfg.input_normalize;
    let mut anchors = pia.map(|_| AnchorTable::init(train.n_items(), cfg.latent_dim, &mut rng));
    let mut schedule = pia.cloned();
    let mut adam = AdamState::new(params.n_params(), cfg.lr);
    let mut adam_anchors = anchors
        .as_ref()
        .map(|a| AdamState::new(a.anchors.as_slice().len(), cfg.lr));

    let mut order: Vec<usize> = (0..train.n_users()).collect();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, ModelParams, Option<AnchorTable>)> = None;

    for epoch in 1..=cfg.epochs {
        let abort = |source: Error, best: &Option<(f64, usize, ModelParams, Option<AnchorTable>)>| {
            Error::TrainingAborted {
                epoch,
                best_epoch: best.as_ref().map(|b| b.1),
                source: Box::new(source),
            }
        };
        order.shuffle(&mut rng);
        let lambda = schedule.as_ref().map(|s| s.lambda_a);
        let mut loss_sum = 0.0;

        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&[u32]> = chunk.iter().map(|&u| train.row(u)).collect();
            let draws = draw_batch(&batch, cfg.keep_prob, cfg.latent_dim, &mut rng);
            let alignment = anchors.as_ref().map(|a| Alignment {
                anchors: &a.anchors,
                lambda: lambda.expect("schedule present with anchors"),
            });
            let (loss, grads, anchor_grads) =
                match loss_with_draws(&params, &batch, &draws, cfg.beta, alignment) {
                    Ok(v) => v,
                    Err(Error::Numerical { context, row }) => {
                        let e = Error::Numerical {
                            context,
                            row: row.map(|r| chunk[r]),
                        };
                        return Err(abort(e, &best));
                    }
                    Err(e) => return Err(abort(e, &best)),
                };
            loss_sum += loss * chunk.len() as f64;

            let mut segments: Vec<(&mut [f64], &[f64])> =
                params.segments_mut().into_iter().zip(grads.segments()).collect();
            adam.step_segments(&mut segments).map_err(|e| abort(e, &best))?;
            if let (Some(a), Some(g), Some(state)) = (anchors.as_mut(), anchor_grads, adam_anchors.as_mut()) {
                state
                    .step_segments(&mut [(a.anchors.as_mut_slice(), g.as_slice())])
                    .map_err(|e| abort(e, &best))?;
            }
        }

        let loss = loss_sum / train.n_users() as f64;
        let ndcg = validate(&params, epoch).map_err(|e| abort(e, &best))?;
        if !loss.is_finite() || !ndcg.is_finite() {
            return Err(abort(Error::numerical("epoch summary"), &best));
        }
        log::info!("epoch {epoch}: loss {loss:.4}, val ndcg@{VALIDATION_K} {ndcg:.4}");
        if best.as_ref().is_none_or(|b| ndcg > b.0) {
            best = Some((ndcg, epoch, params.clone(), anchors.clone()));
        }
        if let Some(s) = schedule.as_mut() {
            *s = schedule_update(s, epoch, ndcg);
        }
        log.records.push(EpochRecord {
            epoch,
            loss,
            val_ndcg100: ndcg,
            lambda_a: lambda,
        });
    }

    let (_, best_epoch, params, anchors) = best.expect("at least one epoch");
    Ok(FitOutcome {
        params,
        anchors,
        log,
        best_epoch,
        schedule,
    })
}
