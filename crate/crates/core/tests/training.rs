use pia_core::corpus::{split_dataset, synth_block_dataset, SynthSpec};
use pia_core::pia::LambdaSchedule;
use pia_core::vae::{checkpoint_bytes, fit, Checkpoint, TrainConfig};

fn data() -> pia_core::corpus::SplitDataset {
    let m = synth_block_dataset(&SynthSpec {
        cohort_sizes: vec![20, 20, 20],
        cohort_support_sizes: vec![4, 12, 30],
        n_items: 40,
        noise_rate: 0.02,
        coverage: 0.6,
        seed: 8,
    })
    .unwrap();
    split_dataset(&m, 8, 8, 0.8, 8).unwrap()
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        hidden_dim: 12,
        latent_dim: 4,
        seed: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn one_epoch_smoke() {
    let out = fit(&data(), &cfg(1), None).unwrap();
    assert_eq!(out.log.records.len(), 1);
    assert!(out.log.records[0].loss.is_finite());
    assert!(out.params.validate().is_ok());
    assert!(out.anchors.is_none());
}

#[test]
fn same_seed_same_bytes() {
    let d = data();
    let schedule = LambdaSchedule::default();
    let run = || {
        let out = fit(&d, &cfg(4), Some(&schedule)).unwrap();
        let bytes = checkpoint_bytes(&Checkpoint {
            params: out.params,
            anchors: out.anchors,
        });
        (out.log.to_jsonl(), bytes)
    };
    assert_eq!(run(), run());
    let other = fit(&d, &TrainConfig { seed: 5, ..cfg(4) }, Some(&schedule)).unwrap();
    assert_ne!(other.log.to_jsonl(), run().0);
}

#[test]
fn masking_off_is_allowed() {
    let out = fit(&data(), &TrainConfig { keep_prob: 1.0, ..cfg(2) }, None).unwrap();
    assert_eq!(out.log.records.len(), 2);
}
