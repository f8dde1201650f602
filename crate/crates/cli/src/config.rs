use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use pia_core::corpus::SynthSpec;
use pia_core::pia::LambdaSchedule;
use pia_core::vae::TrainConfig;

/// Bad flags, config keys or values. Maps to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// a repeated key is an error.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("line {}: expected `key = value`, got {raw:?}", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(usage(format!("line {}: empty key", n + 1)));
        }
        if out.insert(k.to_owned(), v.to_owned()).is_some() {
            return Err(usage(format!("line {}: duplicate key {k:?}", n + 1)));
        }
    }
    Ok(out)
}

pub fn read_flat(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_flat(&text).with_context(|| format!("in {}", path.display()))
}

/// Splits a `--set key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| usage(format!("override {s:?} is not key=value")))?;
    Ok((k.trim().to_owned(), v.trim().to_owned()))
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| usage(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(usage(format!("invalid boolean {value:?} for {key}"))),
    }
}

pub fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .map(|v| parse_value(key, v))
        .collect()
}

/// Fully resolved run configuration; renders back to the flat format.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved(pub BTreeMap<String, String>);

impl Resolved {
    pub fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn get(&self, key: &str) -> &str {
        &self.0[key]
    }
}

const TRAIN_KEYS: [&str; 12] = [
    "batch_size",
    "beta",
    "epochs",
    "hidden_dim",
    "input_normalize",
    "keep_prob",
    "lambda_a",
    "lambda_scale",
    "latent_dim",
    "lr",
    "patience",
    "seed",
];

fn train_defaults(fast: bool) -> Resolved {
    let c = if fast { TrainConfig::fast() } else { TrainConfig::default() };
    let s = LambdaSchedule::default();
    let pairs = [
        ("batch_size", c.batch_size.to_string()),
        ("beta", c.beta.to_string()),
        ("epochs", c.epochs.to_string()),
        ("hidden_dim", c.hidden_dim.to_string()),
        ("input_normalize", c.input_normalize.to_string()),
        ("keep_prob", c.keep_prob.to_string()),
        ("lambda_a", s.lambda_a.to_string()),
        ("lambda_scale", s.lambda_scale.to_string()),
        ("latent_dim", c.latent_dim.to_string()),
        ("lr", c.lr.to_string()),
        ("patience", s.patience.to_string()),
        ("seed", c.seed.to_string()),
    ];
    Resolved(pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect())
}

/// Layers defaults (optionally the fast profile), then `file`, then
/// `overrides`. Unknown keys are rejected.
pub fn resolve_train(
    fast: bool,
    file: &BTreeMap<String, String>,
    overrides: &[(String, String)],
) -> Result<Resolved> {
    let mut r = train_defaults(fast);
    let layers = file.iter().map(|(k, v)| (k.as_str(), v.as_str()));
    let layers = layers.chain(overrides.iter().map(|(k, v)| (k.as_str(), v.as_str())));
    for (k, v) in layers {
        if !TRAIN_KEYS.contains(&k) {
            return Err(usage(format!(
                "unknown config key {k:?} (expected one of {})",
                TRAIN_KEYS.join(", ")
            )));
        }
        r.0.insert(k.to_owned(), v.to_owned());
    }
    train_config(&r)?;
    Ok(r)
}

pub fn train_config(r: &Resolved) -> Result<(TrainConfig, LambdaSchedule)> {
    let num = |key: &str| parse_value::<f64>(key, r.get(key));
    let int = |key: &str| parse_value::<usize>(key, r.get(key));
    let cfg = TrainConfig {
        beta: num("beta")?,
        keep_prob: num("keep_prob")?,
        batch_size: int("batch_size")?,
        epochs: int("epochs")?,
        lr: num("lr")?,
        seed: parse_value("seed", r.get("seed"))?,
        input_normalize: parse_bool("input_normalize", r.get("input_normalize"))?,
        hidden_dim: int("hidden_dim")?,
        latent_dim: int("latent_dim")?,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let schedule = LambdaSchedule::new(num("lambda_a")?, num("lambda_scale")?, int("patience")?)
        .map_err(|e| usage(e.to_string()))?;
    Ok((cfg, schedule))
}

/// Synthetic dataset plus split parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthRun {
    pub spec: SynthSpec,
    pub n_val: usize,
    pub n_test: usize,
    pub fold_in_fraction: f64,
}

const SYNTH_REQUIRED: [&str; 5] = ["cohort_sizes", "cohort_support_sizes", "n_items", "n_val", "n_test"];
const SYNTH_OPTIONAL: [(&str, &str); 4] = [
    ("coverage", "1"),
    ("fold_in_fraction", "0.8"),
    ("noise_rate", "0"),
    ("seed", "0"),
];

pub fn resolve_synth(file: &BTreeMap<String, String>) -> Result<Resolved> {
    let mut r: BTreeMap<String, String> = SYNTH_OPTIONAL
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    for (k, v) in file {
        if !SYNTH_REQUIRED.contains(&k.as_str()) && !r.contains_key(k) {
            return Err(usage(format!("unknown synth key {k:?}")));
        }
        r.insert(k.clone(), v.clone());
    }
    if let Some(missing) = SYNTH_REQUIRED.iter().find(|k| !r.contains_key(**k)) {
        return Err(usage(format!("synth spec is missing {missing:?}")));
    }
    let r = Resolved(r);
    synth_run(&r)?;
    Ok(r)
}

pub fn synth_run(r: &Resolved) -> Result<SynthRun> {
    let spec = SynthSpec {
        cohort_sizes: parse_list("cohort_sizes", r.get("cohort_sizes"))?,
        cohort_support_sizes: parse_list("cohort_support_sizes", r.get("cohort_support_sizes"))?,
        n_items: parse_value("n_items", r.get("n_items"))?,
        noise_rate: parse_value("noise_rate", r.get("noise_rate"))?,
        coverage: parse_value("coverage", r.get("coverage"))?,
        seed: parse_value("seed", r.get("seed"))?,
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(SynthRun {
        spec,
        n_val: parse_value("n_val", r.get("n_val"))?,
        n_test: parse_value("n_test", r.get("n_test"))?,
        fold_in_fraction: parse_value("fold_in_fraction", r.get("fold_in_fraction"))?,
    })
}
