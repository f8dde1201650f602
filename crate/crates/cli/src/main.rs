mod config;
mod manifest;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pia_core::corpus::io::{read_split_dir, write_split_dir};
use pia_core::corpus::{ingest_events, split_dataset, synth_block_dataset, InteractionMatrix, SplitDataset};
use pia_core::eval::{report_with_scorer, DEFAULT_BUCKET_EDGES};
use pia_core::geometry::export_latents;
use pia_core::geometry::suites::{run_suite, Suite, SuiteInputs};
use pia_core::vae::{fit, predict_scores, read_checkpoint, write_checkpoint, Checkpoint};

use config::{usage, Resolved, UsageError};
use manifest::{digest_inputs, Manifest, CONFIG_FILE, MANIFEST_FILE};

#[derive(Parser)]
#[command(name = "pia", version, about = "Masked VAE recommender with personalized item alignment")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest `user,item,rating` events, filter and split users.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_user: usize,
        #[arg(long, default_value_t = 1)]
        min_item: usize,
        #[arg(long, default_value_t = 4.0)]
        threshold: f64,
        #[arg(long)]
        val: usize,
        #[arg(long)]
        test: usize,
        #[arg(long, default_value_t = 0.8)]
        fold_in: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate and split a planted nested-cohort dataset.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a split directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Switch::Off)]
        pia: Switch,
        /// Quick profile: 30 epochs, hidden 100, latent 32.
        #[arg(long)]
        fast: bool,
        /// `key=value` override, applied after the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score held-out users and write Recall@K / NDCG@K.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [20, 50, 100])]
        k: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BUCKET_EDGES)]
        strata: Vec<usize>,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a numerical geometry suite (or `all`).
    Geometry {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trained model for the model-based suites.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Split directory whose training users feed the model-based suites.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write posterior means of every user in a split to CSV.
    Export {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitName::Train)]
        split: SplitName,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let usage = e.chain().any(|c| {
        c.is::<UsageError>() || matches!(c.downcast_ref::<pia_core::Error>(), Some(pia_core::Error::Config(_)))
    });
    if usage {
        1
    } else {
        2
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Preprocess {
            input,
            min_user,
            min_item,
            threshold,
            val,
            test,
            fold_in,
            seed,
            out,
        } => {
            let cfg = Resolved(BTreeMap::from([
                ("fold_in".to_owned(), fold_in.to_string()),
                ("min_item".to_owned(), min_item.to_string()),
                ("min_user".to_owned(), min_user.to_string()),
                ("seed".to_owned(), seed.to_string()),
                ("test".to_owned(), test.to_string()),
                ("threshold".to_owned(), threshold.to_string()),
                ("val".to_owned(), val.to_string()),
            ]));
            let inputs = digest_inputs(&input)?;
            let m = ingest_events(&input, min_user, min_item, threshold)?;
            log::info!("{} users, {} items, {} positives", m.n_users(), m.n_items(), m.nnz());
            let split = split_dataset(&m, val, test, fold_in, seed)?;
            write_split(&split, &out, "preprocess", seed, &cfg, inputs)
        }
        Command::Synth { spec, out } => {
            let cfg = config::resolve_synth(&config::read_flat(&spec)?)?;
            let run = config::synth_run(&cfg)?;
            let m = synth_block_dataset(&run.spec)?;
            log::info!("{} users, {} items, {} positives", m.n_users(), m.n_items(), m.nnz());
            let split = split_dataset(&m, run.n_val, run.n_test, run.fold_in_fraction, run.spec.seed)?;
            write_split(&split, &out, "synth", run.spec.seed, &cfg, digest_inputs(&spec)?)
        }
        Command::Train {
            data,
            config: cfg_path,
            pia,
            fast,
            overrides,
            seed,
            out,
        } => {
            let file = match &cfg_path {
                Some(p) => config::read_flat(p)?,
                None => BTreeMap::new(),
            };
            let mut overrides = overrides
                .iter()
                .map(|s| config::parse_override(s))
                .collect::<Result<Vec<_>>>()?;
            if let Some(seed) = seed {
                overrides.push(("seed".into(), seed.to_string()));
            }
            let mut resolved = config::resolve_train(fast, &file, &overrides)?;
            let (cfg, schedule) = config::train_config(&resolved)?;
            resolved.0.insert("pia".into(), if pia == Switch::On { "on" } else { "off" }.into());

            let split = read_split_dir(&data)?;
            let mut inputs = digest_inputs(&data)?;
            if let Some(p) = &cfg_path {
                inputs.extend(digest_inputs(p)?);
            }
            let outcome = fit(&split, &cfg, (pia == Switch::On).then_some(&schedule))?;
            log::info!("best epoch {}", outcome.best_epoch);

            create_out(&out)?;
            outcome.log.write_jsonl(&out.join("train_log.jsonl"))?;
            write_checkpoint(
                &Checkpoint {
                    params: outcome.params,
                    anchors: outcome.anchors,
                },
                &out.join("model.piam"),
            )?;
            let summary = serde_json::json!({
                "best_epoch": outcome.best_epoch,
                "final_lambda_a": outcome.schedule.map(|s| s.lambda_a),
            });
            write_text(&out.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
            let outputs = ["train_log.jsonl", "model.piam", "summary.json"];
            finish(&out, "train", cfg.seed, &resolved, inputs, &outputs)
        }
        Command::Evaluate {
            model,
            data,
            k,
            strata,
            split: which,
            out,
        } => {
            if k.is_empty() {
                return Err(usage("--k needs at least one cutoff"));
            }
            let cfg = Resolved(BTreeMap::from([
                ("k".to_owned(), join(&k)),
                ("split".to_owned(), split_name(which).to_owned()),
                ("strata".to_owned(), join(&strata)),
            ]));
            let ck = read_checkpoint(&model)?;
            let split = read_split_dir(&data)?;
            check_items(&ck, &split.train)?;
            let (fold, hold) = match which {
                SplitName::Val => (&split.val_fold_in, &split.val_holdout),
                SplitName::Test => (&split.test_fold_in, &split.test_holdout),
                SplitName::Train => return Err(usage("evaluate needs --split val or test")),
            };
            let edges = (!strata.is_empty()).then_some(strata.as_slice());
            let report = report_with_scorer(|f| predict_scores(&ck.params, f), fold, hold, &k, edges)?;
            let mut inputs = digest_inputs(&model)?;
            inputs.extend(digest_inputs(&data)?);

            create_out(&out)?;
            write_text(&out.join("metrics.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
            write_text(&out.join("metrics.csv"), &report.to_csv())?;
            println!("{}", serde_json::to_string(&report)?);
            finish(&out, "evaluate", 0, &cfg, inputs, &["metrics.json", "metrics.csv"])
        }
        Command::Geometry {
            suite,
            seed,
            model,
            data,
            out,
        } => {
            let suites: Vec<Suite> = if suite == "all" {
                Suite::ALL.to_vec()
            } else {
                vec![suite.parse().map_err(|e: pia_core::Error| usage(e.to_string()))?]
            };
            let ck = model.as_deref().map(read_checkpoint).transpose()?;
            let split = data.as_deref().map(read_split_dir).transpose()?;
            if let (Some(ck), Some(split)) = (&ck, &split) {
                check_items(ck, &split.train)?;
            }
            let mut cfg = Resolved(BTreeMap::from([
                ("seed".to_owned(), seed.to_string()),
                ("suite".to_owned(), suite.clone()),
            ]));
            let mut inputs = Vec::new();
            for (key, p) in [("model", &model), ("data", &data)] {
                if let Some(p) = p {
                    cfg.0.insert(key.to_owned(), p.display().to_string());
                    inputs.extend(digest_inputs(p)?);
                }
            }
            let inputs_for = SuiteInputs {
                model: ck.as_ref().map(|c| &c.params),
                rows: split.as_ref().map(|s| &s.train),
            };

            create_out(&out)?;
            let (mut total, mut failed) = (0, 0);
            let mut outputs = Vec::new();
            let stdout = std::io::stdout();
            for s in suites {
                let reports = run_suite(s, seed, inputs_for)?;
                let mut text = String::new();
                for r in &reports {
                    text.push_str(&r.to_json_line());
                    text.push('\n');
                }
                stdout.lock().write_all(text.as_bytes())?;
                let name = format!("geometry_{s}.jsonl");
                write_text(&out.join(&name), &text)?;
                outputs.push(name);
                total += reports.len();
                failed += reports.iter().filter(|r| !r.pass).count();
            }
            let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
            finish(&out, "geometry", seed, &cfg, inputs, &outputs)?;
            if failed > 0 {
                anyhow::bail!("{failed} of {total} checks failed");
            }
            log::info!("all {total} checks passed");
            Ok(())
        }
        Command::Export {
            model,
            data,
            split: which,
            out,
        } => {
            let ck = read_checkpoint(&model)?;
            let split = read_split_dir(&data)?;
            check_items(&ck, &split.train)?;
            let rows = match which {
                SplitName::Train => &split.train,
                SplitName::Val => &split.val_fold_in,
                SplitName::Test => &split.test_fold_in,
            };
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                create_out(dir)?;
            }
            export_latents(&ck.params, rows, &out)?;
            let cfg = Resolved(BTreeMap::from([("split".to_owned(), split_name(which).to_owned())]));
            let mut inputs = digest_inputs(&model)?;
            inputs.extend(digest_inputs(&data)?);
            let mut m = Manifest::new("export", 0, &cfg, inputs);
            m.outputs.push(out.display().to_string());
            let mut sidecar = out.clone().into_os_string();
            sidecar.push(".manifest.json");
            m.write(Path::new(&sidecar))
        }
    }
}

fn split_name(s: SplitName) -> &'static str {
    match s {
        SplitName::Train => "train",
        SplitName::Val => "val",
        SplitName::Test => "test",
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn check_items(ck: &Checkpoint, train: &InteractionMatrix) -> Result<()> {
    if ck.params.n_items() != train.n_items() {
        anyhow::bail!(
            "model has {} items but the dataset has {}",
            ck.params.n_items(),
            train.n_items()
        );
    }
    Ok(())
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_split(
    split: &SplitDataset,
    out: &Path,
    command: &str,
    seed: u64,
    cfg: &Resolved,
    inputs: Vec<manifest::InputDigest>,
) -> Result<()> {
    create_out(out)?;
    write_split_dir(split, out)?;
    log::info!(
        "{} train / {} val / {} test users",
        split.train.n_users(),
        split.val_fold_in.n_users(),
        split.test_fold_in.n_users()
    );
    let mut outputs: Vec<String> = std::fs::read_dir(out)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST_FILE && n != CONFIG_FILE)
        .collect();
    outputs.sort();
    let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    finish(out, command, seed, cfg, inputs, &outputs)
}

/// Writes `config.txt` and `manifest.json` into `out`.
fn finish(
    out: &Path,
    command: &str,
    seed: u64,
    cfg: &Resolved,
    inputs: Vec<manifest::InputDigest>,
    outputs: &[&str],
) -> Result<()> {
    write_text(&out.join(CONFIG_FILE), &cfg.render())?;
    let mut m = Manifest::new(command, seed, cfg, inputs);
    m.outputs = outputs.iter().map(|s| s.to_string()).collect();
    m.write(&out.join(MANIFEST_FILE))
}
