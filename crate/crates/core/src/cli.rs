//! Command-line entry point: dataset synthesis, training, evaluation,
//! ablation, gradient verification and qualitative reporting.
//!
//! Every command writes only under its `--out` directory. Seeds resolve
//! with flag > config file > COMMENTARY_SEED environment variable >
//! default 0.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::harness::{self, TrainConfig};
use crate::numerics::{load_checkpoint, save_checkpoint};
use crate::synth::{self, SynthConfig};

pub const CHECKPOINT_FILE: &str = "model.cexp";
pub const LOSS_LOG_FILE: &str = "loss_log.csv";

#[derive(Parser)]
#[command(
    name = "drivecap",
    version,
    about = "Driving commentary: spatial/temporal-attention controller + caption generator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file with `key = value` lines (TrainConfig field names).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline overrides, e.g. --set epochs=5 (repeatable; wins over the
    /// config file).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Training preset: desk, paper-bddx or paper-sax.
    #[arg(long)]
    preset: Option<String>,
    /// Seed override (highest precedence).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Synth {
        /// Output directory for dataset.jsonl and manifest.json.
        #[arg(long)]
        out: PathBuf,
        /// Number of clips.
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        feat_dim: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        /// Background feature noise amplitude.
        #[arg(long)]
        noise: Option<f64>,
        /// Train/validation/test fractions, comma-separated.
        #[arg(long, default_value = "0.8,0.1,0.1")]
        ratios: String,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train a model on a synthesized dataset.
    Train {
        /// Dataset directory (overrides the config `dataset` key).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a checkpoint on one dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// train, validation or test.
        #[arg(long, default_value = "test")]
        split: String,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train and evaluate the four loss-weight variants (and optionally
    /// the lambda/gamma sweep) with identical seeds and data.
    Ablate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also run the 5-row (lambda_pos, gamma_null) sweep.
        #[arg(long)]
        sweep: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Check every loss component's gradients against finite differences.
    Gradcheck {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Qualitative good/bad sample bundle with attention exports.
    Report {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Samples per end of the ranking (top-k and bottom-k).
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn env_seed() -> Option<u64> {
    std::env::var("COMMENTARY_SEED").ok().and_then(|v| v.parse().ok())
}

/// Resolves a TrainConfig from defaults, environment, config file, preset,
/// inline overrides and the seed flag; returns the explicitly-set keys.
fn resolve_config(args: &ConfigArgs) -> Result<(TrainConfig, BTreeSet<String>)> {
    let mut cfg = TrainConfig::default();
    if let Some(seed) = env_seed() {
        cfg.seed = seed;
    }
    let mut explicit = BTreeSet::new();
    if let Some(path) = &args.config {
        explicit.extend(cfg.load_file(path)?);
    }
    if let Some(preset) = &args.preset {
        cfg.apply_preset(preset)?;
    }
    for assignment in &args.set {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            Error::config(assignment.clone(), "expected KEY=VALUE")
        })?;
        let (key, value) = (key.trim(), value.trim());
        cfg.apply(key, value)?;
        explicit.insert(key.to_string());
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        explicit.insert("seed".to_string());
    }
    Ok((cfg, explicit))
}

/// Data-shaped dimensions come from the manifest unless the user pinned
/// them, in which case a disagreement is an error.
fn merge_manifest(cfg: &mut TrainConfig, manifest: &SynthConfig, explicit: &BTreeSet<String>) -> Result<()> {
    let adopt = |key: &str, target: &mut usize, value: usize| -> Result<()> {
        if explicit.contains(key) && *target != value {
            return Err(Error::DimMismatch(format!(
                "config sets {key} = {target} but the dataset manifest says {value}"
            )));
        }
        *target = value;
        Ok(())
    };
    adopt("frames", &mut cfg.frames, manifest.frames)?;
    adopt("grid", &mut cfg.grid, manifest.grid)?;
    adopt("feat_dim", &mut cfg.feat_dim, manifest.feat_dim)?;
    adopt("max_len", &mut cfg.max_len, manifest.max_len)?;
    if !explicit.contains("d_z") {
        cfg.d_z = cfg.feat_dim;
    }
    Ok(())
}

/// Model dimensions come from the checkpoint tensor shapes unless pinned.
fn merge_checkpoint_dims(
    cfg: &mut TrainConfig,
    store: &crate::numerics::ParamStore,
    explicit: &BTreeSet<String>,
) -> Result<()> {
    let d_h = store.get(crate::controller::names::LSTM_WH).shape()[0];
    let d_p = store.get(crate::generator::names::POS_WH).shape()[1];
    let d_e = store.get(crate::generator::names::EMBED).shape()[1];
    let adopt = |key: &str, target: &mut usize, value: usize| -> Result<()> {
        if explicit.contains(key) && *target != value {
            return Err(Error::DimMismatch(format!(
                "config sets {key} = {target} but the checkpoint was trained with {value}"
            )));
        }
        *target = value;
        Ok(())
    };
    adopt("d_h", &mut cfg.d_h, d_h)?;
    adopt("d_p", &mut cfg.d_p, d_p)?;
    adopt("d_e", &mut cfg.d_e, d_e)?;
    Ok(())
}

fn dataset_dir(cfg: &TrainConfig, data: &Option<PathBuf>) -> Result<PathBuf> {
    match data {
        Some(path) => Ok(path.clone()),
        None if cfg.dataset.as_os_str().is_empty() => Err(Error::config(
            "dataset",
            "no dataset directory given (use --data or the `dataset` config key)",
        )),
        None => Ok(cfg.dataset.clone()),
    }
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn pick_split<'a>(splits: &'a synth::DatasetSplits, name: &str) -> Result<&'a [synth::Clip]> {
    match name {
        "train" => Ok(&splits.train),
        "validation" | "val" => Ok(&splits.validation),
        "test" => Ok(&splits.test),
        other => Err(Error::config("split", format!("unknown split `{other}`"))),
    }
}

fn cmd_synth(
    out: &Path,
    n: usize,
    frames: Option<usize>,
    grid: Option<usize>,
    feat_dim: Option<usize>,
    max_len: Option<usize>,
    noise: Option<f64>,
    ratios: &str,
    config: &ConfigArgs,
) -> Result<()> {
    let (train_cfg, _) = resolve_config(config)?;
    let parts: Vec<&str> = ratios.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::config("ratios", "expected three comma-separated fractions"));
    }
    let mut parsed = [0.0f64; 3];
    for (slot, part) in parsed.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| Error::config("ratios", format!("cannot parse `{part}`")))?;
    }
    let cfg = SynthConfig {
        n,
        frames: frames.unwrap_or(train_cfg.frames),
        grid: grid.unwrap_or(train_cfg.grid),
        feat_dim: feat_dim.unwrap_or(train_cfg.feat_dim),
        max_len: max_len.unwrap_or(train_cfg.max_len),
        seed: train_cfg.seed,
        ratios: parsed,
        noise: noise.unwrap_or(0.1),
    };
    ensure_out(out)?;
    let splits = synth::build_dataset(&cfg)?;
    synth::write_dataset(&splits, &cfg, out)?;
    println!(
        "synth: wrote {} clips ({}/{}/{}) to {}",
        splits.total(),
        splits.train.len(),
        splits.validation.len(),
        splits.test.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(data: &Option<PathBuf>, out: &Path, config: &ConfigArgs) -> Result<()> {
    let (mut cfg, explicit) = resolve_config(config)?;
    let dir = dataset_dir(&cfg, data)?;
    let (splits, manifest) = synth::load_dataset(&dir)?;
    merge_manifest(&mut cfg, &manifest, &explicit)?;
    cfg.dataset = dir;
    ensure_out(out)?;

    let vocab = harness::build_vocab_for(&splits)?;
    let outcome = harness::train(&cfg, &splits, &vocab)?;
    save_checkpoint(&outcome.store, &outcome.adam, &out.join(CHECKPOINT_FILE))?;
    harness::train::write_loss_log(&outcome.log, &out.join(LOSS_LOG_FILE))?;
    std::fs::write(out.join("config_echo.cfg"), cfg.render())
        .map_err(|e| Error::io(out.display().to_string(), e))?;
    let steps = outcome.log.len();
    println!(
        "train: variant `{}`, {} steps, total loss {} -> {}, max row-sum err {:.3e}",
        cfg.variant_label(),
        steps,
        outcome.initial_mean_total(100),
        outcome.final_mean_total(100),
        outcome.norm.max_row_err
    );
    Ok(())
}

fn cmd_eval(
    checkpoint: &Path,
    data: &Option<PathBuf>,
    out: &Path,
    split: &str,
    config: &ConfigArgs,
) -> Result<()> {
    let (mut cfg, explicit) = resolve_config(config)?;
    let dir = dataset_dir(&cfg, data)?;
    let (splits, manifest) = synth::load_dataset(&dir)?;
    merge_manifest(&mut cfg, &manifest, &explicit)?;
    let (store, _adam) = load_checkpoint(checkpoint)?;
    merge_checkpoint_dims(&mut cfg, &store, &explicit)?;
    ensure_out(out)?;

    let vocab = harness::build_vocab_for(&splits)?;
    let clips = pick_split(&splits, split)?;
    let report = harness::evaluate(&store, &cfg, clips, &vocab)?;
    harness::eval::write_eval_outputs(&report, out)?;
    println!(
        "eval[{split}]: METEOR desc {:.2} expl {:.2} | BLEU desc {:.2} expl {:.2} | {} samples, {} flagged",
        report.scores.description_meteor,
        report.scores.explanation_meteor,
        report.scores.description_bleu,
        report.scores.explanation_bleu,
        report.samples.len(),
        report.scores.flagged_candidates
    );
    Ok(())
}

fn cmd_ablate(data: &Option<PathBuf>, out: &Path, run_sweep: bool, config: &ConfigArgs) -> Result<()> {
    let (mut cfg, explicit) = resolve_config(config)?;
    let dir = dataset_dir(&cfg, data)?;
    let (splits, manifest) = synth::load_dataset(&dir)?;
    merge_manifest(&mut cfg, &manifest, &explicit)?;
    cfg.dataset = dir;
    ensure_out(out)?;
    let vocab = harness::build_vocab_for(&splits)?;

    let results = harness::ablate(&cfg, &splits, &vocab)?;
    let table = harness::render_wide_table(&results);
    std::fs::write(out.join("ablation_table.csv"), &table)
        .map_err(|e| Error::io(out.display().to_string(), e))?;
    std::fs::write(
        out.join("ablation_report.csv"),
        harness::ablate::render_long_report(&results),
    )
    .map_err(|e| Error::io(out.display().to_string(), e))?;
    print!("{table}");

    if run_sweep {
        let sweep_results = harness::sweep(&cfg, &splits, &vocab)?;
        let sweep_table = harness::render_wide_table(&sweep_results);
        std::fs::write(out.join("sweep_table.csv"), &sweep_table)
            .map_err(|e| Error::io(out.display().to_string(), e))?;
        std::fs::write(
            out.join("sweep_report.csv"),
            harness::ablate::render_long_report(&sweep_results),
        )
        .map_err(|e| Error::io(out.display().to_string(), e))?;
        print!("{sweep_table}");
    }
    Ok(())
}

fn cmd_gradcheck(out: &Path, config: &ConfigArgs) -> Result<()> {
    let (cfg, _) = resolve_config(config)?;
    ensure_out(out)?;
    let report = harness::verify_gradients(&cfg)?;
    std::fs::write(out.join("gradcheck.csv"), report.render_csv())
        .map_err(|e| Error::io(out.display().to_string(), e))?;
    for (loss, groups) in &report.table {
        let worst = groups.values().fold(0.0f64, |a, &b| a.max(b));
        println!("gradcheck: {loss:9} max rel err {worst:.3e}");
    }
    println!(
        "gradcheck: overall {:.3e} over {} coordinates in {:.1}s; ablated PoS grad {:.1e}",
        report.max_rel_err, report.coords_checked, report.runtime_secs, report.ablated_pos_grad
    );
    if report.max_rel_err >= 1e-4 || report.ablated_pos_grad != 0.0 {
        return Err(Error::Config {
            key: "gradcheck".into(),
            reason: format!("max relative error {} exceeds 1e-4", report.max_rel_err),
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_report(
    checkpoint: &Path,
    data: &Option<PathBuf>,
    out: &Path,
    split: &str,
    k: usize,
    config: &ConfigArgs,
) -> Result<()> {
    let (mut cfg, explicit) = resolve_config(config)?;
    let dir = dataset_dir(&cfg, data)?;
    let (splits, manifest) = synth::load_dataset(&dir)?;
    merge_manifest(&mut cfg, &manifest, &explicit)?;
    let (store, _adam) = load_checkpoint(checkpoint)?;
    merge_checkpoint_dims(&mut cfg, &store, &explicit)?;
    ensure_out(out)?;

    let vocab = harness::build_vocab_for(&splits)?;
    let clips = pick_split(&splits, split)?;
    let report = harness::evaluate(&store, &cfg, clips, &vocab)?;
    harness::eval::write_eval_outputs(&report, out)?;
    let bundle = harness::qualitative_report(&store, &cfg, clips, &vocab, &report, k, out)?;
    if let Some(clamped) = bundle.clamped_k {
        println!("report: k clamped to {clamped} (split has {} samples)", clips.len());
    }
    for sample in &bundle.samples {
        println!(
            "report: {} [{}] METEOR {:.4}: {}",
            sample.clip_id,
            if sample.good { "good" } else { "bad" },
            sample.meteor,
            sample.generated
        );
    }
    Ok(())
}

/// Parses argv and dispatches; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 2 on usage errors and 0 on --help/--version.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Synth {
            out,
            n,
            frames,
            grid,
            feat_dim,
            max_len,
            noise,
            ratios,
            config,
        } => cmd_synth(out, *n, *frames, *grid, *feat_dim, *max_len, *noise, ratios, config),
        Command::Train { data, out, config } => cmd_train(data, out, config),
        Command::Eval {
            checkpoint,
            data,
            out,
            split,
            config,
        } => cmd_eval(checkpoint, data, out, split, config),
        Command::Ablate {
            data,
            out,
            sweep,
            config,
        } => cmd_ablate(data, out, *sweep, config),
        Command::Gradcheck { out, config } => cmd_gradcheck(out, config),
        Command::Report {
            checkpoint,
            data,
            out,
            split,
            k,
            config,
        } => cmd_report(checkpoint, data, out, split, *k, config),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<String> {
        std::iter::once("drivecap".to_string())
            .chain(list.iter().map(|s| s.to_string()))
            .collect()
    }

    #[test]
    fn unknown_command_exits_2() {
        assert_eq!(run(args(&["frobnicate"])), 2);
    }

    #[test]
    fn missing_config_file_exits_1() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        assert_eq!(
            run(args(&[
                "train",
                "--config",
                "definitely-missing.cfg",
                "--out",
                out.to_str().unwrap()
            ])),
            1
        );
    }

    #[test]
    fn invalid_config_value_exits_1() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("bad.cfg");
        std::fs::write(&cfg_path, "epochs = banana\n").unwrap();
        let out = dir.path().join("out");
        assert_eq!(
            run(args(&[
                "train",
                "--config",
                cfg_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap()
            ])),
            1
        );
    }

    #[test]
    fn synth_writes_dataset_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("d");
        let code = run(args(&[
            "synth",
            "--n",
            "8",
            "--seed",
            "7",
            "--frames",
            "2",
            "--grid",
            "2",
            "--feat-dim",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        assert!(out.join("dataset.jsonl").exists());
        assert!(out.join("manifest.json").exists());
    }

    #[test]
    fn env_seed_is_lowest_precedence() {
        // Unset by default in tests; resolve_config must fall back to 0.
        let (cfg, _) = resolve_config(&ConfigArgs {
            config: None,
            set: vec![],
            preset: None,
            seed: None,
        })
        .unwrap();
        assert_eq!(cfg.seed, 0);
        let (cfg, _) = resolve_config(&ConfigArgs {
            config: None,
            set: vec!["seed=9".to_string()],
            preset: None,
            seed: Some(11),
        })
        .unwrap();
        assert_eq!(cfg.seed, 11);
    }
}
