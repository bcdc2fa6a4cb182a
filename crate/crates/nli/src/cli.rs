//! Command-line front end. `main` returns the process exit code: 0 on
//! success, 1 on a domain error, 2 on a usage error.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use nli_core::audio::TailPolicy;
use nli_core::dataset::{class_counts, split, Sampling};
use nli_core::features::MfccConfig;
use nli_core::models::{predict_track, ModelKind};
use nli_core::nn::{evaluate, Example};
use nli_core::rng::derive_seed;
use nli_core::synth::SynthSpec;
use serde_json::json;

use crate::corpus::{write_synthetic, Corpus};
use crate::experiments::{read_results, run_cell, run_cv, run_grid, Cell, GridConfig};
use crate::report::{emit_report, read_csv, write_cv};
use crate::store::{read_json, read_manifest, read_model, record_artifact, write_curve, write_json, write_manifest, write_model};
use crate::wav::load_wav;

#[derive(Debug, Parser)]
#[command(name = "nli", version, about = "Native-language identification from speech: features, models and experiment grid")]
pub struct Cli {
    /// Master seed; every randomized step derives its stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config: a grid config for most subcommands, a synth spec for `synth`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for all produced files.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for per-file and per-cell parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic two-class corpus of WAV files.
    Synth(SynthArgs),
    /// Segment a labeled corpus and extract MFCCs into a manifest.
    Ingest(IngestArgs),
    /// Split a manifest into hold-out/train/val(/inner test) index sets.
    Split(SplitArgs),
    /// Show the balanced training indices a model would train on.
    Balance(BalanceArgs),
    /// Train one model on a manifest and save it.
    Train(TrainArgs),
    /// Evaluate a saved model on a manifest.
    Eval(EvalArgs),
    /// Classify a WAV file by majority vote over segments.
    Predict(PredictArgs),
    /// Run the duration x sampling x model grid (resumable).
    Grid(GridArgs),
    /// k-fold cross-validation of one configuration.
    Cv(CvArgs),
    /// Rebuild summary tables from a grid output directory.
    Report,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub speakers_per_class: Option<usize>,
    #[arg(long)]
    pub minutes: Option<f64>,
    /// Native fundamental range in Hz.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub native_f0: Option<Vec<f64>>,
    /// Native formant band in Hz.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub native_formant: Option<Vec<f64>>,
    /// Non-native fundamental range in Hz.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub non_native_f0: Option<Vec<f64>>,
    /// Non-native formant band in Hz.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub non_native_formant: Option<Vec<f64>>,
    /// Relative depth of the slow pitch drift.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Absolute background-noise amplitude.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Expected fraction of time in long noise-only pauses.
    #[arg(long)]
    pub pause_fraction: Option<f64>,
    #[arg(long)]
    pub sample_rate: Option<u32>,
}

#[derive(Debug, Args, Default)]
pub struct MfccArgs {
    #[arg(long)]
    pub frame_len: Option<usize>,
    #[arg(long)]
    pub hop: Option<usize>,
    #[arg(long)]
    pub n_mels: Option<usize>,
    #[arg(long)]
    pub n_mfcc: Option<usize>,
    #[arg(long)]
    pub fmin: Option<f64>,
    #[arg(long)]
    pub fmax: Option<f64>,
}

impl MfccArgs {
    fn apply(&self, cfg: &mut MfccConfig) {
        if let Some(v) = self.frame_len {
            cfg.frame_len = v;
        }
        if let Some(v) = self.hop {
            cfg.hop = v;
        }
        if let Some(v) = self.n_mels {
            cfg.n_mels = v;
        }
        if let Some(v) = self.n_mfcc {
            cfg.n_mfcc = v;
        }
        if let Some(v) = self.fmin {
            cfg.fmin = v;
        }
        if self.fmax.is_some() {
            cfg.fmax = self.fmax;
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of native-speaker WAV files.
    #[arg(long)]
    pub native: PathBuf,
    /// Directory of non-native-speaker WAV files.
    #[arg(long = "nonnative", alias = "non-native")]
    pub non_native: PathBuf,
    /// Segment length in seconds.
    #[arg(long, default_value_t = 5.0)]
    pub duration: f64,
    /// Keep a zero-padded final partial segment instead of dropping it.
    #[arg(long)]
    pub pad_tail: bool,
    #[command(flatten)]
    pub mfcc: MfccArgs,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Model whose split scheme to use (ann: 80/20, cnn/rnn: 80/10/10).
    #[arg(long, default_value = "rnn")]
    pub model: ModelKind,
    /// Keep every speaker inside one partition.
    #[arg(long)]
    pub speaker_disjoint: bool,
}

#[derive(Debug, Args)]
pub struct BalanceArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "rnn")]
    pub model: ModelKind,
    #[arg(long, default_value = "oversample")]
    pub sampling: Sampling,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "rnn")]
    pub model: ModelKind,
    #[arg(long, default_value = "oversample")]
    pub sampling: Sampling,
    #[arg(long)]
    pub speaker_disjoint: bool,
    /// Balance the whole manifest before splitting (lets duplicates reach the hold-out).
    #[arg(long)]
    pub balance_before_split: bool,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Only score the `final_test` indices of this split file.
    #[arg(long)]
    pub split: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub wav: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Overrides the config's data root.
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// Comma-separated segment durations in seconds.
    #[arg(long, value_delimiter = ',')]
    pub durations: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub samplings: Option<Vec<Sampling>>,
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<ModelKind>>,
    /// Skip the cross-validation runs.
    #[arg(long)]
    pub no_cv: bool,
    /// Split speaker-disjoint instead of per segment.
    #[arg(long)]
    pub speaker_disjoint: bool,
    /// Balance the whole dataset before splitting (lets duplicates reach the hold-out).
    #[arg(long)]
    pub balance_before_split: bool,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[command(flatten)]
    pub mfcc: MfccArgs,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "ann")]
    pub model: ModelKind,
    #[arg(long, default_value = "oversample")]
    pub sampling: Sampling,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Hold-out accuracy to compare against; read from `--out`/results.csv when absent.
    #[arg(long)]
    pub holdout_acc: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn grid_config(cli: &Cli) -> anyhow::Result<GridConfig> {
    let mut cfg: GridConfig = match &cli.config {
        Some(p) => read_json(p)?,
        None => GridConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

fn save<T: serde::Serialize>(out: &Path, name: &str, value: &T) -> anyhow::Result<PathBuf> {
    let p = out.join(name);
    write_json(&p, value)?;
    record_artifact(out, &p)?;
    Ok(p)
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    if cli.jobs > 0 {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    let out = cli.out.as_path();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Ingest(a) => {
            let mut cfg = grid_config(cli)?;
            a.mfcc.apply(&mut cfg.mfcc);
            let tail = if a.pad_tail { TailPolicy::Pad } else { cfg.tail };
            let corpus = Corpus::load(&[&a.native, &a.non_native])?;
            let m = corpus.manifest(a.duration, &cfg.mfcc, tail)?;
            let path = out.join(format!("manifest_{}s.json", crate::experiments::duration_label(a.duration)));
            write_manifest(&path, &m)?;
            record_artifact(out, &path)?;
            let counts = m.class_counts();
            println!(
                "{}: {} segments ({} native, {} non_native), {} files skipped",
                path.display(),
                m.len(),
                counts[0],
                counts.get(1).copied().unwrap_or(0),
                corpus.skipped.len()
            );
            Ok(())
        }
        Command::Split(a) => {
            let mut cfg = grid_config(cli)?;
            cfg.speaker_disjoint |= a.speaker_disjoint;
            let m = read_manifest(&a.manifest)?;
            let p = split(&m.labels(), &m.speakers(), &cfg.split_spec(a.model.split_scheme(), m.duration_s))?;
            let path = save(out, "split.json", &p)?;
            println!(
                "{}: final_test {}, train {}, val {}, inner_test {}",
                path.display(),
                p.final_test.len(),
                p.train.len(),
                p.val.len(),
                p.inner_test.len()
            );
            Ok(())
        }
        Command::Balance(a) => {
            let cfg = grid_config(cli)?;
            let m = read_manifest(&a.manifest)?;
            let labels = m.labels();
            let p = split(&labels, &m.speakers(), &cfg.split_spec(a.model.split_scheme(), m.duration_s))?;
            let cell = Cell { model: a.model, duration_s: m.duration_s, sampling: a.sampling };
            let train = nli_core::dataset::balance(&p.train, &labels, a.sampling, derive_seed(cfg.cell_seed(&cell), "balance"))?;
            let before = class_counts(&p.train, &labels);
            let after = class_counts(&train, &labels);
            save(out, "balanced.json", &json!({ "sampling": a.sampling, "counts_before": before, "counts_after": after, "train": train }))?;
            println!("{}: {before:?} -> {after:?}", a.sampling);
            Ok(())
        }
        Command::Train(a) => {
            let mut cfg = grid_config(cli)?;
            cfg.speaker_disjoint |= a.speaker_disjoint;
            cfg.balance_before_split |= a.balance_before_split;
            override_train(&mut cfg, a.max_epochs, a.patience, a.batch_size, a.lr);
            let m = read_manifest(&a.manifest)?;
            let cell = Cell { model: a.model, duration_s: m.duration_s, sampling: a.sampling };
            let o = run_cell(&m, &cell, &cfg)?;
            let model_path = out.join("model.bin");
            write_model(&model_path, &o.model)?;
            record_artifact(out, &model_path)?;
            let curve = out.join("curve.csv");
            write_curve(&curve, &o.curve)?;
            record_artifact(out, &curve)?;
            save(out, "split.json", &o.partitions)?;
            save(
                out,
                "train_summary.json",
                &json!({ "result": o.result, "confusion": o.confusion, "inner_test_acc": o.inner_test_acc, "n_train": o.train_indices.len() }),
            )?;
            println!("{}: hold-out accuracy {:.4} after {} epochs", o.result.cell_id, o.result.final_test_acc, o.result.epochs);
            Ok(())
        }
        Command::Eval(a) => {
            let model = read_model(&a.model)?;
            let m = read_manifest(&a.manifest)?;
            let idx: Vec<usize> = match &a.split {
                Some(p) => read_json::<nli_core::dataset::Partitions>(p)?.final_test,
                None => (0..m.len()).collect(),
            };
            let xs = idx
                .iter()
                .map(|&i| {
                    let e = m.entries.get(i).with_context(|| format!("split index {i} outside manifest"))?;
                    Ok((model.normalizer.apply(&e.mfcc)?.into_values(), e.label))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let set: Vec<Example> = xs.iter().map(|(x, l)| Example { x, label: *l }).collect();
            let ev = evaluate(&model.classifier, &set)?;
            let report = json!({ "n": set.len(), "accuracy": ev.accuracy, "mean_loss": ev.mean_loss, "confusion": ev.confusion });
            save(out, "eval.json", &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Predict(a) => {
            let model = read_model(&a.model)?;
            let clip = load_wav(&a.wav)?;
            let v = predict_track(&model, &clip)?;
            let class = nli_core::dataset::CLASS_NAMES.get(v.class).copied().unwrap_or("unknown");
            let verdict = json!({
                "class": class,
                "per_segment": v.per_segment,
                "vote_counts": v.vote_counts,
                "mean_probs": v.mean_probs,
            });
            println!("{}", serde_json::to_string_pretty(&verdict)?);
            Ok(())
        }
        Command::Grid(a) => {
            let mut cfg = grid_config(cli)?;
            if let Some(r) = &a.data_root {
                cfg.data_root = r.clone();
            }
            if let Some(d) = &a.durations {
                cfg.durations = d.clone();
            }
            if let Some(s) = &a.samplings {
                cfg.samplings = s.clone();
            }
            if let Some(m) = &a.models {
                cfg.model_kinds = m.clone();
            }
            if a.no_cv {
                cfg.cv.enabled = false;
            }
            cfg.speaker_disjoint |= a.speaker_disjoint;
            cfg.balance_before_split |= a.balance_before_split;
            override_train(&mut cfg, a.max_epochs, None, None, None);
            a.mfcc.apply(&mut cfg.mfcc);
            save(out, "grid_config.json", &cfg)?;
            let g = run_grid(&cfg, out)?;
            record_artifact(out, &out.join("results.csv"))?;
            for r in &g.results {
                record_artifact(out, &out.join("curves").join(format!("{}.csv", r.cell_id)))?;
            }
            if !g.cv.is_empty() {
                write_cv(out, &g.cv)?;
            }
            let cv_path = out.join("cv_summary.csv");
            for p in emit_report(out, &g.results, &g.stats, cv_path.exists().then_some(cv_path.as_path()))? {
                record_artifact(out, &p)?;
            }
            for f in ["cv_summary.csv", "cv_folds.csv", "failures.csv"] {
                if out.join(f).exists() {
                    record_artifact(out, &out.join(f))?;
                }
            }
            println!(
                "{} cells ({} trained now, {} failed), {} cv runs; see {}",
                g.results.len(),
                g.trained,
                g.failures.len(),
                g.cv.len(),
                out.join("report.md").display()
            );
            Ok(())
        }
        Command::Cv(a) => {
            let mut cfg = grid_config(cli)?;
            override_train(&mut cfg, a.max_epochs, None, None, None);
            let m = read_manifest(&a.manifest)?;
            let cell = Cell { model: a.model, duration_s: m.duration_s, sampling: a.sampling };
            let holdout = match a.holdout_acc {
                Some(h) => Some(h),
                None => read_results(&out.join("results.csv"))?
                    .into_iter()
                    .find(|r| r.cell_id == cell.id())
                    .map(|r| r.final_test_acc),
            };
            let r = run_cv(&m, a.model, a.sampling, a.k, &cfg, holdout)?;
            write_cv(out, std::slice::from_ref(&r))?;
            record_artifact(out, &out.join("cv_summary.csv"))?;
            record_artifact(out, &out.join("cv_folds.csv"))?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(())
        }
        Command::Report => {
            let results = read_results(&out.join("results.csv"))?;
            let stats = read_csv(&out.join("durations.csv"))?;
            let cv_path = out.join("cv_summary.csv");
            for p in emit_report(out, &results, &stats, cv_path.exists().then_some(cv_path.as_path()))? {
                record_artifact(out, &p)?;
            }
            println!("{}", out.join("report.md").display());
            Ok(())
        }
    }
}

fn override_train(cfg: &mut GridConfig, max_epochs: Option<usize>, patience: Option<usize>, batch: Option<usize>, lr: Option<f64>) {
    if let Some(v) = max_epochs {
        cfg.train.max_epochs = v;
    }
    if let Some(v) = patience {
        cfg.train.patience = v;
    }
    if let Some(v) = batch {
        cfg.train.batch_size = v;
    }
    if let Some(v) = lr {
        cfg.train.adam.lr = v;
    }
}

fn synth(cli: &Cli, a: &SynthArgs) -> anyhow::Result<()> {
    let mut spec: SynthSpec = match &cli.config {
        Some(p) => read_json(p)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    if let Some(v) = a.speakers_per_class {
        spec.speakers_per_class = v;
    }
    if let Some(v) = a.minutes {
        spec.minutes_per_speaker = v;
    }
    let pair = |v: &Vec<f64>| [v[0], v[1]];
    if let Some(v) = &a.native_f0 {
        spec.profiles[0].f0_hz = pair(v);
    }
    if let Some(v) = &a.native_formant {
        spec.profiles[0].formant_hz = pair(v);
    }
    if let Some(v) = &a.non_native_f0 {
        spec.profiles[1].f0_hz = pair(v);
    }
    if let Some(v) = &a.non_native_formant {
        spec.profiles[1].formant_hz = pair(v);
    }
    if let Some(v) = a.jitter {
        spec.jitter = v;
    }
    if let Some(v) = a.noise {
        spec.noise = v;
    }
    if let Some(v) = a.pause_fraction {
        spec.pause_fraction = v;
    }
    if let Some(v) = a.sample_rate {
        spec.sample_rate = v;
    }
    let out = cli.out.as_path();
    let files = write_synthetic(&spec, out)?;
    for f in &files {
        record_artifact(out, f)?;
    }
    save(out, "synth_spec.json", &spec)?;
    println!("wrote {} files under {}", files.len(), out.display());
    Ok(())
}
