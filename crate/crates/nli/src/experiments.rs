//! Duration x sampling x model grid, k-fold cross-validation and the
//! resumable results file.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{bail, Context};
use nli_core::audio::{segment_count, TailPolicy, PROCESSING_RATE};
use nli_core::dataset::{balance, kfold, split, Manifest, Partitions, Sampling, Scheme, SplitSpec};
use nli_core::features::{MfccConfig, Normalizer};
use nli_core::models::{ArchConfig, Classifier, ModelKind, ModelSpec, TrackModel};
use nli_core::nn::{evaluate, train, Clock, EpochMetrics, Example, TrainConfig};
use nli_core::rng::{derive_seed, derive_seed_n};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::store::write_curve;

/// Seconds since construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub enabled: bool,
    pub k: usize,
    pub duration_s: f64,
    pub sampling: Sampling,
    pub model_kinds: Vec<ModelKind>,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { enabled: true, k: 5, duration_s: 5.0, sampling: Sampling::Oversample, model_kinds: ModelKind::ALL.to_vec() }
    }
}

/// Everything that determines a grid run besides the audio itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub durations: Vec<f64>,
    pub samplings: Vec<Sampling>,
    pub model_kinds: Vec<ModelKind>,
    pub cv: CvConfig,
    pub master_seed: u64,
    /// Holds `native/` and `non_native/` subdirectories of WAV files.
    pub data_root: PathBuf,
    pub mfcc: MfccConfig,
    pub train: TrainConfig,
    pub arch: ArchConfig,
    pub tail: TailPolicy,
    pub holdout_fraction: f64,
    pub speaker_disjoint: bool,
    /// Balance the whole dataset before splitting instead of only the
    /// training partition. Duplicates can then leak into the hold-out.
    pub balance_before_split: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            durations: nli_core::audio::DEFAULT_DURATIONS.to_vec(),
            samplings: Sampling::ALL.to_vec(),
            model_kinds: ModelKind::ALL.to_vec(),
            cv: CvConfig::default(),
            master_seed: 0,
            data_root: PathBuf::from("data"),
            mfcc: MfccConfig::default(),
            train: TrainConfig::default(),
            arch: ArchConfig::default(),
            tail: TailPolicy::Drop,
            holdout_fraction: 0.1,
            speaker_disjoint: false,
            balance_before_split: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub model: ModelKind,
    pub duration_s: f64,
    pub sampling: Sampling,
}

pub fn duration_label(d: f64) -> String {
    if d.fract() == 0.0 { format!("{}", d as u64) } else { format!("{d}") }
}

impl Cell {
    pub fn id(&self) -> String {
        format!("{}_{}s_{}", self.model, duration_label(self.duration_s), self.sampling)
    }
}

impl GridConfig {
    /// Cells in canonical order: duration, then sampling, then model.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &duration_s in &self.durations {
            for &sampling in &self.samplings {
                for &model in &self.model_kinds {
                    out.push(Cell { model, duration_s, sampling });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.durations.is_empty() || self.samplings.is_empty() || self.model_kinds.is_empty() {
            bail!("grid axes must be non-empty");
        }
        if self.durations.iter().any(|d| !(*d > 0.0)) {
            bail!("durations must be positive");
        }
        let mut ids: Vec<String> = self.cells().iter().map(Cell::id).collect();
        let n = ids.len();
        ids.sort();
        ids.dedup();
        if ids.len() != n {
            bail!("grid cell ids are not unique (repeated axis value?)");
        }
        if self.cv.enabled && self.cv.k < 2 {
            bail!("cross-validation needs k >= 2");
        }
        self.mfcc.validate(PROCESSING_RATE)?;
        Ok(())
    }

    pub fn cell_seed(&self, cell: &Cell) -> u64 {
        derive_seed(self.master_seed, &cell.id())
    }

    /// Shared by every cell of one duration so all models see the same hold-out.
    pub fn split_seed(&self, duration_s: f64) -> u64 {
        derive_seed(self.master_seed, &format!("split_{}s", duration_label(duration_s)))
    }

    pub fn split_spec(&self, scheme: Scheme, duration_s: f64) -> SplitSpec {
        SplitSpec {
            holdout_fraction: self.holdout_fraction,
            scheme,
            seed: self.split_seed(duration_s),
            speaker_disjoint: self.speaker_disjoint,
        }
    }

    pub fn native_dir(&self) -> PathBuf {
        self.data_root.join("native")
    }

    pub fn non_native_dir(&self) -> PathBuf {
        self.data_root.join("non_native")
    }
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub cell_id: String,
    pub model: ModelKind,
    pub duration_s: f64,
    pub sampling: Sampling,
    pub final_test_acc: f64,
    pub best_val_loss: f64,
    pub epochs: usize,
    pub wall_seconds: f64,
    pub seed: u64,
}

/// A finished cell with everything the results row leaves out.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub result: ExperimentResult,
    pub curve: Vec<EpochMetrics>,
    pub confusion: Vec<Vec<usize>>,
    /// Accuracy on the inner test partition (CNN/RNN only).
    pub inner_test_acc: Option<f64>,
    pub partitions: Partitions,
    /// Balanced training indices, duplicates included.
    pub train_indices: Vec<usize>,
    pub model: TrackModel,
}

fn indices_split(labels: &[usize], speakers: &[&str], spec: &SplitSpec, pre_balance: Option<(Sampling, u64)>) -> anyhow::Result<Partitions> {
    let Some((sampling, seed)) = pre_balance else {
        return Ok(split(labels, speakers, spec)?);
    };
    let all: Vec<usize> = (0..labels.len()).collect();
    let pool = balance(&all, labels, sampling, seed)?;
    let sub_labels: Vec<usize> = pool.iter().map(|&i| labels[i]).collect();
    let sub_speakers: Vec<&str> = pool.iter().map(|&i| speakers[i]).collect();
    let p = split(&sub_labels, &sub_speakers, spec)?;
    let map = |v: Vec<usize>| v.into_iter().map(|j| pool[j]).collect();
    Ok(Partitions { final_test: map(p.final_test), train: map(p.train), val: map(p.val), inner_test: map(p.inner_test) })
}

fn normalized_inputs(manifest: &Manifest, norm: &Normalizer) -> anyhow::Result<Vec<Vec<f64>>> {
    manifest
        .entries
        .iter()
        .map(|e| Ok(norm.apply(&e.mfcc)?.into_values()))
        .collect()
}

fn examples<'a>(xs: &'a [Vec<f64>], labels: &[usize], idx: &[usize]) -> Vec<Example<'a>> {
    idx.iter().map(|&i| Example { x: &xs[i], label: labels[i] }).collect()
}

fn model_spec(manifest: &Manifest, kind: ModelKind, arch: &ArchConfig) -> anyhow::Result<ModelSpec> {
    let (frames, n_mfcc) = manifest.feature_shape().context("empty manifest")?;
    Ok(ModelSpec { kind, frames, n_mfcc, n_classes: manifest.n_classes().max(2), arch: arch.clone() })
}

/// Split, balance the training partition, fit the normalizer on the
/// training partition, train with early stopping and score the hold-out.
pub fn run_cell(manifest: &Manifest, cell: &Cell, cfg: &GridConfig) -> anyhow::Result<CellOutcome> {
    if manifest.duration_s != cell.duration_s {
        bail!("manifest is for {} s segments, cell {} wants {} s", manifest.duration_s, cell.id(), cell.duration_s);
    }
    let clock = WallClock::new();
    let seed = cfg.cell_seed(cell);
    let labels = manifest.labels();
    let speakers = manifest.speakers();
    let spec = cfg.split_spec(cell.model.split_scheme(), cell.duration_s);
    let balance_seed = derive_seed(seed, "balance");
    let (partitions, train_idx) = if cfg.balance_before_split {
        let p = indices_split(&labels, &speakers, &spec, Some((cell.sampling, balance_seed)))?;
        let t = p.train.clone();
        (p, t)
    } else {
        let p = indices_split(&labels, &speakers, &spec, None)?;
        let t = balance(&p.train, &labels, cell.sampling, balance_seed)?;
        (p, t)
    };

    let normalizer = Normalizer::fit(partitions.train.iter().map(|&i| &manifest.entries[i].mfcc))?;
    let xs = normalized_inputs(manifest, &normalizer)?;
    let model_spec = model_spec(manifest, cell.model, &cfg.arch)?;
    let mut classifier = Classifier::build(&model_spec, derive_seed(seed, "init"))?;
    let train_cfg = TrainConfig { seed: derive_seed(seed, "train"), ..cfg.train.clone() };
    let outcome = train(
        &mut classifier,
        &examples(&xs, &labels, &train_idx),
        &examples(&xs, &labels, &partitions.val),
        &train_cfg,
        &clock,
    )
    .with_context(|| format!("training {}", cell.id()))?;
    let test = evaluate(&classifier, &examples(&xs, &labels, &partitions.final_test))?;
    let inner_test_acc = if partitions.inner_test.is_empty() {
        None
    } else {
        Some(evaluate(&classifier, &examples(&xs, &labels, &partitions.inner_test))?.accuracy)
    };
    let wall_seconds = clock.now().max(f64::MIN_POSITIVE);
    log::info!(
        "{}: hold-out acc {:.4}, best val loss {:.4} at epoch {}/{}, {:.1}s",
        cell.id(),
        test.accuracy,
        outcome.best_val_loss,
        outcome.best_epoch,
        outcome.epochs_run(),
        wall_seconds
    );
    Ok(CellOutcome {
        result: ExperimentResult {
            cell_id: cell.id(),
            model: cell.model,
            duration_s: cell.duration_s,
            sampling: cell.sampling,
            final_test_acc: test.accuracy,
            best_val_loss: outcome.best_val_loss,
            epochs: outcome.epochs_run(),
            wall_seconds,
            seed,
        },
        curve: outcome.metrics,
        confusion: test.confusion,
        inner_test_acc,
        partitions,
        train_indices: train_idx,
        model: TrackModel {
            classifier,
            normalizer,
            mfcc: manifest.mfcc_config.clone(),
            sample_rate: PROCESSING_RATE,
            duration_s: manifest.duration_s,
        },
    })
}

/// Segment bookkeeping for one duration, computed from clip lengths alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub duration_s: f64,
    pub segments: usize,
    pub native_segments: usize,
    pub non_native_segments: usize,
    /// Size of the (unbalanced) training partition.
    pub train_segments: usize,
}

pub fn duration_stats(corpus: &Corpus, cfg: &GridConfig, duration_s: f64) -> anyhow::Result<DurationStats> {
    let mut labels = Vec::new();
    let mut speakers = Vec::new();
    for clip in &corpus.clips {
        let n = segment_count(clip.samples.len(), clip.sample_rate, duration_s, cfg.tail)?;
        labels.extend(std::iter::repeat_n(clip.label, n));
        speakers.extend(std::iter::repeat_n(clip.speaker_id.as_str(), n));
    }
    let native = labels.iter().filter(|&&l| l == 0).count();
    let train_segments = match split(&labels, &speakers, &cfg.split_spec(Scheme::TrainVal, duration_s)) {
        Ok(p) => p.train.len(),
        Err(e) => {
            log::warn!("{duration_s} s: cannot split ({e})");
            0
        }
    };
    Ok(DurationStats {
        duration_s,
        segments: labels.len(),
        native_segments: native,
        non_native_segments: labels.len() - native,
        train_segments,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvFold {
    pub fold: usize,
    pub val_acc: f64,
    pub holdout_acc: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub model: ModelKind,
    pub duration_s: f64,
    pub sampling: Sampling,
    pub k: usize,
    pub folds: Vec<CvFold>,
    /// Arithmetic mean of the per-fold hold-out accuracies.
    pub mean: f64,
    /// Sample standard deviation of the per-fold hold-out accuracies.
    pub std: f64,
    /// Hold-out accuracy of the matching grid cell, when known.
    pub holdout_acc: Option<f64>,
    /// `mean - holdout_acc`.
    pub delta_vs_holdout: Option<f64>,
    pub seed: u64,
}

/// k-fold cross-validation over the development data (everything but the
/// hold-out). Each fold trains on k-1 parts with early stopping on the
/// remaining part and is scored on the shared hold-out.
pub fn run_cv(
    manifest: &Manifest,
    model: ModelKind,
    sampling: Sampling,
    k: usize,
    cfg: &GridConfig,
    holdout_acc: Option<f64>,
) -> anyhow::Result<CvResult> {
    let cell = Cell { model, duration_s: manifest.duration_s, sampling };
    let seed = derive_seed(cfg.master_seed, &format!("cv_{}", cell.id()));
    let labels = manifest.labels();
    let speakers = manifest.speakers();
    let p = split(&labels, &speakers, &cfg.split_spec(Scheme::TrainVal, manifest.duration_s))?;
    let folds = kfold(&p.development(), &labels, k, derive_seed(seed, "folds"))?;
    let spec = model_spec(manifest, model, &cfg.arch)?;
    let folds: Vec<CvFold> = folds
        .par_iter()
        .enumerate()
        .map(|(f, fold)| -> anyhow::Result<CvFold> {
            let fseed = derive_seed_n(seed, &[f as u64]);
            let train_idx = balance(&fold.train, &labels, sampling, derive_seed(fseed, "balance"))?;
            let norm = Normalizer::fit(fold.train.iter().map(|&i| &manifest.entries[i].mfcc))?;
            let xs = normalized_inputs(manifest, &norm)?;
            let mut clf = Classifier::build(&spec, derive_seed(fseed, "init"))?;
            let tcfg = TrainConfig { seed: derive_seed(fseed, "train"), ..cfg.train.clone() };
            let val = examples(&xs, &labels, &fold.val);
            let out = train(&mut clf, &examples(&xs, &labels, &train_idx), &val, &tcfg, &WallClock::new())?;
            let holdout = evaluate(&clf, &examples(&xs, &labels, &p.final_test))?;
            log::info!("cv {} fold {f}: hold-out acc {:.4}", cell.id(), holdout.accuracy);
            Ok(CvFold { fold: f, val_acc: evaluate(&clf, &val)?.accuracy, holdout_acc: holdout.accuracy, epochs: out.epochs_run() })
        })
        .collect::<anyhow::Result<_>>()?;
    let accs: Vec<f64> = folds.iter().map(|f| f.holdout_acc).collect();
    let (mean, std) = mean_std(&accs);
    Ok(CvResult {
        model,
        duration_s: manifest.duration_s,
        sampling,
        k,
        folds,
        mean,
        std,
        holdout_acc,
        delta_vs_holdout: holdout_acc.map(|h| mean - h),
        seed,
    })
}

/// Mean and sample (n - 1) standard deviation; std is 0 for one value.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn read_results(path: &Path) -> anyhow::Result<Vec<ExperimentResult>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn write_results(path: &Path, rows: &[ExperimentResult]) -> anyhow::Result<()> {
    let tmp = path.with_extension("csv.tmp");
    let mut w = csv::Writer::from_path(&tmp)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    drop(w);
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Appends rows to `results.csv` as cells finish; one writer at a time.
struct ResultsAppender {
    inner: Mutex<csv::Writer<std::fs::File>>,
}

impl ResultsAppender {
    fn open(path: &Path) -> anyhow::Result<Self> {
        let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(Self { inner: Mutex::new(w) })
    }

    fn append(&self, row: &ExperimentResult) -> anyhow::Result<()> {
        let mut w = self.inner.lock().map_err(|_| anyhow::anyhow!("results writer poisoned"))?;
        w.serialize(row)?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    /// Canonical order; includes cells recovered from an earlier run.
    pub results: Vec<ExperimentResult>,
    pub failures: Vec<(String, String)>,
    pub cv: Vec<CvResult>,
    pub stats: Vec<DurationStats>,
    /// Cells actually trained in this invocation.
    pub trained: usize,
}

/// Runs every cell not already in `out/results.csv`, then the CV runs, then
/// rewrites `results.csv` in canonical order. Cells run in parallel on the
/// current rayon pool.
pub fn run_grid(cfg: &GridConfig, out: &Path) -> anyhow::Result<GridOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out.join("curves"))?;
    let results_path = out.join("results.csv");
    let cells = cfg.cells();

    let mut done: BTreeMap<String, ExperimentResult> = BTreeMap::new();
    for r in read_results(&results_path)? {
        if let Some(cell) = cells.iter().find(|c| c.id() == r.cell_id) {
            if r.seed != cfg.cell_seed(cell) {
                bail!("{} holds {} from a different master seed; use a fresh --out", results_path.display(), r.cell_id);
            }
            done.insert(r.cell_id.clone(), r);
        }
    }
    let pending: Vec<Cell> = cells.iter().filter(|c| !done.contains_key(&c.id())).copied().collect();
    if !done.is_empty() {
        log::info!("resuming: {} of {} cells already done", done.len(), cells.len());
    }

    let corpus = Corpus::load(&[&cfg.native_dir(), &cfg.non_native_dir()])?;
    let stats = cfg.durations.iter().map(|&d| duration_stats(&corpus, cfg, d)).collect::<anyhow::Result<Vec<_>>>()?;

    let appender = ResultsAppender::open(&results_path)?;
    let mut failures = Vec::new();
    let mut trained = 0;
    let mut manifests: BTreeMap<String, Manifest> = BTreeMap::new();
    let mut need: Vec<f64> = pending.iter().map(|c| c.duration_s).collect();
    if cfg.cv.enabled {
        need.push(cfg.cv.duration_s);
    }
    for &d in &cfg.durations {
        if !need.contains(&d) {
            continue;
        }
        match corpus.manifest(d, &cfg.mfcc, cfg.tail) {
            Ok(m) => {
                manifests.insert(duration_label(d), m);
            }
            Err(e) => log::warn!("{d} s: no manifest ({e})"),
        }
    }
    if cfg.cv.enabled && !manifests.contains_key(&duration_label(cfg.cv.duration_s)) {
        if let Ok(m) = corpus.manifest(cfg.cv.duration_s, &cfg.mfcc, cfg.tail) {
            manifests.insert(duration_label(cfg.cv.duration_s), m);
        }
    }

    let outcomes: Vec<(Cell, anyhow::Result<ExperimentResult>)> = pending
        .par_iter()
        .map(|cell| {
            let r = (|| {
                let m = manifests
                    .get(&duration_label(cell.duration_s))
                    .with_context(|| format!("no segments of {} s", cell.duration_s))?;
                let o = run_cell(m, cell, cfg)?;
                let curve = out.join("curves").join(format!("{}.csv", cell.id()));
                write_curve(&curve, &o.curve)?;
                appender.append(&o.result)?;
                Ok(o.result)
            })();
            (*cell, r)
        })
        .collect();
    for (cell, r) in outcomes {
        match r {
            Ok(res) => {
                trained += 1;
                done.insert(res.cell_id.clone(), res);
            }
            Err(e) => {
                log::error!("{} failed: {e:#}", cell.id());
                failures.push((cell.id(), format!("{e:#}")));
            }
        }
    }
    if done.is_empty() {
        bail!("all {} grid cells failed; first error: {}", cells.len(), failures.first().map_or("", |f| f.1.as_str()));
    }
    drop(appender);
    let results: Vec<ExperimentResult> = cells.iter().filter_map(|c| done.get(&c.id()).cloned()).collect();
    write_results(&results_path, &results)?;
    write_failures(&out.join("failures.csv"), &failures)?;

    let mut cv = Vec::new();
    if cfg.cv.enabled {
        if let Some(m) = manifests.get(&duration_label(cfg.cv.duration_s)) {
            for &kind in &cfg.cv.model_kinds {
                let cell = Cell { model: kind, duration_s: cfg.cv.duration_s, sampling: cfg.cv.sampling };
                let holdout = done.get(&cell.id()).map(|r| r.final_test_acc);
                match run_cv(m, kind, cfg.cv.sampling, cfg.cv.k, cfg, holdout) {
                    Ok(r) => cv.push(r),
                    Err(e) => {
                        log::error!("cv {} failed: {e:#}", cell.id());
                        failures.push((format!("cv_{}", cell.id()), format!("{e:#}")));
                    }
                }
            }
            write_failures(&out.join("failures.csv"), &failures)?;
        }
    }
    Ok(GridOutcome { results, failures, cv, stats, trained })
}

fn write_failures(path: &Path, failures: &[(String, String)]) -> anyhow::Result<()> {
    if failures.is_empty() {
        if path.exists() {
            std::fs::remove_file(path)?;
        }
        return Ok(());
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["cell_id", "error"])?;
    for (id, e) in failures {
        w.write_record([id, e])?;
    }
    w.flush()?;
    Ok(())
}
