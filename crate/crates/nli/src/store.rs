//! On-disk formats: manifest JSON, the binary model file and metric CSVs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context};
use nli_core::dataset::Manifest;
use nli_core::features::{MfccConfig, Normalizer};
use nli_core::models::{Classifier, ModelSpec, TrackModel};
use nli_core::nn::EpochMetrics;
use serde::{Deserialize, Serialize};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_manifest(path: &Path, m: &Manifest) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> anyhow::Result<Manifest> {
    let m: Manifest = read_json(path)?;
    m.validate().with_context(|| format!("invalid manifest {}", path.display()))?;
    Ok(m)
}

const MAGIC: &[u8; 8] = b"NLIMODEL";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    spec: ModelSpec,
    normalizer: Normalizer,
    mfcc: MfccConfig,
    sample_rate: u32,
    duration_s: f64,
    n_params: usize,
}

/// Layout: magic, `u32` version, `u64` header length, JSON header,
/// then the parameters as little-endian `f64`. All integers little-endian.
pub fn write_model(path: &Path, model: &TrackModel) -> anyhow::Result<()> {
    let params = nli_core::nn::Model::params(&model.classifier);
    let header = serde_json::to_vec(&ModelHeader {
        spec: model.classifier.spec().clone(),
        normalizer: model.normalizer.clone(),
        mfcc: model.mfcc.clone(),
        sample_rate: model.sample_rate,
        duration_s: model.duration_s,
        n_params: params.len(),
    })?;
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for p in params {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_model(path: &Path) -> anyhow::Result<TrackModel> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).context("reading model magic")?;
    if &magic != MAGIC {
        bail!("{} is not a model file", path.display());
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)?;
    let version = u32::from_le_bytes(u32b);
    if version != MODEL_FORMAT_VERSION {
        bail!("{}: model format version {version} unsupported (expected {MODEL_FORMAT_VERSION})", path.display());
    }
    let mut u64b = [0u8; 8];
    r.read_exact(&mut u64b)?;
    let len = usize::try_from(u64::from_le_bytes(u64b))?;
    let mut header = vec![0u8; len];
    r.read_exact(&mut header).context("truncated model header")?;
    let h: ModelHeader = serde_json::from_slice(&header).context("parsing model header")?;
    let mut params = Vec::with_capacity(h.n_params);
    for _ in 0..h.n_params {
        r.read_exact(&mut u64b).context("truncated model parameters")?;
        params.push(f64::from_le_bytes(u64b));
    }
    if r.read(&mut u64b)? != 0 {
        bail!("{}: trailing bytes after parameters", path.display());
    }
    Ok(TrackModel {
        classifier: Classifier::from_params(&h.spec, params)?,
        normalizer: h.normalizer,
        mfcc: h.mfcc,
        sample_rate: h.sample_rate,
        duration_s: h.duration_s,
    })
}

#[derive(Serialize)]
struct CurveRow {
    epoch: usize,
    train_loss: f64,
    train_acc: f64,
    val_loss: f64,
    val_acc: f64,
    seconds: f64,
}

/// Per-epoch metrics as `epoch,train_loss,train_acc,val_loss,val_acc,seconds`.
pub fn write_curve(path: &Path, metrics: &[EpochMetrics]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for m in metrics {
        w.serialize(CurveRow {
            epoch: m.epoch,
            train_loss: m.train_loss,
            train_acc: m.train_acc,
            val_loss: m.val_loss,
            val_acc: m.val_acc,
            seconds: m.wall_seconds,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Appends `path` (relative to `out`) to `out/artifacts.json` if absent.
pub fn record_artifact(out: &Path, path: &Path) -> anyhow::Result<()> {
    let index = out.join("artifacts.json");
    let mut list: Vec<String> = if index.exists() { read_json(&index)? } else { Vec::new() };
    let rel = path.strip_prefix(out).unwrap_or(path).to_string_lossy().replace('\\', "/");
    if !list.contains(&rel) {
        list.push(rel);
        list.sort();
        write_json(&index, &list)?;
    }
    Ok(())
}
