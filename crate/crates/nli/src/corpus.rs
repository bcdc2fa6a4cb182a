//! Audio corpora on disk: synthetic generation and manifest building.

use std::path::{Path, PathBuf};

use nli_core::audio::{resample, AudioClip, TailPolicy, PROCESSING_RATE};
use nli_core::dataset::{entries_for_clip, Manifest, CLASS_NAMES};
use nli_core::features::{MfccConfig, MfccExtractor};
use nli_core::synth::{generate_speaker, SynthSpec};
use rayon::prelude::*;

use crate::wav::{load_wav, write_wav};

/// Writes `<class>/<speaker_id>.wav` for every speaker of `spec`; returns
/// the written paths in speaker order.
pub fn write_synthetic(spec: &SynthSpec, out_dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    spec.validate()?;
    for class in CLASS_NAMES {
        std::fs::create_dir_all(out_dir.join(class))?;
    }
    spec.speakers()
        .par_iter()
        .map(|(label, id)| {
            let clip = generate_speaker(spec, *label, id)?;
            let path = out_dir.join(&clip.source_path);
            write_wav(&path, &clip.samples, clip.sample_rate)?;
            Ok(path)
        })
        .collect()
}

/// `*.wav` files below `dir`, sorted.
pub fn wav_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry?;
        let is_wav = entry.path().extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if entry.file_type().is_file() && is_wav {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

/// A file that could not be used, with the reason.
#[derive(Debug, Clone)]
pub struct Skipped {
    pub path: PathBuf,
    pub reason: String,
}

/// Every clip of a labeled corpus, resampled to the processing rate.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub clips: Vec<AudioClip>,
    pub skipped: Vec<Skipped>,
}

impl Corpus {
    /// Loads `dirs[label]` for each class. The speaker id of a clip is its
    /// file stem. Unreadable files are logged and skipped.
    pub fn load(dirs: &[&Path]) -> anyhow::Result<Self> {
        let mut jobs = Vec::new();
        for (label, dir) in dirs.iter().enumerate() {
            let files = wav_files(dir)?;
            if files.is_empty() {
                anyhow::bail!("no .wav files under {}", dir.display());
            }
            jobs.extend(files.into_iter().map(|p| (label, p)));
        }
        let loaded: Vec<_> = jobs
            .par_iter()
            .map(|(label, path)| {
                let speaker = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                load_wav(path)
                    .map_err(anyhow::Error::from)
                    .and_then(|clip| Ok(resample(&clip, PROCESSING_RATE)?))
                    .map(|clip| clip.with_meta(&speaker, *label, &path.display().to_string()))
                    .map_err(|e| Skipped { path: path.clone(), reason: e.to_string() })
            })
            .collect();
        let mut corpus = Self::default();
        for r in loaded {
            match r {
                Ok(clip) => corpus.clips.push(clip),
                Err(s) => {
                    log::warn!("skipping {}: {}", s.path.display(), s.reason);
                    corpus.skipped.push(s);
                }
            }
        }
        Ok(corpus)
    }

    pub fn total_samples(&self) -> usize {
        self.clips.iter().map(|c| c.samples.len()).sum()
    }

    /// Segments every clip and extracts MFCCs, in parallel per clip.
    pub fn manifest(&self, duration_s: f64, cfg: &MfccConfig, tail: TailPolicy) -> anyhow::Result<Manifest> {
        let extractor = MfccExtractor::new(cfg, PROCESSING_RATE)?;
        let per_clip: Vec<_> = self
            .clips
            .par_iter()
            .map(|clip| entries_for_clip(clip, duration_s, &extractor, tail))
            .collect::<Result<_, _>>()?;
        let entries: Vec<_> = per_clip.into_iter().flatten().collect();
        if entries.is_empty() {
            anyhow::bail!("no clip is at least {duration_s} s long");
        }
        Ok(Manifest::new(duration_s, cfg.clone(), entries)?)
    }
}
