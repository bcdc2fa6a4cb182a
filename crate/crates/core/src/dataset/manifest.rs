use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::audio::{resample, segment, AudioClip, TailPolicy};
use crate::features::{MfccConfig, MfccExtractor, MfccMatrix};
use crate::{Error, Result};

/// Class names in label order.
pub const CLASS_NAMES: [&str; 2] = ["native", "non_native"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub mfcc: MfccMatrix,
    pub label: usize,
    pub speaker_id: String,
    pub source_path: String,
    pub segment_index: usize,
}

/// Labeled MFCC segments of one segment duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub mapping: Vec<String>,
    pub duration_s: f64,
    pub mfcc_config: MfccConfig,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(duration_s: f64, mfcc_config: MfccConfig, entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self {
            mapping: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            duration_s,
            mfcc_config,
            entries,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n_classes = self.mapping.len();
        let shape = self.entries.first().map(|e| e.mfcc.shape());
        for (i, e) in self.entries.iter().enumerate() {
            if e.label >= n_classes {
                return Err(Error::InvalidLabel { label: e.label, n_classes });
            }
            if Some(e.mfcc.shape()) != shape {
                return Err(Error::Shape {
                    layer: format!("manifest entry {i}"),
                    expected: format!("{:?}", shape.unwrap_or_default()),
                    actual: format!("{:?}", e.mfcc.shape()),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.mapping.len()
    }

    /// `(frames, n_mfcc)` shared by every entry.
    pub fn feature_shape(&self) -> Option<(usize, usize)> {
        self.entries.first().map(|e| e.mfcc.shape())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn speakers(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.speaker_id.as_str()).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.n_classes()];
        for e in &self.entries {
            counts[e.label] += 1;
        }
        counts
    }
}

/// Resamples a clip to the extractor's rate, segments it and extracts one
/// manifest entry per segment.
pub fn entries_for_clip(
    clip: &AudioClip,
    duration_s: f64,
    extractor: &MfccExtractor,
    tail: TailPolicy,
) -> Result<Vec<ManifestEntry>> {
    let clip = resample(clip, extractor.sample_rate())?;
    segment(&clip, duration_s, tail)?
        .into_iter()
        .map(|seg| {
            Ok(ManifestEntry {
                mfcc: extractor.extract(&seg.samples)?,
                label: seg.label,
                speaker_id: seg.speaker_id,
                source_path: seg.parent,
                segment_index: seg.index,
            })
        })
        .collect()
}
