//! Mono audio buffers, linear-interpolation resampling and fixed-duration
//! segmentation.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Class index of native speakers.
pub const NATIVE: usize = 0;
/// Class index of non-native speakers.
pub const NON_NATIVE: usize = 1;

/// Rate every clip is resampled to before feature extraction.
pub const PROCESSING_RATE: u32 = 22_050;

/// Segment durations (seconds) of the default experiment grid.
pub const DEFAULT_DURATIONS: [f64; 7] = [1.0, 3.0, 5.0, 10.0, 20.0, 30.0, 60.0];

/// A mono recording of one speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    /// Amplitudes in `[-1, 1]`.
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub speaker_id: String,
    pub label: usize,
    pub source_path: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            speaker_id: String::new(),
            label: NATIVE,
            source_path: String::new(),
        }
    }

    pub fn with_meta(mut self, speaker_id: &str, label: usize, source_path: &str) -> Self {
        self.speaker_id = speaker_id.into();
        self.label = label;
        self.source_path = source_path.into();
        self
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// A fixed-length slice of a clip; one training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub duration_s: f64,
    pub parent: String,
    pub index: usize,
    pub speaker_id: String,
    pub label: usize,
}

/// What to do with audio left over after the last whole segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailPolicy {
    #[default]
    Drop,
    /// Keep a trailing partial segment, zero-padded to full length.
    Pad,
}

/// Linear interpolation onto a uniform grid at `target_rate`.
///
/// Output length is `round(len * target / source)`. Positions past the last
/// input sample hold the last sample.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 || clip.sample_rate == 0 {
        return Err(Error::InvalidArgument("sample rates must be positive".into()));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let src = &clip.samples;
    let n = src.len();
    let out_len = libm::round(n as f64 * f64::from(target_rate) / f64::from(clip.sample_rate)) as usize;
    let step = f64::from(clip.sample_rate) / f64::from(target_rate);
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let pos = i as f64 * step;
        let i0 = pos as usize;
        let v = if i0 + 1 >= n {
            src.last().map_or(0.0, |&s| f64::from(s))
        } else {
            let frac = pos - i0 as f64;
            let a = f64::from(src[i0]);
            let b = f64::from(src[i0 + 1]);
            a + (b - a) * frac
        };
        out.push(v as f32);
    }
    Ok(AudioClip {
        samples: out,
        sample_rate: target_rate,
        speaker_id: clip.speaker_id.clone(),
        label: clip.label,
        source_path: clip.source_path.clone(),
    })
}

/// Number of samples in one segment of `duration_s` seconds.
pub fn segment_len(sample_rate: u32, duration_s: f64) -> Result<usize> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::InvalidArgument("segment duration must be positive".into()));
    }
    let len = libm::round(duration_s * f64::from(sample_rate)) as usize;
    if len == 0 {
        return Err(Error::InvalidArgument("segment shorter than one sample".into()));
    }
    Ok(len)
}

/// Number of segments `segment` produces for a clip of `n_samples`.
pub fn segment_count(n_samples: usize, sample_rate: u32, duration_s: f64, tail: TailPolicy) -> Result<usize> {
    let len = segment_len(sample_rate, duration_s)?;
    Ok(match tail {
        TailPolicy::Drop => n_samples / len,
        TailPolicy::Pad => n_samples.div_ceil(len),
    })
}

/// Cuts a clip into consecutive, non-overlapping segments starting at sample 0.
pub fn segment(clip: &AudioClip, duration_s: f64, tail: TailPolicy) -> Result<Vec<Segment>> {
    let len = segment_len(clip.sample_rate, duration_s)?;
    let count = segment_count(clip.samples.len(), clip.sample_rate, duration_s, tail)?;
    let mut out = Vec::with_capacity(count);
    for index in 0..count {
        let start = index * len;
        let end = (start + len).min(clip.samples.len());
        let mut samples = Vec::with_capacity(len);
        samples.extend_from_slice(&clip.samples[start..end]);
        samples.resize(len, 0.0);
        out.push(Segment {
            samples,
            sample_rate: clip.sample_rate,
            duration_s,
            parent: clip.source_path.clone(),
            index,
            speaker_id: clip.speaker_id.clone(),
            label: clip.label,
        });
    }
    Ok(out)
}
