//! MFCC feature extraction.
//!
//! Per frame: periodic Hann window, power spectrum via FFT, triangular mel
//! filterbank (HTK mel scale), natural log with a floor, orthonormal DCT-II,
//! keep the first `n_mfcc` coefficients. Frames start at sample 0 with no
//! centre padding, so a signal of `N` samples yields
//! `1 + (N - frame_len) / hop` frames.

mod fft;
mod matrix;
mod normalize;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use fft::Fft;
pub use matrix::MfccMatrix;
pub use normalize::Normalizer;

/// Analysis window. Only Hann is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    /// Frame length in samples; a power of two.
    pub frame_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin: f64,
    /// Upper filterbank edge; `None` means Nyquist.
    pub fmax: Option<f64>,
    pub log_floor: f64,
    pub window: Window,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            frame_len: 2048,
            hop: 512,
            n_mels: 40,
            n_mfcc: 13,
            fmin: 0.0,
            fmax: None,
            log_floor: 1e-10,
            window: Window::Hann,
        }
    }
}

impl MfccConfig {
    pub fn n_fft_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn fmax_for(&self, sample_rate: u32) -> f64 {
        self.fmax.unwrap_or(f64::from(sample_rate) / 2.0)
    }

    /// Frames produced for a signal of `n_samples`, or 0 if shorter than one frame.
    pub fn frame_count(&self, n_samples: usize) -> usize {
        if n_samples < self.frame_len {
            0
        } else {
            1 + (n_samples - self.frame_len) / self.hop
        }
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = f64::from(sample_rate) / 2.0;
        let fmax = self.fmax_for(sample_rate);
        if !self.frame_len.is_power_of_two() || self.frame_len < 2 {
            return Err(Error::Config(format!("frame_len {} is not a power of two", self.frame_len)));
        }
        if self.hop == 0 {
            return Err(Error::Config("hop must be positive".into()));
        }
        if self.n_mels == 0 || self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return Err(Error::Config(format!(
                "need 1 <= n_mfcc ({}) <= n_mels ({})",
                self.n_mfcc, self.n_mels
            )));
        }
        if !(self.fmin >= 0.0 && self.fmin < fmax && fmax <= nyquist) {
            return Err(Error::Config(format!(
                "need 0 <= fmin ({}) < fmax ({fmax}) <= nyquist ({nyquist})",
                self.fmin
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config("log_floor must be positive".into()));
        }
        Ok(())
    }
}

/// HTK mel scale: `2595 * log10(1 + f / 700)`.
pub fn mel_scale(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

/// Edge and centre frequencies (Hz) of the mel filters: `n_mels + 2` points
/// equally spaced in mel between `fmin` and `fmax`.
pub fn mel_points(n_mels: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    let lo = mel_scale(fmin);
    let hi = mel_scale(fmax);
    (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Dense `n_mels x n_fft_bins` triangular filterbank, row-major.
pub fn mel_filterbank(cfg: &MfccConfig, sample_rate: u32) -> Result<Vec<f64>> {
    cfg.validate(sample_rate)?;
    let n_bins = cfg.n_fft_bins();
    let points = mel_points(cfg.n_mels, cfg.fmin, cfg.fmax_for(sample_rate));
    let bin_hz = f64::from(sample_rate) / cfg.frame_len as f64;
    let mut fb = vec![0.0; cfg.n_mels * n_bins];
    for m in 0..cfg.n_mels {
        let (left, centre, right) = (points[m], points[m + 1], points[m + 2]);
        let row = &mut fb[m * n_bins..(m + 1) * n_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rising = (f - left) / (centre - left);
            let falling = (right - f) / (right - centre);
            *w = rising.min(falling).max(0.0);
        }
        if row.iter().all(|&w| w == 0.0) {
            return Err(Error::Config(format!(
                "mel filter {m} ({left:.1}-{right:.1} Hz) covers no FFT bin; reduce n_mels or raise frame_len"
            )));
        }
    }
    Ok(fb)
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * libm::cos(2.0 * core::f64::consts::PI * i as f64 / n as f64))
        .collect()
}

/// Orthonormal DCT-II basis, `n_out x n_in` row-major.
fn dct_matrix(n_out: usize, n_in: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_out * n_in);
    let n = n_in as f64;
    for k in 0..n_out {
        let scale = if k == 0 { libm::sqrt(1.0 / n) } else { libm::sqrt(2.0 / n) };
        for m in 0..n_in {
            out.push(scale * libm::cos(core::f64::consts::PI * k as f64 * (2 * m + 1) as f64 / (2.0 * n)));
        }
    }
    out
}

/// Sparse row of the filterbank: first nonzero bin plus weights.
#[derive(Debug, Clone)]
struct Band {
    start: usize,
    weights: Vec<f64>,
}

/// Precomputed MFCC pipeline for one `(config, sample_rate)` pair.
#[derive(Debug, Clone)]
pub struct MfccExtractor {
    cfg: MfccConfig,
    sample_rate: u32,
    window: Vec<f64>,
    bands: Vec<Band>,
    dct: Vec<f64>,
    fft: Fft,
}

impl MfccExtractor {
    pub fn new(cfg: &MfccConfig, sample_rate: u32) -> Result<Self> {
        let fb = mel_filterbank(cfg, sample_rate)?;
        let n_bins = cfg.n_fft_bins();
        let bands = fb
            .chunks(n_bins)
            .map(|row| {
                let start = row.iter().position(|&w| w != 0.0).unwrap_or(0);
                let end = n_bins - row.iter().rev().position(|&w| w != 0.0).unwrap_or(0);
                Band { start, weights: row[start..end].to_vec() }
            })
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            sample_rate,
            window: hann(cfg.frame_len),
            bands,
            dct: dct_matrix(cfg.n_mfcc, cfg.n_mels),
            fft: Fft::new(cfg.frame_len),
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// `|X_k|^2` for `k = 0..=frame_len/2` of one windowed frame.
    pub fn power_spectrum(&self, frame: &[f32]) -> Vec<f64> {
        let n = self.cfg.frame_len;
        let mut re: Vec<f64> = frame.iter().zip(&self.window).map(|(&x, &w)| f64::from(x) * w).collect();
        let mut im = vec![0.0; n];
        self.fft.forward(&mut re, &mut im);
        (0..self.cfg.n_fft_bins()).map(|k| re[k] * re[k] + im[k] * im[k]).collect()
    }

    /// Log mel energies of one frame's power spectrum.
    pub fn log_mel(&self, power: &[f64]) -> Vec<f64> {
        self.bands
            .iter()
            .map(|b| {
                let e: f64 = b.weights.iter().zip(&power[b.start..]).map(|(w, p)| w * p).sum();
                libm::log(e.max(self.cfg.log_floor))
            })
            .collect()
    }

    pub fn cepstrum(&self, log_mel: &[f64]) -> Vec<f64> {
        self.dct
            .chunks(self.cfg.n_mels)
            .map(|row| row.iter().zip(log_mel).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// MFCC matrix (frames x n_mfcc) of a sample buffer.
    pub fn extract(&self, samples: &[f32]) -> Result<MfccMatrix> {
        let frames = self.cfg.frame_count(samples.len());
        if frames == 0 {
            return Err(Error::TooShort { len: samples.len(), frame_len: self.cfg.frame_len });
        }
        let mut values = Vec::with_capacity(frames * self.cfg.n_mfcc);
        for f in 0..frames {
            let start = f * self.cfg.hop;
            let power = self.power_spectrum(&samples[start..start + self.cfg.frame_len]);
            let mel = self.log_mel(&power);
            values.extend(self.cepstrum(&mel));
        }
        debug_assert!(values.iter().all(|v| v.is_finite()));
        MfccMatrix::new(frames, self.cfg.n_mfcc, values)
    }
}

/// MFCC of one segment.
pub fn mfcc(seg: &crate::audio::Segment, cfg: &MfccConfig) -> Result<MfccMatrix> {
    MfccExtractor::new(cfg, seg.sample_rate)?.extract(&seg.samples)
}

#[cfg(test)]
mod tests;
