//! Synthetic two-class "speech-like" corpus.
//!
//! Each speaker is a harmonic stack whose fundamental and formant band come
//! from the class profile, chopped into amplitude-modulated syllables, with
//! slow pitch drift, per-syllable formant wobble and low-passed noise, and
//! interrupted by long noise-only pauses. The classes differ in pitch range
//! and formant band, so they are learnable from MFCCs; the pauses make some
//! short segments uninformative, as in real recordings.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, PROCESSING_RATE};
use crate::dataset::CLASS_NAMES;
use crate::rng::{derive_seed, rng_from_seed};
use crate::{Error, Result};

/// Acoustic profile of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    /// Fundamental frequency range (Hz); each speaker draws one value.
    pub f0_hz: [f64; 2],
    /// Formant centre range (Hz); each speaker draws one value.
    pub formant_hz: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub speakers_per_class: usize,
    pub minutes_per_speaker: f64,
    /// Indexed by class label.
    pub profiles: [ClassProfile; 2],
    /// Relative depth of the slow pitch drift.
    pub jitter: f64,
    /// Absolute amplitude of the background noise (before its low-pass).
    pub noise: f64,
    /// Expected fraction of time spent in long noise-only pauses.
    pub pause_fraction: f64,
    pub seed: u64,
    pub sample_rate: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            speakers_per_class: 20,
            minutes_per_speaker: 1.0,
            profiles: [
                ClassProfile { f0_hz: [100.0, 150.0], formant_hz: [500.0, 900.0] },
                ClassProfile { f0_hz: [200.0, 300.0], formant_hz: [1200.0, 2000.0] },
            ],
            jitter: 0.04,
            noise: 0.05,
            pause_fraction: 0.1,
            seed: 0,
            sample_rate: PROCESSING_RATE,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let [a, b] = &self.profiles;
        let disjoint = a.f0_hz[1] < b.f0_hz[0] || b.f0_hz[1] < a.f0_hz[0];
        if !disjoint {
            return Err(Error::Config("class fundamental ranges must be disjoint".into()));
        }
        for p in &self.profiles {
            if !(p.f0_hz[0] > 0.0 && p.f0_hz[0] <= p.f0_hz[1] && p.formant_hz[0] > 0.0 && p.formant_hz[0] <= p.formant_hz[1]) {
                return Err(Error::Config(format!("invalid class profile {p:?}")));
            }
            if p.formant_hz[1] >= f64::from(self.sample_rate) / 2.0 {
                return Err(Error::Config("formant band above nyquist".into()));
            }
        }
        if self.speakers_per_class == 0 || !(self.minutes_per_speaker > 0.0) || self.sample_rate == 0 {
            return Err(Error::Config("need speakers, a positive duration and a sample rate".into()));
        }
        if !(self.jitter >= 0.0 && self.noise >= 0.0 && (0.0..0.95).contains(&self.pause_fraction)) {
            return Err(Error::Config("jitter and noise must be non-negative, pause fraction in [0, 0.95)".into()));
        }
        Ok(())
    }

    pub fn samples_per_speaker(&self) -> usize {
        libm::round(self.minutes_per_speaker * 60.0 * f64::from(self.sample_rate)) as usize
    }

    /// `(label, speaker_id)` of every speaker, natives first.
    pub fn speakers(&self) -> Vec<(usize, String)> {
        (0..2)
            .flat_map(|label| (0..self.speakers_per_class).map(move |i| (label, format!("{}_{i:03}", CLASS_NAMES[label]))))
            .collect()
    }
}

/// Per-speaker constants drawn from the class profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Voice {
    pub f0: f64,
    pub formant: f64,
    pub bandwidth: f64,
    pub syllables_per_second: f64,
    pub gain: f64,
}

pub fn voice(spec: &SynthSpec, label: usize, speaker_id: &str) -> Voice {
    let mut rng = rng_from_seed(derive_seed(spec.seed, speaker_id));
    let p = &spec.profiles[label];
    let draw = |rng: &mut crate::rng::Rng, [lo, hi]: [f64; 2]| if hi > lo { rng.random_range(lo..hi) } else { lo };
    Voice {
        f0: draw(&mut rng, p.f0_hz),
        formant: draw(&mut rng, p.formant_hz),
        bandwidth: rng.random_range(120.0..220.0),
        syllables_per_second: rng.random_range(3.0..5.0),
        gain: rng.random_range(0.3..0.6),
    }
}

/// Long pauses are uniform in this range, seconds.
const PAUSE_RANGE_S: (f64, f64) = (3.0, 10.0);

/// Renders one speaker. Deterministic in `(spec.seed, speaker_id)`.
///
/// Voiced syllables are peak-normalized to the speaker's gain; noise is
/// added afterwards at an absolute level that varies per syllable or pause
/// and does not depend on the class, so pause-only stretches carry no class
/// information.
pub fn generate_speaker(spec: &SynthSpec, label: usize, speaker_id: &str) -> Result<AudioClip> {
    spec.validate()?;
    let v = voice(spec, label, speaker_id);
    let rate = f64::from(spec.sample_rate);
    let nyquist = rate / 2.0;
    let n = spec.samples_per_speaker();
    let mut rng = rng_from_seed(derive_seed(spec.seed ^ 0x5eed, speaker_id));
    let max_harmonic = (nyquist.min(5000.0) / (v.f0 * (1.0 + 2.0 * spec.jitter))) as usize;
    let two_pi = 2.0 * core::f64::consts::PI;

    // Probability of a long pause after a syllable such that pauses take
    // `pause_fraction` of the time on average.
    let unit_s = 0.9 / v.syllables_per_second + 0.065;
    let pause_mean = 0.5 * (PAUSE_RANGE_S.0 + PAUSE_RANGE_S.1);
    let f = spec.pause_fraction;
    let p_pause = f * unit_s / (pause_mean * (1.0 - f));

    let mut voiced = Vec::with_capacity(n);
    let mut noise_gain = Vec::with_capacity(n);
    let mut phase = 0.0f64;
    let mut drift = 0.0f64;
    let mut weights = Vec::with_capacity(max_harmonic);
    while voiced.len() < n {
        // One syllable followed by a short gap.
        let syl = ((rate / v.syllables_per_second) * rng.random_range(0.6..1.2)) as usize;
        let gap = (rate * rng.random_range(0.03..0.10)) as usize;
        let formant = v.formant * rng.random_range(0.92..1.08);
        let contour = rng.random_range(-0.06..0.06);
        let level = rng.random_range(0.5..1.5);
        for k in 0..syl + gap {
            drift += (rng.random::<f64>() - 0.5) * 0.002;
            drift = drift.clamp(-1.0, 1.0);
            let pos = k as f64 / syl as f64;
            let f0 = v.f0 * (1.0 + spec.jitter * drift + contour * (pos - 0.5));
            if k % 64 == 0 {
                weights.clear();
                for h in 1..=max_harmonic {
                    let d = (h as f64 * f0 - formant) / v.bandwidth;
                    weights.push(libm::exp(-0.5 * d * d) + 0.2 / h as f64);
                }
            }
            phase += two_pi * f0 / rate;
            if phase > two_pi {
                phase -= two_pi;
            }
            let s = if k < syl {
                let env = libm::sin(core::f64::consts::PI * pos);
                // sin(h * phase) for h = 1, 2, ... by the Chebyshev recurrence.
                let (s1, c1) = (libm::sin(phase), libm::cos(phase));
                let (mut prev, mut cur) = (0.0, s1);
                let mut acc = 0.0;
                for w in &weights {
                    acc += w * cur;
                    let next = 2.0 * c1 * cur - prev;
                    prev = cur;
                    cur = next;
                }
                env * env * acc
            } else {
                0.0
            };
            voiced.push(s);
            noise_gain.push(level);
        }
        if rng.random::<f64>() < p_pause {
            let len = (rate * rng.random_range(PAUSE_RANGE_S.0..PAUSE_RANGE_S.1)) as usize;
            let level = rng.random_range(0.5..1.5);
            voiced.extend(core::iter::repeat_n(0.0, len));
            noise_gain.extend(core::iter::repeat_n(level, len));
        }
    }
    voiced.truncate(n);
    let peak = voiced.iter().fold(0.0f64, |m, s| m.max(libm::fabs(*s))).max(1e-12);
    let scale = v.gain / peak;
    let mut noise_state = 0.0f64;
    let samples = voiced
        .iter()
        .zip(&noise_gain)
        .map(|(s, g)| {
            noise_state = 0.7 * noise_state + 0.3 * (rng.random::<f64>() * 2.0 - 1.0);
            (s * scale + spec.noise * g * noise_state).clamp(-1.0, 1.0) as f32
        })
        .collect();
    let path = format!("{}/{speaker_id}.wav", CLASS_NAMES[label]);
    Ok(AudioClip::new(samples, spec.sample_rate).with_meta(speaker_id, label, &path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{MfccConfig, MfccExtractor};
    use alloc::vec;

    fn small() -> SynthSpec {
        SynthSpec { speakers_per_class: 2, minutes_per_speaker: 0.1, seed: 4, ..SynthSpec::default() }
    }

    fn centroid(clip: &AudioClip) -> f64 {
        let ex = MfccExtractor::new(&MfccConfig::default(), clip.sample_rate).unwrap();
        let bin_hz = f64::from(clip.sample_rate) / 2048.0;
        let (mut num, mut den) = (0.0, 0.0);
        for start in (0..clip.samples.len() - 2048).step_by(2048) {
            let p = ex.power_spectrum(&clip.samples[start..start + 2048]);
            for (k, e) in p.iter().enumerate() {
                num += k as f64 * bin_hz * e;
                den += e;
            }
        }
        num / den
    }

    #[test]
    fn speakers_and_lengths() {
        let spec = SynthSpec { minutes_per_speaker: 1.0, ..small() };
        let ids = spec.speakers();
        assert_eq!(ids.len(), 4);
        for (label, id) in &ids {
            let clip = generate_speaker(&spec, *label, id).unwrap();
            assert_eq!(clip.samples.len(), 60 * 22_050);
            assert_eq!(clip.duration_seconds(), 60.0);
            assert!(clip.samples.iter().all(|s| s.is_finite() && s.abs() <= 1.0));
            let rms = libm::sqrt(clip.samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum::<f64>() / clip.samples.len() as f64);
            assert!(rms > 0.01, "{id}: rms {rms}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = small();
        let a = generate_speaker(&spec, 1, "non_native_000").unwrap();
        let b = generate_speaker(&spec, 1, "non_native_000").unwrap();
        assert_eq!(a, b);
        let c = generate_speaker(&SynthSpec { seed: 5, ..small() }, 1, "non_native_000").unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn class_centroids_are_far_apart() {
        let spec = small();
        let mean_centroid = |label: usize| {
            let ids: Vec<_> = spec.speakers().into_iter().filter(|(l, _)| *l == label).collect();
            ids.iter().map(|(l, id)| centroid(&generate_speaker(&spec, *l, id).unwrap())).sum::<f64>() / ids.len() as f64
        };
        let (a, b) = (mean_centroid(0), mean_centroid(1));
        assert!(b - a > 300.0, "centroids {a} vs {b}");
    }

    #[test]
    fn overlapping_profiles_rejected() {
        let mut spec = small();
        spec.profiles[1].f0_hz = [140.0, 300.0];
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn clip_mean_mfcc_is_linearly_separable() {
        use crate::nn::{evaluate, train, Example, LayerSpec, Network, NoClock, TrainConfig};
        let spec = SynthSpec { speakers_per_class: 4, minutes_per_speaker: 0.25, seed: 11, ..SynthSpec::default() };
        let ex = MfccExtractor::new(&MfccConfig::default(), spec.sample_rate).unwrap();
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for (label, id) in spec.speakers() {
            let clip = generate_speaker(&spec, label, &id).unwrap();
            let m = ex.extract(&clip.samples).unwrap();
            let mut mean = vec![0.0; m.n_coeffs()];
            for row in m.rows() {
                for (a, b) in mean.iter_mut().zip(row) {
                    *a += b / m.frames() as f64;
                }
            }
            feats.push(mean);
            labels.push(label);
        }
        // Standardize, then fit a single linear layer.
        let d = feats[0].len();
        for j in 0..d {
            let mu = feats.iter().map(|f| f[j]).sum::<f64>() / feats.len() as f64;
            let sd = libm::sqrt(feats.iter().map(|f| (f[j] - mu) * (f[j] - mu)).sum::<f64>() / feats.len() as f64).max(1e-9);
            feats.iter_mut().for_each(|f| f[j] = (f[j] - mu) / sd);
        }
        let set: Vec<Example<'_>> = feats.iter().zip(&labels).map(|(x, &label)| Example { x, label }).collect();
        let mut net = Network::new(&[d], &[LayerSpec::Dense { units: 2 }], 3).unwrap();
        let cfg = TrainConfig { max_epochs: 300, patience: 300, batch_size: 8, ..TrainConfig::default() };
        train(&mut net, &set, &set, &TrainConfig { adam: crate::nn::AdamConfig { lr: 0.05, ..cfg.adam.clone() }, ..cfg }, &NoClock).unwrap();
        assert_eq!(evaluate(&net, &set).unwrap().accuracy, 1.0);
    }
}
