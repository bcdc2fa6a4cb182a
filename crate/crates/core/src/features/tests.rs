use super::*;
use crate::audio::Segment;
use alloc::string::String;
use rand::{Rng as _, SeedableRng};

fn close(a: f64, b: f64, tol: f64) -> bool {
    libm::fabs(a - b) <= tol
}

fn tone(freq: f64, n: usize, rate: u32, amp: f64) -> Vec<f32> {
    (0..n)
        .map(|i| (amp * libm::sin(2.0 * core::f64::consts::PI * freq * i as f64 / f64::from(rate))) as f32)
        .collect()
}

fn noise(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-0.5f32..0.5)).collect()
}

/// Brute-force MFCC: O(n^2) DFT, dense filterbank sums, DCT by its defining sum.
fn oracle_mfcc(samples: &[f32], cfg: &MfccConfig, rate: u32) -> Vec<f64> {
    let n = cfg.frame_len;
    let fb = mel_filterbank(cfg, rate).unwrap();
    let bins = cfg.n_fft_bins();
    let cos_t: Vec<f64> = (0..n).map(|i| libm::cos(2.0 * core::f64::consts::PI * i as f64 / n as f64)).collect();
    let sin_t: Vec<f64> = (0..n).map(|i| libm::sin(2.0 * core::f64::consts::PI * i as f64 / n as f64)).collect();
    let frames = 1 + (samples.len() - n) / cfg.hop;
    let mut out = Vec::new();
    for f in 0..frames {
        let x: Vec<f64> = (0..n)
            .map(|t| {
                let w = 0.5 - 0.5 * libm::cos(2.0 * core::f64::consts::PI * t as f64 / n as f64);
                f64::from(samples[f * cfg.hop + t]) * w
            })
            .collect();
        let power: Vec<f64> = (0..bins)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &v) in x.iter().enumerate() {
                    let idx = (k * t) % n;
                    re += v * cos_t[idx];
                    im -= v * sin_t[idx];
                }
                re * re + im * im
            })
            .collect();
        let logmel: Vec<f64> = (0..cfg.n_mels)
            .map(|m| {
                let e: f64 = (0..bins).map(|k| fb[m * bins + k] * power[k]).sum();
                libm::log(e.max(cfg.log_floor))
            })
            .collect();
        let mm = cfg.n_mels as f64;
        for k in 0..cfg.n_mfcc {
            let s = if k == 0 { libm::sqrt(1.0 / mm) } else { libm::sqrt(2.0 / mm) };
            let c: f64 = (0..cfg.n_mels)
                .map(|m| logmel[m] * libm::cos(core::f64::consts::PI * k as f64 * (2 * m + 1) as f64 / (2.0 * mm)))
                .sum();
            out.push(s * c);
        }
    }
    out
}

#[test]
fn mel_scale_values() {
    assert_eq!(mel_scale(0.0), 0.0);
    assert!(close(mel_scale(700.0), 2595.0 * libm::log10(2.0), 1e-12));
    assert!(close(mel_scale(700.0), 781.17, 0.01));
    assert!(close(mel_scale(1000.0), 999.99, 0.01));
    assert!(close(mel_to_hz(mel_scale(4321.0)), 4321.0, 1e-8));
    let mut prev = -1.0;
    for f in 0..200 {
        let m = mel_scale(f as f64 * 55.0);
        assert!(m > prev);
        prev = m;
    }
}

#[test]
fn filterbank_shape_and_monotone_centres() {
    let cfg = MfccConfig::default();
    let fb = mel_filterbank(&cfg, 22_050).unwrap();
    assert_eq!(fb.len(), 40 * 1025);
    assert!(fb.iter().all(|&w| w >= 0.0));
    for row in fb.chunks(1025) {
        assert!(row.iter().any(|&w| w > 0.0));
    }
    let pts = mel_points(40, 0.0, 11_025.0);
    assert!(pts.windows(2).all(|w| w[1] > w[0]));
    assert!(close(pts[41], 11_025.0, 1e-6));
}

#[test]
fn pure_tone_peaks_in_its_filter() {
    let cfg = MfccConfig::default();
    let rate = 22_050;
    let fb = mel_filterbank(&cfg, rate).unwrap();
    let ex = MfccExtractor::new(&cfg, rate).unwrap();
    let pts = mel_points(cfg.n_mels, 0.0, 11_025.0);
    for k in [5usize, 12, 20, 30, 38] {
        let frame = tone(pts[k + 1], cfg.frame_len, rate, 0.5);
        let power = ex.power_spectrum(&frame);
        let energies: Vec<f64> = fb.chunks(cfg.n_fft_bins()).map(|r| r.iter().zip(&power).map(|(a, b)| a * b).sum()).collect();
        let argmax = energies
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, k);
    }
}

#[test]
fn single_filter_spans_whole_range() {
    let cfg = MfccConfig { n_mels: 1, n_mfcc: 1, ..MfccConfig::default() };
    let fb = mel_filterbank(&cfg, 22_050).unwrap();
    let bin_hz = 22_050.0 / 2048.0;
    let peak = fb
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    let mid_hz = mel_to_hz(mel_scale(11_025.0) / 2.0);
    assert!(libm::fabs(peak as f64 * bin_hz - mid_hz) <= bin_hz);
    assert_eq!(fb[0], 0.0);
    assert!(fb[1] > 0.0 && fb[1023] > 0.0);
}

#[test]
fn too_many_mels_is_config_error() {
    let cfg = MfccConfig { frame_len: 64, hop: 32, n_mels: 128, ..MfccConfig::default() };
    assert!(matches!(mel_filterbank(&cfg, 22_050), Err(Error::Config(_))));
    let bad = MfccConfig { n_mfcc: 41, ..MfccConfig::default() };
    assert!(bad.validate(22_050).is_err());
    let bad = MfccConfig { frame_len: 2000, ..MfccConfig::default() };
    assert!(bad.validate(22_050).is_err());
    let bad = MfccConfig { fmax: Some(20_000.0), ..MfccConfig::default() };
    assert!(bad.validate(22_050).is_err());
}

#[test]
fn five_second_segment_shape() {
    let cfg = MfccConfig::default();
    let seg = Segment {
        samples: noise(110_250, 1),
        sample_rate: 22_050,
        duration_s: 5.0,
        parent: String::new(),
        index: 0,
        speaker_id: String::new(),
        label: 0,
    };
    let m = mfcc(&seg, &cfg).unwrap();
    assert_eq!(m.shape(), (212, 13));
    assert!(m.values().iter().all(|v| v.is_finite()));
}

#[test]
fn too_short_segment_errors() {
    let ex = MfccExtractor::new(&MfccConfig::default(), 22_050).unwrap();
    assert_eq!(ex.extract(&[0.0; 2047]), Err(Error::TooShort { len: 2047, frame_len: 2048 }));
    assert_eq!(ex.extract(&[0.0; 2048]).unwrap().frames(), 1);
}

#[test]
fn silent_segment_is_dct_of_floor() {
    let cfg = MfccConfig::default();
    let ex = MfccExtractor::new(&cfg, 22_050).unwrap();
    let m = ex.extract(&[0.0; 22_050]).unwrap();
    let c0 = libm::sqrt(40.0) * libm::log(1e-10);
    for row in m.rows() {
        assert_eq!(row, m.row(0));
        assert!(close(row[0], c0, 1e-9));
        assert!(row[1..].iter().all(|v| libm::fabs(*v) < 1e-9));
    }
}

#[test]
fn fft_pipeline_matches_brute_force_oracle() {
    let cfg = MfccConfig::default();
    let ex = MfccExtractor::new(&cfg, 22_050).unwrap();
    for seed in 0..2 {
        let x = noise(22_050, seed);
        let fast = ex.extract(&x).unwrap();
        let slow = oracle_mfcc(&x, &cfg, 22_050);
        let max = fast.values().iter().zip(&slow).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max);
        assert!(max <= 1e-6, "max abs diff {max}");
    }
}

#[test]
fn amplitude_scaling_shifts_only_c0() {
    let cfg = MfccConfig::default();
    let ex = MfccExtractor::new(&cfg, 22_050).unwrap();
    let x = noise(8192, 9);
    let scaled: Vec<f32> = x.iter().map(|v| v * 2.0).collect();
    let a = ex.extract(&x).unwrap();
    let b = ex.extract(&scaled).unwrap();
    let shift = libm::sqrt(40.0) * libm::log(4.0);
    for (ra, rb) in a.rows().zip(b.rows()) {
        assert!(close(rb[0] - ra[0], shift, 1e-6));
        for j in 1..13 {
            assert!(close(ra[j], rb[j], 1e-6));
        }
    }
}

#[test]
fn extraction_is_deterministic() {
    let ex = MfccExtractor::new(&MfccConfig::default(), 22_050).unwrap();
    let x = noise(30_000, 4);
    assert_eq!(ex.extract(&x).unwrap(), ex.extract(&x).unwrap());
}

#[test]
fn normalizer_properties() {
    let mats: Vec<MfccMatrix> = (0..3)
        .map(|s| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
            let vals = (0..20 * 4)
                .map(|i| if i % 4 == 3 { 7.5 } else { rng.random_range(-50.0..50.0) + (i % 4) as f64 * 100.0 })
                .collect();
            MfccMatrix::new(20, 4, vals).unwrap()
        })
        .collect();
    let stats = Normalizer::fit(&mats).unwrap();
    let normed: Vec<MfccMatrix> = mats.iter().map(|m| stats.apply(m).unwrap()).collect();
    for j in 0..4 {
        let col: Vec<f64> = normed.iter().flat_map(|m| m.rows().map(move |r| r[j])).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
        assert!(libm::fabs(mean) < 1e-9);
        if j == 3 {
            assert!(col.iter().all(|&v| v == 0.0));
        } else {
            assert!(close(var, 1.0, 1e-9));
        }
    }
    for (m, n) in mats.iter().zip(&normed) {
        let back = stats.invert(n).unwrap();
        for (a, b) in m.values().iter().zip(back.values()) {
            assert!(close(*a, *b, 1e-9));
        }
    }
    assert!(matches!(Normalizer::fit(core::iter::empty()), Err(Error::Empty(_))));
}
