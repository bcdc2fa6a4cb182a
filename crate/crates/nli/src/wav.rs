//! WAV reading and writing through `hound`.

use std::path::Path;

use nli_core::audio::AudioClip;

#[derive(Debug, thiserror::Error)]
pub enum WavError {
    #[error("{path}: {source}")]
    Read { path: String, source: hound::Error },
    #[error("{path}: unsupported format ({detail}); expected PCM 16-bit mono or stereo")]
    Unsupported { path: String, detail: String },
    #[error("{path}: no audio data")]
    Empty { path: String },
    #[error("{path}: {source}")]
    Write { path: String, source: hound::Error },
}

/// Loads a 16-bit PCM file, downmixing stereo by averaging channels.
/// Samples are scaled to [-1, 1) by 1/32768.
pub fn load_wav(path: &Path) -> Result<AudioClip, WavError> {
    let name = path.display().to_string();
    let mut reader = hound::WavReader::open(path).map_err(|source| WavError::Read { path: name.clone(), source })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 || !(1..=2).contains(&spec.channels) {
        return Err(WavError::Unsupported {
            path: name,
            detail: format!("{:?} {}-bit, {} channels", spec.sample_format, spec.bits_per_sample, spec.channels),
        });
    }
    let raw: Vec<i16> = reader
        .samples::<i16>()
        .collect::<Result<_, _>>()
        .map_err(|source| WavError::Read { path: name.clone(), source })?;
    let ch = usize::from(spec.channels);
    let samples: Vec<f32> = raw
        .chunks_exact(ch)
        .map(|frame| frame.iter().map(|&s| f32::from(s) / 32768.0).sum::<f32>() / ch as f32)
        .collect();
    if samples.is_empty() {
        return Err(WavError::Empty { path: name });
    }
    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// Writes mono 16-bit PCM, clamping to the representable range.
pub fn write_wav(path: &Path, samples: &[f32], sample_rate: u32) -> Result<(), WavError> {
    let name = path.display().to_string();
    let spec = hound::WavSpec { channels: 1, sample_rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let wrap = |source| WavError::Write { path: name.clone(), source };
    let mut w = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in samples {
        let v = (f64::from(s) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(wrap)?;
    }
    w.finalize().map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let samples: Vec<f32> = (0..1000).map(|i| ((i as f32) * 0.01).sin() * 0.5).collect();
        write_wav(&p, &samples, 16_000).unwrap();
        let clip = load_wav(&p).unwrap();
        assert_eq!(clip.sample_rate, 16_000);
        assert_eq!(clip.samples.len(), 1000);
        for (a, b) in clip.samples.iter().zip(&samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0, "{a} vs {b}");
        }
    }

    #[test]
    fn pcm16_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fx.wav");
        let spec = hound::WavSpec { channels: 1, sample_rate: 22_050, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for v in [0i16, 8192, -8192, 32767] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let clip = load_wav(&p).unwrap();
        assert_eq!(clip.samples, vec![0.0, 0.25, -0.25, 32767.0 / 32768.0]);
        let q = dir.path().join("again.wav");
        write_wav(&q, &clip.samples, clip.sample_rate).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    }

    #[test]
    fn stereo_is_averaged() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = hound::WavSpec { channels: 2, sample_rate: 8000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for _ in 0..10 {
            w.write_sample(1000i16).unwrap();
            w.write_sample(3000i16).unwrap();
        }
        w.finalize().unwrap();
        let clip = load_wav(&p).unwrap();
        assert_eq!(clip.samples.len(), 10);
        assert_eq!(clip.samples[0], 2000.0 / 32768.0);
    }

    #[test]
    fn rejects_float_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let spec = hound::WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 32, sample_format: hound::SampleFormat::Float };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(0.5f32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav(&p), Err(WavError::Unsupported { .. })));

        let e = dir.path().join("e.wav");
        write_wav(&e, &[], 8000).unwrap();
        assert!(matches!(load_wav(&e), Err(WavError::Empty { .. })));

        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"not a wav").unwrap();
        assert!(matches!(load_wav(&junk), Err(WavError::Read { .. })));
    }
}
