use super::*;
use crate::audio::AudioClip;
use rand::{Rng as _, SeedableRng};

fn random_input(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.7..1.7)).collect()
}

fn toy_spec(kind: ModelKind) -> ModelSpec {
    let arch = ArchConfig {
        ann_hidden: vec![6, 5, 4],
        cnn_filters: 3,
        cnn_dense: 3,
        rnn_units: vec![3, 2],
        rnn_dense: 3,
        ..ArchConfig::default()
    };
    let (frames, n_mfcc) = match kind {
        ModelKind::Ann => (4, 3),
        ModelKind::Cnn => (8, 4),
        ModelKind::Rnn => (5, 3),
    };
    ModelSpec { kind, frames, n_mfcc, n_classes: 2, arch }
}

#[test]
fn ann_first_dense_parameter_count() {
    let c = Classifier::build(&ModelSpec::new(ModelKind::Ann, 212, 13), 0).unwrap();
    let counts: Vec<usize> = c.layer_param_counts().into_iter().filter(|&n| n > 0).collect();
    assert_eq!(counts[0], 212 * 13 * 512 + 512);
    assert_eq!(counts[0], 1_411_584);
    assert_eq!(counts, vec![1_411_584, 512 * 256 + 256, 256 * 64 + 64, 64 * 2 + 2]);
    assert_eq!(c.n_params(), counts.iter().sum::<usize>());
}

#[test]
fn cnn_and_rnn_parameter_counts() {
    let c = Classifier::build(&ModelSpec::new(ModelKind::Cnn, 212, 13), 0).unwrap();
    let flat = 53 * 3 * 32;
    assert_eq!(
        c.layer_param_counts().into_iter().filter(|&n| n > 0).collect::<Vec<_>>(),
        vec![32 * 9 + 32, 32 * 9 * 32 + 32, flat * 64 + 64, 64 * 2 + 2]
    );
    let r = Classifier::build(&ModelSpec::new(ModelKind::Rnn, 212, 13), 0).unwrap();
    assert_eq!(
        r.layer_param_counts().into_iter().filter(|&n| n > 0).collect::<Vec<_>>(),
        vec![4 * 64 * (13 + 64 + 1), 4 * 64 * (64 + 64 + 1), 64 * 64 + 64, 64 * 2 + 2]
    );
}

#[test]
fn cnn_rejects_inputs_too_small_to_pool_twice() {
    assert!(matches!(Classifier::build(&ModelSpec::new(ModelKind::Cnn, 3, 13), 0), Err(Error::Config(_))));
    assert!(Classifier::build(&ModelSpec::new(ModelKind::Cnn, 4, 4), 0).is_ok());
}

#[test]
fn outputs_are_distributions_and_seeded() {
    for kind in ModelKind::ALL {
        let spec = ModelSpec::new(kind, 20, 13);
        let a = Classifier::build(&spec, 3).unwrap();
        let b = Classifier::build(&spec, 3).unwrap();
        let c = Classifier::build(&spec, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.network().params(), c.network().params());
        let p = a.predict_proba(&random_input(20 * 13, 1)).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(libm::fabs(p.iter().sum::<f64>() - 1.0) < 1e-12);
    }
}

#[test]
fn full_models_match_finite_differences() {
    const EPS: f64 = 1e-5;
    for kind in ModelKind::ALL {
        let spec = toy_spec(kind);
        let model = Classifier::build(&spec, 11).unwrap();
        assert!(model.n_params() <= 1000, "{kind}: {}", model.n_params());
        let x = random_input(spec.frames * spec.n_mfcc, 5);
        let seed = 77;
        let mut grad = vec![0.0; model.n_params()];
        model.accumulate_gradient(&x, 1, seed, &mut grad).unwrap();
        let mut probe = model.clone();
        let mut scratch = vec![0.0; model.n_params()];
        let mut worst: f64 = 0.0;
        for i in 0..model.n_params() {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + EPS;
            let up = probe.accumulate_gradient(&x, 1, seed, &mut scratch).unwrap().0;
            probe.params_mut()[i] = orig - EPS;
            let down = probe.accumulate_gradient(&x, 1, seed, &mut scratch).unwrap().0;
            probe.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * EPS);
            worst = worst.max(libm::fabs(fd - grad[i]) / libm::fabs(fd).max(libm::fabs(grad[i])).max(1e-6));
        }
        assert!(worst <= 1e-5, "{kind}: {worst:e}");
    }
}

#[test]
fn untrained_models_are_near_uniform() {
    // Over 100 initializations: the seed-averaged distribution sits inside
    // [0.3, 0.7] and the median confidence stays below 0.75.
    for kind in ModelKind::ALL {
        let frames = if kind == ModelKind::Ann { 212 } else { 40 };
        let spec = ModelSpec::new(kind, frames, 13);
        let x = random_input(frames * 13, 99);
        let mut first = 0.0;
        let mut confidence: Vec<f64> = (0..100u64)
            .map(|seed| {
                let p = Classifier::build(&spec, seed).unwrap().predict_proba(&x).unwrap();
                first += p[0];
                p[0].max(p[1])
            })
            .collect();
        confidence.sort_by(f64::total_cmp);
        let mean = first / 100.0;
        assert!((0.3..=0.7).contains(&mean), "{kind}: mean p0 {mean}");
        assert!(confidence[50] <= 0.75, "{kind}: median confidence {}", confidence[50]);
    }
}

fn toy_track_model(kind: ModelKind, duration_s: f64) -> TrackModel {
    let mfcc = MfccConfig { frame_len: 256, hop: 128, n_mels: 12, n_mfcc: 5, ..MfccConfig::default() };
    let rate = 4000;
    let frames = mfcc.frame_count(segment_len(rate, duration_s).unwrap());
    let mut spec = toy_spec(kind);
    spec.frames = frames;
    spec.n_mfcc = 5;
    TrackModel {
        classifier: Classifier::build(&spec, 2).unwrap(),
        normalizer: Normalizer { mean: vec![-20.0, 0.0, 0.0, 0.0, 0.0], std: vec![10.0; 5] },
        mfcc,
        sample_rate: rate,
        duration_s,
    }
}

fn chirp(seconds: f64, rate: u32) -> AudioClip {
    let n = (seconds * f64::from(rate)) as usize;
    let s = (0..n).map(|i| (0.3 * libm::sin(i as f64 * (0.05 + i as f64 * 1e-6))) as f32).collect();
    AudioClip::new(s, rate)
}

#[test]
fn track_votes_cover_every_segment() {
    let m = toy_track_model(ModelKind::Rnn, 0.5);
    let v = predict_track(&m, &chirp(6.2, 4000)).unwrap();
    assert_eq!(v.per_segment.len(), 12);
    assert_eq!(v.vote_counts.iter().sum::<usize>(), 12);
    let winner_votes = v.vote_counts[v.class];
    assert!(v.vote_counts.iter().all(|&c| c <= winner_votes));
    assert!(libm::fabs(v.mean_probs.iter().sum::<f64>() - 1.0) < 1e-9);
}

#[test]
fn single_segment_track_equals_segment_argmax() {
    for kind in ModelKind::ALL {
        let m = toy_track_model(kind, 0.5);
        let clip = chirp(0.7, 4000);
        let v = predict_track(&m, &clip).unwrap();
        let ex = MfccExtractor::new(&m.mfcc, 4000).unwrap();
        let p = predict_segment(&m, &ex.extract(&clip.samples[..2000]).unwrap()).unwrap();
        assert_eq!(v.per_segment, vec![p.clone()]);
        assert_eq!(v.class, argmax(&p));
    }
}

#[test]
fn track_shorter_than_a_segment_errors() {
    let m = toy_track_model(ModelKind::Ann, 0.5);
    let err = predict_track(&m, &chirp(0.3, 4000)).unwrap_err();
    assert!(matches!(err, Error::ClipTooShort { .. }));
    assert!(alloc::string::ToString::to_string(&err).contains("clip shorter than one segment"));
}

#[test]
fn segment_shape_mismatch_errors() {
    let m = toy_track_model(ModelKind::Ann, 0.5);
    let wrong = MfccMatrix::new(3, 5, vec![0.0; 15]).unwrap();
    assert!(matches!(predict_segment(&m, &wrong), Err(Error::Shape { .. })));
}
