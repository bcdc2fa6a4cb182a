use super::*;
use crate::nn::{evaluate, train, Example, NoClock, StopReason, TrainConfig};
use rand::{Rng as _, SeedableRng};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    libm::fabs(a - n) / libm::fabs(a).max(libm::fabs(n)).max(1e-6)
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Central finite differences of `sum(r * net(x))` against `backward`, over
/// every parameter and input. Returns the max relative error.
fn grad_check(net: &Network, x: &[f64], mode: Mode, seed: u64) -> f64 {
    let r = random_vec(net.output_len(), seed ^ 0xabc);
    let objective = |n: &Network, x: &[f64]| -> f64 {
        let t = n.forward(x, mode).unwrap();
        t.output().iter().zip(&r).map(|(a, b)| a * b).sum()
    };
    let trace = net.forward(x, mode).unwrap();
    let mut grad = vec![0.0; net.n_params()];
    let dx = net.backward(&trace, &r, &mut grad);
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for i in 0..net.n_params() {
        let orig = probe.params[i];
        probe.params[i] = orig + EPS;
        let up = objective(&probe, x);
        probe.params[i] = orig - EPS;
        let down = objective(&probe, x);
        probe.params[i] = orig;
        worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * EPS)));
    }
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + EPS;
        let up = objective(net, &xp);
        xp[i] = orig - EPS;
        let down = objective(net, &xp);
        xp[i] = orig;
        worst = worst.max(rel_err(dx[i], (up - down) / (2.0 * EPS)));
    }
    worst
}

fn check_layer(input_shape: &[usize], specs: &[LayerSpec], mode: Mode) {
    for seed in 0..3 {
        let net = Network::new(input_shape, specs, seed).unwrap();
        let x = random_vec(net.input_len(), seed + 100);
        let err = grad_check(&net, &x, mode, seed);
        assert!(err <= TOL, "{specs:?} seed {seed}: max rel err {err:e}");
    }
}

#[test]
fn dense_gradient() {
    check_layer(&[5], &[LayerSpec::Dense { units: 4 }], Mode::Eval);
}

#[test]
fn relu_gradient() {
    check_layer(&[7], &[LayerSpec::Dense { units: 6 }, LayerSpec::Relu], Mode::Eval);
}

#[test]
fn dropout_gradient_with_fixed_mask() {
    check_layer(&[6], &[LayerSpec::Dropout { rate: 0.4 }, LayerSpec::Dense { units: 3 }], Mode::Train { seed: 17 });
}

#[test]
fn conv2d_gradient() {
    check_layer(&[5, 4, 2], &[LayerSpec::Conv2d { filters: 3, kernel: [3, 3] }], Mode::Eval);
    check_layer(&[4, 3, 1], &[LayerSpec::Conv2d { filters: 2, kernel: [2, 2] }], Mode::Eval);
}

#[test]
fn maxpool_gradient() {
    check_layer(&[4, 5, 2], &[LayerSpec::MaxPool2d, LayerSpec::Flatten], Mode::Eval);
}

#[test]
fn lstm_gradient() {
    check_layer(&[4, 3], &[LayerSpec::Lstm { units: 3, return_sequences: true }], Mode::Eval);
    check_layer(&[5, 2], &[LayerSpec::Lstm { units: 4, return_sequences: false }], Mode::Eval);
    check_layer(
        &[4, 3],
        &[LayerSpec::Lstm { units: 3, return_sequences: true }, LayerSpec::Lstm { units: 2, return_sequences: false }],
        Mode::Eval,
    );
}

#[test]
fn softmax_cross_entropy_gradient_through_network() {
    let specs = [LayerSpec::Dense { units: 4 }, LayerSpec::Relu, LayerSpec::Dense { units: 2 }];
    let net = Network::new(&[3], &specs, 5).unwrap();
    let x = random_vec(3, 8);
    for label in 0..2 {
        let mut grad = vec![0.0; net.n_params()];
        let (loss, _) = net.accumulate_gradient(&x, label, 0, &mut grad).unwrap();
        assert!(loss > 0.0);
        let mut probe = net.clone();
        for i in 0..net.n_params() {
            let orig = probe.params[i];
            probe.params[i] = orig + EPS;
            let up = -probe.log_proba(&x).unwrap()[label];
            probe.params[i] = orig - EPS;
            let down = -probe.log_proba(&x).unwrap()[label];
            probe.params[i] = orig;
            assert!(rel_err(grad[i], (up - down) / (2.0 * EPS)) <= TOL);
        }
    }
}

#[test]
fn lstm_forget_bias_starts_at_one() {
    let net = Network::new(&[3, 2], &[LayerSpec::Lstm { units: 4, return_sequences: false }], 1).unwrap();
    let b = &net.params()[4 * 4 * 2 + 4 * 4 * 4..];
    assert_eq!(b.len(), 16);
    assert!(b[..4].iter().all(|&v| v == 0.0));
    assert!(b[4..8].iter().all(|&v| v == 1.0));
    assert!(b[8..].iter().all(|&v| v == 0.0));
}

#[test]
fn dropout_is_identity_in_eval() {
    let net = Network::new(&[10], &[LayerSpec::Dropout { rate: 0.5 }], 0).unwrap();
    let x = random_vec(10, 1);
    assert_eq!(net.forward(&x, Mode::Eval).unwrap().output(), &x[..]);
    let t = net.forward(&x, Mode::Train { seed: 3 }).unwrap();
    assert!(t.output().iter().zip(&x).all(|(y, x)| *y == 0.0 || libm::fabs(y - 2.0 * x) < 1e-15));
    assert_ne!(t.output(), &x[..]);
}

#[test]
fn shape_errors_name_the_layer() {
    let err = Network::new(&[4, 3], &[LayerSpec::Dense { units: 2 }], 0).unwrap_err();
    match err {
        Error::Shape { layer, .. } => assert!(layer.contains("dense") && layer.contains("layer 0")),
        other => panic!("{other:?}"),
    }
    let net = Network::new(&[3], &[LayerSpec::Dense { units: 2 }], 0).unwrap();
    assert!(matches!(net.forward(&[1.0; 4], Mode::Eval), Err(Error::Shape { .. })));
    assert!(Network::from_params(&[3], &[LayerSpec::Dense { units: 2 }], vec![0.0; 7]).is_err());
}

/// Validation loss follows a fixed schedule indexed by how many optimizer
/// steps have been taken (one per epoch with a single training example).
struct Scripted {
    params: Vec<f64>,
    schedule: Vec<f64>,
    lr: f64,
}

impl Scripted {
    fn epoch(&self) -> usize {
        libm::round(self.params[0] / self.lr) as usize
    }
}

impl Model for Scripted {
    fn params(&self) -> &[f64] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
    fn log_proba(&self, _x: &[f64]) -> Result<Vec<f64>> {
        let e = self.epoch().clamp(1, self.schedule.len());
        let loss = self.schedule[e - 1];
        Ok(vec![-loss, libm::log(1.0 - libm::exp(-loss))])
    }
    fn accumulate_gradient(&self, _x: &[f64], _label: usize, _seed: u64, grad: &mut [f64]) -> Result<(f64, usize)> {
        grad[0] -= 1.0;
        Ok((1.0, 0))
    }
}

fn scripted(schedule: Vec<f64>) -> Scripted {
    Scripted { params: vec![0.0], schedule, lr: 1e-3 }
}

#[test]
fn early_stopping_at_best_plus_patience() {
    let best = 7;
    let schedule: Vec<f64> = (1..=100).map(|e| if e <= best { 2.0 - 0.1 * e as f64 } else { 1.5 + 0.001 * e as f64 }).collect();
    let mut m = scripted(schedule.clone());
    let x = [0.0];
    let set = [Example { x: &x, label: 0 }];
    let out = train(&mut m, &set, &set, &TrainConfig::default(), &NoClock).unwrap();
    assert_eq!(out.stop_reason, StopReason::EarlyStopping);
    assert_eq!(out.best_epoch, best);
    assert_eq!(out.epochs_run(), best + 10);
    assert_eq!(out.metrics[best - 1].val_loss, schedule[best - 1]);
    let restored = evaluate(&m, &set).unwrap();
    assert_eq!(restored.mean_loss.to_bits(), out.best_val_loss.to_bits());
}

#[test]
fn improving_run_hits_max_epochs() {
    let mut m = scripted((1..=100).map(|e| 1.0 / e as f64).collect());
    let x = [0.0];
    let set = [Example { x: &x, label: 0 }];
    let out = train(&mut m, &set, &set, &TrainConfig::default(), &NoClock).unwrap();
    assert_eq!(out.stop_reason, StopReason::MaxEpochs);
    assert_eq!(out.epochs_run(), 100);
    assert_eq!(out.best_epoch, 100);
}

struct Exploding;

impl Model for Exploding {
    fn params(&self) -> &[f64] {
        &[]
    }
    fn params_mut(&mut self) -> &mut [f64] {
        &mut []
    }
    fn log_proba(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![-0.5, -1.0])
    }
    fn accumulate_gradient(&self, _x: &[f64], _l: usize, _s: u64, _g: &mut [f64]) -> Result<(f64, usize)> {
        Ok((f64::NAN, 0))
    }
}

#[test]
fn nan_loss_aborts_with_location() {
    let x = [0.0];
    let set = [Example { x: &x, label: 0 }];
    let err = train(&mut Exploding, &set, &set, &TrainConfig::default(), &NoClock).unwrap_err();
    assert_eq!(err, Error::NonFiniteLoss { epoch: 1, batch: 0 });
}

fn separable(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        let label = i % 2;
        let sign = if label == 0 { -1.0 } else { 1.0 };
        xs.push(vec![sign + rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0)]);
        ys.push(label);
    }
    (xs, ys)
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let (xs, ys) = separable(64, 1);
    let set: Vec<Example<'_>> = xs.iter().zip(&ys).map(|(x, &label)| Example { x, label }).collect();
    let specs = [LayerSpec::Dense { units: 8 }, LayerSpec::Relu, LayerSpec::Dropout { rate: 0.2 }, LayerSpec::Dense { units: 2 }];
    let cfg = TrainConfig { max_epochs: 30, adam: crate::nn::AdamConfig { lr: 1e-2, ..Default::default() }, seed: 9, ..Default::default() };
    let run = || {
        let mut net = Network::new(&[2], &specs, 4).unwrap();
        let before = evaluate(&net, &set).unwrap();
        let out = train(&mut net, &set, &set, &cfg, &NoClock).unwrap();
        (before, out, net)
    };
    let (before, a, net) = run();
    let (_, b, _) = run();
    assert_eq!(a.metrics, b.metrics);
    assert!(a.metrics[0].train_loss < before.mean_loss);
    let after = evaluate(&net, &set).unwrap();
    assert!(after.mean_loss < before.mean_loss);
    assert!(after.accuracy > 0.95);
}

#[test]
fn evaluation_counts() {
    // Constant predictor: always class 0.
    let net = Network::from_params(&[1], &[LayerSpec::Dense { units: 2 }], vec![0.0, 0.0, 1.0, 0.0]).unwrap();
    let x = [0.3];
    let set: Vec<Example<'_>> = (0..10).map(|i| Example { x: &x, label: usize::from(i >= 6) }).collect();
    let ev = evaluate(&net, &set).unwrap();
    assert!(libm::fabs(ev.accuracy - 0.6) < 1e-12);
    assert_eq!(ev.confusion, vec![vec![6, 0], vec![4, 0]]);
    let tp_tn = (ev.confusion[0][0] + ev.confusion[1][1]) as f64 / 10.0;
    assert_eq!(tp_tn, ev.accuracy);
    let all_right: Vec<Example<'_>> = (0..4).map(|_| Example { x: &x, label: 0 }).collect();
    let ev = evaluate(&net, &all_right).unwrap();
    assert_eq!(ev.accuracy, 1.0);
    assert_eq!(ev.confusion[0][1] + ev.confusion[1][0], 0);
    assert!(matches!(evaluate(&net, &[]), Err(Error::Empty(_))));
}
