//! The ANN, CNN and RNN (LSTM) classifiers over MFCC input, and
//! segment/track-level prediction.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::audio::{resample, segment, segment_len, AudioClip, TailPolicy};
use crate::dataset::Scheme;
use crate::features::{MfccConfig, MfccExtractor, MfccMatrix, Normalizer};
use crate::nn::{argmax, softmax, LayerSpec, Model, Network};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ann,
    Cnn,
    Rnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Ann, ModelKind::Cnn, ModelKind::Rnn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ann => "ann",
            ModelKind::Cnn => "cnn",
            ModelKind::Rnn => "rnn",
        }
    }

    /// The ANN uses 80:20 train/val; CNN and RNN use 80:10:10.
    pub fn split_scheme(self) -> Scheme {
        match self {
            ModelKind::Ann => Scheme::TrainVal,
            ModelKind::Cnn | ModelKind::Rnn => Scheme::TrainValTest,
        }
    }
}

impl core::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ann" => Ok(ModelKind::Ann),
            "cnn" => Ok(ModelKind::Cnn),
            "rnn" | "lstm" => Ok(ModelKind::Rnn),
            other => Err(Error::InvalidArgument(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Widths and depths of the three architectures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub ann_hidden: Vec<usize>,
    /// Applied after every ANN hidden layer except the last.
    pub ann_dropout: f64,
    pub cnn_filters: usize,
    pub cnn_kernel: usize,
    pub cnn_blocks: usize,
    pub cnn_dense: usize,
    pub cnn_dropout: f64,
    pub rnn_units: Vec<usize>,
    pub rnn_dense: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            ann_hidden: vec![512, 256, 64],
            ann_dropout: 0.3,
            cnn_filters: 32,
            cnn_kernel: 3,
            cnn_blocks: 2,
            cnn_dense: 64,
            cnn_dropout: 0.3,
            rnn_units: vec![64, 64],
            rnn_dense: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub frames: usize,
    pub n_mfcc: usize,
    pub n_classes: usize,
    #[serde(default)]
    pub arch: ArchConfig,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, frames: usize, n_mfcc: usize) -> Self {
        Self { kind, frames, n_mfcc, n_classes: 2, arch: ArchConfig::default() }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self.kind {
            ModelKind::Cnn => vec![self.frames, self.n_mfcc, 1],
            ModelKind::Ann | ModelKind::Rnn => vec![self.frames, self.n_mfcc],
        }
    }

    /// Layer stack; every stack ends in a `n_classes` logit layer whose
    /// softmax is the class distribution.
    pub fn layers(&self) -> Result<Vec<LayerSpec>> {
        if self.frames == 0 || self.n_mfcc == 0 {
            return Err(Error::Config("model input needs at least one frame and coefficient".into()));
        }
        let a = &self.arch;
        let mut layers = Vec::new();
        match self.kind {
            ModelKind::Ann => {
                layers.push(LayerSpec::Flatten);
                for (i, &units) in a.ann_hidden.iter().enumerate() {
                    layers.push(LayerSpec::Dense { units });
                    layers.push(LayerSpec::Relu);
                    if i + 1 < a.ann_hidden.len() && a.ann_dropout > 0.0 {
                        layers.push(LayerSpec::Dropout { rate: a.ann_dropout });
                    }
                }
            }
            ModelKind::Cnn => {
                let min = 1usize << a.cnn_blocks;
                if self.frames < min || self.n_mfcc < min {
                    return Err(Error::Config(format!(
                        "CNN with {} pooling stages needs at least {min} frames and coefficients, got {}x{}",
                        a.cnn_blocks, self.frames, self.n_mfcc
                    )));
                }
                for _ in 0..a.cnn_blocks {
                    layers.push(LayerSpec::Conv2d { filters: a.cnn_filters, kernel: [a.cnn_kernel; 2] });
                    layers.push(LayerSpec::Relu);
                    layers.push(LayerSpec::MaxPool2d);
                }
                layers.push(LayerSpec::Flatten);
                layers.push(LayerSpec::Dense { units: a.cnn_dense });
                layers.push(LayerSpec::Relu);
                if a.cnn_dropout > 0.0 {
                    layers.push(LayerSpec::Dropout { rate: a.cnn_dropout });
                }
            }
            ModelKind::Rnn => {
                if a.rnn_units.is_empty() {
                    return Err(Error::Config("RNN needs at least one LSTM layer".into()));
                }
                for (i, &units) in a.rnn_units.iter().enumerate() {
                    layers.push(LayerSpec::Lstm { units, return_sequences: i + 1 < a.rnn_units.len() });
                }
                layers.push(LayerSpec::Dense { units: a.rnn_dense });
                layers.push(LayerSpec::Relu);
            }
        }
        layers.push(LayerSpec::Dense { units: self.n_classes });
        Ok(layers)
    }
}

/// A network built from a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    spec: ModelSpec,
    net: Network,
}

impl Classifier {
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let net = Network::new(&spec.input_shape(), &spec.layers()?, seed)?;
        Ok(Self { spec: spec.clone(), net })
    }

    pub fn from_params(spec: &ModelSpec, params: Vec<f64>) -> Result<Self> {
        let net = Network::from_params(&spec.input_shape(), &spec.layers()?, params)?;
        Ok(Self { spec: spec.clone(), net })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params()
    }

    /// Parameter count of each layer, in stack order.
    pub fn layer_param_counts(&self) -> Vec<usize> {
        self.net.layers().iter().map(|l| l.n_params).collect()
    }

    /// Class distribution for one flattened (already normalized) input.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.net.logits(x)?))
    }
}

impl Model for Classifier {
    fn params(&self) -> &[f64] {
        self.net.params()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }

    fn log_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.net.log_proba(x)
    }

    fn accumulate_gradient(&self, x: &[f64], label: usize, seed: u64, grad: &mut [f64]) -> Result<(f64, usize)> {
        self.net.accumulate_gradient(x, label, seed, grad)
    }
}

/// A trained classifier plus everything needed to featurize raw audio the
/// way its training data was featurized.
#[derive(Debug, Clone)]
pub struct TrackModel {
    pub classifier: Classifier,
    pub normalizer: Normalizer,
    pub mfcc: MfccConfig,
    pub sample_rate: u32,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackVerdict {
    pub class: usize,
    pub per_segment: Vec<Vec<f64>>,
    pub vote_counts: Vec<usize>,
    pub mean_probs: Vec<f64>,
}

/// Class distribution of one raw (un-normalized) MFCC matrix.
pub fn predict_segment(model: &TrackModel, mfcc: &MfccMatrix) -> Result<Vec<f64>> {
    let spec = model.classifier.spec();
    if mfcc.shape() != (spec.frames, spec.n_mfcc) {
        return Err(Error::Shape {
            layer: "model input".into(),
            expected: format!("{}x{}", spec.frames, spec.n_mfcc),
            actual: format!("{}x{}", mfcc.frames(), mfcc.n_coeffs()),
        });
    }
    let normed = model.normalizer.apply(mfcc)?;
    model.classifier.predict_proba(normed.values())
}

/// Segments a clip at the model's training duration, classifies each
/// segment and takes a majority vote. Ties go to the class with the higher
/// mean probability, then to the lower class index.
pub fn predict_track(model: &TrackModel, clip: &AudioClip) -> Result<TrackVerdict> {
    let clip = resample(clip, model.sample_rate)?;
    let seg_len = segment_len(model.sample_rate, model.duration_s)?;
    if clip.samples.len() < seg_len {
        return Err(Error::ClipTooShort { clip_samples: clip.samples.len(), segment_samples: seg_len });
    }
    let extractor = MfccExtractor::new(&model.mfcc, model.sample_rate)?;
    let n_classes = model.classifier.spec().n_classes;
    let mut per_segment = Vec::new();
    let mut votes = vec![0usize; n_classes];
    let mut mean = vec![0.0; n_classes];
    for seg in segment(&clip, model.duration_s, TailPolicy::Drop)? {
        let probs = predict_segment(model, &extractor.extract(&seg.samples)?)?;
        votes[argmax(&probs)] += 1;
        for (m, p) in mean.iter_mut().zip(&probs) {
            *m += p;
        }
        per_segment.push(probs);
    }
    let n = per_segment.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let class = (0..n_classes)
        .max_by(|&a, &b| {
            votes[a]
                .cmp(&votes[b])
                .then(mean[a].partial_cmp(&mean[b]).unwrap_or(core::cmp::Ordering::Equal))
                .then(b.cmp(&a))
        })
        .unwrap_or(0);
    Ok(TrackVerdict { class, per_segment, vote_counts: votes, mean_probs: mean })
}

#[cfg(test)]
mod tests;
