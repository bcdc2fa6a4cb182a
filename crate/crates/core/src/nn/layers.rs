use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::{rng_from_seed, Rng};
use crate::{Error, Result};

/// Architecture-level description of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { units: usize },
    Relu,
    /// Inverted dropout; identity at evaluation time.
    Dropout { rate: f64 },
    /// Same padding, stride 1, HWC layout.
    Conv2d { filters: usize, kernel: [usize; 2] },
    /// 2x2 window, stride 2; odd trailing rows/columns are dropped.
    MaxPool2d,
    Flatten,
    /// Gate order i, f, g, o. Emits the full hidden sequence or only the last state.
    Lstm { units: usize, return_sequences: bool },
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d => "maxpool2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Lstm { .. } => "lstm",
        }
    }
}

/// A layer with resolved shapes and its slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub offset: usize,
    pub n_params: usize,
}

/// Per-example state kept from forward for backward.
#[derive(Debug, Clone)]
pub(crate) enum Cache {
    None,
    /// Relu derivative or scaled dropout mask.
    Mask(Vec<f64>),
    Argmax(Vec<usize>),
    Lstm(LstmCache),
}

#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    /// Activated gates per step, `T x 4h`.
    gates: Vec<f64>,
    /// Cell states `(T+1) x h`, row 0 is the zero initial state.
    c: Vec<f64>,
    /// Hidden states `(T+1) x h`, row 0 is the zero initial state.
    h: Vec<f64>,
    /// `tanh(c_t)` per step, `T x h`.
    tanh_c: Vec<f64>,
}

fn shape_err(layer: &str, expected: String, actual: &[usize]) -> Error {
    Error::Shape { layer: layer.into(), expected, actual: format!("{actual:?}") }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Eight independent partial sums so the loop vectorizes; the summation
/// order is fixed, so results stay bitwise reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn glorot(rng: &mut Rng, fan_in: usize, fan_out: usize, out: &mut [f64]) {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    for w in out {
        *w = rng.random_range(-limit..limit);
    }
}

impl Layer {
    /// Resolves output shape and parameter count for `spec` applied to `in_shape`.
    pub fn resolve(spec: &LayerSpec, in_shape: &[usize], offset: usize) -> Result<Self> {
        let name = spec.name();
        let (out_shape, n_params) = match *spec {
            LayerSpec::Dense { units } => {
                let [n] = in_shape else {
                    return Err(shape_err(name, "a vector (flatten first)".into(), in_shape));
                };
                if units == 0 || *n == 0 {
                    return Err(shape_err(name, "non-empty input and output".into(), in_shape));
                }
                (vec![units], units * n + units)
            }
            LayerSpec::Relu | LayerSpec::Flatten => {
                let out = if *spec == LayerSpec::Flatten { vec![in_shape.iter().product()] } else { in_shape.to_vec() };
                (out, 0)
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
                }
                (in_shape.to_vec(), 0)
            }
            LayerSpec::Conv2d { filters, kernel: [kh, kw] } => {
                let [h, w, c] = in_shape else {
                    return Err(shape_err(name, "[height, width, channels]".into(), in_shape));
                };
                if filters == 0 || kh == 0 || kw == 0 || *h == 0 || *w == 0 || *c == 0 {
                    return Err(shape_err(name, "non-zero dimensions".into(), in_shape));
                }
                (vec![*h, *w, filters], filters * kh * kw * c + filters)
            }
            LayerSpec::MaxPool2d => {
                let [h, w, c] = in_shape else {
                    return Err(shape_err(name, "[height, width, channels]".into(), in_shape));
                };
                if *h < 2 || *w < 2 {
                    return Err(shape_err(name, "height and width >= 2".into(), in_shape));
                }
                (vec![h / 2, w / 2, *c], 0)
            }
            LayerSpec::Lstm { units, return_sequences } => {
                let [t, f] = in_shape else {
                    return Err(shape_err(name, "[steps, features]".into(), in_shape));
                };
                if units == 0 || *t == 0 || *f == 0 {
                    return Err(shape_err(name, "non-zero steps, features and units".into(), in_shape));
                }
                let out = if return_sequences { vec![*t, units] } else { vec![units] };
                (out, 4 * units * f + 4 * units * units + 4 * units)
            }
        };
        Ok(Self { spec: spec.clone(), in_shape: in_shape.to_vec(), out_shape, offset, n_params })
    }

    pub fn in_len(&self) -> usize {
        self.in_shape.iter().product()
    }

    pub fn out_len(&self) -> usize {
        self.out_shape.iter().product()
    }

    /// Glorot-uniform weights, zero biases, LSTM forget-gate bias 1.
    pub(crate) fn init(&self, rng: &mut Rng, p: &mut [f64]) {
        match self.spec {
            LayerSpec::Dense { units } => {
                let n = self.in_shape[0];
                glorot(rng, n, units, &mut p[..units * n]);
                p[units * n..].fill(0.0);
            }
            LayerSpec::Conv2d { filters, kernel: [kh, kw] } => {
                let c = self.in_shape[2];
                let nk = filters * kh * kw * c;
                glorot(rng, kh * kw * c, kh * kw * filters, &mut p[..nk]);
                p[nk..].fill(0.0);
            }
            LayerSpec::Lstm { units: h, .. } => {
                let f = self.in_shape[1];
                let (wx, rest) = p.split_at_mut(4 * h * f);
                let (wh, b) = rest.split_at_mut(4 * h * h);
                glorot(rng, f, 4 * h, wx);
                glorot(rng, h, 4 * h, wh);
                b.fill(0.0);
                b[h..2 * h].fill(1.0);
            }
            _ => {}
        }
    }

    /// Forward pass for one example. `seed` drives dropout masks in training.
    pub(crate) fn forward(&self, p: &[f64], x: &[f64], train_seed: Option<u64>) -> (Vec<f64>, Cache) {
        debug_assert_eq!(x.len(), self.in_len());
        match self.spec {
            LayerSpec::Dense { units } => {
                let n = self.in_shape[0];
                let (w, b) = p.split_at(units * n);
                let y = w.chunks_exact(n).zip(b).map(|(row, bo)| bo + dot(row, x)).collect();
                (y, Cache::None)
            }
            LayerSpec::Relu => {
                let mask: Vec<f64> = x.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
                (x.iter().map(|&v| v.max(0.0)).collect(), Cache::Mask(mask))
            }
            LayerSpec::Dropout { rate } => match train_seed {
                Some(seed) if rate > 0.0 => {
                    let mut rng = rng_from_seed(seed);
                    let keep = 1.0 / (1.0 - rate);
                    let mask: Vec<f64> =
                        x.iter().map(|_| if rng.random::<f64>() >= rate { keep } else { 0.0 }).collect();
                    (x.iter().zip(&mask).map(|(a, m)| a * m).collect(), Cache::Mask(mask))
                }
                _ => (x.to_vec(), Cache::None),
            },
            LayerSpec::Flatten => (x.to_vec(), Cache::None),
            LayerSpec::Conv2d { filters, kernel } => (self.conv_forward(p, x, filters, kernel), Cache::None),
            LayerSpec::MaxPool2d => {
                let (y, arg) = self.pool_forward(x);
                (y, Cache::Argmax(arg))
            }
            LayerSpec::Lstm { units, return_sequences } => {
                let cache = self.lstm_forward(p, x, units);
                let t = self.in_shape[0];
                let y = if return_sequences {
                    cache.h[units..].to_vec()
                } else {
                    cache.h[t * units..].to_vec()
                };
                (y, Cache::Lstm(cache))
            }
        }
    }

    /// Backward pass for one example: accumulates parameter gradients into
    /// `grad` (this layer's slice) and returns the gradient w.r.t. `x`.
    pub(crate) fn backward(&self, p: &[f64], x: &[f64], cache: &Cache, dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(dy.len(), self.out_len());
        match (&self.spec, cache) {
            (LayerSpec::Dense { units }, _) => {
                let n = self.in_shape[0];
                let (w, _) = p.split_at(units * n);
                let (gw, gb) = grad.split_at_mut(units * n);
                let mut dx = vec![0.0; n];
                for (o, &d) in dy.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    axpy(d, x, &mut gw[o * n..(o + 1) * n]);
                    axpy(d, &w[o * n..(o + 1) * n], &mut dx);
                }
                dx
            }
            (LayerSpec::Relu | LayerSpec::Dropout { .. }, Cache::Mask(mask)) => {
                dy.iter().zip(mask).map(|(d, m)| d * m).collect()
            }
            (LayerSpec::Dropout { .. } | LayerSpec::Flatten, _) => dy.to_vec(),
            (LayerSpec::Conv2d { filters, kernel }, _) => self.conv_backward(p, x, *filters, *kernel, dy, grad),
            (LayerSpec::MaxPool2d, Cache::Argmax(arg)) => {
                let mut dx = vec![0.0; self.in_len()];
                for (&src, &d) in arg.iter().zip(dy) {
                    dx[src] += d;
                }
                dx
            }
            (LayerSpec::Lstm { units, return_sequences }, Cache::Lstm(c)) => {
                self.lstm_backward(p, x, *units, *return_sequences, c, dy, grad)
            }
            _ => unreachable!("cache does not match layer {}", self.spec.name()),
        }
    }

    /// Gathers the zero-padded receptive field of output pixel `(i, j)`.
    fn patch(&self, x: &[f64], i: usize, j: usize, [kh, kw]: [usize; 2], out: &mut [f64]) {
        let (h, w, c) = (self.in_shape[0] as isize, self.in_shape[1] as isize, self.in_shape[2]);
        let (pt, pl) = (((kh - 1) / 2) as isize, ((kw - 1) / 2) as isize);
        for di in 0..kh {
            let r = i as isize + di as isize - pt;
            for dj in 0..kw {
                let col = j as isize + dj as isize - pl;
                let dst = &mut out[(di * kw + dj) * c..(di * kw + dj + 1) * c];
                if r < 0 || r >= h || col < 0 || col >= w {
                    dst.fill(0.0);
                } else {
                    let src = ((r * w + col) as usize) * c;
                    dst.copy_from_slice(&x[src..src + c]);
                }
            }
        }
    }

    fn scatter_patch(&self, dp: &[f64], i: usize, j: usize, [kh, kw]: [usize; 2], dx: &mut [f64]) {
        let (h, w, c) = (self.in_shape[0] as isize, self.in_shape[1] as isize, self.in_shape[2]);
        let (pt, pl) = (((kh - 1) / 2) as isize, ((kw - 1) / 2) as isize);
        for di in 0..kh {
            let r = i as isize + di as isize - pt;
            if r < 0 || r >= h {
                continue;
            }
            for dj in 0..kw {
                let col = j as isize + dj as isize - pl;
                if col < 0 || col >= w {
                    continue;
                }
                let dst = ((r * w + col) as usize) * c;
                for (a, b) in dx[dst..dst + c].iter_mut().zip(&dp[(di * kw + dj) * c..(di * kw + dj + 1) * c]) {
                    *a += b;
                }
            }
        }
    }

    fn conv_forward(&self, p: &[f64], x: &[f64], filters: usize, kernel: [usize; 2]) -> Vec<f64> {
        let (h, w, c) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
        let plen = kernel[0] * kernel[1] * c;
        let (k, b) = p.split_at(filters * plen);
        let mut patch = vec![0.0; plen];
        let mut y = Vec::with_capacity(h * w * filters);
        for i in 0..h {
            for j in 0..w {
                self.patch(x, i, j, kernel, &mut patch);
                y.extend(k.chunks_exact(plen).zip(b).map(|(kf, bf)| bf + dot(kf, &patch)));
            }
        }
        y
    }

    fn conv_backward(&self, p: &[f64], x: &[f64], filters: usize, kernel: [usize; 2], dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let (h, w, c) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
        let plen = kernel[0] * kernel[1] * c;
        let (k, _) = p.split_at(filters * plen);
        let (gk, gb) = grad.split_at_mut(filters * plen);
        let mut patch = vec![0.0; plen];
        let mut dpatch = vec![0.0; plen];
        let mut dx = vec![0.0; h * w * c];
        for i in 0..h {
            for j in 0..w {
                let d = &dy[(i * w + j) * filters..(i * w + j + 1) * filters];
                if d.iter().all(|&v| v == 0.0) {
                    continue;
                }
                self.patch(x, i, j, kernel, &mut patch);
                dpatch.fill(0.0);
                for (f, &df) in d.iter().enumerate() {
                    if df == 0.0 {
                        continue;
                    }
                    gb[f] += df;
                    axpy(df, &patch, &mut gk[f * plen..(f + 1) * plen]);
                    axpy(df, &k[f * plen..(f + 1) * plen], &mut dpatch);
                }
                self.scatter_patch(&dpatch, i, j, kernel, &mut dx);
            }
        }
        dx
    }

    fn pool_forward(&self, x: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let (w, c) = (self.in_shape[1], self.in_shape[2]);
        let (oh, ow) = (self.out_shape[0], self.out_shape[1]);
        let mut y = Vec::with_capacity(oh * ow * c);
        let mut arg = Vec::with_capacity(oh * ow * c);
        for i in 0..oh {
            for j in 0..ow {
                for ch in 0..c {
                    let mut best = usize::MAX;
                    let mut best_v = f64::NEG_INFINITY;
                    for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let idx = ((2 * i + di) * w + 2 * j + dj) * c + ch;
                        if best == usize::MAX || x[idx] > best_v {
                            best = idx;
                            best_v = x[idx];
                        }
                    }
                    y.push(best_v);
                    arg.push(best);
                }
            }
        }
        (y, arg)
    }

    fn lstm_forward(&self, p: &[f64], x: &[f64], h: usize) -> LstmCache {
        let (t_len, f) = (self.in_shape[0], self.in_shape[1]);
        let (wx, rest) = p.split_at(4 * h * f);
        let (wh, b) = rest.split_at(4 * h * h);
        let mut gates = vec![0.0; t_len * 4 * h];
        let mut c = vec![0.0; (t_len + 1) * h];
        let mut hs = vec![0.0; (t_len + 1) * h];
        let mut tanh_c = vec![0.0; t_len * h];
        for t in 0..t_len {
            let xt = &x[t * f..(t + 1) * f];
            let (h_hist, h_next) = hs.split_at_mut((t + 1) * h);
            let h_prev = &h_hist[t * h..];
            let z = &mut gates[t * 4 * h..(t + 1) * 4 * h];
            for (r, zr) in z.iter_mut().enumerate() {
                *zr = b[r] + dot(&wx[r * f..(r + 1) * f], xt) + dot(&wh[r * h..(r + 1) * h], h_prev);
            }
            for (r, zr) in z.iter_mut().enumerate() {
                *zr = if (2 * h..3 * h).contains(&r) { libm::tanh(*zr) } else { sigmoid(*zr) };
            }
            let (c_hist, c_next) = c.split_at_mut((t + 1) * h);
            let c_prev = &c_hist[t * h..];
            for k in 0..h {
                let (i, fg, g, o) = (z[k], z[h + k], z[2 * h + k], z[3 * h + k]);
                let ct = fg * c_prev[k] + i * g;
                let tc = libm::tanh(ct);
                c_next[k] = ct;
                tanh_c[t * h + k] = tc;
                h_next[k] = o * tc;
            }
        }
        LstmCache { gates, c, h: hs, tanh_c }
    }

    #[allow(clippy::too_many_arguments)]
    fn lstm_backward(
        &self,
        p: &[f64],
        x: &[f64],
        h: usize,
        return_sequences: bool,
        cache: &LstmCache,
        dy: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        let (t_len, f) = (self.in_shape[0], self.in_shape[1]);
        let (wx, rest) = p.split_at(4 * h * f);
        let (wh, _) = rest.split_at(4 * h * h);
        let (gwx, grest) = grad.split_at_mut(4 * h * f);
        let (gwh, gb) = grest.split_at_mut(4 * h * h);
        let mut dx = vec![0.0; t_len * f];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..t_len).rev() {
            let mut dh = core::mem::take(&mut dh_next);
            if return_sequences {
                axpy(1.0, &dy[t * h..(t + 1) * h], &mut dh);
            } else if t == t_len - 1 {
                axpy(1.0, dy, &mut dh);
            }
            let z = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
            let c_prev = &cache.c[t * h..(t + 1) * h];
            let tc = &cache.tanh_c[t * h..(t + 1) * h];
            for k in 0..h {
                let (i, fg, g, o) = (z[k], z[h + k], z[2 * h + k], z[3 * h + k]);
                let d_o = dh[k] * tc[k];
                let dc = dc_next[k] + dh[k] * o * (1.0 - tc[k] * tc[k]);
                dz[k] = dc * g * i * (1.0 - i);
                dz[h + k] = dc * c_prev[k] * fg * (1.0 - fg);
                dz[2 * h + k] = dc * i * (1.0 - g * g);
                dz[3 * h + k] = d_o * o * (1.0 - o);
                dc_next[k] = dc * fg;
            }
            let xt = &x[t * f..(t + 1) * f];
            let h_prev = &cache.h[t * h..(t + 1) * h];
            let dxt = &mut dx[t * f..(t + 1) * f];
            dh_next = vec![0.0; h];
            for (r, &d) in dz.iter().enumerate() {
                gb[r] += d;
                axpy(d, xt, &mut gwx[r * f..(r + 1) * f]);
                axpy(d, h_prev, &mut gwh[r * h..(r + 1) * h]);
                axpy(d, &wx[r * f..(r + 1) * f], dxt);
                axpy(d, &wh[r * h..(r + 1) * h], &mut dh_next);
            }
        }
        dx
    }
}
