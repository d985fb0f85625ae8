//! Layer descriptors and their forward/backward kernels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{Act, Tensor};
use crate::error::{Error, Result};
use crate::linalg::{gemm, MatRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Elu,
    Tanh,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if y > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Linear => 1.0,
        }
    }
}

fn one() -> usize {
    1
}

/// One entry of an architecture descriptor.
///
/// Convolution and dense layers act on the channel axis of a
/// `[batch, time, channels]` activation, so a dense layer after a
/// convolution is applied position by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d {
        window: usize,
        in_channels: usize,
        out_channels: usize,
        #[serde(default = "one")]
        stride: usize,
        has_bias: bool,
    },
    /// Transposed convolution, output length `time + window - 1`.
    ConvTranspose1d {
        window: usize,
        in_channels: usize,
        out_channels: usize,
        has_bias: bool,
    },
    Dense {
        in_dim: usize,
        out_dim: usize,
        has_bias: bool,
        #[serde(default)]
        l1_coefficient: f64,
    },
    /// Average over time; `pool: None` averages the whole axis, otherwise
    /// non-overlapping bins of `pool` steps (the last bin may be partial).
    AvgPoolTime {
        #[serde(default)]
        pool: Option<usize>,
    },
    /// Nearest-neighbour upsampling along time, cropped to `out_len`.
    Upsample { factor: usize, out_len: usize },
    Activation { function: Activation },
    Dropout { rate: f64 },
    Flatten,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Conv1d {
                window,
                in_channels,
                out_channels,
                stride,
                ..
            } => {
                if stride != 1 {
                    return Err(Error::Format(format!("conv1d stride must be 1, got {stride}")));
                }
                if window == 0 || in_channels == 0 || out_channels == 0 {
                    return Err(Error::Format("conv1d dimensions must be positive".into()));
                }
            }
            LayerSpec::ConvTranspose1d {
                window,
                in_channels,
                out_channels,
                ..
            } => {
                if window == 0 || in_channels == 0 || out_channels == 0 {
                    return Err(Error::Format("conv_transpose1d dimensions must be positive".into()));
                }
            }
            LayerSpec::Dense {
                in_dim,
                out_dim,
                l1_coefficient,
                ..
            } => {
                if in_dim == 0 || out_dim == 0 {
                    return Err(Error::Format("dense dimensions must be positive".into()));
                }
                if !(l1_coefficient >= 0.0) {
                    return Err(Error::Format("l1 coefficient must be nonnegative".into()));
                }
            }
            LayerSpec::AvgPoolTime { pool } => {
                if pool == Some(0) {
                    return Err(Error::Format("pool size must be positive".into()));
                }
            }
            LayerSpec::Upsample { factor, out_len } => {
                if factor == 0 || out_len == 0 {
                    return Err(Error::Format("upsample factor and length must be positive".into()));
                }
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Format(format!("dropout rate must be in [0, 1), got {rate}")));
                }
            }
            LayerSpec::Activation { .. } | LayerSpec::Flatten => {}
        }
        Ok(())
    }

    /// Shapes of `(weight, bias)` parameters, if the layer has any.
    pub fn parameter_shapes(&self) -> (Option<Vec<usize>>, Option<Vec<usize>>) {
        match *self {
            LayerSpec::Conv1d {
                window,
                in_channels,
                out_channels,
                has_bias,
                ..
            }
            | LayerSpec::ConvTranspose1d {
                window,
                in_channels,
                out_channels,
                has_bias,
            } => (
                Some(vec![window, in_channels, out_channels]),
                has_bias.then(|| vec![out_channels]),
            ),
            LayerSpec::Dense {
                in_dim,
                out_dim,
                has_bias,
                ..
            } => (Some(vec![in_dim, out_dim]), has_bias.then(|| vec![out_dim])),
            _ => (None, None),
        }
    }

    /// Glorot fan-in and fan-out for weight initialization.
    pub fn fans(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Conv1d {
                window,
                in_channels,
                out_channels,
                ..
            }
            | LayerSpec::ConvTranspose1d {
                window,
                in_channels,
                out_channels,
                ..
            } => Some((window * in_channels, window * out_channels)),
            LayerSpec::Dense { in_dim, out_dim, .. } => Some((in_dim, out_dim)),
            _ => None,
        }
    }

    pub fn l1_coefficient(&self) -> f64 {
        match *self {
            LayerSpec::Dense { l1_coefficient, .. } => l1_coefficient,
            _ => 0.0,
        }
    }

    /// Output `(time, channels)` for an input of `(time, channels)`.
    pub fn output_shape(&self, time: usize, channels: usize) -> Result<(usize, usize)> {
        match *self {
            LayerSpec::Conv1d {
                window,
                in_channels,
                out_channels,
                ..
            } => {
                if channels != in_channels {
                    return Err(Error::Usage(format!(
                        "conv1d expects {in_channels} channels, got {channels}"
                    )));
                }
                if time < window {
                    return Err(Error::Usage(format!(
                        "conv1d window {window} exceeds input length {time}"
                    )));
                }
                Ok((time - window + 1, out_channels))
            }
            LayerSpec::ConvTranspose1d {
                window,
                in_channels,
                out_channels,
                ..
            } => {
                if channels != in_channels {
                    return Err(Error::Usage(format!(
                        "conv_transpose1d expects {in_channels} channels, got {channels}"
                    )));
                }
                Ok((time + window - 1, out_channels))
            }
            LayerSpec::Dense { in_dim, out_dim, .. } => {
                if channels != in_dim {
                    return Err(Error::Usage(format!(
                        "dense expects {in_dim} features, got {channels}"
                    )));
                }
                Ok((time, out_dim))
            }
            LayerSpec::AvgPoolTime { pool } => match pool {
                None => Ok((1, channels)),
                Some(p) => Ok((time.div_ceil(p), channels)),
            },
            LayerSpec::Upsample { factor, out_len } => {
                if (out_len - 1) / factor >= time {
                    return Err(Error::Usage(format!(
                        "cannot upsample {time} steps by {factor} to {out_len}"
                    )));
                }
                Ok((out_len, channels))
            }
            LayerSpec::Activation { .. } | LayerSpec::Dropout { .. } => Ok((time, channels)),
            LayerSpec::Flatten => Ok((1, time * channels)),
        }
    }
}

/// Values a layer keeps from the forward pass for its backward pass.
#[derive(Debug, Clone)]
pub(crate) enum LayerCache {
    /// im2col matrix `[batch·positions, window·in_channels]` plus input geometry.
    Conv { cols: Vec<f64>, in_time: usize },
    ConvTranspose { input: Act },
    Dense { input: Act },
    Pool { in_time: usize },
    Upsample { in_time: usize },
    Activation { output: Act },
    Dropout { mask: Vec<f64> },
    Flatten { time: usize, channels: usize },
    None,
}

pub(crate) struct LayerParams<'a> {
    pub weight: Option<&'a Tensor>,
    pub bias: Option<&'a Tensor>,
}

pub(crate) struct LayerGrads {
    pub weight: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

fn column_sums(data: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for row in data.chunks_exact(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

fn add_bias(data: &mut [f64], bias: Option<&Tensor>) {
    if let Some(b) = bias {
        let c = b.values.len();
        for row in data.chunks_exact_mut(c) {
            for (v, b) in row.iter_mut().zip(&b.values) {
                *v += b;
            }
        }
    }
}

/// `W'[c, k·out + o] = W[k, c, o]`, the layout the transposed convolution multiplies by.
fn permute_transpose_weight(w: &[f64], window: usize, cin: usize, cout: usize) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    for k in 0..window {
        for c in 0..cin {
            for o in 0..cout {
                out[c * window * cout + k * cout + o] = w[(k * cin + c) * cout + o];
            }
        }
    }
    out
}

fn unpermute_transpose_weight(wp: &[f64], window: usize, cin: usize, cout: usize) -> Vec<f64> {
    let mut out = vec![0.0; wp.len()];
    for k in 0..window {
        for c in 0..cin {
            for o in 0..cout {
                out[(k * cin + c) * cout + o] = wp[c * window * cout + k * cout + o];
            }
        }
    }
    out
}

/// Contiguous windows of `window` time steps: row `(b, p)` is `x[b, p..p+window, :]`.
fn im2col(x: &Act, window: usize) -> (Vec<f64>, usize) {
    let positions = x.time + 1 - window;
    let row = window * x.channels;
    let mut cols = Vec::with_capacity(x.batch * positions * row);
    for b in 0..x.batch {
        let base = b * x.per_sample();
        for p in 0..positions {
            let start = base + p * x.channels;
            cols.extend_from_slice(&x.data[start..start + row]);
        }
    }
    (cols, positions)
}

/// Adjoint of [`im2col`].
fn col2im(cols: &[f64], batch: usize, time: usize, channels: usize, window: usize) -> Act {
    let positions = time + 1 - window;
    let row = window * channels;
    let mut out = Act::zeros(batch, time, channels);
    for b in 0..batch {
        let base = b * time * channels;
        for p in 0..positions {
            let src = &cols[(b * positions + p) * row..(b * positions + p + 1) * row];
            let dst = &mut out.data[base + p * channels..base + p * channels + row];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    out
}

pub(crate) fn forward_layer(
    spec: &LayerSpec,
    params: &LayerParams<'_>,
    x: Act,
    training: bool,
    rng_seed: (u64, u64),
    keep_cache: bool,
) -> Result<(Act, LayerCache)> {
    let (out_time, out_channels) = spec.output_shape(x.time, x.channels)?;
    match *spec {
        LayerSpec::Conv1d {
            window,
            out_channels,
            ..
        } => {
            let w = params.weight.expect("conv weight");
            let (cols, positions) = im2col(&x, window);
            let rows = x.batch * positions;
            let k = window * x.channels;
            let mut out = Act::zeros(x.batch, positions, out_channels);
            gemm(
                MatRef::row_major(&cols, rows, k),
                MatRef::row_major(&w.values, k, out_channels),
                0.0,
                &mut out.data,
            );
            add_bias(&mut out.data, params.bias);
            let cache = if keep_cache {
                LayerCache::Conv {
                    cols,
                    in_time: x.time,
                }
            } else {
                LayerCache::None
            };
            Ok((out, cache))
        }
        LayerSpec::ConvTranspose1d {
            window,
            in_channels,
            out_channels,
            ..
        } => {
            let w = params.weight.expect("conv transpose weight");
            let wp = permute_transpose_weight(&w.values, window, in_channels, out_channels);
            let rows = x.batch * x.time;
            let zcols = window * out_channels;
            let mut z = vec![0.0; rows * zcols];
            gemm(
                MatRef::row_major(&x.data, rows, in_channels),
                MatRef::row_major(&wp, in_channels, zcols),
                0.0,
                &mut z,
            );
            let mut out = col2im(&z, x.batch, out_time, out_channels, window);
            add_bias(&mut out.data, params.bias);
            let cache = if keep_cache {
                LayerCache::ConvTranspose { input: x }
            } else {
                LayerCache::None
            };
            Ok((out, cache))
        }
        LayerSpec::Dense { in_dim, out_dim, .. } => {
            let w = params.weight.expect("dense weight");
            let rows = x.batch * x.time;
            let mut out = Act::zeros(x.batch, x.time, out_dim);
            gemm(
                MatRef::row_major(&x.data, rows, in_dim),
                MatRef::row_major(&w.values, in_dim, out_dim),
                0.0,
                &mut out.data,
            );
            add_bias(&mut out.data, params.bias);
            let cache = if keep_cache {
                LayerCache::Dense { input: x }
            } else {
                LayerCache::None
            };
            Ok((out, cache))
        }
        LayerSpec::AvgPoolTime { pool } => {
            let size = pool.unwrap_or(x.time);
            let c = x.channels;
            let mut out = Act::zeros(x.batch, out_time, c);
            for b in 0..x.batch {
                for bin in 0..out_time {
                    let start = bin * size;
                    let end = (start + size).min(x.time);
                    let scale = 1.0 / (end - start) as f64;
                    let dst = (b * out_time + bin) * c;
                    for t in start..end {
                        let src = (b * x.time + t) * c;
                        for ch in 0..c {
                            out.data[dst + ch] += x.data[src + ch] * scale;
                        }
                    }
                }
            }
            Ok((out, LayerCache::Pool { in_time: x.time }))
        }
        LayerSpec::Upsample { factor, out_len } => {
            let c = x.channels;
            let mut out = Act::zeros(x.batch, out_len, c);
            for b in 0..x.batch {
                for t in 0..out_len {
                    let src = (b * x.time + t / factor) * c;
                    let dst = (b * out_len + t) * c;
                    out.data[dst..dst + c].copy_from_slice(&x.data[src..src + c]);
                }
            }
            Ok((out, LayerCache::Upsample { in_time: x.time }))
        }
        LayerSpec::Activation { function } => {
            let mut out = x;
            for v in &mut out.data {
                *v = function.apply(*v);
            }
            let cache = if keep_cache {
                LayerCache::Activation {
                    output: out.clone(),
                }
            } else {
                LayerCache::None
            };
            Ok((out, cache))
        }
        LayerSpec::Dropout { rate } => {
            if !training || rate == 0.0 {
                return Ok((x, LayerCache::None));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed.0);
            rng.set_stream(rng_seed.1);
            let keep = 1.0 / (1.0 - rate);
            let mask: Vec<f64> = (0..x.data.len())
                .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
                .collect();
            let mut out = x;
            for (v, m) in out.data.iter_mut().zip(&mask) {
                *v *= m;
            }
            Ok((out, LayerCache::Dropout { mask }))
        }
        LayerSpec::Flatten => {
            let (time, channels) = (x.time, x.channels);
            let out = Act {
                batch: x.batch,
                time: out_time,
                channels: out_channels,
                data: x.data,
            };
            Ok((out, LayerCache::Flatten { time, channels }))
        }
    }
}

/// Backpropagates `grad` (shaped like the layer output). Returns the input
/// gradient when `need_input` is set.
pub(crate) fn backward_layer(
    spec: &LayerSpec,
    params: &LayerParams<'_>,
    cache: &LayerCache,
    grad: Act,
    need_input: bool,
) -> (Option<Act>, LayerGrads) {
    let none = LayerGrads {
        weight: None,
        bias: None,
    };
    match (spec, cache) {
        (
            LayerSpec::Conv1d {
                window,
                in_channels,
                out_channels,
                has_bias,
                ..
            },
            LayerCache::Conv { cols, in_time },
        ) => {
            let rows = grad.batch * grad.time;
            let k = window * in_channels;
            let mut dw = vec![0.0; k * out_channels];
            gemm(
                MatRef::row_major(cols, rows, k).t(),
                MatRef::row_major(&grad.data, rows, *out_channels),
                0.0,
                &mut dw,
            );
            let db = has_bias.then(|| column_sums(&grad.data, *out_channels));
            let dx = need_input.then(|| {
                let w = params.weight.expect("conv weight");
                let mut dcols = vec![0.0; rows * k];
                gemm(
                    MatRef::row_major(&grad.data, rows, *out_channels),
                    MatRef::row_major(&w.values, k, *out_channels).t(),
                    0.0,
                    &mut dcols,
                );
                col2im(&dcols, grad.batch, *in_time, *in_channels, *window)
            });
            (
                dx,
                LayerGrads {
                    weight: Some(dw),
                    bias: db,
                },
            )
        }
        (
            LayerSpec::ConvTranspose1d {
                window,
                in_channels,
                out_channels,
                has_bias,
            },
            LayerCache::ConvTranspose { input },
        ) => {
            let (dz, _) = im2col(&grad, *window);
            let rows = input.batch * input.time;
            let zcols = window * out_channels;
            let mut dwp = vec![0.0; in_channels * zcols];
            gemm(
                MatRef::row_major(&input.data, rows, *in_channels).t(),
                MatRef::row_major(&dz, rows, zcols),
                0.0,
                &mut dwp,
            );
            let dw = unpermute_transpose_weight(&dwp, *window, *in_channels, *out_channels);
            let db = has_bias.then(|| column_sums(&grad.data, *out_channels));
            let dx = need_input.then(|| {
                let w = params.weight.expect("conv transpose weight");
                let wp = permute_transpose_weight(&w.values, *window, *in_channels, *out_channels);
                let mut dx = Act::zeros(input.batch, input.time, *in_channels);
                gemm(
                    MatRef::row_major(&dz, rows, zcols),
                    MatRef::row_major(&wp, *in_channels, zcols).t(),
                    0.0,
                    &mut dx.data,
                );
                dx
            });
            (
                dx,
                LayerGrads {
                    weight: Some(dw),
                    bias: db,
                },
            )
        }
        (
            LayerSpec::Dense {
                in_dim,
                out_dim,
                has_bias,
                ..
            },
            LayerCache::Dense { input },
        ) => {
            let rows = input.batch * input.time;
            let mut dw = vec![0.0; in_dim * out_dim];
            gemm(
                MatRef::row_major(&input.data, rows, *in_dim).t(),
                MatRef::row_major(&grad.data, rows, *out_dim),
                0.0,
                &mut dw,
            );
            let db = has_bias.then(|| column_sums(&grad.data, *out_dim));
            let dx = need_input.then(|| {
                let w = params.weight.expect("dense weight");
                let mut dx = Act::zeros(input.batch, input.time, *in_dim);
                gemm(
                    MatRef::row_major(&grad.data, rows, *out_dim),
                    MatRef::row_major(&w.values, *in_dim, *out_dim).t(),
                    0.0,
                    &mut dx.data,
                );
                dx
            });
            (
                dx,
                LayerGrads {
                    weight: Some(dw),
                    bias: db,
                },
            )
        }
        (LayerSpec::AvgPoolTime { pool }, LayerCache::Pool { in_time }) => {
            let in_time = *in_time;
            let size = pool.unwrap_or(in_time);
            let c = grad.channels;
            let dx = need_input.then(|| {
                let mut dx = Act::zeros(grad.batch, in_time, c);
                for b in 0..grad.batch {
                    for bin in 0..grad.time {
                        let start = bin * size;
                        let end = (start + size).min(in_time);
                        let scale = 1.0 / (end - start) as f64;
                        let src = (b * grad.time + bin) * c;
                        for t in start..end {
                            let dst = (b * in_time + t) * c;
                            for ch in 0..c {
                                dx.data[dst + ch] = grad.data[src + ch] * scale;
                            }
                        }
                    }
                }
                dx
            });
            (dx, none)
        }
        (LayerSpec::Upsample { factor, .. }, LayerCache::Upsample { in_time }) => {
            let c = grad.channels;
            let dx = need_input.then(|| {
                let mut dx = Act::zeros(grad.batch, *in_time, c);
                for b in 0..grad.batch {
                    for t in 0..grad.time {
                        let dst = (b * in_time + t / factor) * c;
                        let src = (b * grad.time + t) * c;
                        for ch in 0..c {
                            dx.data[dst + ch] += grad.data[src + ch];
                        }
                    }
                }
                dx
            });
            (dx, none)
        }
        (LayerSpec::Activation { function }, LayerCache::Activation { output }) => {
            let mut g = grad;
            for (g, y) in g.data.iter_mut().zip(&output.data) {
                *g *= function.derivative_from_output(*y);
            }
            (Some(g), none)
        }
        (LayerSpec::Dropout { .. }, LayerCache::Dropout { mask }) => {
            let mut g = grad;
            for (g, m) in g.data.iter_mut().zip(mask) {
                *g *= m;
            }
            (Some(g), none)
        }
        (LayerSpec::Dropout { .. }, LayerCache::None) => (Some(grad), none),
        (LayerSpec::Flatten, LayerCache::Flatten { time, channels }) => {
            let g = Act {
                batch: grad.batch,
                time: *time,
                channels: *channels,
                data: grad.data,
            };
            (Some(g), none)
        }
        (spec, _) => panic!("backward called without a forward cache for {spec:?}"),
    }
}
