//! Individual network layers operating on `[channels × time]` activations.
//!
//! Parameters are stored as `f32`; every dot product accumulates in `f64`
//! and is rounded once on output. Convolutions are causal and stride-1: the
//! output at time `t` sees inputs `t - (M - 1) * d ..= t`.

use std::borrow::Cow;

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dilated causal 1D convolution, weights `[out × in × M]`.
///
/// Taps follow cross-correlation order: tap `M - 1` multiplies the current
/// sample, tap `0` the oldest one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    weights: Array3<f32>,
    bias: Array1<f32>,
    dilation: usize,
}

impl ConvLayer {
    pub fn new(weights: Array3<f32>, bias: Array1<f32>, dilation: usize) -> Result<Self> {
        let (out_ch, in_ch, kernel) = weights.dim();
        if kernel == 0 || in_ch == 0 || out_ch == 0 {
            return Err(Error::InvalidSpec(format!(
                "conv weights must be non-empty, got {:?}",
                weights.dim()
            )));
        }
        if dilation == 0 {
            return Err(Error::InvalidSpec("conv dilation must be >= 1".into()));
        }
        if bias.len() != out_ch {
            return Err(Error::Shape(format!(
                "conv bias has {} entries for {out_ch} output channels",
                bias.len()
            )));
        }
        Ok(Self {
            weights,
            bias,
            dilation,
        })
    }

    pub fn weights(&self) -> &Array3<f32> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f32> {
        &self.bias
    }

    pub fn out_channels(&self) -> usize {
        self.weights.dim().0
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dim().1
    }

    pub fn kernel_size(&self) -> usize {
        self.weights.dim().2
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    /// Left-context samples the layer needs: `(M - 1) * d`.
    pub fn pad_len(&self) -> usize {
        (self.kernel_size() - 1) * self.dilation
    }

    pub fn macs(&self, len: usize) -> u64 {
        (self.out_channels() * self.in_channels() * self.kernel_size() * len) as u64
    }
}

/// Most recent `pad_len` input samples seen by one convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PadState {
    buffer: Array2<f32>,
}

impl PadState {
    pub fn zeros(in_channels: usize, pad_len: usize) -> Self {
        Self {
            buffer: Array2::zeros((in_channels, pad_len)),
        }
    }

    pub fn for_layer(layer: &ConvLayer) -> Self {
        Self::zeros(layer.in_channels(), layer.pad_len())
    }

    pub fn buffer(&self) -> ArrayView2<'_, f32> {
        self.buffer.view()
    }

    pub fn reset(&mut self) {
        self.buffer.fill(0.0);
    }

    pub fn byte_len(&self) -> usize {
        self.buffer.len() * std::mem::size_of::<f32>()
    }
}

/// Left-context policy for [`conv1d_causal`].
#[derive(Debug)]
pub enum Padding<'a> {
    /// Context is zeros.
    Zero,
    /// Context is the buffered tail of the previous call; the buffer is
    /// advanced past `input` afterwards.
    Signal(&'a mut PadState),
}

/// Same-length causal convolution of `input` (`[in × T]` to `[out × T]`).
pub fn conv1d_causal(
    input: ArrayView2<'_, f32>,
    layer: &ConvLayer,
    padding: Padding<'_>,
) -> Result<Array2<f32>> {
    let (in_ch, len) = input.dim();
    if in_ch != layer.in_channels() {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {in_ch}",
            layer.in_channels()
        )));
    }
    let pad = layer.pad_len();
    match padding {
        Padding::Zero => {
            // Zero padding needs no staging buffer: contiguous rows are read in place.
            let rows: Vec<Cow<'_, [f32]>> = input
                .outer_iter()
                .map(|r| match r.to_slice() {
                    Some(s) => Cow::Borrowed(s),
                    None => Cow::Owned(r.to_vec()),
                })
                .collect();
            Ok(conv_rows(&rows, 0, len, layer))
        }
        Padding::Signal(state) => {
            if state.buffer.dim() != (in_ch, pad) {
                return Err(Error::State(format!(
                    "pad state is {:?}, layer needs ({in_ch}, {pad})",
                    state.buffer.dim()
                )));
            }
            let rows: Vec<Cow<'_, [f32]>> = input
                .outer_iter()
                .zip(state.buffer.outer_iter())
                .map(|(x, ctx)| Cow::Owned(ctx.iter().chain(x.iter()).copied().collect()))
                .collect();
            let out = conv_rows(&rows, pad, len, layer);
            for (mut dst, src) in state.buffer.outer_iter_mut().zip(&rows) {
                dst.iter_mut()
                    .zip(&src[src.len() - pad..])
                    .for_each(|(d, s)| *d = *s);
            }
            Ok(out)
        }
    }
}

/// Core kernel. Each row holds `context` leading samples followed by `len`
/// current samples; missing context (when `context < pad_len`) reads as zero.
fn conv_rows(
    rows: &[Cow<'_, [f32]>],
    context: usize,
    len: usize,
    layer: &ConvLayer,
) -> Array2<f32> {
    let kernel = layer.kernel_size();
    let dilation = layer.dilation();
    let out_ch = layer.out_channels();
    let mut out = Vec::with_capacity(out_ch * len);
    let mut acc = vec![0.0f64; len];
    for o in 0..out_ch {
        acc.fill(layer.bias[o] as f64);
        for (i, row) in rows.iter().enumerate() {
            for m in 0..kernel {
                let w = layer.weights[[o, i, m]] as f64;
                // output t reads row[context + t - lag]
                let lag = (kernel - 1 - m) * dilation;
                let (start, src) = if lag <= context {
                    (0, context - lag)
                } else {
                    (lag - context, 0)
                };
                if start >= len {
                    continue;
                }
                for (a, &x) in acc[start..].iter_mut().zip(&row[src..src + len - start]) {
                    *a += w * x as f64;
                }
            }
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    Array2::from_shape_vec((out_ch, len), out).expect("conv output shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    #[serde(alias = "avg")]
    Average,
    /// Keeps the first sample of each pooling window (plain subsampling).
    First,
}

impl std::str::FromStr for PoolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(PoolKind::Max),
            "avg" | "average" => Ok(PoolKind::Average),
            "first" => Ok(PoolKind::First),
            other => Err(Error::InvalidSpec(format!(
                "unknown pooling kind {other:?}"
            ))),
        }
    }
}

/// Non-overlapping pooling; stride equals `pool_len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolLayer {
    kind: PoolKind,
    pool_len: usize,
}

impl PoolLayer {
    pub fn new(kind: PoolKind, pool_len: usize) -> Result<Self> {
        if pool_len == 0 {
            return Err(Error::InvalidSpec("pool length must be >= 1".into()));
        }
        Ok(Self { kind, pool_len })
    }

    pub fn kind(&self) -> PoolKind {
        self.kind
    }

    pub fn pool_len(&self) -> usize {
        self.pool_len
    }

    pub fn stride(&self) -> usize {
        self.pool_len
    }
}

fn reduce<T: Float>(kind: PoolKind, window: impl Iterator<Item = T>) -> T {
    match kind {
        PoolKind::Max => window.fold(T::neg_infinity(), T::max),
        PoolKind::First => window.take(1).fold(T::nan(), |_, v| v),
        PoolKind::Average => {
            let (sum, n) = window.fold((0.0f64, 0usize), |(s, n), v| {
                (s + v.to_f64().unwrap_or(f64::NAN), n + 1)
            });
            T::from(sum / n as f64).unwrap_or_else(T::nan)
        }
    }
}

/// Pools `[ch × T]` to `[ch × T / L_p]`. Lengths not divisible by `L_p` are
/// rejected rather than truncated.
pub fn pool<T: Float>(input: ArrayView2<'_, T>, layer: &PoolLayer) -> Result<Array2<T>> {
    let len = input.ncols();
    if !len.is_multiple_of(layer.pool_len) {
        return Err(Error::Alignment(format!(
            "length {len} is not divisible by pooling window {}",
            layer.pool_len
        )));
    }
    Ok(pool_partial(input, layer))
}

/// Pools with a trailing partial window reduced over whatever samples it has.
/// Output length is `ceil(T / L_p)`.
pub fn pool_partial<T: Float>(input: ArrayView2<'_, T>, layer: &PoolLayer) -> Array2<T> {
    let (ch, len) = input.dim();
    let out_len = len.div_ceil(layer.pool_len);
    let mut out = Array2::from_elem((ch, out_len), T::zero());
    for (src, mut dst) in input.outer_iter().zip(out.outer_iter_mut()) {
        for (j, d) in dst.iter_mut().enumerate() {
            let start = j * layer.pool_len;
            let end = (start + layer.pool_len).min(len);
            *d = reduce(layer.kind, (start..end).map(|t| src[t]));
        }
    }
    out
}

pub fn relu(input: ArrayView2<'_, f32>) -> Array2<f32> {
    input.mapv(|v| v.max(0.0))
}

pub fn relu_inplace<D: ndarray::Dimension>(values: &mut ndarray::Array<f32, D>) {
    values.mapv_inplace(|v| v.max(0.0));
}

/// Inference-mode batch normalisation folded to a per-channel affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    scale: Array1<f32>,
    shift: Array1<f32>,
}

impl BatchNormParams {
    pub fn new(scale: Array1<f32>, shift: Array1<f32>) -> Result<Self> {
        if scale.len() != shift.len() {
            return Err(Error::Shape(format!(
                "batch-norm scale has {} channels, shift has {}",
                scale.len(),
                shift.len()
            )));
        }
        if scale.iter().chain(shift.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(
                "batch-norm parameters must be finite".into(),
            ));
        }
        Ok(Self { scale, shift })
    }

    pub fn identity(channels: usize) -> Self {
        Self {
            scale: Array1::ones(channels),
            shift: Array1::zeros(channels),
        }
    }

    /// Folds `gamma * (x - mean) / sqrt(var + eps) + beta` into `scale * x + shift`.
    pub fn fold(
        gamma: ArrayView1<'_, f32>,
        beta: ArrayView1<'_, f32>,
        mean: ArrayView1<'_, f32>,
        var: ArrayView1<'_, f32>,
        eps: f32,
    ) -> Result<Self> {
        let n = gamma.len();
        if beta.len() != n || mean.len() != n || var.len() != n {
            return Err(Error::Shape(
                "batch-norm statistics differ in length".into(),
            ));
        }
        let mut scale = Array1::zeros(n);
        let mut shift = Array1::zeros(n);
        for c in 0..n {
            let inv_std = 1.0 / (var[c] as f64 + eps as f64).sqrt();
            let s = gamma[c] as f64 * inv_std;
            scale[c] = s as f32;
            shift[c] = (beta[c] as f64 - mean[c] as f64 * s) as f32;
        }
        Self::new(scale, shift)
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    pub fn scale(&self) -> &Array1<f32> {
        &self.scale
    }

    pub fn shift(&self) -> &Array1<f32> {
        &self.shift
    }
}

pub fn batchnorm_apply(
    input: ArrayView2<'_, f32>,
    params: &BatchNormParams,
) -> Result<Array2<f32>> {
    if input.nrows() != params.channels() {
        return Err(Error::Shape(format!(
            "batch-norm over {} channels applied to {}",
            params.channels(),
            input.nrows()
        )));
    }
    let mut out = input.to_owned();
    for (c, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let (s, b) = (params.scale[c] as f64, params.shift[c] as f64);
        row.mapv_inplace(|v| (s * v as f64 + b) as f32);
    }
    Ok(out)
}

/// Fully connected layer, weights `[out × in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Array2<f32>,
    bias: Array1<f32>,
}

impl DenseLayer {
    pub fn new(weights: Array2<f32>, bias: Array1<f32>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::Shape(format!(
                "dense bias has {} entries for {} outputs",
                bias.len(),
                weights.nrows()
            )));
        }
        if weights.is_empty() {
            return Err(Error::InvalidSpec("dense layer has no weights".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn weights(&self) -> &Array2<f32> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f32> {
        &self.bias
    }

    pub fn in_units(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_units(&self) -> usize {
        self.weights.nrows()
    }

    pub fn macs(&self) -> u64 {
        self.weights.len() as u64
    }
}

pub fn dense_apply(input: ArrayView1<'_, f32>, layer: &DenseLayer) -> Result<Array1<f32>> {
    if input.len() != layer.in_units() {
        return Err(Error::Shape(format!(
            "dense layer expects {} inputs, got {}",
            layer.in_units(),
            input.len()
        )));
    }
    Ok(layer
        .weights
        .outer_iter()
        .zip(layer.bias.iter())
        .map(|(row, &b)| {
            let dot: f64 = row
                .iter()
                .zip(input.iter())
                .map(|(&w, &x)| w as f64 * x as f64)
                .sum();
            (dot + b as f64) as f32
        })
        .collect())
}
