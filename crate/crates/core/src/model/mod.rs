//! Sequential network `f = g ∘ h`: a convolutional feature extractor `h`
//! followed, after an explicit `Flatten`, by a dense classifier `g`.

mod manifest;
pub mod reference;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::layers::{
    batchnorm_apply, conv1d_causal, dense_apply, pool, pool_partial, relu_inplace, BatchNormParams,
    ConvLayer, DenseLayer, PadState, Padding, PoolLayer,
};
use crate::signal::WindowConfig;

pub use manifest::{load_model, save_model};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(ConvLayer),
    Relu,
    BatchNorm(BatchNormParams),
    Pool(PoolLayer),
    Flatten,
    Dense(DenseLayer),
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Relu => "relu",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Pool(_) => "pool",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
        }
    }
}

/// A validated sequential model together with its deployment window.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    name: String,
    input_channels: usize,
    sample_rate_hz: f64,
    window: WindowConfig,
    layers: Vec<Layer>,
    classifier_start: usize,
}

impl ModelSpec {
    /// `layers[classifier_start]` must be the `Flatten` separating `h` from `g`.
    pub fn new(
        name: impl Into<String>,
        input_channels: usize,
        sample_rate_hz: f64,
        window: WindowConfig,
        layers: Vec<Layer>,
        classifier_start: usize,
    ) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            input_channels,
            sample_rate_hz,
            window,
            layers,
            classifier_start,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(format!("{}: {msg}", self.name)));
        if self.input_channels == 0 {
            return bad("input_channels must be positive".into());
        }
        if !(self.sample_rate_hz > 0.0) {
            return bad("sample_rate_hz must be positive".into());
        }
        if !matches!(self.layers.get(self.classifier_start), Some(Layer::Flatten)) {
            return bad(format!("layer {} must be flatten", self.classifier_start));
        }
        let mut channels = self.input_channels;
        let mut len = self.window.window_len();
        for (idx, layer) in self.feature_layers().iter().enumerate() {
            match layer {
                Layer::Conv(c) if c.in_channels() != channels => {
                    return bad(format!(
                        "layer {idx}: conv expects {} channels, receives {channels}",
                        c.in_channels()
                    ))
                }
                Layer::Conv(c) => channels = c.out_channels(),
                Layer::BatchNorm(bn) if bn.channels() != channels => {
                    return bad(format!(
                        "layer {idx}: batch-norm over {} channels, receives {channels}",
                        bn.channels()
                    ))
                }
                Layer::Pool(p) if !len.is_multiple_of(p.pool_len()) => {
                    return bad(format!(
                    "layer {idx}: window length {len} at this depth is not divisible by pool {}",
                    p.pool_len()
                ))
                }
                Layer::Pool(p) => len /= p.pool_len(),
                Layer::Relu | Layer::BatchNorm(_) => {}
                Layer::Flatten | Layer::Dense(_) => {
                    return bad(format!(
                        "layer {idx}: {} inside the feature extractor",
                        layer.kind_name()
                    ))
                }
            }
        }
        let mut units = channels * len;
        for (offset, layer) in self.classifier_layers().iter().enumerate().skip(1) {
            let idx = self.classifier_start + offset;
            match layer {
                Layer::Dense(d) if d.in_units() != units => {
                    return bad(format!(
                        "layer {idx}: dense expects {} inputs, receives {units}",
                        d.in_units()
                    ))
                }
                Layer::Dense(d) => units = d.out_units(),
                Layer::Relu => {}
                other => {
                    return bad(format!(
                        "layer {idx}: {} inside the classifier",
                        other.kind_name()
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn window(&self) -> WindowConfig {
        self.window
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn classifier_start(&self) -> usize {
        self.classifier_start
    }

    /// Layers of `h`.
    pub fn feature_layers(&self) -> &[Layer] {
        &self.layers[..self.classifier_start]
    }

    /// Layers of `g`, starting with the `Flatten`.
    pub fn classifier_layers(&self) -> &[Layer] {
        &self.layers[self.classifier_start..]
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = &ConvLayer> {
        self.feature_layers().iter().filter_map(|l| match l {
            Layer::Conv(c) => Some(c),
            _ => None,
        })
    }

    pub fn pool_layers(&self) -> impl Iterator<Item = &PoolLayer> {
        self.feature_layers().iter().filter_map(|l| match l {
            Layer::Pool(p) => Some(p),
            _ => None,
        })
    }

    /// Channel count of the embedding produced by `h`.
    pub fn embedding_channels(&self) -> usize {
        self.conv_layers()
            .last()
            .map_or(self.input_channels, |c| c.out_channels())
    }

    /// Temporal length of the embedding of one full window.
    pub fn embedding_len(&self) -> usize {
        self.window.window_len() / cumulative_pool_factor(self)
    }

    /// Width of `g`'s output.
    pub fn output_units(&self) -> usize {
        self.classifier_layers()
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d.out_units()),
                _ => None,
            })
            .unwrap_or(self.embedding_channels() * self.embedding_len())
    }

    /// Same network deployed with a different step (the window length is kept).
    pub fn with_step(&self, step: usize) -> Result<Self> {
        let window = WindowConfig::new(self.window.window_len(), step)?;
        Ok(Self {
            window,
            ..self.clone()
        })
    }

    /// Rebuilds the spec with a transformed layer list.
    pub fn map_layers(&self, f: impl FnMut(&Layer) -> Layer) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.input_channels,
            self.sample_rate_hz,
            self.window,
            self.layers.iter().map(f).collect(),
            self.classifier_start,
        )
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => c.weights().len() + c.bias().len(),
                Layer::BatchNorm(b) => 2 * b.channels(),
                Layer::Dense(d) => d.weights().len() + d.bias().len(),
                _ => 0,
            })
            .sum()
    }

    /// Runs `h` on `input`. With `pads`, convolution `k` pads from `pads[k]`
    /// and advances it; otherwise convolutions zero-pad. `partial_pool`
    /// tolerates lengths that pooling does not divide.
    pub(crate) fn run_features(
        &self,
        input: ArrayView2<'_, f32>,
        mut pads: Option<&mut [PadState]>,
        partial_pool: bool,
    ) -> Result<Array2<f32>> {
        if input.nrows() != self.input_channels {
            return Err(Error::Shape(format!(
                "{} expects {} input channels, got {}",
                self.name,
                self.input_channels,
                input.nrows()
            )));
        }
        let mut x = input.to_owned();
        let mut conv_idx = 0;
        for layer in self.feature_layers() {
            x = match layer {
                Layer::Conv(c) => {
                    let padding = match pads.as_deref_mut() {
                        Some(states) => {
                            Padding::Signal(states.get_mut(conv_idx).ok_or_else(|| {
                                Error::State(format!("no pad state for conv {conv_idx}"))
                            })?)
                        }
                        None => Padding::Zero,
                    };
                    conv_idx += 1;
                    conv1d_causal(x.view(), c, padding)?
                }
                Layer::Relu => {
                    relu_inplace(&mut x);
                    x
                }
                Layer::BatchNorm(bn) => batchnorm_apply(x.view(), bn)?,
                Layer::Pool(p) if partial_pool => pool_partial(x.view(), p),
                Layer::Pool(p) => pool(x.view(), p)?,
                Layer::Flatten | Layer::Dense(_) => unreachable!("validated feature extractor"),
            };
        }
        Ok(x)
    }

    /// `h` with zero padding on an input of any pooling-compatible length.
    pub fn features(&self, input: ArrayView2<'_, f32>) -> Result<Embedding> {
        self.run_features(input, None, false).map(Embedding::new)
    }

    /// Runs `g` on a full-window embedding.
    pub fn classify(&self, embedding: &Embedding) -> Result<Array1<f32>> {
        let expected = (self.embedding_channels(), self.embedding_len());
        if embedding.values.dim() != expected {
            return Err(Error::Shape(format!(
                "classifier expects embedding {expected:?}, got {:?}",
                embedding.values.dim()
            )));
        }
        let mut x = embedding.flatten();
        for layer in &self.classifier_layers()[1..] {
            match layer {
                Layer::Dense(d) => x = dense_apply(x.view(), d)?,
                Layer::Relu => relu_inplace(&mut x),
                _ => unreachable!("validated classifier"),
            }
        }
        Ok(x)
    }
}

/// Output of the feature extractor, `[channels × T_e]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Array2<f32>,
}

impl Embedding {
    pub fn new(values: Array2<f32>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> ArrayView2<'_, f32> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f32> {
        self.values
    }

    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn temporal_len(&self) -> usize {
        self.values.ncols()
    }

    /// Channel-major flattening, matching `[C, T] -> [C * T]`.
    pub fn flatten(&self) -> Array1<f32> {
        self.values.iter().copied().collect()
    }

    /// Largest absolute elementwise difference; `None` if shapes differ.
    pub fn max_abs_diff(&self, other: &Embedding) -> Option<f32> {
        (self.values.dim() == other.values.dim()).then(|| {
            self.values
                .iter()
                .zip(other.values.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f32::max)
        })
    }
}

/// Zero-padded inference on one window: `(h(x), g(h(x)))`.
pub fn full_inference(
    spec: &ModelSpec,
    window: ArrayView2<'_, f32>,
) -> Result<(Embedding, Array1<f32>)> {
    if window.ncols() != spec.window.window_len() {
        return Err(Error::Shape(format!(
            "{} expects windows of {} samples, got {}",
            spec.name,
            spec.window.window_len(),
            window.ncols()
        )));
    }
    let embedding = spec.features(window)?;
    let output = spec.classify(&embedding)?;
    Ok((embedding, output))
}

/// Product of all pooling strides in `h`.
pub fn cumulative_pool_factor(spec: &ModelSpec) -> usize {
    spec.pool_layers().map(|p| p.stride()).product()
}

/// `1 + Σ (M_j - 1) d_j P_j` over the convolutions of `h`, where `P_j` is
/// the pooling factor accumulated before convolution `j`. `r0 - 1` is the
/// left context an embedding column needs beyond its own input span.
pub fn receptive_field(spec: &ModelSpec) -> usize {
    let mut factor = 1;
    let mut field = 1;
    for layer in spec.feature_layers() {
        match layer {
            Layer::Conv(c) => field += c.pad_len() * factor,
            Layer::Pool(p) => factor *= p.stride(),
            _ => {}
        }
    }
    field
}

/// Context length for the extended-window oracle: `r0 - 1` rounded up to a
/// multiple of the pooling factor.
pub fn required_context(spec: &ModelSpec) -> usize {
    let factor = cumulative_pool_factor(spec);
    (receptive_field(spec) - 1).div_ceil(factor) * factor
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Alignment {
    Aligned,
    Misaligned {
        /// Zero-based pooling stage.
        stage: usize,
        layer_index: usize,
        /// Sub-window length arriving at the stage.
        incoming_len: usize,
        pool_len: usize,
    },
}

impl Alignment {
    pub fn is_aligned(&self) -> bool {
        matches!(self, Alignment::Aligned)
    }
}

impl std::fmt::Display for Alignment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Alignment::Aligned => write!(f, "aligned"),
            Alignment::Misaligned {
                stage,
                layer_index,
                incoming_len,
                pool_len,
            } => write!(
                f,
                "pooling stage {stage} (layer {layer_index}) receives {incoming_len} samples per sub-window, not a multiple of {pool_len}"
            ),
        }
    }
}

/// Checks that every pooling stage receives a whole number of pooling
/// windows per sub-window of `step` samples.
pub fn alignment_check(cfg: &WindowConfig, spec: &ModelSpec) -> Alignment {
    let mut incoming = cfg.step();
    let mut stage = 0;
    for (layer_index, layer) in spec.feature_layers().iter().enumerate() {
        if let Layer::Pool(p) = layer {
            if !incoming.is_multiple_of(p.pool_len()) {
                return Alignment::Misaligned {
                    stage,
                    layer_index,
                    incoming_len: incoming,
                    pool_len: p.pool_len(),
                };
            }
            incoming /= p.pool_len();
            stage += 1;
        }
    }
    Alignment::Aligned
}

/// Ground-truth signal-padded embedding of `window` given the samples that
/// precede it: runs `h` with zero padding on `[context ‖ window]` and drops
/// the columns that belong to the context.
pub fn extended_window_oracle(
    spec: &ModelSpec,
    context: ArrayView2<'_, f32>,
    window: ArrayView2<'_, f32>,
) -> Result<Embedding> {
    let factor = cumulative_pool_factor(spec);
    let needed = receptive_field(spec) - 1;
    let ctx_len = context.ncols();
    if ctx_len < needed {
        return Err(Error::Precondition(format!(
            "context of {ctx_len} samples is shorter than the {needed} the receptive field needs"
        )));
    }
    if !ctx_len.is_multiple_of(factor) {
        return Err(Error::Precondition(format!(
            "context of {ctx_len} samples is not a multiple of the pooling factor {factor}"
        )));
    }
    if context.nrows() != window.nrows() {
        return Err(Error::Shape(
            "context and window differ in channel count".into(),
        ));
    }
    let extended = concatenate![Axis(1), context, window];
    let full = spec.run_features(extended.view(), None, false)?;
    Ok(Embedding::new(
        full.slice(s![.., ctx_len / factor..]).to_owned(),
    ))
}

/// Multiply-accumulates of `h` on `input_len` samples.
pub fn mac_count_extractor(spec: &ModelSpec, input_len: usize) -> Result<u64> {
    let mut len = input_len;
    let mut macs = 0;
    for layer in spec.feature_layers() {
        match layer {
            Layer::Conv(c) => macs += c.macs(len),
            Layer::Pool(p) => {
                if !len.is_multiple_of(p.pool_len()) {
                    return Err(Error::Alignment(format!(
                        "input of {input_len} samples reaches a pool of {} with {len} samples",
                        p.pool_len()
                    )));
                }
                len /= p.pool_len();
            }
            _ => {}
        }
    }
    Ok(macs)
}

/// Multiply-accumulates of `h` on `input_len` samples plus one pass of `g`.
pub fn mac_count(spec: &ModelSpec, input_len: usize) -> Result<u64> {
    let dense: u64 = spec
        .classifier_layers()
        .iter()
        .filter_map(|l| match l {
            Layer::Dense(d) => Some(d.macs()),
            _ => None,
        })
        .sum();
    Ok(mac_count_extractor(spec, input_len)? + dense)
}
