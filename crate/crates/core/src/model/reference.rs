//! Reconstructed reference architectures and a seeded random-model generator.
//!
//! Weights are random (He-uniform); only the architectures are meaningful.
//! Channel widths and pooling sizes that the original models leave open are
//! filled in with documented defaults.

use ndarray::{Array1, Array2, Array3};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Layer, ModelSpec};
use crate::layers::{BatchNormParams, ConvLayer, DenseLayer, PoolKind, PoolLayer};
use crate::signal::WindowConfig;

/// Width used wherever the reference descriptions leave channel counts open.
pub const DEFAULT_WIDTH: usize = 32;

/// Pooling sizes of the three heart-rate blocks.
pub const PPG_POOLS: [usize; 3] = [8, 2, 2];
/// Pooling size of each of the three seizure-detection EEG blocks.
pub const EEG_POOL: usize = 4;
pub const EEG_INPUT_CHANNELS: usize = 18;

fn conv(rng: &mut impl Rng, in_ch: usize, out_ch: usize, kernel: usize, dilation: usize) -> Layer {
    let bound = (6.0 / (in_ch * kernel) as f32).sqrt();
    let w =
        Array3::from_shape_simple_fn((out_ch, in_ch, kernel), || rng.random_range(-bound..bound));
    let b = Array1::from_shape_simple_fn(out_ch, || rng.random_range(-0.1f32..0.1));
    Layer::Conv(ConvLayer::new(w, b, dilation).expect("consistent conv shapes"))
}

fn batchnorm(rng: &mut impl Rng, channels: usize) -> Layer {
    let scale = Array1::from_shape_simple_fn(channels, || rng.random_range(0.5f32..1.5));
    let shift = Array1::from_shape_simple_fn(channels, || rng.random_range(-0.1f32..0.1));
    Layer::BatchNorm(BatchNormParams::new(scale, shift).expect("finite batch-norm"))
}

fn dense(rng: &mut impl Rng, in_units: usize, out_units: usize) -> Layer {
    let bound = (3.0 / in_units as f32).sqrt();
    let w = Array2::from_shape_simple_fn((out_units, in_units), || rng.random_range(-bound..bound));
    let b = Array1::from_shape_simple_fn(out_units, || rng.random_range(-0.1f32..0.1));
    Layer::Dense(DenseLayer::new(w, b).expect("consistent dense shapes"))
}

fn with_classifier(
    rng: &mut impl Rng,
    name: &str,
    input_channels: usize,
    sample_rate_hz: f64,
    window: WindowConfig,
    mut layers: Vec<Layer>,
    embedding_units: usize,
    outputs: usize,
) -> ModelSpec {
    let classifier_start = layers.len();
    layers.push(Layer::Flatten);
    layers.push(dense(rng, embedding_units, outputs));
    ModelSpec::new(
        name,
        input_channels,
        sample_rate_hz,
        window,
        layers,
        classifier_start,
    )
    .expect("reference architecture is valid")
}

/// Heart-rate extractor: 3 blocks of (3 × [conv M=5 d=2, ReLU]) + average
/// pooling, 256-sample windows at 32 Hz with a 64-sample step, one output.
pub fn ppg(seed: u64) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut in_ch = 1;
    for pool_len in PPG_POOLS {
        for _ in 0..3 {
            layers.push(conv(&mut rng, in_ch, DEFAULT_WIDTH, 5, 2));
            layers.push(Layer::Relu);
            in_ch = DEFAULT_WIDTH;
        }
        layers.push(Layer::Pool(
            PoolLayer::new(PoolKind::Average, pool_len).unwrap(),
        ));
    }
    let window = WindowConfig::new(256, 64).unwrap();
    let units = DEFAULT_WIDTH * 256 / PPG_POOLS.iter().product::<usize>();
    with_classifier(&mut rng, "h_ppg", 1, 32.0, window, layers, units, 1)
}

/// EEG seizure detector: 3 blocks of conv M=3 d=1, ReLU, batch-norm, max
/// pooling; 1024-sample windows with a 256-sample step, two outputs.
pub fn eeg(seed: u64) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut in_ch = EEG_INPUT_CHANNELS;
    for _ in 0..3 {
        layers.push(conv(&mut rng, in_ch, DEFAULT_WIDTH, 3, 1));
        layers.push(Layer::Relu);
        layers.push(batchnorm(&mut rng, DEFAULT_WIDTH));
        layers.push(Layer::Pool(
            PoolLayer::new(PoolKind::Max, EEG_POOL).unwrap(),
        ));
        in_ch = DEFAULT_WIDTH;
    }
    let window = WindowConfig::new(1024, 256).unwrap();
    let units = DEFAULT_WIDTH * 1024 / EEG_POOL.pow(3);
    with_classifier(
        &mut rng,
        "h_eeg",
        EEG_INPUT_CHANNELS,
        256.0,
        window,
        layers,
        units,
        2,
    )
}

/// Wrist-acceleration seizure detector: 6 × [conv M=3 d=1, ReLU] then
/// batch-norm, no pooling; 960-sample windows with a 160-sample step.
pub fn acc(seed: u64) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut in_ch = 3;
    for _ in 0..6 {
        layers.push(conv(&mut rng, in_ch, DEFAULT_WIDTH, 3, 1));
        layers.push(Layer::Relu);
        in_ch = DEFAULT_WIDTH;
    }
    layers.push(batchnorm(&mut rng, DEFAULT_WIDTH));
    let window = WindowConfig::new(960, 160).unwrap();
    with_classifier(
        &mut rng,
        "h_acc",
        3,
        32.0,
        window,
        layers,
        DEFAULT_WIDTH * 960,
        2,
    )
}

/// Looks up a reference architecture by short name (`ppg`, `eeg`, `acc`).
pub fn by_name(name: &str, seed: u64) -> Option<ModelSpec> {
    match name.trim_start_matches("h_") {
        "ppg" => Some(ppg(seed)),
        "eeg" => Some(eeg(seed)),
        "acc" => Some(acc(seed)),
        _ => None,
    }
}

/// Search space for [`random_model`].
#[derive(Debug, Clone)]
pub struct RandomModelConfig {
    pub window: WindowConfig,
    pub input_channels: usize,
    pub outputs: usize,
    pub sample_rate_hz: f64,
    pub min_depth: usize,
    pub max_depth: usize,
    pub widths: Vec<usize>,
    pub kernels: Vec<usize>,
    pub dilations: Vec<usize>,
    pub max_pools: usize,
    pub pool_lens: Vec<usize>,
    /// The product of all pooling lengths must divide this value.
    pub pool_divisor: usize,
    pub batchnorm: bool,
}

impl RandomModelConfig {
    /// Default search space: widths {8,16,32}, depth 3–9, kernels {3,5},
    /// dilations {1,2}, pooling kept aligned with the window step.
    pub fn new(window: WindowConfig) -> Self {
        Self {
            window,
            input_channels: 1,
            outputs: 2,
            sample_rate_hz: 32.0,
            min_depth: 3,
            max_depth: 9,
            widths: vec![8, 16, 32],
            kernels: vec![3, 5],
            dilations: vec![1, 2],
            max_pools: 0,
            pool_lens: vec![2, 4],
            pool_divisor: window.step(),
            batchnorm: true,
        }
    }

    pub fn with_pools(mut self, max_pools: usize) -> Self {
        self.max_pools = max_pools;
        self
    }
}

/// [`random_model`] driven by a ChaCha8 generator seeded with `seed`.
pub fn random_model_seeded(seed: u64, cfg: &RandomModelConfig) -> ModelSpec {
    random_model(&mut ChaCha8Rng::seed_from_u64(seed), cfg)
}

/// Draws a sequential conv/ReLU(/batch-norm)/pool network with a dense head.
pub fn random_model(rng: &mut impl Rng, cfg: &RandomModelConfig) -> ModelSpec {
    let depth = rng.random_range(cfg.min_depth..=cfg.max_depth);
    let pools = rng.random_range(0..=cfg.max_pools.min(depth));
    let mut pool_after: Vec<usize> = rand::seq::index::sample(rng, depth, pools).into_vec();
    pool_after.sort_unstable();

    let mut layers = Vec::new();
    let mut in_ch = cfg.input_channels;
    let mut factor = 1;
    for d in 0..depth {
        let out_ch = *cfg.widths.choose(rng).expect("widths");
        let kernel = *cfg.kernels.choose(rng).expect("kernels");
        let dilation = *cfg.dilations.choose(rng).expect("dilations");
        layers.push(conv(rng, in_ch, out_ch, kernel, dilation));
        layers.push(Layer::Relu);
        if cfg.batchnorm && rng.random_bool(0.25) {
            layers.push(batchnorm(rng, out_ch));
        }
        in_ch = out_ch;
        if pool_after.contains(&d) {
            let fitting: Vec<usize> = cfg
                .pool_lens
                .iter()
                .copied()
                .filter(|&p| cfg.pool_divisor.is_multiple_of(factor * p))
                .collect();
            if let Some(&len) = fitting.choose(rng) {
                let kind = *[PoolKind::Max, PoolKind::Average, PoolKind::First]
                    .choose(rng)
                    .unwrap();
                layers.push(Layer::Pool(PoolLayer::new(kind, len).unwrap()));
                factor *= len;
            }
        }
    }
    let units = in_ch * cfg.window.window_len() / factor;
    with_classifier(
        rng,
        "random",
        cfg.input_channels,
        cfg.sample_rate_hz,
        cfg.window,
        layers,
        units,
        cfg.outputs,
    )
}
