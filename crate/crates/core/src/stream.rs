//! Online streaming execution of the feature extractor.
//!
//! Every push of `S` new samples runs `h` on that sub-window only and
//! appends the resulting sub-embedding to a FIFO ring of `L / S` entries.
//! The concatenated ring is the window embedding fed to the classifier.
//!
//! In [`StreamMode::Exact`] each convolution keeps a [`PadState`] with the
//! tail of its previous input, so the aggregated embedding equals running `h`
//! over the unbroken stream. [`StreamMode::Approximate`] zero-pads every
//! sub-window instead and keeps no per-layer state.

use std::collections::VecDeque;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::PadState;
use crate::model::{alignment_check, cumulative_pool_factor, Embedding, ModelSpec};
use crate::signal::WindowConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamMode {
    Exact,
    Approximate,
}

impl std::fmt::Display for StreamMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StreamMode::Exact => "exact",
            StreamMode::Approximate => "approximate",
        })
    }
}

impl std::str::FromStr for StreamMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(StreamMode::Exact),
            "approx" | "approximate" => Ok(StreamMode::Approximate),
            other => Err(Error::InvalidSpec(format!("unknown stream mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamOutput {
    /// Concatenated ring contents; `[channels × L / P]` once warm.
    pub embedding: Embedding,
    /// Classifier output, present once a full window has been aggregated.
    pub classifier_output: Option<Array1<f32>>,
    pub warmup: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemoryFootprint {
    pub pad_bytes: usize,
    pub ring_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct StreamSession<'a> {
    spec: &'a ModelSpec,
    cfg: WindowConfig,
    mode: StreamMode,
    pad_states: Vec<PadState>,
    ring: VecDeque<Array2<f32>>,
    sub_windows_seen: u64,
    misaligned: bool,
}

impl<'a> StreamSession<'a> {
    /// Opens a session; fails if `cfg.step()` is not aligned with pooling.
    pub fn new(spec: &'a ModelSpec, cfg: WindowConfig, mode: StreamMode) -> Result<Self> {
        Self::open(spec, cfg, mode, false)
    }

    /// Opens a session even when the step is misaligned with pooling.
    ///
    /// Misaligned sub-windows are pooled with a partial trailing window, and
    /// each window-embedding column is taken from the ring column whose
    /// pooling grid starts closest before it. Outputs are then only
    /// approximations.
    pub fn new_forced(spec: &'a ModelSpec, cfg: WindowConfig, mode: StreamMode) -> Result<Self> {
        Self::open(spec, cfg, mode, true)
    }

    fn open(
        spec: &'a ModelSpec,
        cfg: WindowConfig,
        mode: StreamMode,
        force_misaligned: bool,
    ) -> Result<Self> {
        if cfg.window_len() != spec.window().window_len() {
            return Err(Error::Shape(format!(
                "{} was built for {}-sample windows, session uses {}",
                spec.name(),
                spec.window().window_len(),
                cfg.window_len()
            )));
        }
        let alignment = alignment_check(&cfg, spec);
        if !alignment.is_aligned() && !force_misaligned {
            return Err(Error::Alignment(alignment.to_string()));
        }
        let pad_states = match mode {
            StreamMode::Exact => spec.conv_layers().map(PadState::for_layer).collect(),
            StreamMode::Approximate => Vec::new(),
        };
        Ok(Self {
            spec,
            cfg,
            mode,
            pad_states,
            ring: VecDeque::with_capacity(cfg.sub_windows()),
            sub_windows_seen: 0,
            misaligned: !alignment.is_aligned(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn window(&self) -> WindowConfig {
        self.cfg
    }

    pub fn mode(&self) -> StreamMode {
        self.mode
    }

    pub fn is_misaligned(&self) -> bool {
        self.misaligned
    }

    pub fn sub_windows_seen(&self) -> u64 {
        self.sub_windows_seen
    }

    pub fn pad_states(&self) -> &[PadState] {
        &self.pad_states
    }

    /// Ring capacity, `L / S`.
    pub fn ring_capacity(&self) -> usize {
        self.cfg.sub_windows()
    }

    /// Sub-embeddings currently held, oldest first.
    pub fn ring(&self) -> impl ExactSizeIterator<Item = ArrayView2<'_, f32>> {
        self.ring.iter().map(|e| e.view())
    }

    /// Temporal columns per sub-embedding.
    pub fn sub_embedding_len(&self) -> usize {
        self.cfg.step().div_ceil(cumulative_pool_factor(self.spec))
    }

    pub fn is_warm(&self) -> bool {
        self.ring.len() == self.ring_capacity()
    }

    /// Processes the next `S` samples.
    pub fn push_samples(&mut self, chunk: ArrayView2<'_, f32>) -> Result<StreamOutput> {
        if chunk.ncols() != self.cfg.step() || chunk.nrows() != self.spec.input_channels() {
            return Err(Error::Shape(format!(
                "expected a [{} × {}] chunk, got {:?}",
                self.spec.input_channels(),
                self.cfg.step(),
                chunk.dim()
            )));
        }
        let pads = match self.mode {
            StreamMode::Exact => Some(self.pad_states.as_mut_slice()),
            StreamMode::Approximate => None,
        };
        let sub = self.spec.run_features(chunk, pads, self.misaligned)?;
        if self.ring.len() == self.ring_capacity() {
            self.ring.pop_front();
        }
        self.ring.push_back(sub);
        self.sub_windows_seen += 1;

        let warm = self.is_warm();
        let embedding = if warm && self.misaligned {
            self.realigned_embedding()
        } else {
            let views: Vec<_> = self.ring.iter().map(|e| e.view()).collect();
            Embedding::new(concatenate(Axis(1), &views).expect("ring entries share channel count"))
        };
        let classifier_output = if warm {
            Some(self.spec.classify(&embedding)?)
        } else {
            None
        };
        Ok(StreamOutput {
            embedding,
            classifier_output,
            warmup: !warm,
        })
    }

    /// Pushes every complete `S`-sample chunk of `stream`, in order.
    pub fn push_stream(&mut self, stream: ArrayView2<'_, f32>) -> Result<Vec<StreamOutput>> {
        let step = self.cfg.step();
        (0..stream.ncols() / step)
            .map(|i| self.push_samples(stream.slice(ndarray::s![.., i * step..(i + 1) * step])))
            .collect()
    }

    /// Window column `j` covers input `[jP, (j + 1)P)`; it is read from the
    /// sub-embedding containing sample `jP`, at the last column of that
    /// sub-embedding's own pooling grid starting at or before it.
    fn realigned_embedding(&self) -> Embedding {
        let factor = cumulative_pool_factor(self.spec);
        let step = self.cfg.step();
        let cols = self.cfg.window_len() / factor;
        let channels = self.ring[0].nrows();
        let mut out = Array2::zeros((channels, cols));
        for j in 0..cols {
            let pos = j * factor;
            let entry = &self.ring[pos / step];
            let col = (pos % step) / factor;
            out.column_mut(j).assign(&entry.column(col));
        }
        Embedding::new(out)
    }

    /// Zeroes the pad states, empties the ring and restarts warm-up.
    pub fn reset(&mut self) {
        self.pad_states.iter_mut().for_each(PadState::reset);
        self.ring.clear();
        self.sub_windows_seen = 0;
    }

    /// Bytes held by the pad states and by a full aggregation ring.
    pub fn memory_footprint(&self) -> MemoryFootprint {
        let channels = self.spec.embedding_channels();
        MemoryFootprint {
            pad_bytes: self.pad_states.iter().map(PadState::byte_len).sum(),
            ring_bytes: self.ring_capacity()
                * channels
                * self.sub_embedding_len()
                * std::mem::size_of::<f32>(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{ConvLayer, PoolKind, PoolLayer};
    use crate::model::reference::{self, RandomModelConfig};
    use crate::model::{extended_window_oracle, full_inference, required_context, Layer};
    use ndarray::{s, Array, Array3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn window(len: usize, step: usize) -> WindowConfig {
        WindowConfig::new(len, step).unwrap()
    }

    fn noise(rng: &mut impl Rng, channels: usize, len: usize) -> Array2<f32> {
        Array::from_shape_simple_fn((channels, len), || rng.random_range(-1.0f32..1.0))
    }

    fn pooled_spec(cfg: WindowConfig) -> ModelSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layers = Vec::new();
        for _ in 0..3 {
            let w = Array3::from_shape_simple_fn((2, 2, 3), || rng.random_range(-1.0f32..1.0));
            layers.push(Layer::Conv(ConvLayer::new(w, Array1::zeros(2), 1).unwrap()));
            layers.push(Layer::Pool(PoolLayer::new(PoolKind::Max, 2).unwrap()));
        }
        layers.push(Layer::Flatten);
        ModelSpec::new("pooled", 2, 1.0, cfg, layers, 6).unwrap()
    }

    #[test]
    fn session_alignment_gate() {
        let acc = reference::acc(0);
        for step in [160, 320, 480, 96, 60] {
            assert!(StreamSession::new(&acc, window(960, step), StreamMode::Exact).is_ok());
        }
        let spec = pooled_spec(window(256, 64));
        assert!(StreamSession::new(&spec, window(256, 64), StreamMode::Exact).is_ok());
        let spec = pooled_spec(window(240, 80));
        let err = StreamSession::new(&spec, window(240, 60), StreamMode::Exact).unwrap_err();
        assert!(
            matches!(err, Error::Alignment(ref m) if m.contains("stage 2")),
            "{err}"
        );
        let forced = StreamSession::new_forced(&spec, window(240, 60), StreamMode::Exact).unwrap();
        assert!(forced.is_misaligned());
    }

    #[test]
    fn wrong_chunk_rejected() {
        let acc = reference::acc(0);
        let mut session = StreamSession::new(&acc, acc.window(), StreamMode::Exact).unwrap();
        let chunk = Array2::<f32>::zeros((3, 159));
        assert!(matches!(
            session.push_samples(chunk.view()),
            Err(Error::Shape(_))
        ));
        let chunk = Array2::<f32>::zeros((2, 160));
        assert!(matches!(
            session.push_samples(chunk.view()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn first_window_matches_full_inference() {
        let spec = reference::ppg(4);
        let cfg = spec.window();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = noise(&mut rng, 1, cfg.window_len());
        let mut session = StreamSession::new(&spec, cfg, StreamMode::Exact).unwrap();
        let outputs = session.push_stream(x.view()).unwrap();
        assert!(outputs[..3]
            .iter()
            .all(|o| o.warmup && o.classifier_output.is_none()));
        let last = outputs.last().unwrap();
        assert!(!last.warmup);
        let (full, y) = full_inference(&spec, x.view()).unwrap();
        assert!(last.embedding.max_abs_diff(&full).unwrap() <= 1e-5);
        let out = last.classifier_output.as_ref().unwrap();
        assert!((out[0] - y[0]).abs() <= 1e-4);
    }

    #[test]
    fn steady_state_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let cfg = window(96, 24);
            let spec =
                reference::random_model(&mut rng, &RandomModelConfig::new(cfg).with_pools(2));
            let ctx = required_context(&spec);
            let stream = noise(&mut rng, 1, ctx.next_multiple_of(24) + 96 + 3 * 24);
            let mut session = StreamSession::new(&spec, cfg, StreamMode::Exact).unwrap();
            let outputs = session.push_stream(stream.view()).unwrap();
            let mut checked = 0;
            for (n, out) in outputs.iter().enumerate().skip(cfg.sub_windows() - 1) {
                let start = (n + 1 - cfg.sub_windows()) * 24;
                if start < ctx {
                    continue;
                }
                let context = stream.slice(s![.., start - ctx..start]);
                let oracle =
                    extended_window_oracle(&spec, context, stream.slice(s![.., start..start + 96]))
                        .unwrap();
                assert!(out.embedding.max_abs_diff(&oracle).unwrap() <= 1e-4);
                checked += 1;
            }
            assert_eq!(checked, 4);
        }
    }

    #[test]
    fn ring_holds_latest_sub_embeddings() {
        let spec = pooled_spec(window(32, 8));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let chunks: Vec<Array2<f32>> = (0..7).map(|_| noise(&mut rng, 2, 8)).collect();
        let mut session =
            StreamSession::new(&spec, spec.window(), StreamMode::Approximate).unwrap();
        for (n, chunk) in chunks.iter().enumerate() {
            session.push_samples(chunk.view()).unwrap();
            let held: Vec<_> = session.ring().map(|v| v.to_owned()).collect();
            let expected: Vec<_> = chunks[(n + 1).saturating_sub(4)..=n]
                .iter()
                .map(|c| spec.features(c.view()).unwrap().into_values())
                .collect();
            assert_eq!(held, expected);
        }
    }

    #[test]
    fn reset_restores_fresh_state() {
        let spec = reference::acc(1);
        let cfg = spec.window();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stream = noise(&mut rng, 3, 960 + 320);
        let mut session = StreamSession::new(&spec, cfg, StreamMode::Exact).unwrap();
        let first = session.push_stream(stream.view()).unwrap();
        session.reset();
        session.reset();
        assert_eq!(session.sub_windows_seen(), 0);
        assert!(session
            .pad_states()
            .iter()
            .all(|p| p.buffer().iter().all(|&v| v == 0.0)));
        let again = session.push_stream(stream.view()).unwrap();
        assert_eq!(first, again);
        let warmups = again.iter().filter(|o| o.warmup).count();
        assert_eq!(warmups, cfg.sub_windows() - 1);
    }

    #[test]
    fn footprint_examples() {
        let w = Array3::from_elem((8, 8, 5), 0.1f32);
        let layers = vec![
            Layer::Conv(ConvLayer::new(w, Array1::zeros(8), 2).unwrap()),
            Layer::Flatten,
        ];
        let spec = ModelSpec::new("one", 8, 1.0, window(64, 16), layers, 1).unwrap();
        let exact = StreamSession::new(&spec, spec.window(), StreamMode::Exact).unwrap();
        assert_eq!(exact.memory_footprint().pad_bytes, 256);
        let approx = StreamSession::new(&spec, spec.window(), StreamMode::Approximate).unwrap();
        assert_eq!(approx.memory_footprint().pad_bytes, 0);

        let w = Array3::from_elem((16, 1, 3), 0.1f32);
        let layers = vec![
            Layer::Conv(ConvLayer::new(w, Array1::zeros(16), 1).unwrap()),
            Layer::Pool(PoolLayer::new(PoolKind::Average, 2).unwrap()),
            Layer::Pool(PoolLayer::new(PoolKind::Average, 2).unwrap()),
            Layer::Flatten,
        ];
        let spec = ModelSpec::new("ring", 1, 1.0, window(128, 32), layers, 3).unwrap();
        let session = StreamSession::new(&spec, spec.window(), StreamMode::Exact).unwrap();
        assert_eq!(session.memory_footprint().ring_bytes, 2048);
    }

    #[test]
    fn approximate_sessions_are_stateless() {
        let spec = reference::ppg(2);
        let cfg = spec.window();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = noise(&mut rng, 1, 512);
        let b = noise(&mut rng, 1, 512);
        let mut solo = StreamSession::new(&spec, cfg, StreamMode::Approximate).unwrap();
        let expected = solo.push_stream(a.view()).unwrap();

        let mut first = StreamSession::new(&spec, cfg, StreamMode::Approximate).unwrap();
        let mut second = StreamSession::new(&spec, cfg, StreamMode::Approximate).unwrap();
        assert!(first.pad_states().is_empty());
        let mut interleaved = Vec::new();
        for i in 0..8 {
            let cols = s![.., i * 64..(i + 1) * 64];
            interleaved.push(first.push_samples(a.slice(cols)).unwrap());
            second.push_samples(b.slice(cols)).unwrap();
        }
        assert_eq!(interleaved, expected);
        // each sub-embedding depends only on its own chunk
        let last = &expected[7];
        let alone = spec.features(a.slice(s![.., 448..])).unwrap();
        assert_eq!(last.embedding.values().slice(s![.., 6..]), alone.values());
    }

    #[test]
    fn misaligned_session_produces_full_width_embedding() {
        let spec = pooled_spec(window(240, 80));
        let cfg = window(240, 60);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let stream = noise(&mut rng, 2, 480);
        let mut session = StreamSession::new_forced(&spec, cfg, StreamMode::Exact).unwrap();
        assert_eq!(session.sub_embedding_len(), 8);
        let outputs = session.push_stream(stream.view()).unwrap();
        let warm = outputs.last().unwrap();
        assert_eq!(warm.embedding.temporal_len(), 30);
        assert!(warm.classifier_output.is_some());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("exact".parse::<StreamMode>().unwrap(), StreamMode::Exact);
        assert_eq!(
            "approx".parse::<StreamMode>().unwrap(),
            StreamMode::Approximate
        );
        assert!("fast".parse::<StreamMode>().is_err());
    }
}
