//! Sampled signals, sliding windows, synthetic generators and comparison metrics.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A multi-channel time series, `[channels × time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Array2<f64>,
    sample_rate_hz: f64,
}

impl Signal {
    pub fn new(samples: Array2<f64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if samples.nrows() == 0 {
            return Err(Error::EmptyInput("signal has no channels".into()));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn from_channel(values: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        let len = values.len();
        let samples =
            Array2::from_shape_vec((1, len), values).map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(samples, sample_rate_hz)
    }

    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.samples.view()
    }

    pub fn into_samples(self) -> Array2<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    /// Repeats a single-channel signal across `channels` rows.
    pub fn tile_channels(&self, channels: usize) -> Result<Signal> {
        if self.channels() != 1 {
            return Err(Error::Shape(format!(
                "tile_channels expects a single channel, got {}",
                self.channels()
            )));
        }
        let row = self.samples.row(0);
        let samples = Array2::from_shape_fn((channels, self.len()), |(_, t)| row[t]);
        Signal::new(samples, self.sample_rate_hz)
    }

    /// Writes one column per channel with a `ch0,ch1,...` header.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut wtr = csv::Writer::from_writer(BufWriter::new(file));
        let header: Vec<String> = (0..self.channels()).map(|c| format!("ch{c}")).collect();
        wtr.write_record(&header)?;
        for column in self.samples.axis_iter(Axis(1)) {
            wtr.write_record(column.iter().map(|v| v.to_string()))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>, sample_rate_hz: f64) -> Result<Signal> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(BufReader::new(file));
        let channels = rdr.headers()?.len();
        if channels == 0 {
            return Err(Error::EmptyInput(format!(
                "{} has no columns",
                path.display()
            )));
        }
        let mut columns: Vec<f64> = Vec::new();
        for record in rdr.records() {
            let record = record?;
            if record.len() != channels {
                return Err(Error::Shape(format!(
                    "row with {} fields, header declares {channels}",
                    record.len()
                )));
            }
            for field in record.iter() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidSpec(format!("not a number: {field:?}")))?;
                columns.push(v);
            }
        }
        let len = columns.len() / channels;
        let time_major = Array2::from_shape_vec((len, channels), columns)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Signal::new(time_major.t().to_owned(), sample_rate_hz)
    }

    /// Writes channel-major little-endian f32 samples plus a `.json` sidecar header.
    pub fn write_raw(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = Vec::with_capacity(self.samples.len() * 4);
        for v in self.samples.iter() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let header = RawHeader {
            channels: self.channels(),
            length: self.len(),
            sample_rate_hz: self.sample_rate_hz,
        };
        let sidecar = raw_sidecar_path(path);
        let file = File::create(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &header)?;
        Ok(())
    }

    pub fn read_raw(path: impl AsRef<Path>) -> Result<Signal> {
        let path = path.as_ref();
        let sidecar = raw_sidecar_path(path);
        let file = File::open(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let header: RawHeader = serde_json::from_reader(BufReader::new(file))?;
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let expected = header.channels * header.length * 4;
        if bytes.len() != expected {
            return Err(Error::Shape(format!(
                "{} holds {} bytes, header implies {expected}",
                path.display(),
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let samples = Array2::from_shape_vec((header.channels, header.length), values)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Signal::new(samples, header.sample_rate_hz)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawHeader {
    channels: usize,
    length: usize,
    sample_rate_hz: f64,
}

fn raw_sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Window length `L` and step `S`, both in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    window_len: usize,
    step: usize,
}

impl WindowConfig {
    pub fn new(window_len: usize, step: usize) -> Result<Self> {
        if step == 0 || step >= window_len {
            return Err(Error::InvalidSpec(format!(
                "need 0 < step < window_len, got step={step}, window_len={window_len}"
            )));
        }
        if !window_len.is_multiple_of(step) {
            return Err(Error::InvalidSpec(format!(
                "window_len {window_len} is not divisible by step {step}"
            )));
        }
        Ok(Self { window_len, step })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Number of sub-windows per window, `L / S`.
    pub fn sub_windows(&self) -> usize {
        self.window_len / self.step
    }

    pub fn overlap(&self) -> usize {
        self.window_len - self.step
    }

    /// Number of complete windows in a signal of `len` samples.
    pub fn window_count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.step + 1
        }
    }
}

/// Sliding windows over a signal. Window `i` starts at sample `i * step`;
/// windows that would run past the end of the signal are not produced.
pub fn window_iter<'a>(
    signal: &'a Signal,
    cfg: &WindowConfig,
) -> Result<impl ExactSizeIterator<Item = ArrayView2<'a, f64>> + 'a> {
    let count = cfg.window_count(signal.len());
    if count == 0 {
        return Err(Error::EmptyInput(format!(
            "signal of {} samples is shorter than one window of {}",
            signal.len(),
            cfg.window_len()
        )));
    }
    let (len, step) = (cfg.window_len(), cfg.step());
    let samples = signal.samples.view();
    Ok((0..count).map(move |i| samples.slice_move(s![.., i * step..i * step + len])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Mono,
    Multi,
}

/// Parameters of a synthetic cosine test signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SignalKind,
    pub base_freq_hz: f64,
    /// Harmonic count for `Multi`; ignored for `Mono`.
    pub harmonics: usize,
    pub duration_s: f64,
}

impl SyntheticSpec {
    pub fn mono(base_freq_hz: f64, duration_s: f64) -> Self {
        Self {
            kind: SignalKind::Mono,
            base_freq_hz,
            harmonics: 1,
            duration_s,
        }
    }

    pub fn multi(base_freq_hz: f64, harmonics: usize, duration_s: f64) -> Self {
        Self {
            kind: SignalKind::Multi,
            base_freq_hz,
            harmonics,
            duration_s,
        }
    }

    /// Highest frequency present in the generated signal.
    pub fn max_freq_hz(&self) -> f64 {
        match self.kind {
            SignalKind::Mono => self.base_freq_hz,
            SignalKind::Multi => self.harmonics as f64 * self.base_freq_hz,
        }
    }

    pub fn sample_count(&self, sample_rate_hz: f64) -> usize {
        (self.duration_s * sample_rate_hz).round() as usize
    }

    fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if !(self.base_freq_hz > 0.0) || !(self.duration_s > 0.0) || !(sample_rate_hz > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "frequency, duration and sample rate must be positive: {self:?} at {sample_rate_hz} Hz"
            )));
        }
        if self.kind == SignalKind::Multi && self.harmonics == 0 {
            return Err(Error::InvalidSpec(
                "multi-frequency signal needs K >= 1".into(),
            ));
        }
        if self.max_freq_hz() >= sample_rate_hz / 2.0 {
            return Err(Error::InvalidSpec(format!(
                "highest component {} Hz violates Nyquist for f_s = {sample_rate_hz} Hz",
                self.max_freq_hz()
            )));
        }
        Ok(())
    }
}

/// Generates a single-channel cosine (Mono) or harmonic sum (Multi).
pub fn gen_signal(spec: &SyntheticSpec, sample_rate_hz: f64) -> Result<Signal> {
    spec.validate(sample_rate_hz)?;
    let n = spec.sample_count(sample_rate_hz);
    let harmonics = match spec.kind {
        SignalKind::Mono => 1,
        SignalKind::Multi => spec.harmonics,
    };
    let values = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate_hz;
            (1..=harmonics)
                .map(|k| (2.0 * PI * k as f64 * spec.base_freq_hz * t).cos())
                .sum()
        })
        .collect();
    Signal::from_channel(values, sample_rate_hz)
}

/// Seeded white Gaussian noise, `[channels × len]`.
pub fn gaussian_noise(
    channels: usize,
    len: usize,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<Signal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = Array2::from_shape_simple_fn((channels, len), || StandardNormal.sample(&mut rng));
    Signal::new(samples, sample_rate_hz)
}

/// Largest absolute sample value, the discrete stand-in for `sup |x(t)|`.
pub fn sup_amplitude(signal: &Signal) -> Result<f64> {
    if signal.is_empty() {
        return Err(Error::EmptyInput("sup_amplitude of an empty signal".into()));
    }
    Ok(signal
        .samples
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs())))
}

/// Root-mean-square difference normalised by the reference range.
pub fn nrmse(reference: &[f64], candidate: &[f64]) -> Result<f64> {
    if reference.len() != candidate.len() {
        return Err(Error::Shape(format!(
            "nrmse over {} reference and {} candidate values",
            reference.len(),
            candidate.len()
        )));
    }
    if reference.len() < 2 {
        return Err(Error::EmptyInput("nrmse needs at least two values".into()));
    }
    let (lo, hi) = reference
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if range == 0.0 {
        return Err(Error::DivisionByZero("reference is constant".into()));
    }
    let mse = reference
        .iter()
        .zip(candidate)
        .map(|(r, c)| (r - c) * (r - c))
        .sum::<f64>()
        / reference.len() as f64;
    Ok(mse.sqrt() / range)
}
