//! Empirical shift error of misaligned pooling on synthetic signals and the
//! parameter sweeps that compare it against the analytic bound.

use std::io::Write;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::bounds::{capped_relative_bound, pooling_error_bound, PoolingBoundInput};
use crate::error::{Error, Result};
use crate::layers::{pool, PoolKind, PoolLayer};
use crate::signal::{gen_signal, sup_amplitude, Signal, SyntheticSpec};

/// Worst mean and max of `|difference| / A` over a step sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftError {
    pub mean_rel: f64,
    pub max_rel: f64,
}

/// Pools `signal[0..W]` and `signal[S..S+W]` for each step `S` and compares
/// the overlapping pooled outputs after shifting the first by `S / L_p`
/// columns. A zero signal has zero error.
pub fn empirical_pool_shift_error(
    signal: &Signal,
    pool_layer: &PoolLayer,
    window_len: usize,
    steps: &[usize],
) -> Result<ShiftError> {
    if steps.is_empty() {
        return Err(Error::EmptyInput("step sweep is empty".into()));
    }
    let amplitude = sup_amplitude(signal)?;
    let lp = pool_layer.pool_len();
    let x = signal.samples();
    let mut worst = ShiftError {
        mean_rel: 0.0,
        max_rel: 0.0,
    };
    for &step in steps {
        if step == 0 || step >= window_len {
            return Err(Error::Precondition(format!(
                "step {step} does not give two overlapping windows of {window_len} samples"
            )));
        }
        if step + window_len > signal.len() {
            return Err(Error::Precondition(format!(
                "signal of {} samples is too short for step {step} and window {window_len}",
                signal.len()
            )));
        }
        let first = pool(x.slice(ndarray::s![.., ..window_len]), pool_layer)?;
        let second = pool(
            x.slice(ndarray::s![.., step..step + window_len]),
            pool_layer,
        )?;
        let shift = step / lp;
        let overlap = first.ncols() - shift;
        let mut sum = 0.0;
        let mut max = 0.0_f64;
        for c in 0..first.nrows() {
            for j in 0..overlap {
                let d = (first[[c, j + shift]] - second[[c, j]]).abs();
                sum += d;
                max = max.max(d);
            }
        }
        let n = (overlap * first.nrows()) as f64;
        if amplitude > 0.0 {
            worst.mean_rel = worst.mean_rel.max(sum / n / amplitude);
            worst.max_rel = worst.max_rel.max(max / amplitude);
        }
    }
    Ok(worst)
}

/// Steps used by the sweeps: every offset up to two pooling windows for
/// short pools, otherwise offsets of 1, L_p/4, L_p/2, 3L_p/4 and L_p - 1
/// beyond zero and one whole window. Only steps below `window_len` are kept.
pub fn default_steps(pool_len: usize, window_len: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = if pool_len <= 32 {
        (1..2 * pool_len).collect()
    } else {
        let offsets = [
            1,
            pool_len / 4,
            pool_len / 2,
            3 * pool_len / 4,
            pool_len - 1,
        ];
        [0, pool_len]
            .iter()
            .flat_map(|&q| offsets.iter().map(move |&r| q + r))
            .collect()
    };
    steps.retain(|&s| s > 0 && s < window_len);
    steps.sort_unstable();
    steps.dedup();
    steps
}

/// Window length for a sweep row: at least four pooling windows and long
/// enough to cover one full period of the base frequency past the largest
/// step, so the steepest part of the signal is always sampled.
pub fn sweep_window_len(pool_len: usize, sample_rate_hz: f64, base_freq_hz: f64) -> usize {
    let period = (sample_rate_hz / base_freq_hz).ceil() as usize;
    let min_len = (4 * pool_len).max(period + 2 * pool_len);
    min_len.div_ceil(pool_len) * pool_len
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    /// Swept value: `f_s` in Hz or `L_p` in samples.
    pub param: f64,
    pub mean_rel: f64,
    pub max_rel: f64,
    /// Analytic bound relative to `A`, capped at 2.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub const CSV_HEADER: [&'static str; 4] = ["param", "mean_rel", "max_rel", "bound"];

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.param.to_string(),
                r.mean_rel.to_string(),
                r.max_rel.to_string(),
                r.bound.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(file))
    }
}

fn sweep_row(
    spec: &SyntheticSpec,
    sample_rate_hz: f64,
    pool_len: usize,
    kind: PoolKind,
    param: f64,
) -> Result<SweepRow> {
    let window_len = sweep_window_len(pool_len, sample_rate_hz, spec.base_freq_hz);
    let steps = default_steps(pool_len, window_len);
    let needed = window_len + steps.last().copied().unwrap_or(0);
    let mut long = *spec;
    long.duration_s = long.duration_s.max((needed + 1) as f64 / sample_rate_hz);
    let signal = gen_signal(&long, sample_rate_hz)?;
    let layer = PoolLayer::new(kind, pool_len)?;
    let err = empirical_pool_shift_error(&signal, &layer, window_len, &steps)?;
    let amplitude = sup_amplitude(&signal)?;
    let bound = capped_relative_bound(&PoolingBoundInput::new(
        amplitude,
        spec.max_freq_hz(),
        sample_rate_hz,
        pool_len,
    )?)?;
    Ok(SweepRow {
        param,
        mean_rel: err.mean_rel,
        max_rel: err.max_rel,
        bound,
    })
}

/// Evaluates rows on scoped threads; row order follows `params`.
fn run_rows<P: Copy + Send + Sync>(
    params: &[P],
    row: impl Fn(P) -> Result<SweepRow> + Sync,
) -> Result<SweepResult> {
    let row = &row;
    let rows = std::thread::scope(|s| {
        let handles: Vec<_> = params.iter().map(|&p| s.spawn(move || row(p))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep row panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(SweepResult { rows })
}

/// One row per sample rate with `L_p = pool_window_seconds · f_s`.
/// The signal duration in `spec` is extended as needed.
pub fn sweep_fs(
    spec: &SyntheticSpec,
    fs_list: &[f64],
    pool_window_seconds: f64,
    kind: PoolKind,
) -> Result<SweepResult> {
    run_rows(fs_list, |fs| {
        let pool_len = (pool_window_seconds * fs).round() as usize;
        sweep_row(spec, fs, pool_len, kind, fs)
    })
}

/// One row per pooling length at a fixed sample rate.
pub fn sweep_pool_len(
    spec: &SyntheticSpec,
    lp_list: &[usize],
    sample_rate_hz: f64,
    kind: PoolKind,
) -> Result<SweepResult> {
    run_rows(lp_list, |lp| {
        sweep_row(spec, sample_rate_hz, lp, kind, lp as f64)
    })
}

/// `f_s ∈ {32, 64, ..., 1024}` Hz.
pub fn default_fs_list() -> Vec<f64> {
    (5..=10).map(|e| f64::from(1u32 << e)).collect()
}

/// `L_p ∈ {2, 4, ..., 65536}`.
pub fn default_pool_len_list() -> Vec<usize> {
    (1..=16).map(|e| 1usize << e).collect()
}

/// Outcome of one randomized bound check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub spec: SyntheticSpec,
    pub kind: PoolKind,
    pub pool_len: usize,
    pub sample_rate_hz: f64,
    pub step: usize,
    pub empirical_max_rel: f64,
    /// `pooling_error_bound / A` without the cap at 2.
    pub bound_rel: f64,
    pub capped_bound_rel: f64,
}

/// Draws `count` random (signal, L_p, f_s, S, kind) cases and measures the
/// empirical shift error of each against its bound.
pub fn random_bound_checks(count: usize, seed: u64) -> Result<Vec<BoundCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_bound_check(&mut rng)).collect()
}

fn random_bound_check(rng: &mut impl Rng) -> Result<BoundCheck> {
    let kind = *[PoolKind::Max, PoolKind::Average, PoolKind::First]
        .choose(rng)
        .unwrap();
    let pool_len = rng.random_range(1..=64);
    let sample_rate_hz = f64::from(rng.random_range(16u32..=1024));
    let harmonics = rng.random_range(1..=6usize);
    // Log-uniform highest frequency between 1e-3 and 0.49 of f_s.
    let ratio = 10f64.powf(rng.random_range(-3.0..0.49f64.log10()));
    let base = ratio * sample_rate_hz / harmonics as f64;
    let window_len = pool_len * rng.random_range(2..=8);
    let step = rng.random_range(1..window_len);
    let duration = (window_len + step + 1) as f64 / sample_rate_hz;
    let spec = if harmonics == 1 {
        SyntheticSpec::mono(base, duration)
    } else {
        SyntheticSpec::multi(base, harmonics, duration)
    };
    let signal = gen_signal(&spec, sample_rate_hz)?;
    let layer = PoolLayer::new(kind, pool_len)?;
    let err = empirical_pool_shift_error(&signal, &layer, window_len, &[step])?;
    let amplitude = sup_amplitude(&signal)?;
    let inp = PoolingBoundInput::new(amplitude, spec.max_freq_hz(), sample_rate_hz, pool_len)?;
    Ok(BoundCheck {
        spec,
        kind,
        pool_len,
        sample_rate_hz,
        step,
        empirical_max_rel: err.max_rel,
        bound_rel: pooling_error_bound(&inp)? / amplitude,
        capped_bound_rel: capped_relative_bound(&inp)?,
    })
}
