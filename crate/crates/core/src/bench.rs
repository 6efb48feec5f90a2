//! Wall-clock comparison of full-window inference against streaming, plus
//! the least-squares fit used to check that cost grows linearly with `S`.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::{s, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{full_inference, mac_count_extractor, ModelSpec};
use crate::signal::{gaussian_noise, WindowConfig};
use crate::stream::{StreamMode, StreamSession};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ slope · x + intercept`. A constant `y` is
/// fitted perfectly and reports `R² = 1`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "fit over {} x and {} y values",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mean_x).powi(2)).sum();
    if x.len() < 2 || sxx == 0.0 {
        return Err(Error::DegenerateFit(
            "need at least two distinct x values".into(),
        ));
    }
    let sxy: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mean_x) * (b - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_tot: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (slope * a + intercept)).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMode {
    /// `full_inference` on a whole window.
    Full,
    /// One `push_samples` call of `S` samples in exact mode.
    Exact,
    /// One `push_samples` call of `S` samples in approximate mode.
    Approx,
}

impl BenchMode {
    pub const ALL: [BenchMode; 3] = [BenchMode::Full, BenchMode::Exact, BenchMode::Approx];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchMode::Full => "full",
            BenchMode::Exact => "exact",
            BenchMode::Approx => "approx",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub step: usize,
    pub window: usize,
    pub mode: BenchMode,
    /// Median time to produce one window output.
    pub ns_per_window: f64,
    /// Feature-extractor multiply-accumulates per window output.
    pub mac_count: u64,
    /// Full-window extractor MACs divided by `mac_count`.
    pub mac_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeFit {
    pub mode: BenchMode,
    pub fit: LineFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    /// Time per window against `S`, one fit per mode.
    pub fits: Vec<ModeFit>,
    pub warnings: Vec<String>,
}

impl BenchResult {
    pub const CSV_HEADER: [&'static str; 6] = [
        "step",
        "window",
        "mode",
        "ns_per_window",
        "mac_count",
        "mac_ratio",
    ];

    pub fn fit(&self, mode: BenchMode) -> Option<LineFit> {
        self.fits.iter().find(|f| f.mode == mode).map(|f| f.fit)
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                r.window.to_string(),
                r.mode.as_str().to_string(),
                format!("{:.1}", r.ns_per_window),
                r.mac_count.to_string(),
                r.mac_ratio.to_string(),
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

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub steps: Vec<usize>,
    /// Timed repetitions per (step, mode); the median is reported.
    pub repetitions: usize,
    /// Untimed repetitions run first.
    pub warmup: usize,
    /// Window outputs produced per repetition.
    pub windows_per_rep: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(steps: Vec<usize>) -> Self {
        Self {
            steps,
            repetitions: 15,
            warmup: 3,
            windows_per_rep: 16,
            seed: 0,
        }
    }
}

const MIN_REPETITIONS: usize = 10;

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Times one repetition and returns nanoseconds per window output.
fn time_rep(
    mode: BenchMode,
    spec: &ModelSpec,
    cfg: &WindowConfig,
    stream: &Array2<f32>,
    sessions: &mut [StreamSession<'_>; 2],
    windows: usize,
) -> Result<f64> {
    let (l, step) = (cfg.window_len(), cfg.step());
    // Streaming consumes the samples right after the warm-up prefix of L,
    // full inference the windows ending at the same positions.
    let start = Instant::now();
    match mode {
        BenchMode::Full => {
            for i in 0..windows {
                let from = (i + 1) * step;
                std::hint::black_box(full_inference(spec, stream.slice(s![.., from..from + l]))?);
            }
        }
        BenchMode::Exact | BenchMode::Approx => {
            let session = &mut sessions[usize::from(mode == BenchMode::Approx)];
            for i in 0..windows {
                let from = l + i * step;
                std::hint::black_box(
                    session.push_samples(stream.slice(s![.., from..from + step]))?,
                );
            }
        }
    }
    Ok(start.elapsed().as_nanos() as f64 / windows as f64)
}

/// Per-step fixture: the shared input stream and two warm sessions.
struct StepRun<'a> {
    cfg: WindowConfig,
    stream: Array2<f32>,
    sessions: [StreamSession<'a>; 2],
    times: [Vec<f64>; 3],
}

/// Measures full-window inference and both streaming modes for every step
/// in `bench.steps`. Each repetition visits every step and mode in turn, so
/// slow drift of the machine affects all of them alike. Runs on the calling
/// thread.
pub fn run_speedup(spec: &ModelSpec, bench: &BenchConfig) -> Result<BenchResult> {
    if bench.repetitions < MIN_REPETITIONS {
        return Err(Error::InvalidSpec(format!(
            "need at least {MIN_REPETITIONS} repetitions, got {}",
            bench.repetitions
        )));
    }
    if bench.steps.is_empty() || bench.windows_per_rep == 0 {
        return Err(Error::InvalidSpec(
            "need at least one step and one window per repetition".into(),
        ));
    }
    let l = spec.window().window_len();
    let full_macs = mac_count_extractor(spec, l)?;
    let mut runs = Vec::with_capacity(bench.steps.len());
    for &step in &bench.steps {
        let cfg = WindowConfig::new(l, step)?;
        let len = l + bench.windows_per_rep * step;
        let stream = gaussian_noise(
            spec.input_channels(),
            len,
            spec.sample_rate_hz(),
            bench.seed,
        )?
        .samples()
        .mapv(|v| v as f32);
        let mut sessions = [
            StreamSession::new(spec, cfg, StreamMode::Exact)?,
            StreamSession::new(spec, cfg, StreamMode::Approximate)?,
        ];
        for session in &mut sessions {
            session.push_stream(stream.slice(s![.., ..l]))?;
        }
        runs.push(StepRun {
            cfg,
            stream,
            sessions,
            times: Default::default(),
        });
    }

    for rep in 0..bench.warmup + bench.repetitions {
        for run in &mut runs {
            for (k, mode) in BenchMode::ALL.into_iter().enumerate() {
                let t = time_rep(
                    mode,
                    spec,
                    &run.cfg,
                    &run.stream,
                    &mut run.sessions,
                    bench.windows_per_rep,
                )?;
                if rep >= bench.warmup {
                    run.times[k].push(t);
                }
            }
        }
    }

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for run in &mut runs {
        let step = run.cfg.step();
        let chunk_macs = mac_count_extractor(spec, step)?;
        for (k, mode) in BenchMode::ALL.into_iter().enumerate() {
            let ns = median(&mut run.times[k]);
            if ns < 1_000.0 {
                warnings.push(format!(
                    "{} at S = {step}: median {ns:.0} ns is close to timer resolution",
                    mode.as_str()
                ));
            }
            let mac_count = if mode == BenchMode::Full {
                full_macs
            } else {
                chunk_macs
            };
            rows.push(BenchRow {
                step,
                window: l,
                mode,
                ns_per_window: ns,
                mac_count,
                mac_ratio: full_macs as f64 / mac_count as f64,
            });
        }
    }

    let mut fits = Vec::new();
    for mode in BenchMode::ALL {
        let (x, y): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| (r.step as f64, r.ns_per_window))
            .unzip();
        if let Ok(fit) = fit_line(&x, &y) {
            fits.push(ModeFit { mode, fit });
        }
    }
    Ok(BenchResult {
        rows,
        fits,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference::{random_model, RandomModelConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_line() {
        let f = fit_line(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_and_hand_cases() {
        let f = fit_line(&[1.0, 2.0, 5.0], &[4.0, 4.0, 4.0]).unwrap();
        assert_eq!(f.slope, 0.0);
        assert_eq!(f.intercept, 4.0);
        let f = fit_line(&[0.0, 1.0, 2.0], &[0.0, 1.0, 4.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept + 1.0 / 3.0).abs() < 1e-12);
        // SS_res = 2/3 over SS_tot = 26/3.
        assert!((f.r_squared - (1.0 - 2.0 / 26.0)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            fit_line(&[1.0, 1.0], &[0.0, 2.0]),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(
            fit_line(&[1.0], &[0.0]),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(fit_line(&[], &[]), Err(Error::DegenerateFit(_))));
        assert!(matches!(
            fit_line(&[1.0, 2.0], &[0.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn speedup_rows_and_mac_ratio() {
        let cfg = WindowConfig::new(64, 8).unwrap();
        let mut rc = RandomModelConfig::new(cfg);
        rc.batchnorm = false;
        let spec = random_model(&mut ChaCha8Rng::seed_from_u64(2), &rc);
        let mut bench = BenchConfig::new(vec![8, 16, 32]);
        bench.repetitions = 10;
        bench.warmup = 1;
        bench.windows_per_rep = 2;
        let res = run_speedup(&spec, &bench).unwrap();
        assert_eq!(res.rows.len(), 9);
        for r in &res.rows {
            let expected = match r.mode {
                BenchMode::Full => 1.0,
                _ => 64.0 / r.step as f64,
            };
            assert_eq!(r.mac_ratio, expected);
            assert!(r.ns_per_window > 0.0);
        }
        assert_eq!(res.fits.len(), 3);
        let mut buf = Vec::new();
        res.write_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,window,mode,ns_per_window,mac_count,mac_ratio\n8,64,full,"));
    }

    #[test]
    fn speedup_rejects_bad_config() {
        let spec = crate::model::reference::acc(0);
        let mut bench = BenchConfig::new(vec![160]);
        bench.repetitions = 3;
        assert!(run_speedup(&spec, &bench).is_err());
        let ppg = crate::model::reference::ppg(0);
        assert!(run_speedup(&ppg, &BenchConfig::new(vec![12])).is_err());
    }
}
