//! Zero-padding contamination probe and the streaming recommendation built
//! on top of it.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, Array3, Axis};
use serde::Serialize;

use super::bounds::relative_step_bound;
use crate::error::{Error, Result};
use crate::layers::{conv1d_causal, pool, ConvLayer, Padding};
use crate::model::{alignment_check, Alignment, Layer, ModelSpec};
use crate::signal::WindowConfig;

/// Values below `1 - CONTAMINATION_EPS` count as touched by zero padding.
pub const CONTAMINATION_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    /// `conv<n>` or `pool<n>`, counted from 1.
    pub layer: String,
    /// Position in the model's layer list.
    pub layer_index: usize,
    /// Temporal points in the layer output.
    pub total: usize,
    /// Temporal points where some channel deviates from 1.
    pub affected: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub input_len: usize,
    pub rows: Vec<ProbeRow>,
}

impl ProbeReport {
    pub const CSV_HEADER: [&'static str; 4] = ["layer", "total", "affected", "fraction"];

    pub fn conv_rows(&self) -> impl Iterator<Item = &ProbeRow> {
        self.rows.iter().filter(|r| r.layer.starts_with("conv"))
    }

    /// Contaminated fraction at the deepest convolution. Later max pooling
    /// can mask contamination, so pooling rows are not used here.
    pub fn final_fraction(&self) -> f64 {
        self.conv_rows().last().map_or(0.0, |r| r.fraction)
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.layer.clone(),
                r.total.to_string(),
                r.affected.to_string(),
                r.fraction.to_string(),
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

fn moving_average(layer: &ConvLayer) -> Result<ConvLayer> {
    let (out, inp, m) = layer.weights().dim();
    let tap = 1.0 / (m * inp) as f32;
    ConvLayer::new(
        Array3::from_elem((out, inp, m), tap),
        Array1::zeros(out),
        layer.dilation(),
    )
}

fn probe_row(label: String, layer_index: usize, x: &Array2<f32>) -> ProbeRow {
    let threshold = 1.0 - CONTAMINATION_EPS;
    let total = x.ncols();
    let affected = x
        .axis_iter(Axis(1))
        .filter(|col| col.iter().any(|&v| f64::from(v) < threshold))
        .count();
    ProbeRow {
        layer: label,
        layer_index,
        total,
        affected,
        fraction: affected as f64 / total as f64,
    }
}

/// Runs an all-ones input of `input_len` samples through `layers` with every
/// convolution replaced by a bias-free moving average and batch norm
/// replaced by the identity, then reports the points that fell below 1.
pub fn probe_layers(
    layers: &[Layer],
    input_channels: usize,
    input_len: usize,
) -> Result<ProbeReport> {
    let mut x = Array2::<f32>::ones((input_channels, input_len));
    let mut rows = Vec::new();
    let (mut convs, mut pools) = (0, 0);
    for (idx, layer) in layers.iter().enumerate() {
        match layer {
            Layer::Conv(c) => {
                x = conv1d_causal(x.view(), &moving_average(c)?, Padding::Zero)?;
                convs += 1;
                rows.push(probe_row(format!("conv{convs}"), idx, &x));
            }
            Layer::Pool(p) => {
                x = pool(x.view(), p)?;
                pools += 1;
                rows.push(probe_row(format!("pool{pools}"), idx, &x));
            }
            // Identity on an input that stays within [0, 1].
            Layer::Relu | Layer::BatchNorm(_) => {}
            Layer::Flatten | Layer::Dense(_) => {
                return Err(Error::UnsupportedProbe(format!(
                    "layer {idx} ({}) is not part of a temporal feature extractor",
                    layer.kind_name()
                )))
            }
        }
    }
    Ok(ProbeReport { input_len, rows })
}

/// Zero-padding probe of the model's feature extractor over one window.
pub fn zero_padding_probe(spec: &ModelSpec) -> Result<ProbeReport> {
    probe_layers(
        spec.feature_layers(),
        spec.input_channels(),
        spec.window().window_len(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Recommendation {
    ApproximateStreaming,
    ExactStreaming,
    RetrainSignalPadding,
}

impl Recommendation {
    /// At most 5% contamination tolerates approximate streaming, at most
    /// 25% still works with exact streaming, anything more needs a model
    /// trained with signal padding.
    pub fn from_fraction(fraction: f64) -> Self {
        if fraction <= 0.05 {
            Recommendation::ApproximateStreaming
        } else if fraction <= 0.25 {
            Recommendation::ExactStreaming
        } else {
            Recommendation::RetrainSignalPadding
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageBound {
    pub stage: usize,
    pub layer_index: usize,
    pub pool_len: usize,
    /// Sample rate seen by this stage after earlier pooling.
    pub effective_fs_hz: f64,
    pub aligned: bool,
    /// Capped relative shift-error bound; 0 for aligned stages.
    pub relative_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftabilityReport {
    pub model: String,
    pub window_len: usize,
    pub step: usize,
    pub alignment: Alignment,
    pub alignment_blocking: bool,
    pub input_f_max_hz: f64,
    pub final_contaminated_fraction: f64,
    pub stage_bounds: Vec<StageBound>,
    pub recommendation: Recommendation,
}

/// [`shiftability_report_band_limited`] assuming the input may use the full
/// band up to Nyquist, which makes every misaligned stage saturate.
pub fn shiftability_report(spec: &ModelSpec, cfg: &WindowConfig) -> Result<ShiftabilityReport> {
    shiftability_report_band_limited(spec, cfg, spec.sample_rate_hz() / 2.0)
}

/// Combines the alignment check, the probe's final contaminated fraction
/// and per-stage shift-error bounds for inputs band-limited to
/// `input_f_max_hz`.
pub fn shiftability_report_band_limited(
    spec: &ModelSpec,
    cfg: &WindowConfig,
    input_f_max_hz: f64,
) -> Result<ShiftabilityReport> {
    let alignment = alignment_check(cfg, spec);
    let probe = zero_padding_probe(spec)?;
    let fraction = probe.final_fraction();

    let mut stage_bounds = Vec::new();
    let mut incoming = cfg.step();
    let mut factor = 1;
    let mut aligned_so_far = true;
    for (layer_index, layer) in spec.feature_layers().iter().enumerate() {
        let Layer::Pool(p) = layer else { continue };
        let lp = p.pool_len();
        aligned_so_far &= incoming.is_multiple_of(lp);
        let effective_fs_hz = spec.sample_rate_hz() / factor as f64;
        let f_max = input_f_max_hz.min(effective_fs_hz / 2.0);
        let relative_bound = if aligned_so_far {
            0.0
        } else {
            ((lp - 1) as f64 * relative_step_bound(f_max, effective_fs_hz)).min(2.0)
        };
        stage_bounds.push(StageBound {
            stage: stage_bounds.len(),
            layer_index,
            pool_len: lp,
            effective_fs_hz,
            aligned: aligned_so_far,
            relative_bound,
        });
        incoming = incoming.div_ceil(lp);
        factor *= lp;
    }

    Ok(ShiftabilityReport {
        model: spec.name().to_string(),
        window_len: cfg.window_len(),
        step: cfg.step(),
        alignment_blocking: !alignment.is_aligned(),
        alignment,
        input_f_max_hz,
        final_contaminated_fraction: fraction,
        stage_bounds,
        recommendation: Recommendation::from_fraction(fraction),
    })
}
