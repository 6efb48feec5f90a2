//! JSON manifest plus raw little-endian f32 weight blob.
//!
//! Blob layout follows manifest order: conv weights `[out][in][tap]` then
//! bias, batch-norm scale then shift, dense weights `[out][in]` then bias.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Layer, ModelSpec};
use crate::error::{Error, Result};
use crate::layers::{BatchNormParams, ConvLayer, DenseLayer, PoolKind, PoolLayer};
use crate::signal::WindowConfig;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    name: String,
    input_channels: usize,
    sample_rate_hz: f64,
    window_len: usize,
    step: usize,
    classifier_start: usize,
    layers: Vec<LayerDesc>,
    weights_file: String,
    weights_sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LayerDesc {
    Conv {
        kernel: usize,
        dilation: usize,
        in_ch: usize,
        out_ch: usize,
    },
    Relu,
    #[serde(alias = "batch_norm")]
    BatchNorm {
        channels: usize,
    },
    Pool {
        kind: PoolKind,
        len: usize,
    },
    Flatten,
    Dense {
        in_units: usize,
        out_units: usize,
    },
}

impl LayerDesc {
    fn param_count(&self) -> usize {
        match *self {
            LayerDesc::Conv {
                kernel,
                in_ch,
                out_ch,
                ..
            } => out_ch * in_ch * kernel + out_ch,
            LayerDesc::BatchNorm { channels } => 2 * channels,
            LayerDesc::Dense {
                in_units,
                out_units,
            } => out_units * in_units + out_units,
            _ => 0,
        }
    }
}

fn describe(layer: &Layer) -> LayerDesc {
    match layer {
        Layer::Conv(c) => LayerDesc::Conv {
            kernel: c.kernel_size(),
            dilation: c.dilation(),
            in_ch: c.in_channels(),
            out_ch: c.out_channels(),
        },
        Layer::Relu => LayerDesc::Relu,
        Layer::BatchNorm(b) => LayerDesc::BatchNorm {
            channels: b.channels(),
        },
        Layer::Pool(p) => LayerDesc::Pool {
            kind: p.kind(),
            len: p.pool_len(),
        },
        Layer::Flatten => LayerDesc::Flatten,
        Layer::Dense(d) => LayerDesc::Dense {
            in_units: d.in_units(),
            out_units: d.out_units(),
        },
    }
}

fn push_all<'a>(blob: &mut Vec<u8>, values: impl Iterator<Item = &'a f32>) {
    for v in values {
        blob.extend_from_slice(&v.to_le_bytes());
    }
}

fn weight_blob(spec: &ModelSpec) -> Vec<u8> {
    let mut blob = Vec::with_capacity(spec.param_count() * 4);
    for layer in spec.layers() {
        match layer {
            Layer::Conv(c) => {
                push_all(&mut blob, c.weights().iter());
                push_all(&mut blob, c.bias().iter());
            }
            Layer::BatchNorm(b) => {
                push_all(&mut blob, b.scale().iter());
                push_all(&mut blob, b.shift().iter());
            }
            Layer::Dense(d) => {
                push_all(&mut blob, d.weights().iter());
                push_all(&mut blob, d.bias().iter());
            }
            _ => {}
        }
    }
    blob
}

/// Writes `<manifest_path>` and its weight blob (`<stem>.bin`, same directory).
pub fn save_model(spec: &ModelSpec, manifest_path: impl AsRef<Path>) -> Result<()> {
    let manifest_path = manifest_path.as_ref();
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Manifest(format!("bad manifest path {}", manifest_path.display())))?;
    let weights_file = format!("{stem}.bin");
    let weights_path = manifest_path.with_file_name(&weights_file);
    let blob = weight_blob(spec);
    std::fs::write(&weights_path, &blob).map_err(|e| Error::io(&weights_path, e))?;

    let window = spec.window();
    let manifest = Manifest {
        name: spec.name().to_string(),
        input_channels: spec.input_channels(),
        sample_rate_hz: spec.sample_rate_hz(),
        window_len: window.window_len(),
        step: window.step(),
        classifier_start: spec.classifier_start(),
        layers: spec.layers().iter().map(describe).collect(),
        weights_file,
        weights_sha256: hex::encode(Sha256::digest(&blob)),
    };
    let file = File::create(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
    Ok(())
}

struct BlobReader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl BlobReader<'_> {
    fn take(&mut self, n: usize) -> Vec<f32> {
        let end = self.offset + 4 * n;
        let out = self.bytes[self.offset..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        self.offset = end;
        out
    }
}

pub fn load_model(manifest_path: impl AsRef<Path>) -> Result<ModelSpec> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", manifest_path.display())))?;

    let weights_path = manifest_path.with_file_name(&manifest.weights_file);
    let bytes = std::fs::read(&weights_path).map_err(|e| Error::io(&weights_path, e))?;
    let expected: usize = manifest
        .layers
        .iter()
        .map(LayerDesc::param_count)
        .sum::<usize>()
        * 4;
    if bytes.len() != expected {
        return Err(Error::Manifest(format!(
            "{} holds {} bytes, layers declare {expected}",
            weights_path.display(),
            bytes.len()
        )));
    }
    let digest = hex::encode(Sha256::digest(&bytes));
    if !digest.eq_ignore_ascii_case(&manifest.weights_sha256) {
        return Err(Error::Manifest(format!(
            "sha256 of {} is {digest}, manifest declares {}",
            weights_path.display(),
            manifest.weights_sha256
        )));
    }

    let mut blob = BlobReader {
        bytes: &bytes,
        offset: 0,
    };
    let shape_err = |e: ndarray::ShapeError| Error::Manifest(e.to_string());
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for desc in &manifest.layers {
        let layer = match *desc {
            LayerDesc::Conv {
                kernel,
                dilation,
                in_ch,
                out_ch,
            } => {
                let w = Array3::from_shape_vec(
                    (out_ch, in_ch, kernel),
                    blob.take(out_ch * in_ch * kernel),
                )
                .map_err(shape_err)?;
                let b = Array1::from(blob.take(out_ch));
                Layer::Conv(ConvLayer::new(w, b, dilation)?)
            }
            LayerDesc::Relu => Layer::Relu,
            LayerDesc::BatchNorm { channels } => {
                let scale = Array1::from(blob.take(channels));
                let shift = Array1::from(blob.take(channels));
                Layer::BatchNorm(BatchNormParams::new(scale, shift)?)
            }
            LayerDesc::Pool { kind, len } => Layer::Pool(PoolLayer::new(kind, len)?),
            LayerDesc::Flatten => Layer::Flatten,
            LayerDesc::Dense {
                in_units,
                out_units,
            } => {
                let w =
                    Array2::from_shape_vec((out_units, in_units), blob.take(out_units * in_units))
                        .map_err(shape_err)?;
                let b = Array1::from(blob.take(out_units));
                Layer::Dense(DenseLayer::new(w, b)?)
            }
        };
        layers.push(layer);
    }

    ModelSpec::new(
        manifest.name,
        manifest.input_channels,
        manifest.sample_rate_hz,
        WindowConfig::new(manifest.window_len, manifest.step)?,
        layers,
        manifest.classifier_start,
    )
}
