//! Agreement between streaming and full-window inference over a stream.

use ndarray::{s, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{full_inference, ModelSpec};
use crate::signal::{nrmse, WindowConfig};
use crate::stream::{StreamMode, StreamSession};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeComparison {
    pub mode: StreamMode,
    pub misaligned: bool,
    /// Windows compared (every window once the ring is full).
    pub windows: usize,
    /// NRMSE of all embedding values across the compared windows.
    pub embedding_nrmse: f64,
    /// NRMSE of each classifier output unit across the compared windows.
    pub output_nrmse: Vec<f64>,
    pub embedding_max_abs: f64,
}

/// Streams `stream` through a session in `mode` and compares every warm
/// window against [`full_inference`] on the same `L` samples. With
/// `force_misaligned` a step that breaks pooling alignment is accepted.
pub fn compare_with_full(
    spec: &ModelSpec,
    cfg: WindowConfig,
    stream: ArrayView2<'_, f32>,
    mode: StreamMode,
    force_misaligned: bool,
) -> Result<ModeComparison> {
    let mut session = if force_misaligned {
        StreamSession::new_forced(spec, cfg, mode)?
    } else {
        StreamSession::new(spec, cfg, mode)?
    };
    let (l, step) = (cfg.window_len(), cfg.step());
    let outputs = session.push_stream(stream)?;
    let mut ref_emb = Vec::new();
    let mut got_emb = Vec::new();
    let units = spec.output_units();
    let mut ref_out = vec![Vec::new(); units];
    let mut got_out = vec![Vec::new(); units];
    let mut windows = 0;
    for (k, out) in outputs.iter().enumerate() {
        let Some(cls) = &out.classifier_output else {
            continue;
        };
        let end = (k + 1) * step;
        let (emb, full_cls) = full_inference(spec, stream.slice(s![.., end - l..end]))?;
        ref_emb.extend(emb.values().iter().map(|&v| f64::from(v)));
        got_emb.extend(out.embedding.values().iter().map(|&v| f64::from(v)));
        for u in 0..units {
            ref_out[u].push(f64::from(full_cls[u]));
            got_out[u].push(f64::from(cls[u]));
        }
        windows += 1;
    }
    if windows < 2 {
        return Err(Error::EmptyInput(format!(
            "stream of {} samples yields {windows} complete windows; need at least 2",
            stream.ncols()
        )));
    }
    let embedding_max_abs = ref_emb
        .iter()
        .zip(&got_emb)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(ModeComparison {
        mode,
        misaligned: session.is_misaligned(),
        windows,
        embedding_nrmse: nrmse(&ref_emb, &got_emb)?,
        output_nrmse: ref_out
            .iter()
            .zip(&got_out)
            .map(|(r, g)| nrmse(r, g))
            .collect::<Result<_>>()?,
        embedding_max_abs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference;
    use crate::signal::gaussian_noise;

    fn noise(channels: usize, len: usize, seed: u64) -> ndarray::Array2<f32> {
        gaussian_noise(channels, len, 32.0, seed)
            .unwrap()
            .samples()
            .mapv(|v| v as f32)
    }

    #[test]
    fn exact_first_window_is_full_inference() {
        let spec = reference::ppg(3);
        let stream = noise(1, 256 + 64, 1);
        let cmp = compare_with_full(
            &spec,
            spec.window(),
            stream.view(),
            StreamMode::Exact,
            false,
        )
        .unwrap();
        assert_eq!(cmp.windows, 2);
        assert_eq!(cmp.output_nrmse.len(), 1);
        assert!(!cmp.misaligned);
    }

    #[test]
    fn approximate_differs_more_than_exact_on_acc() {
        let spec = reference::acc(4);
        let stream = noise(3, 960 + 160 * 6, 2);
        let exact = compare_with_full(
            &spec,
            spec.window(),
            stream.view(),
            StreamMode::Exact,
            false,
        )
        .unwrap();
        let approx = compare_with_full(
            &spec,
            spec.window(),
            stream.view(),
            StreamMode::Approximate,
            false,
        )
        .unwrap();
        assert_eq!(exact.windows, 7);
        assert!(approx.embedding_nrmse > exact.embedding_nrmse);
    }

    #[test]
    fn misalignment_needs_force() {
        let spec = reference::ppg(0);
        let cfg = WindowConfig::new(256, 32).unwrap();
        let cfg_bad = WindowConfig::new(256, 16).unwrap();
        let stream = noise(1, 512, 3);
        assert!(compare_with_full(&spec, cfg, stream.view(), StreamMode::Exact, false).is_ok());
        assert!(matches!(
            compare_with_full(&spec, cfg_bad, stream.view(), StreamMode::Exact, false),
            Err(Error::Alignment(_))
        ));
        let forced =
            compare_with_full(&spec, cfg_bad, stream.view(), StreamMode::Exact, true).unwrap();
        assert!(forced.misaligned);
    }

    #[test]
    fn too_short_stream() {
        let spec = reference::ppg(0);
        let stream = noise(1, 256, 3);
        assert!(compare_with_full(
            &spec,
            spec.window(),
            stream.view(),
            StreamMode::Exact,
            false
        )
        .is_err());
    }
}
