//! The probe's layer-by-layer count agrees with running the same moving-average
//! network through the ordinary inference path.

use ndarray::{Array1, Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use streamcnn::analysis::{zero_padding_probe, CONTAMINATION_EPS};
use streamcnn::layers::{BatchNormParams, ConvLayer};
use streamcnn::model::reference::{self, random_model, RandomModelConfig};
use streamcnn::model::{Layer, ModelSpec};
use streamcnn::signal::WindowConfig;

fn averaging(spec: &ModelSpec) -> ModelSpec {
    spec.map_layers(|layer| match layer {
        Layer::Conv(c) => {
            let (out, inp, m) = c.weights().dim();
            let w = Array3::from_elem((out, inp, m), 1.0 / (m * inp) as f32);
            Layer::Conv(ConvLayer::new(w, Array1::zeros(out), c.dilation()).unwrap())
        }
        Layer::BatchNorm(b) => Layer::BatchNorm(BatchNormParams::identity(b.channels())),
        other => other.clone(),
    })
    .unwrap()
}

fn embedding_affected(spec: &ModelSpec) -> usize {
    let avg = averaging(spec);
    let ones = Array2::<f32>::ones((spec.input_channels(), spec.window().window_len()));
    let emb = avg.features(ones.view()).unwrap();
    emb.values()
        .axis_iter(Axis(1))
        .filter(|col| col.iter().any(|&v| f64::from(v) < 1.0 - CONTAMINATION_EPS))
        .count()
}

#[test]
fn last_probe_row_matches_embedding() {
    let mut specs = vec![reference::ppg(0), reference::eeg(0), reference::acc(0)];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let mut rc = RandomModelConfig::new(WindowConfig::new(128, 32).unwrap()).with_pools(2);
        rc.input_channels = 2;
        specs.push(random_model(&mut rng, &rc));
    }
    for spec in &specs {
        let report = zero_padding_probe(spec).unwrap();
        let last = report.rows.last().unwrap();
        assert_eq!(last.total, spec.embedding_len(), "{}", spec.name());
        assert_eq!(last.affected, embedding_affected(spec), "{}", spec.name());
    }
}
