//! Property tests of the streaming engine against its non-streaming oracles.

use ndarray::{s, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use streamcnn::model::reference::{random_model, RandomModelConfig};
use streamcnn::model::{
    cumulative_pool_factor, extended_window_oracle, required_context, ModelSpec,
};
use streamcnn::signal::{gaussian_noise, WindowConfig};
use streamcnn::stream::{StreamMode, StreamSession};

fn noise(channels: usize, len: usize, seed: u64) -> Array2<f32> {
    gaussian_noise(channels, len, 32.0, seed)
        .unwrap()
        .samples()
        .mapv(|v| v as f32)
}

fn model(
    seed: u64,
    step: usize,
    ratio: usize,
    channels: usize,
    pools: usize,
) -> (ModelSpec, WindowConfig) {
    let cfg = WindowConfig::new(step * ratio, step).unwrap();
    let mut rc = RandomModelConfig::new(cfg).with_pools(pools);
    rc.input_channels = channels;
    rc.max_depth = 6;
    (random_model(&mut ChaCha8Rng::seed_from_u64(seed), &rc), cfg)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_stream_matches_extended_window(
        seed in any::<u64>(),
        step in prop::sample::select(vec![4usize, 8, 12, 16]),
        ratio in 2usize..=5,
        channels in 1usize..=3,
        pools in 0usize..=2,
    ) {
        let (spec, cfg) = model(seed, step, ratio, channels, pools);
        let l = cfg.window_len();
        let ctx = required_context(&spec);
        let len = ctx.next_multiple_of(step) + l + 2 * step;
        let stream = noise(channels, len, seed);
        let mut session = StreamSession::new(&spec, cfg, StreamMode::Exact).unwrap();
        let outputs = session.push_stream(stream.view()).unwrap();
        let mut checked = 0;
        for (n, out) in outputs.iter().enumerate().filter(|(_, o)| !o.warmup) {
            let begin = (n + 1) * step - l;
            if begin < ctx {
                continue;
            }
            let oracle = extended_window_oracle(
                &spec,
                stream.slice(s![.., begin - ctx..begin]),
                stream.slice(s![.., begin..begin + l]),
            )
            .unwrap();
            prop_assert!(out.embedding.max_abs_diff(&oracle).unwrap() <= 1e-4);
            checked += 1;
        }
        prop_assert!(checked >= 2);
    }

    #[test]
    fn approximate_ring_entries_are_independent_chunks(
        seed in any::<u64>(),
        step in prop::sample::select(vec![4usize, 8, 16]),
        ratio in 2usize..=5,
        pools in 0usize..=2,
    ) {
        let (spec, cfg) = model(seed, step, ratio, 1, pools);
        let stream = noise(1, cfg.window_len() + 2 * step, seed);
        let mut session = StreamSession::new(&spec, cfg, StreamMode::Approximate).unwrap();
        let outputs = session.push_stream(stream.view()).unwrap();
        let sub = step / cumulative_pool_factor(&spec);
        for (n, out) in outputs.iter().enumerate() {
            let alone = spec.features(stream.slice(s![.., n * step..(n + 1) * step])).unwrap();
            let values = out.embedding.values();
            let tail = values.slice(s![.., values.ncols() - sub..]);
            prop_assert_eq!(tail, alone.values());
        }
    }

    #[test]
    fn reset_replays_identically(seed in any::<u64>(), exact in any::<bool>()) {
        let (spec, cfg) = model(seed, 8, 3, 2, 1);
        let mode = if exact { StreamMode::Exact } else { StreamMode::Approximate };
        let stream = noise(2, 6 * 8, seed);
        let mut session = StreamSession::new(&spec, cfg, mode).unwrap();
        let first = session.push_stream(stream.view()).unwrap();
        session.reset();
        prop_assert_eq!(session.push_stream(stream.view()).unwrap(), first);
    }
}

#[test]
fn wrong_chunk_shape_is_rejected() {
    let (spec, cfg) = model(1, 8, 2, 1, 0);
    let mut session = StreamSession::new(&spec, cfg, StreamMode::Exact).unwrap();
    assert!(session.push_samples(noise(1, 7, 0).view()).is_err());
    assert!(session.push_samples(noise(2, 8, 0).view()).is_err());
    assert!(session.push_samples(noise(1, 8, 0).view()).is_ok());
}

#[test]
fn warmup_lasts_l_over_s_chunks() {
    let (spec, cfg) = model(2, 8, 4, 1, 0);
    let mut session = StreamSession::new(&spec, cfg, StreamMode::Exact).unwrap();
    let outputs = session.push_stream(noise(1, 6 * 8, 3).view()).unwrap();
    let warm: Vec<bool> = outputs.iter().map(|o| !o.warmup).collect();
    assert_eq!(warm, [false, false, false, true, true, true]);
    assert!(outputs[3].classifier_output.is_some());
    assert!(outputs[2].classifier_output.is_none());
}
