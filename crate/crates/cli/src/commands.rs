use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{json, Value};
use streamcnn::analysis::{
    default_fs_list, default_pool_len_list, shiftability_report, shiftability_report_band_limited,
    sweep_fs, sweep_pool_len, zero_padding_probe, SweepResult,
};
use streamcnn::bench::{run_speedup, BenchConfig, BenchMode};
use streamcnn::compare::{compare_with_full, ModeComparison};
use streamcnn::layers::PoolKind;
use streamcnn::model::reference::{by_name, random_model_seeded, RandomModelConfig};
use streamcnn::model::{alignment_check, load_model, save_model, ModelSpec};
use streamcnn::signal::{gaussian_noise, gen_signal, Signal, SyntheticSpec, WindowConfig};
use streamcnn::stream::StreamMode;
use streamcnn::{Error, Result};

use crate::{
    Cli, Command, Format, GenModelArgs, GenSignalArgs, ModelSource, PoolBoundsArgs, ProbeArgs,
    SignalSource, SpeedupArgs, StreamCompareArgs,
};

pub fn run(cli: &Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| io_error(&cli.out_dir, e))?;
    match &cli.command {
        Command::PoolBounds(a) => pool_bounds(cli, a),
        Command::Probe(a) => probe(cli, a),
        Command::StreamCompare(a) => stream_compare(cli, a),
        Command::Speedup(a) => speedup(cli, a),
        Command::GenModel(a) => gen_model(cli, a),
        Command::GenSignal(a) => gen_signal_cmd(cli, a),
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn out_path(cli: &Cli, stem: &str, ext: &str) -> PathBuf {
    cli.out_dir.join(format!("{stem}.{ext}"))
}

fn write_sweep(cli: &Cli, stem: &str, result: &SweepResult) -> Result<PathBuf> {
    let path = out_path(cli, stem, cli.format.extension());
    match cli.format {
        Format::Csv => result.write_csv(&path)?,
        Format::Json => write_json(&path, &serde_json::to_value(result)?)?,
    }
    Ok(path)
}

fn pool_bounds(cli: &Cli, args: &PoolBoundsArgs) -> Result<()> {
    let kind = PoolKind::from_str(&args.kind)?;
    let fs_list = args.fs_list.clone().unwrap_or_else(default_fs_list);
    let lp_list = args.lp_list.clone().unwrap_or_else(default_pool_len_list);
    let signals = [
        ("mono", SyntheticSpec::mono(args.f0, 1.0)),
        ("multi", SyntheticSpec::multi(args.f0, args.harmonics, 1.0)),
    ];
    for (label, spec) in signals {
        let by_fs = sweep_fs(&spec, &fs_list, args.pool_window_s, kind)?;
        let by_lp = sweep_pool_len(&spec, &lp_list, args.fs, kind)?;
        for (sweep, result) in [("fs", &by_fs), ("lp", &by_lp)] {
            let path = write_sweep(cli, &format!("pool_bounds_{sweep}_{label}"), result)?;
            let violations = result
                .rows
                .iter()
                .filter(|r| r.max_rel > r.bound + 1e-9)
                .count();
            println!(
                "{}: {} rows, {violations} above the bound",
                path.display(),
                result.rows.len()
            );
        }
    }
    Ok(())
}

fn probe(cli: &Cli, args: &ProbeArgs) -> Result<()> {
    let spec = load_model(&args.model)?;
    let cfg = match args.step {
        Some(step) => WindowConfig::new(spec.window().window_len(), step)?,
        None => spec.window(),
    };
    let report = zero_padding_probe(&spec)?;
    let shift = match args.f_max {
        Some(f) => shiftability_report_band_limited(&spec, &cfg, f)?,
        None => shiftability_report(&spec, &cfg)?,
    };
    let name = spec.name();
    let probe_path = out_path(cli, &format!("probe_{name}"), cli.format.extension());
    match cli.format {
        Format::Csv => report.write_csv(&probe_path)?,
        Format::Json => write_json(&probe_path, &serde_json::to_value(&report)?)?,
    }
    let shift_path = out_path(cli, &format!("shiftability_{name}"), "json");
    write_json(&shift_path, &serde_json::to_value(&shift)?)?;

    println!(
        "zero-padding probe of {name} ({} input samples)",
        report.input_len
    );
    println!(
        "{:<8} {:>7} {:>9} {:>9}",
        "layer", "total", "affected", "fraction"
    );
    for r in &report.rows {
        println!(
            "{:<8} {:>7} {:>9} {:>8.2}%",
            r.layer,
            r.total,
            r.affected,
            100.0 * r.fraction
        );
    }
    println!(
        "alignment (L = {}, S = {}): {}",
        cfg.window_len(),
        cfg.step(),
        shift.alignment
    );
    println!(
        "deepest conv contamination {:.2}% -> {:?}",
        100.0 * shift.final_contaminated_fraction,
        shift.recommendation
    );
    println!(
        "wrote {} and {}",
        probe_path.display(),
        shift_path.display()
    );
    Ok(())
}

fn load_or_random(source: &ModelSource, seed: u64, step: usize) -> Result<ModelSpec> {
    match &source.model {
        Some(path) => load_model(path),
        None => {
            let mut rc = RandomModelConfig::new(WindowConfig::new(source.window, step)?)
                .with_pools(source.pools);
            rc.input_channels = source.input_channels;
            Ok(random_model_seeded(seed, &rc))
        }
    }
}

fn read_signal(path: &Path, fs: f64) -> Result<Signal> {
    if path.extension().is_some_and(|e| e == "raw") {
        Signal::read_raw(path)
    } else {
        Signal::read_csv(path, fs)
    }
}

fn stream_compare(cli: &Cli, args: &StreamCompareArgs) -> Result<()> {
    let modes = args
        .modes
        .iter()
        .map(|m| StreamMode::from_str(m))
        .collect::<Result<Vec<_>>>()?;
    let default_step = (args.source.window / 4).max(1);
    let spec = load_or_random(&args.source, cli.seed, args.step.unwrap_or(default_step))?;
    let l = spec.window().window_len();
    let step = args.step.unwrap_or(spec.window().step());
    let cfg = WindowConfig::new(l, step)?;
    let stream = match &args.signal {
        Some(path) => read_signal(path, args.fs.unwrap_or(spec.sample_rate_hz()))?,
        None => gaussian_noise(
            spec.input_channels(),
            l + args.windows.saturating_sub(1) * step,
            spec.sample_rate_hz(),
            cli.seed,
        )?,
    };
    if stream.channels() != spec.input_channels() {
        return Err(Error::Shape(format!(
            "signal has {} channels, {} expects {}",
            stream.channels(),
            spec.name(),
            spec.input_channels()
        )));
    }
    let stream = stream.samples().mapv(|v| v as f32);
    let results = modes
        .iter()
        .map(|&mode| compare_with_full(&spec, cfg, stream.view(), mode, args.force_misaligned))
        .collect::<Result<Vec<_>>>()?;

    let path = out_path(cli, "stream_compare", cli.format.extension());
    match cli.format {
        Format::Csv => write_text(&path, &compare_csv(step, &results))?,
        Format::Json => write_json(
            &path,
            &json!({ "model": spec.name(), "window": l, "step": step, "modes": results }),
        )?,
    }
    for r in &results {
        println!(
            "{:<12} windows {:>4}  embedding NRMSE {:.4}%  output NRMSE {}",
            r.mode.to_string(),
            r.windows,
            100.0 * r.embedding_nrmse,
            r.output_nrmse
                .iter()
                .map(|v| format!("{:.4}%", 100.0 * v))
                .collect::<Vec<_>>()
                .join(" ")
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn compare_csv(step: usize, results: &[ModeComparison]) -> String {
    let mut out = String::from("mode,step,misaligned,windows,target,nrmse\n");
    for r in results {
        let targets = std::iter::once(("embedding".to_string(), r.embedding_nrmse)).chain(
            r.output_nrmse
                .iter()
                .enumerate()
                .map(|(u, &v)| (format!("output{u}"), v)),
        );
        for (target, v) in targets {
            out += &format!(
                "{},{step},{},{},{target},{v}\n",
                r.mode, r.misaligned, r.windows
            );
        }
    }
    out
}

fn speedup(cli: &Cli, args: &SpeedupArgs) -> Result<()> {
    let window = args.source.window;
    let smallest = args
        .steps
        .as_ref()
        .and_then(|s| s.iter().copied().min())
        .unwrap_or((window / 32).max(1));
    let spec = load_or_random(&args.source, cli.seed, smallest)?;
    let l = spec.window().window_len();
    let steps = match &args.steps {
        Some(s) => s.clone(),
        None => (1..=5)
            .map(|k| l >> k)
            .filter(|&s| s > 0 && l % s == 0)
            .filter(|&s| {
                WindowConfig::new(l, s).is_ok_and(|c| alignment_check(&c, &spec).is_aligned())
            })
            .collect(),
    };
    let bench = BenchConfig {
        steps,
        repetitions: args.repetitions,
        warmup: args.warmup,
        windows_per_rep: args.windows_per_rep,
        seed: cli.seed,
    };
    let result = run_speedup(&spec, &bench)?;
    let path = out_path(cli, "speedup", cli.format.extension());
    match cli.format {
        Format::Csv => result.write_csv(&path)?,
        Format::Json => write_json(&path, &serde_json::to_value(&result)?)?,
    }
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    for mode in BenchMode::ALL {
        if let Some(f) = result.fit(mode) {
            println!(
                "{:<6} ns/window = {:.2} * S + {:.0}  (R^2 = {:.4})",
                mode.as_str(),
                f.slope,
                f.intercept,
                f.r_squared
            );
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn gen_model(cli: &Cli, args: &GenModelArgs) -> Result<()> {
    let spec = if args.name == "random" {
        let mut rc = RandomModelConfig::new(WindowConfig::new(args.window, args.step)?)
            .with_pools(args.pools);
        rc.input_channels = args.input_channels;
        random_model_seeded(cli.seed, &rc)
    } else {
        by_name(&args.name, cli.seed).ok_or_else(|| {
            Error::InvalidSpec(format!(
                "unknown model {:?}; expected h_ppg, h_eeg, h_acc or random",
                args.name
            ))
        })?
    };
    let stem = args
        .output
        .clone()
        .unwrap_or_else(|| spec.name().to_string());
    let path = out_path(cli, &stem, "json");
    save_model(&spec, &path)?;
    println!(
        "wrote {} ({} parameters, L = {}, S = {})",
        path.display(),
        spec.param_count(),
        spec.window().window_len(),
        spec.window().step()
    );
    Ok(())
}

fn gen_signal_cmd(cli: &Cli, args: &GenSignalArgs) -> Result<()> {
    let signal = match args.kind {
        SignalSource::Noise => {
            let len = (args.duration * args.fs).round() as usize;
            gaussian_noise(args.channels, len, args.fs, cli.seed)?
        }
        SignalSource::Mono | SignalSource::Multi => {
            let spec = if args.kind == SignalSource::Mono {
                SyntheticSpec::mono(args.f0, args.duration)
            } else {
                SyntheticSpec::multi(args.f0, args.harmonics, args.duration)
            };
            let s = gen_signal(&spec, args.fs)?;
            if args.channels == 1 {
                s
            } else {
                s.tile_channels(args.channels)?
            }
        }
    };
    let path = if args.raw {
        let p = out_path(cli, &args.output, "raw");
        signal.write_raw(&p)?;
        p
    } else {
        let p = out_path(cli, &args.output, "csv");
        signal.write_csv(&p)?;
        p
    };
    println!(
        "wrote {} ({} channels × {} samples at {} Hz)",
        path.display(),
        signal.channels(),
        signal.len(),
        signal.sample_rate_hz()
    );
    Ok(())
}
