use std::io::Write;
use std::path::Path;

use fmod_core::classify::{
    fit_reference, load_model_spec, load_training_set, shipped_spec, shipped_specs, AdapterHandle, Classifier,
    ModelSpec, DEFAULT_ADAPTER_TIMEOUT_MS,
};
use fmod_core::frame_io::{create_sink, FrameSink, Y4mWriter};
use fmod_core::metrics::{Journal, MetricsReport, PowerSource, RunSummary, REPORT_SCHEMA};
use fmod_core::synth::{generate_synthetic, generate_training_set, write_training_set, GroundTruth, SynthSpec};
use fmod_core::{open_source, pipeline, Error, PipelineConfig};
use serde_json::json;

use crate::{usage_for, Backend, BenchArgs, DetectArgs, Failure, InfoArgs, RunArgs, SynthArgs};

/// Frame size of the movement-stage timing probe reported by `bench`.
const PROBE_SIZE: (usize, usize) = (3840, 2160);
const PROBE_REPEATS: usize = 5;

fn load_model(name: &str) -> Result<ModelSpec, Failure> {
    let path = Path::new(name);
    if path.exists() || name.ends_with(".spec") {
        return Ok(load_model_spec(path)?);
    }
    shipped_spec(name).ok_or_else(|| {
        let known: Vec<String> = shipped_specs().into_iter().map(|(_, s)| s.name).collect();
        Failure::Runtime(Error::InvalidSpec(format!("unknown model {name:?}; shipped: {}", known.join(", "))))
    })
}

fn classifier(run: &RunArgs) -> Result<Box<dyn Classifier>, Failure> {
    Ok(match &run.backend {
        Backend::Reference => {
            let samples = match &run.ref_train {
                Some(dir) => load_training_set(dir)?,
                None => generate_training_set(20, run.seed),
            };
            Box::new(fit_reference(&samples)?)
        }
        Backend::External(endpoint) => Box::new(AdapterHandle::connect(endpoint, DEFAULT_ADAPTER_TIMEOUT_MS)?),
    })
}

fn pipeline_config(run: &RunArgs) -> Result<PipelineConfig, Failure> {
    let config = PipelineConfig {
        diff_threshold: run.threshold,
        se_size: run.se_size,
        blur_size: run.blur_size,
        min_area: run.min_area as usize,
        overlap: run.overlap,
        ..PipelineConfig::new(load_model(&run.model)?)
    };
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(config)
}

fn power_source(run: &RunArgs) -> Result<PowerSource, Failure> {
    Ok(run.power_source.parse()?)
}

fn truth(run: &RunArgs) -> Result<Option<GroundTruth>, Failure> {
    Ok(run.truth.as_deref().map(GroundTruth::load).transpose()?)
}

fn require_input<'a>(run: &'a RunArgs, sub: &str) -> Result<&'a Path, Failure> {
    run.input
        .as_deref()
        .ok_or_else(|| Failure::Usage(format!("--input is required\n\n{}", usage_for(sub))))
}

fn emit(target: Option<&Path>, text: &str) -> Result<(), Failure> {
    match target {
        Some(path) => std::fs::write(path, format!("{text}\n")).map_err(Error::from)?,
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}").map_err(Error::from)?;
        }
    }
    Ok(())
}

pub fn detect(args: DetectArgs) -> Result<(), Failure> {
    let run = &args.run;
    let input = require_input(run, "detect")?;
    let config = pipeline_config(run)?;
    let power = power_source(run)?;
    let truth = truth(run)?;
    let mut clf = classifier(run)?;
    let mut source = open_source(input)?;
    let mut sink: Option<Box<dyn FrameSink>> = match &args.output {
        Some(path) => Some(create_sink(path, source.width(), source.height(), source.frame_rate())?),
        None => None,
    };
    let mut journal = Journal::default();
    let sink_ref: Option<&mut dyn FrameSink> = sink.as_deref_mut().map(|s| s as &mut dyn FrameSink);
    match pipeline::run(&mut source, &config, clf.as_mut(), sink_ref, &mut journal, power, truth.as_ref()) {
        Ok(out) => emit(run.metrics.as_deref(), &MetricsReport::new(out.summary, journal).to_json()),
        Err(e) => {
            emit(run.metrics.as_deref(), &MetricsReport::partial(journal).to_json())?;
            Err(e.into())
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n.max(1) as f64
}

fn aggregate(summaries: &[RunSummary]) -> serde_json::Value {
    let all = |f: fn(&RunSummary) -> Option<f64>| summaries.iter().map(f).collect::<Option<Vec<f64>>>();
    json!({
        "repeats": summaries.len(),
        "frames": summaries[0].frames,
        "movement_frames": summaries[0].movement_frames,
        "accuracy": all(|s| s.accuracy).map(|v| mean(v.into_iter())),
        "mean_latency_ms": mean(summaries.iter().map(|s| s.mean_latency_ms)),
        "mean_movement_ms": mean(summaries.iter().map(|s| s.mean_movement_ms)),
        "energy_j": mean(summaries.iter().map(|s| s.energy_j)),
        "mean_power_w": mean(summaries.iter().map(|s| s.mean_power_w)),
        "efficiency": all(|s| s.efficiency).map(|v| mean(v.into_iter())),
    })
}

pub fn bench(args: BenchArgs) -> Result<(), Failure> {
    let run = &args.run;
    let input = require_input(run, "bench")?;
    let config = pipeline_config(run)?;
    let truth = truth(run)?;
    let mut clf = classifier(run)?;

    let mut reports = Vec::with_capacity(args.repeat as usize);
    let mut summaries = Vec::with_capacity(args.repeat as usize);
    for rep in 0..args.repeat {
        let mut source = open_source(input)?;
        let mut journal = Journal::default();
        let out = pipeline::run(&mut source, &config, clf.as_mut(), None, &mut journal, power_source(run)?, truth.as_ref())
            .inspect_err(|_| {
                let _ = emit(run.metrics.as_deref(), &MetricsReport::partial(journal.clone()).to_json());
            })?;
        eprintln!(
            "run {}: {} frames, {} with movement, accuracy {}, latency {:.3} ms, movement {:.3} ms, power {:.3} W, efficiency {}",
            rep + 1,
            out.summary.frames,
            out.summary.movement_frames,
            out.summary.accuracy.map_or("n/a".into(), |a| format!("{a:.2}%")),
            out.summary.mean_latency_ms,
            out.summary.mean_movement_ms,
            out.summary.mean_power_w,
            out.summary.efficiency.map_or("n/a".into(), |e| format!("{e:.4} %/msW")),
        );
        summaries.push(out.summary.clone());
        reports.push(MetricsReport::new(out.summary, journal));
    }

    let (pw, ph) = PROBE_SIZE;
    let probe_ms = config.detector()?.time_stage(pw, ph, PROBE_REPEATS)?;
    eprintln!("movement stage at {pw}x{ph}: {probe_ms:.2} ms (median of {PROBE_REPEATS})");

    let report = json!({
        "schema": REPORT_SCHEMA,
        "runs": reports,
        "aggregate": aggregate(&summaries),
        "wall_clock": {
            "movement_probe": { "width": pw, "height": ph, "repeats": PROBE_REPEATS, "median_ms": probe_ms },
        },
    });
    emit(run.metrics.as_deref(), &serde_json::to_string_pretty(&report).expect("report serializes"))
}

pub fn synth(args: SynthArgs) -> Result<(), Failure> {
    let spec = SynthSpec {
        width: args.size.0,
        height: args.size.1,
        frames: args.frames as usize,
        object_size: args.object_size,
        noise_amplitude: args.noise,
        shape: args.shape,
        seed: args.seed,
        ..SynthSpec::default()
    };
    let clip = generate_synthetic(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
    let truth_path = args.truth.clone().unwrap_or_else(|| args.output.with_extension("json"));

    let mut sink: Box<dyn FrameSink> = if args.output.extension().and_then(|e| e.to_str()) == Some("y4m") {
        let file = std::io::BufWriter::new(std::fs::File::create(&args.output).map_err(Error::from)?);
        Box::new(Y4mWriter::new(file, spec.width, spec.height, (30, 1)).with_param("FMOD_SEED", &spec.seed.to_string()))
    } else {
        create_sink(&args.output, spec.width, spec.height, (30, 1))?
    };
    for frame in &clip.frames {
        sink.write_frame(frame)?;
    }
    sink.finish()?;
    std::fs::write(&truth_path, clip.truth.to_json()).map_err(Error::from)?;
    if let Some(dir) = &args.training {
        write_training_set(dir, &generate_training_set(args.per_class as usize, args.seed))?;
    }

    let summary = json!({
        "clip": args.output,
        "truth": truth_path,
        "training": args.training,
        "width": spec.width,
        "height": spec.height,
        "frames": spec.frames,
        "shape": spec.shape.name(),
        "label": spec.shape.class(),
        "seed": spec.seed,
    });
    emit(None, &serde_json::to_string_pretty(&summary).expect("summary serializes"))
}

fn describe(file: &str, spec: &ModelSpec) -> String {
    let n = spec.normalization;
    format!(
        "{:<14} {:>4}x{:<4} {:<13} mean [{:.3}, {:.3}, {:.3}] std [{:.3}, {:.3}, {:.3}]  {} label mappings  ({file})",
        spec.name,
        spec.input_width,
        spec.input_height,
        spec.layout.as_str(),
        n.mean[0],
        n.mean[1],
        n.mean[2],
        n.std[0],
        n.std[1],
        n.std[2],
        spec.label_map.len(),
    )
}

pub fn info(args: InfoArgs) -> Result<(), Failure> {
    let lines: Vec<String> = match &args.spec {
        Some(path) => vec![describe(&path.display().to_string(), &load_model_spec(path)?)],
        None => {
            let mut specs = shipped_specs();
            specs.sort_by(|a, b| a.1.name.cmp(&b.1.name));
            let mut lines = vec![format!("fmod {}", env!("CARGO_PKG_VERSION"))];
            lines.extend(specs.iter().map(|(file, spec)| describe(file, spec)));
            lines
        }
    };
    emit(None, &lines.join("\n"))
}
