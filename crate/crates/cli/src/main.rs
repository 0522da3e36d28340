use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use fmod_core::classify::Endpoint;
use fmod_core::synth::Shape;

mod commands;

/// Fast-moving-object detection: frame differencing finds motion, and only
/// the moving region is classified.
#[derive(Parser, Debug)]
#[command(name = "fmod", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run detection over a clip and write a metrics report
    Detect(DetectArgs),
    /// Repeat detection runs and report per-run and aggregate summaries
    Bench(BenchArgs),
    /// Write a synthetic clip with per-frame ground truth
    Synth(SynthArgs),
    /// Show the shipped model specs, or one spec file
    Info(InfoArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Input clip: a .y4m file or a directory of .ppm/.pgm frames
    #[arg(long)]
    input: Option<PathBuf>,

    /// Metrics report path [default: stdout]
    #[arg(long)]
    metrics: Option<PathBuf>,

    /// Shipped model name or path to a .spec file
    #[arg(long, default_value = "mobilenet")]
    model: String,

    /// Classifier: `reference` or `external:<tcp://host:port | unix:path | exec:cmd>`
    #[arg(long, default_value = "reference", value_parser = parse_backend)]
    backend: Backend,

    /// Training directory for the reference classifier, laid out as <class>/*.ppm
    /// [default: generated shape corpus]
    #[arg(long)]
    ref_train: Option<PathBuf>,

    /// Difference threshold, 0-255
    #[arg(long, default_value_t = 25)]
    threshold: u8,

    /// Opening structuring element side (odd)
    #[arg(long, default_value_t = 3, value_parser = parse_odd)]
    se_size: usize,

    /// Box blur side (odd)
    #[arg(long, default_value_t = 5, value_parser = parse_odd)]
    blur_size: usize,

    /// Fewest motion pixels that count as movement
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    min_area: u64,

    /// Ground-truth JSON for accuracy scoring [default: unscored]
    #[arg(long)]
    truth: Option<PathBuf>,

    /// Power source: const:<watts>, file:<t_ms,watts csv> or sysfs:<microwatt file>
    #[arg(long, default_value = "const:15", value_parser = parse_power)]
    power_source: String,

    /// Overlap classification of one frame pair with detection of the next
    #[arg(long)]
    overlap: bool,

    /// Seed for the generated reference training corpus
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// JSON file of flag values; flags given on the command line win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[command(flatten)]
    run: RunArgs,

    /// Annotated output: a .y4m file or a frame directory [default: none]
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,

    /// Number of repetitions
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    repeat: u32,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output clip (.y4m) or frame directory
    #[arg(long, default_value = "synth.y4m")]
    output: PathBuf,

    /// Ground-truth JSON path [default: output with a .json extension]
    #[arg(long)]
    truth: Option<PathBuf>,

    /// Frame size as WxH
    #[arg(long, default_value = "320x240", value_parser = parse_size)]
    size: (usize, usize),

    /// Number of frames (at least 2)
    #[arg(long, default_value_t = 120, value_parser = clap::value_parser!(u64).range(2..))]
    frames: u64,

    /// Object shape: disk, square, triangle or cross
    #[arg(long, default_value = "square", value_parser = parse_shape)]
    shape: Shape,

    /// Object side in pixels
    #[arg(long, default_value_t = 40)]
    object_size: usize,

    /// Per-channel noise amplitude
    #[arg(long, default_value_t = 6)]
    noise: u8,

    /// Noise seed
    #[arg(long, default_value_t = 7)]
    seed: u64,

    /// Also write the four-shape reference training corpus to this directory
    #[arg(long)]
    training: Option<PathBuf>,

    /// Training samples per class
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    per_class: u64,

    /// JSON file of flag values; flags given on the command line win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InfoArgs {
    /// Show only this spec file
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Clone, Debug)]
enum Backend {
    Reference,
    External(Endpoint),
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    if s == "reference" {
        return Ok(Backend::Reference);
    }
    let endpoint = s
        .strip_prefix("external:")
        .ok_or_else(|| format!("expected `reference` or `external:<endpoint>`, got {s:?}"))?;
    endpoint.parse().map(Backend::External).map_err(|e| e.to_string())
}

fn parse_odd(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(k) if k % 2 == 1 => Ok(k),
        _ => Err(format!("expected an odd positive integer, got {s:?}")),
    }
}

fn parse_power(s: &str) -> Result<String, String> {
    match s.split_once(':') {
        Some(("const", _)) => s.parse::<fmod_core::PowerSource>().map(|_| s.to_string()).map_err(|e| e.to_string()),
        Some(("file" | "sysfs", path)) if !path.is_empty() => Ok(s.to_string()),
        _ => Err(format!("expected const:<watts>, file:<path> or sysfs:<path>, got {s:?}")),
    }
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let bad = || format!("expected WxH, got {s:?}");
    let (w, h) = s.split_once('x').ok_or_else(bad)?;
    match (w.parse(), h.parse()) {
        (Ok(w), Ok(h)) if w > 0 && h > 0 => Ok((w, h)),
        _ => Err(bad()),
    }
}

fn parse_shape(s: &str) -> Result<Shape, String> {
    s.parse().map_err(|e: fmod_core::Error| e.to_string())
}

/// A failure and the exit code it maps to.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(fmod_core::Error),
}

impl From<fmod_core::Error> for Failure {
    fn from(e: fmod_core::Error) -> Self {
        Failure::Runtime(e)
    }
}

/// Turns a JSON config object into extra `--flag value` arguments for
/// every key not already given on the command line.
fn config_args(sub: &str, matches: &ArgMatches, path: &std::path::Path) -> Result<Vec<OsString>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => fmod_core::Error::NotFound(path.to_path_buf()),
        _ => fmod_core::Error::Io(e),
    })?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
    let object = value
        .as_object()
        .ok_or_else(|| Failure::Usage(format!("config {}: expected a JSON object", path.display())))?;
    let cmd = Cli::command();
    let sub_cmd = cmd.find_subcommand(sub).expect("known subcommand");
    let mut extra = Vec::new();
    for (key, v) in object {
        let id = key.replace('-', "_");
        if id == "config" || !sub_cmd.get_arguments().any(|a| a.get_id() == id.as_str()) {
            return Err(Failure::Usage(format!("config {}: unknown key {key:?} for {sub}", path.display())));
        }
        if matches.value_source(&id) == Some(ValueSource::CommandLine) {
            continue;
        }
        let flag = format!("--{}", id.replace('_', "-"));
        match v {
            serde_json::Value::Bool(true) => extra.push(flag.into()),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::String(s) => extra.push(format!("{flag}={s}").into()),
            serde_json::Value::Number(n) => extra.push(format!("{flag}={n}").into()),
            _ => return Err(Failure::Usage(format!("config {}: {key:?} must be a scalar", path.display()))),
        }
    }
    Ok(extra)
}

fn parse_with_config(argv: Vec<OsString>) -> Result<Cli, Failure> {
    let matches = Cli::command().try_get_matches_from(&argv).unwrap_or_else(|e| e.exit());
    let (sub, sub_matches) = matches.subcommand().expect("subcommand is required");
    let config = match sub_matches.try_get_one::<PathBuf>("config") {
        Ok(Some(path)) => path.clone(),
        _ => return Ok(Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit())),
    };
    let extra = config_args(sub, sub_matches, &config)?;
    let mut merged = argv;
    merged.extend(extra);
    let matches = Cli::command().try_get_matches_from(merged).unwrap_or_else(|e| e.exit());
    Ok(Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit()))
}

fn usage_for(sub: &str) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    cmd.find_subcommand_mut(sub).map(|c| c.render_usage().to_string()).unwrap_or_default()
}

fn main() -> ExitCode {
    let outcome = parse_with_config(std::env::args_os().collect()).and_then(|cli| match cli.command {
        Command::Detect(args) => commands::detect(args),
        Command::Bench(args) => commands::bench(args),
        Command::Synth(args) => commands::synth(args),
        Command::Info(args) => commands::info(args),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
