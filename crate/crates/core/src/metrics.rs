//! Latency bookkeeping, power sampling, energy integration and the
//! accuracy-per-(ms·W) efficiency figure.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roi::Roi;

pub const REPORT_SCHEMA: u32 = 1;
pub const DEFAULT_POLL_INTERVAL_MS: u64 = 100;

/// Per-frame stage durations in milliseconds. Stages that did not run are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub read_ms: f64,
    pub movement_ms: f64,
    pub preprocess_ms: Option<f64>,
    pub classify_ms: Option<f64>,
    pub annotate_ms: f64,
    pub total_ms: f64,
}

impl StageTimings {
    pub fn sub_stage_sum(&self) -> f64 {
        self.read_ms
            + self.movement_ms
            + self.preprocess_ms.unwrap_or(0.0)
            + self.classify_ms.unwrap_or(0.0)
            + self.annotate_ms
    }
}

/// Milliseconds elapsed since `start` on the monotonic clock.
pub fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub t_ms: f64,
    pub watts: f64,
}

fn check_samples(samples: &[PowerSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    for s in samples {
        if !s.watts.is_finite() || s.watts < 0.0 || !s.t_ms.is_finite() {
            return Err(Error::Parse(format!("invalid power sample {s:?}")));
        }
    }
    if let Some(w) = samples.windows(2).find(|w| w[1].t_ms <= w[0].t_ms) {
        return Err(Error::Parse(format!("power samples not strictly increasing at t={} ms", w[1].t_ms)));
    }
    Ok(())
}

/// Trapezoidal integral of power from the first sample to `t_end_ms`, holding
/// the last sample constant past its timestamp. Returns joules.
pub fn integrate_energy(samples: &[PowerSample], t_end_ms: f64) -> Result<f64> {
    check_samples(samples)?;
    let last = samples[samples.len() - 1];
    if t_end_ms < last.t_ms {
        return Err(Error::Parse(format!("t_end {t_end_ms} ms precedes last sample at {} ms", last.t_ms)));
    }
    let mut mj = samples
        .windows(2)
        .map(|w| 0.5 * (w[0].watts + w[1].watts) * (w[1].t_ms - w[0].t_ms))
        .sum::<f64>();
    mj += last.watts * (t_end_ms - last.t_ms);
    Ok(mj / 1e3)
}

/// Accuracy percent divided by (latency ms × power W).
pub fn efficiency(accuracy_pct: f64, mean_latency_ms: f64, mean_power_w: f64) -> Result<f64> {
    if !(mean_latency_ms > 0.0 && mean_power_w > 0.0) {
        return Err(Error::DegenerateRun { latency_ms: mean_latency_ms, power_w: mean_power_w });
    }
    Ok(accuracy_pct / (mean_latency_ms * mean_power_w))
}

/// Power samples over a closed measurement window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    pub samples: Vec<PowerSample>,
    pub t_end_ms: f64,
}

impl PowerTrace {
    pub fn constant(watts: f64, duration_ms: f64) -> Self {
        PowerTrace { samples: vec![PowerSample { t_ms: 0.0, watts }], t_end_ms: duration_ms }
    }

    pub fn energy_j(&self) -> Result<f64> {
        integrate_energy(&self.samples, self.t_end_ms)
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| self.t_end_ms - s.t_ms)
    }

    /// Energy over the window length; a zero-length window reports the last sample.
    pub fn mean_power_w(&self) -> Result<f64> {
        let energy = self.energy_j()?;
        let secs = self.duration_ms() / 1e3;
        if secs > 0.0 {
            Ok(energy / secs)
        } else {
            Ok(self.samples[self.samples.len() - 1].watts)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    pub correct: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames: usize,
    pub movement_frames: usize,
    /// `None` when the run was not scored against ground truth.
    pub accuracy: Option<f64>,
    pub correct: Option<usize>,
    pub scored: Option<usize>,
    pub mean_latency_ms: f64,
    pub mean_movement_ms: f64,
    pub energy_j: f64,
    pub mean_power_w: f64,
    /// `None` when unscored or when latency or power is zero.
    pub efficiency: Option<f64>,
}

pub fn summarize(timings: &[StageTimings], power: &PowerTrace, score: Option<Score>) -> Result<RunSummary> {
    if timings.is_empty() {
        return Err(Error::EmptyRun);
    }
    let n = timings.len() as f64;
    let mean_latency_ms = timings.iter().map(|t| t.total_ms).sum::<f64>() / n;
    let mean_movement_ms = timings.iter().map(|t| t.movement_ms).sum::<f64>() / n;
    let energy_j = power.energy_j()?;
    let mean_power_w = power.mean_power_w()?;
    let accuracy = score.filter(|s| s.total > 0).map(|s| 100.0 * s.correct as f64 / s.total as f64);
    let efficiency = accuracy.and_then(|a| efficiency(a, mean_latency_ms, mean_power_w).ok());
    Ok(RunSummary {
        frames: timings.len(),
        movement_frames: timings.iter().filter(|t| t.classify_ms.is_some()).count(),
        accuracy,
        correct: score.map(|s| s.correct),
        scored: score.map(|s| s.total),
        mean_latency_ms,
        mean_movement_ms,
        energy_j,
        mean_power_w,
        efficiency,
    })
}

/// One line of the per-frame journal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub movement: bool,
    pub roi: Roi,
    pub label: Option<String>,
    pub score: Option<f64>,
    pub timings: StageTimings,
}

/// Append-only per-run record of frame results.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Journal {
    pub frames: Vec<FrameRecord>,
}

impl Journal {
    pub fn push(&mut self, record: FrameRecord) {
        self.frames.push(record);
    }

    pub fn timings(&self) -> Vec<StageTimings> {
        self.frames.iter().map(|f| f.timings).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema: u32,
    pub complete: bool,
    pub summary: Option<RunSummary>,
    pub frames: Vec<FrameRecord>,
}

impl MetricsReport {
    pub fn new(summary: RunSummary, journal: Journal) -> Self {
        MetricsReport { schema: REPORT_SCHEMA, complete: true, summary: Some(summary), frames: journal.frames }
    }

    /// A report for a run that aborted partway.
    pub fn partial(journal: Journal) -> Self {
        MetricsReport { schema: REPORT_SCHEMA, complete: false, summary: None, frames: journal.frames }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Keys whose values depend on the wall clock or on measured power.
pub const WALL_CLOCK_FIELDS: [&str; 7] = [
    "timings",
    "mean_latency_ms",
    "mean_movement_ms",
    "energy_j",
    "mean_power_w",
    "efficiency",
    "wall_clock",
];

/// Recursively removes [`WALL_CLOCK_FIELDS`] from a JSON value.
pub fn strip_wall_clock(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            for key in WALL_CLOCK_FIELDS {
                map.remove(key);
            }
            map.values_mut().for_each(strip_wall_clock);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_wall_clock),
        _ => {}
    }
}

/// Where power readings come from.
#[derive(Clone, Debug, PartialEq)]
pub enum PowerSource {
    /// Fixed draw in watts.
    Constant(f64),
    /// Pre-recorded `t_ms,watts` samples on their own timeline.
    Replay(Vec<PowerSample>),
    /// A telemetry file holding instantaneous power in microwatts, polled periodically.
    Telemetry { path: PathBuf, interval_ms: u64 },
}

impl std::str::FromStr for PowerSource {
    type Err = Error;

    /// `const:<watts>`, `file:<path>` or `sysfs:<path>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("power source {s:?}: expected const:, file: or sysfs:")))?;
        match kind {
            "const" => {
                let w: f64 = arg.parse().map_err(|_| Error::Parse(format!("bad wattage {arg:?}")))?;
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::Parse(format!("wattage must be finite and non-negative, got {w}")));
                }
                Ok(PowerSource::Constant(w))
            }
            "file" => Ok(PowerSource::Replay(read_replay_file(arg)?)),
            "sysfs" => Ok(PowerSource::Telemetry { path: arg.into(), interval_ms: DEFAULT_POLL_INTERVAL_MS }),
            _ => Err(Error::Parse(format!("unknown power source kind {kind:?}"))),
        }
    }
}

pub fn parse_replay(text: &str) -> Result<Vec<PowerSample>> {
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Parse(format!("power replay line {}: {line:?}", lineno + 1));
        let (t, w) = line.split_once(',').ok_or_else(bad)?;
        let t_ms: f64 = t.trim().parse().map_err(|_| bad())?;
        let watts: f64 = w.trim().parse().map_err(|_| bad())?;
        samples.push(PowerSample { t_ms, watts });
    }
    check_samples(&samples)?;
    Ok(samples)
}

pub fn read_replay_file(path: impl AsRef<Path>) -> Result<Vec<PowerSample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    parse_replay(&text)
}

fn read_telemetry_watts(path: &Path) -> Result<f64> {
    let text = std::fs::read_to_string(path)?;
    let micro: f64 = text.trim().parse().map_err(|_| Error::Parse(format!("telemetry value {text:?}")))?;
    Ok(micro / 1e6)
}

type Poller = JoinHandle<Result<Vec<PowerSample>>>;

/// Runs a power source alongside a measured run.
///
/// Telemetry sources are polled from a background thread that owns its
/// sample buffer until [`PowerMonitor::stop`] joins it.
pub struct PowerMonitor {
    source: PowerSource,
    start: Instant,
    poller: Option<(Arc<AtomicBool>, Poller)>,
}

impl PowerMonitor {
    pub fn start(source: PowerSource) -> Result<Self> {
        let start = Instant::now();
        let poller = match &source {
            PowerSource::Telemetry { path, interval_ms } => {
                // Fail fast on an unreadable file.
                read_telemetry_watts(path)?;
                let stop = Arc::new(AtomicBool::new(false));
                let flag = Arc::clone(&stop);
                let path = path.clone();
                let interval = Duration::from_millis((*interval_ms).max(1));
                let handle = std::thread::spawn(move || {
                    let mut samples = Vec::new();
                    loop {
                        let t_ms = ms_since(start);
                        samples.push(PowerSample { t_ms, watts: read_telemetry_watts(&path)? });
                        if flag.load(Ordering::Acquire) {
                            break;
                        }
                        std::thread::park_timeout(interval);
                    }
                    Ok(samples)
                });
                Some((stop, handle))
            }
            _ => None,
        };
        Ok(PowerMonitor { source, start, poller })
    }

    /// Ends the measurement window and returns the collected trace.
    pub fn stop(self) -> Result<PowerTrace> {
        let elapsed = ms_since(self.start);
        match self.source {
            PowerSource::Constant(w) => Ok(PowerTrace::constant(w, elapsed)),
            // Replays carry their own timeline so their energy is reproducible.
            PowerSource::Replay(samples) => {
                let t_end_ms = samples[samples.len() - 1].t_ms;
                Ok(PowerTrace { samples, t_end_ms })
            }
            PowerSource::Telemetry { .. } => {
                let (stop, handle) = self.poller.expect("telemetry monitor has a poller");
                stop.store(true, Ordering::Release);
                handle.thread().unpark();
                let mut samples = handle
                    .join()
                    .map_err(|_| Error::Parse("power sampler thread panicked".into()))??;
                // Sample timestamps come from the same clock; keep them strictly increasing.
                samples.dedup_by(|b, a| b.t_ms <= a.t_ms);
                let t_end_ms = ms_since(self.start).max(samples.last().map_or(0.0, |s| s.t_ms));
                Ok(PowerTrace { samples, t_end_ms })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(t_ms: f64, watts: f64) -> PowerSample {
        PowerSample { t_ms, watts }
    }

    #[test]
    fn constant_power() {
        let e = integrate_energy(&[s(0.0, 2.0), s(10.0, 2.0), s(20.0, 2.0)], 20.0).unwrap();
        assert!((e - 0.04).abs() < 1e-12);
    }

    #[test]
    fn hold_last_sample() {
        assert!((integrate_energy(&[s(0.0, 5.0)], 1000.0).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn integration_errors() {
        assert!(matches!(integrate_energy(&[], 1.0), Err(Error::NoSamples)));
        assert!(integrate_energy(&[s(0.0, 1.0), s(0.0, 1.0)], 1.0).is_err());
        assert!(integrate_energy(&[s(0.0, -1.0)], 1.0).is_err());
        assert!(integrate_energy(&[s(5.0, 1.0)], 1.0).is_err());
    }

    #[test]
    fn efficiency_cases() {
        assert_eq!(efficiency(100.0, 1.0, 1.0).unwrap(), 100.0);
        assert!((efficiency(50.0, 10.0, 5.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(efficiency(50.0, 0.0, 5.0), Err(Error::DegenerateRun { .. })));
        assert!(matches!(efficiency(50.0, 1.0, 0.0), Err(Error::DegenerateRun { .. })));
    }

    #[test]
    fn summary_of_unscored_run_has_no_accuracy() {
        let t = StageTimings { total_ms: 4.0, ..Default::default() };
        let sum = summarize(&[t, t], &PowerTrace::constant(3.0, 8.0), None).unwrap();
        assert_eq!(sum.accuracy, None);
        assert_eq!(sum.efficiency, None);
        assert!((sum.mean_power_w - 3.0).abs() < 1e-12);
        assert!(matches!(summarize(&[], &PowerTrace::constant(3.0, 8.0), None), Err(Error::EmptyRun)));
    }

    #[test]
    fn zero_correct_gives_zero_efficiency() {
        let t = StageTimings { total_ms: 4.0, ..Default::default() };
        let sum = summarize(&[t; 10], &PowerTrace::constant(3.0, 40.0), Some(Score { correct: 0, total: 10 })).unwrap();
        assert_eq!(sum.accuracy, Some(0.0));
        assert_eq!(sum.efficiency, Some(0.0));
    }

    #[test]
    fn power_source_parsing() {
        assert_eq!("const:15".parse::<PowerSource>().unwrap(), PowerSource::Constant(15.0));
        assert!("const:-1".parse::<PowerSource>().is_err());
        assert!("const:abc".parse::<PowerSource>().is_err());
        assert!("battery:1".parse::<PowerSource>().is_err());
        assert!("15".parse::<PowerSource>().is_err());
        assert!(matches!("file:/definitely/missing.csv".parse::<PowerSource>(), Err(Error::NotFound(_))));
    }

    #[test]
    fn replay_parsing() {
        let samples = parse_replay("# t_ms,watts\n0,1.5\n\n100, 2.5\n").unwrap();
        assert_eq!(samples, vec![s(0.0, 1.5), s(100.0, 2.5)]);
        assert!(parse_replay("0,1\n0,2\n").is_err());
        assert!(parse_replay("0;1\n").is_err());
        assert!(matches!(parse_replay("# nothing\n"), Err(Error::NoSamples)));
    }

    #[test]
    fn telemetry_monitor_polls_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("power1_input");
        std::fs::write(&path, "7500000\n").unwrap();
        let mon = PowerMonitor::start(PowerSource::Telemetry { path, interval_ms: 5 }).unwrap();
        std::thread::sleep(Duration::from_millis(30));
        let trace = mon.stop().unwrap();
        assert!(trace.samples.len() >= 2);
        assert!(trace.samples.iter().all(|s| s.watts == 7.5));
        assert!((trace.mean_power_w().unwrap() - 7.5).abs() < 1e-9);
    }

    #[test]
    fn strip_removes_timing_fields() {
        let mut v = serde_json::json!({
            "schema": 1,
            "summary": {"frames": 2, "energy_j": 1.0, "accuracy": 50.0},
            "frames": [{"index": 0, "timings": {"total_ms": 1.0}}]
        });
        strip_wall_clock(&mut v);
        assert_eq!(v, serde_json::json!({
            "schema": 1,
            "summary": {"frames": 2, "accuracy": 50.0},
            "frames": [{"index": 0}]
        }));
    }
}
