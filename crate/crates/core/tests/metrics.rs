mod common;

use fmod_core::metrics::{
    efficiency, integrate_energy, parse_replay, strip_wall_clock, summarize, FrameRecord, Journal, MetricsReport,
    PowerMonitor, PowerSample, PowerSource, PowerTrace, Score, StageTimings,
};
use fmod_core::{Error, Roi};
use proptest::prelude::*;

fn samples(pairs: &[(f64, f64)]) -> Vec<PowerSample> {
    pairs.iter().map(|&(t_ms, watts)| PowerSample { t_ms, watts }).collect()
}

fn ramp() -> Vec<PowerSample> {
    (0..=10).map(|i| PowerSample { t_ms: i as f64 * 100.0, watts: i as f64 }).collect()
}

fn timing(total_ms: f64, classified: bool) -> StageTimings {
    StageTimings {
        read_ms: 0.1 * total_ms,
        movement_ms: 0.5 * total_ms,
        preprocess_ms: classified.then_some(0.1 * total_ms),
        classify_ms: classified.then_some(0.2 * total_ms),
        annotate_ms: 0.1 * total_ms,
        total_ms,
    }
}

#[test]
fn energy_examples() {
    let e = integrate_energy(&samples(&[(0.0, 2.0), (10.0, 2.0), (20.0, 2.0)]), 20.0).unwrap();
    assert!((e - 0.04).abs() < 1e-12);
    assert!((integrate_energy(&samples(&[(0.0, 5.0)]), 1000.0).unwrap() - 5.0).abs() < 1e-12);
    assert!((integrate_energy(&ramp(), 1000.0).unwrap() - 5.0).abs() < 1e-9);
    assert!(matches!(integrate_energy(&[], 10.0), Err(Error::NoSamples)));
}

#[test]
fn efficiency_examples() {
    assert!((efficiency(100.0, 1.0, 1.0).unwrap() - 100.0).abs() < 1e-12);
    assert!((efficiency(50.0, 10.0, 5.0).unwrap() - 1.0).abs() < 1e-12);
    assert!((efficiency(92.6, 35.63, 15.02).unwrap() - 0.1731).abs() < 0.0005);
    assert!(matches!(efficiency(90.0, 0.0, 3.0), Err(Error::DegenerateRun { .. })));
    assert!(matches!(efficiency(90.0, 3.0, 0.0), Err(Error::DegenerateRun { .. })));
}

#[test]
fn summary_of_a_perfect_run() {
    let timings: Vec<StageTimings> = (0..10).map(|i| timing(10.0 + i as f64, i % 2 == 0)).collect();
    let power = PowerTrace::constant(4.0, 2000.0);
    let s = summarize(&timings, &power, Some(Score { correct: 10, total: 10 })).unwrap();
    assert_eq!(s.frames, 10);
    assert_eq!(s.movement_frames, 5);
    assert_eq!(s.accuracy, Some(100.0));
    assert!((s.mean_latency_ms - 14.5).abs() < 1e-12);
    assert!((s.energy_j - 8.0).abs() < 1e-12);
    assert!((s.mean_power_w - 4.0).abs() < 1e-12);
    assert!((s.efficiency.unwrap() - 100.0 / (14.5 * 4.0)).abs() < 1e-12);
}

#[test]
fn summary_with_nothing_correct() {
    let timings = vec![timing(5.0, true); 10];
    let s = summarize(&timings, &PowerTrace::constant(2.0, 100.0), Some(Score { correct: 0, total: 10 })).unwrap();
    assert_eq!(s.accuracy, Some(0.0));
    assert_eq!(s.efficiency, Some(0.0));
}

#[test]
fn summary_of_scripted_run_matches_hand_computation() {
    // Latencies 4, 6, 11 ms; power ramps 0→10 W over 1 s; 2 of 3 correct.
    let timings = vec![timing(4.0, true), timing(6.0, false), timing(11.0, true)];
    let trace = PowerTrace { samples: ramp(), t_end_ms: 1000.0 };
    let s = summarize(&timings, &trace, Some(Score { correct: 2, total: 3 })).unwrap();
    let acc = 200.0 / 3.0;
    assert!((s.accuracy.unwrap() - acc).abs() < 1e-12);
    assert!((s.mean_latency_ms - 7.0).abs() < 1e-12);
    assert!((s.energy_j - 5.0).abs() < 1e-9);
    assert!((s.mean_power_w - 5.0).abs() < 1e-9);
    assert!((s.efficiency.unwrap() - acc / 35.0).abs() < 1e-9);
    assert_eq!((s.correct, s.scored), (Some(2), Some(3)));
}

#[test]
fn summary_rejects_empty_runs() {
    assert!(matches!(summarize(&[], &PowerTrace::constant(1.0, 1.0), None), Err(Error::EmptyRun)));
    let s = summarize(&[timing(1.0, false)], &PowerTrace::constant(1.0, 1.0), None).unwrap();
    assert_eq!((s.accuracy, s.efficiency), (None, None));
}

#[test]
fn timings_total_covers_sub_stages() {
    let t = timing(9.0, true);
    assert!(t.total_ms >= t.sub_stage_sum() - 1.0);
}

#[test]
fn replay_parsing() {
    let s = parse_replay("# t_ms,watts\n0,1.5\n\n100, 2.5\n").unwrap();
    assert_eq!(s, samples(&[(0.0, 1.5), (100.0, 2.5)]));
    assert!(parse_replay("0,1\n0,2\n").is_err());
    assert!(parse_replay("0,-1\n").is_err());
    assert!(parse_replay("zero,1\n").is_err());
    assert!(matches!(parse_replay("# nothing\n"), Err(Error::NoSamples)));
}

#[test]
fn power_source_syntax() {
    assert_eq!("const:15".parse::<PowerSource>().unwrap(), PowerSource::Constant(15.0));
    assert!("const:-1".parse::<PowerSource>().is_err());
    assert!("battery:3".parse::<PowerSource>().is_err());
    assert!(matches!("file:/no/such/file.csv".parse::<PowerSource>(), Err(Error::NotFound(_))));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ramp.csv");
    let text: String = (0..=10).map(|i| format!("{},{}\n", i * 100, i)).collect();
    std::fs::write(&path, text).unwrap();
    let src: PowerSource = format!("file:{}", path.display()).parse().unwrap();
    let trace = PowerMonitor::start(src).unwrap().stop().unwrap();
    assert!((trace.energy_j().unwrap() - 5.0).abs() < 1e-9);
}

#[test]
fn telemetry_is_polled_in_microwatts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("power1_input");
    std::fs::write(&path, "7500000\n").unwrap();
    let monitor = PowerMonitor::start(PowerSource::Telemetry { path: path.clone(), interval_ms: 5 }).unwrap();
    std::thread::sleep(std::time::Duration::from_millis(40));
    let trace = monitor.stop().unwrap();
    assert!(trace.samples.len() >= 2);
    assert!(trace.samples.iter().all(|s| s.watts == 7.5));
    assert!((trace.mean_power_w().unwrap() - 7.5).abs() < 1e-9);
    let missing = PowerSource::Telemetry { path: dir.path().join("nope"), interval_ms: 5 };
    assert!(PowerMonitor::start(missing).is_err());
}

#[test]
fn report_shape_and_stripping() {
    let rec = FrameRecord {
        index: 1,
        movement: true,
        roi: Roi { x: 1, y: 2, w: 3, h: 4, point_count: 9 },
        label: Some("car".into()),
        score: Some(0.9),
        timings: timing(3.0, true),
    };
    let journal = Journal { frames: vec![rec] };
    let summary = summarize(&journal.timings(), &PowerTrace::constant(1.0, 10.0), None).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&MetricsReport::new(summary, journal.clone()).to_json()).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["frames"][0]["roi"]["w"], 3);
    assert_eq!(v["frames"][0]["label"], "car");
    assert!(v["frames"][0]["timings"]["classify_ms"].is_number());
    strip_wall_clock(&mut v);
    assert!(v["frames"][0].get("timings").is_none());
    assert!(v["summary"].get("mean_latency_ms").is_none());
    assert_eq!(v["summary"]["frames"], 1);

    let partial: serde_json::Value = serde_json::from_str(&MetricsReport::partial(journal).to_json()).unwrap();
    assert_eq!(partial["complete"], false);
    assert!(partial["summary"].is_null());
}

fn trace_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((1u32..500, 0u32..100_000), 1..40).prop_map(|steps| {
        let mut t = 0.0;
        steps
            .into_iter()
            .map(|(dt, mw)| {
                let s = (t, mw as f64 / 1000.0);
                t += dt as f64;
                s
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn energy_matches_interval_oracle(pairs in trace_strategy(), tail in 0u32..1000) {
        let end = pairs.last().unwrap().0 + tail as f64;
        let got = integrate_energy(&samples(&pairs), end).unwrap();
        prop_assert!((got - common::energy_j(&pairs, end)).abs() < 1e-9);
    }

    #[test]
    fn energy_is_additive_over_sample_points(pairs in trace_strategy(), cut in any::<prop::sample::Index>(), tail in 0u32..1000) {
        let s = samples(&pairs);
        let i = cut.index(s.len());
        let t1 = s[i].t_ms;
        let end = s[s.len() - 1].t_ms + tail as f64;
        let left = integrate_energy(&s[..=i], t1).unwrap();
        let right = integrate_energy(&s[i..], end).unwrap();
        prop_assert!((left + right - integrate_energy(&s, end).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn scaling_power_scales_energy(pairs in trace_strategy(), exp in -4i32..5, k in 0.01f64..100.0) {
        let base = PowerTrace { samples: samples(&pairs), t_end_ms: pairs.last().unwrap().0 + 10.0 };
        let scaled = |f: f64| PowerTrace {
            samples: base.samples.iter().map(|s| PowerSample { t_ms: s.t_ms, watts: s.watts * f }).collect(),
            t_end_ms: base.t_end_ms,
        };
        let (e, p) = (base.energy_j().unwrap(), base.mean_power_w().unwrap());
        // Powers of two scale without rounding.
        let two = 2f64.powi(exp);
        let t2 = scaled(two);
        prop_assert_eq!(t2.energy_j().unwrap(), e * two);
        prop_assert_eq!(t2.mean_power_w().unwrap(), p * two);
        let tk = scaled(k);
        prop_assert!((tk.energy_j().unwrap() - e * k).abs() <= 1e-12 * (e * k).max(1.0));
        prop_assert!((tk.mean_power_w().unwrap() - p * k).abs() <= 1e-12 * (p * k).max(1.0));
        if p > 0.0 {
            let eff = efficiency(90.0, 12.0, p).unwrap();
            prop_assert_eq!(efficiency(90.0, 12.0, p * two).unwrap(), eff / two);
        }
    }

    #[test]
    fn efficiency_decreases_in_latency_and_power(acc in 0.1f64..100.0, lat in 0.1f64..1000.0, pow in 0.1f64..100.0, d in 0.01f64..10.0) {
        let e = efficiency(acc, lat, pow).unwrap();
        prop_assert!(efficiency(acc, lat + d, pow).unwrap() < e);
        prop_assert!(efficiency(acc, lat, pow + d).unwrap() < e);
    }
}
