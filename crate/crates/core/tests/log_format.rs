//! Measurement logs written from simulations feed the pipeline unchanged.

use rttpos::logfile::{parse_log, write_log, LogUnit};
use rttpos::pipeline::{run_pipeline, Dataset, PipelineConfig};
use rttpos::sim::RandomScenario;
use rttpos::Error;

fn dataset() -> Dataset {
    let recipe = RandomScenario {
        aps: 4,
        steps: 24,
        range_noise: 0.2,
        ..RandomScenario::default()
    };
    Dataset::from_scenario(&recipe.build(9)).unwrap()
}

#[test]
fn logged_rtts_reproduce_the_direct_run() {
    let ds = dataset();
    let mut cfg = PipelineConfig::default();
    cfg.ensemble.gamma.grid = 256;
    let direct = run_pipeline(&ds, &cfg).unwrap();
    let logged = parse_log(&write_log(&ds, LogUnit::RttSeconds)).unwrap();
    assert_eq!(logged.measurements, ds.measurements);
    assert_eq!(logged.truth, ds.truth);
    let again = run_pipeline(&logged, &cfg).unwrap();
    assert_eq!(
        again.metrics_json().unwrap(),
        direct.metrics_json().unwrap()
    );
}

#[test]
fn logged_ranges_round_trip_within_rounding() {
    let ds = dataset();
    let logged = parse_log(&write_log(&ds, LogUnit::RangeMeters)).unwrap();
    for (a, b) in logged.measurements.iter().zip(&ds.measurements) {
        assert_eq!(a.step, b.step);
        for (x, y) in a.rtts.iter().zip(&b.rtts) {
            let (x, y) = (x.unwrap(), y.unwrap());
            assert!((x - y).abs() <= 4.0 * f64::EPSILON * y);
        }
    }
}

#[test]
fn every_malformed_row_names_its_line() {
    let text = write_log(&dataset(), LogUnit::RttSeconds);
    let lines: Vec<&str> = text.lines().collect();
    let header = lines.iter().position(|l| l.starts_with("step,")).unwrap();
    let broken = [
        "garbage",
        "1,0.0,0.0",
        "x,0.0,0.0,1,1e-7",
        "1,0.0,0.0,1,-1e-7",
        "1,0.0,0.0,99,1e-7",
        "1,0.0,NaN,1,1e-7",
    ];
    for bad in broken {
        // replace the last data row
        let target = lines.len() - 1;
        assert!(target > header);
        let mut edited: Vec<&str> = lines.clone();
        edited[target] = bad;
        let joined = edited.join("\n");
        match parse_log(&joined) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, target + 1, "{bad:?}"),
            other => panic!("{bad:?}: unexpected {other:?}"),
        }
    }
}
