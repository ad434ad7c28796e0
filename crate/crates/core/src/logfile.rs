//! CSV measurement logs.
//!
//! ```text
//! #ap,1,0.0,0.0
//! #ap,2,25.0,3.0
//! #truth,1,10.0,8.0          (optional, one per step)
//! step,t,theta,ap_id,rtt_s   (or range_m)
//! 1,0.0,0.0,1,1.2e-7
//! ```
//!
//! `theta` is the cumulative heading in radians. Every step needs at least one
//! row and all rows of a step must agree on `t` and `theta`. An AP without a
//! row at some step is treated as unreachable there.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::pipeline::Dataset;
use crate::types::{range_to_rtt, ApDescriptor, MeasurementSet, Point, StepEvent};

/// Unit of the last column of a measurement row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogUnit {
    RttSeconds,
    RangeMeters,
}

impl LogUnit {
    fn column(self) -> &'static str {
        match self {
            LogUnit::RttSeconds => "rtt_s",
            LogUnit::RangeMeters => "range_m",
        }
    }
}

struct Row {
    line: usize,
    step: usize,
    t: f64,
    theta: f64,
    ap: u32,
    value: f64,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, line: usize, name: &str) -> Result<&'a str> {
    rec.get(i)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| parse_err(line, format!("missing field {name}")))
}

fn num<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    line: usize,
    name: &str,
) -> Result<T> {
    let s = field(rec, i, line, name)?;
    s.parse()
        .map_err(|_| parse_err(line, format!("cannot parse {name} from {s:?}")))
}

fn finite(v: f64, line: usize, name: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(line, format!("{name} must be finite")))
    }
}

fn expect_len(rec: &csv::StringRecord, len: usize, line: usize) -> Result<()> {
    if rec.len() == len {
        Ok(())
    } else {
        Err(parse_err(
            line,
            format!("expected {len} fields, got {}", rec.len()),
        ))
    }
}

pub fn parse_log(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut aps: Vec<ApDescriptor> = Vec::new();
    let mut truth: BTreeMap<usize, Point> = BTreeMap::new();
    let mut unit: Option<LogUnit> = None;
    let mut rows: Vec<Row> = Vec::new();

    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let first = rec.get(0).unwrap_or("");
        if rec.len() == 1 && first.is_empty() {
            continue;
        }
        match first {
            "#ap" => {
                if unit.is_some() {
                    return Err(parse_err(
                        line,
                        "AP declarations must precede the column header",
                    ));
                }
                expect_len(&rec, 4, line)?;
                let id: u32 = num(&rec, 1, line, "ap id")?;
                let x = finite(num(&rec, 2, line, "x")?, line, "x")?;
                let y = finite(num(&rec, 3, line, "y")?, line, "y")?;
                if aps.iter().any(|a| a.id == id) {
                    return Err(parse_err(line, format!("AP {id} declared twice")));
                }
                aps.push(ApDescriptor::new(id, x, y));
            }
            "#truth" => {
                expect_len(&rec, 4, line)?;
                let step: usize = num(&rec, 1, line, "step")?;
                let x = finite(num(&rec, 2, line, "x")?, line, "x")?;
                let y = finite(num(&rec, 3, line, "y")?, line, "y")?;
                if truth.insert(step, Point::new(x, y)).is_some() {
                    return Err(parse_err(
                        line,
                        format!("truth for step {step} given twice"),
                    ));
                }
            }
            other if other.starts_with('#') => continue,
            "step" => {
                if unit.is_some() {
                    return Err(parse_err(line, "duplicate column header"));
                }
                expect_len(&rec, 5, line)?;
                let names: Vec<&str> = rec.iter().collect();
                unit = match names[..] {
                    ["step", "t", "theta", "ap_id", "rtt_s"] => Some(LogUnit::RttSeconds),
                    ["step", "t", "theta", "ap_id", "range_m"] => Some(LogUnit::RangeMeters),
                    _ => {
                        return Err(parse_err(
                            line,
                            "column header must be step,t,theta,ap_id,rtt_s or step,t,theta,ap_id,range_m",
                        ))
                    }
                };
            }
            _ => {
                let unit = unit
                    .ok_or_else(|| parse_err(line, "measurement row before the column header"))?;
                expect_len(&rec, 5, line)?;
                let step: usize = num(&rec, 0, line, "step")?;
                let t = finite(num(&rec, 1, line, "t")?, line, "t")?;
                let theta = finite(num(&rec, 2, line, "theta")?, line, "theta")?;
                let ap: u32 = num(&rec, 3, line, "ap_id")?;
                let value = finite(num(&rec, 4, line, unit.column())?, line, unit.column())?;
                if value <= 0.0 {
                    return Err(parse_err(
                        line,
                        format!("{} must be positive", unit.column()),
                    ));
                }
                if !aps.iter().any(|a| a.id == ap) {
                    return Err(parse_err(
                        line,
                        format!("AP {ap} not declared in the header"),
                    ));
                }
                rows.push(Row {
                    line,
                    step,
                    t,
                    theta,
                    ap,
                    value: match unit {
                        LogUnit::RttSeconds => value,
                        LogUnit::RangeMeters => range_to_rtt(value),
                    },
                });
            }
        }
    }
    if unit.is_none() {
        return Err(parse_err(0, "missing column header"));
    }
    if aps.is_empty() {
        return Err(parse_err(0, "no AP declared"));
    }
    if rows.is_empty() {
        return Err(parse_err(0, "no measurement rows"));
    }

    let mut timestamps = Vec::new();
    let mut headings = Vec::new();
    let mut sets: Vec<Vec<Option<f64>>> = Vec::new();
    for row in &rows {
        let n = sets.len();
        if row.step == n + 1 {
            if let Some(&prev) = timestamps.last() {
                if row.t <= prev {
                    return Err(parse_err(
                        row.line,
                        "timestamps must be strictly increasing",
                    ));
                }
            } else if row.theta != 0.0 {
                return Err(parse_err(row.line, "theta of the first step must be 0"));
            }
            timestamps.push(row.t);
            headings.push(row.theta);
            sets.push(vec![None; aps.len()]);
        } else if row.step != n || n == 0 {
            return Err(parse_err(
                row.line,
                format!(
                    "step {} out of order (expected {} or {})",
                    row.step,
                    n.max(1),
                    n + 1
                ),
            ));
        } else if row.t != timestamps[n - 1] || row.theta != headings[n - 1] {
            return Err(parse_err(
                row.line,
                format!("step {} disagrees on t or theta", row.step),
            ));
        }
        let slot = aps.iter().position(|a| a.id == row.ap).expect("declared");
        let cell = &mut sets.last_mut().expect("pushed")[slot];
        if cell.is_some() {
            return Err(parse_err(
                row.line,
                format!("AP {} measured twice at step {}", row.ap, row.step),
            ));
        }
        *cell = Some(row.value);
    }

    let steps = StepEvent::sequence_from_headings(&timestamps, &headings)?;
    let measurements = steps
        .into_iter()
        .zip(sets)
        .map(|(step, rtts)| MeasurementSet { step, rtts })
        .collect::<Vec<_>>();
    let truth = if truth.is_empty() {
        None
    } else {
        let n = measurements.len();
        if truth.len() != n || truth.keys().copied().ne(1..=n) {
            return Err(parse_err(
                0,
                format!("truth must cover steps 1..={n} exactly"),
            ));
        }
        Some(truth.into_values().collect())
    };
    let ds = Dataset {
        aps,
        measurements,
        truth,
    };
    ds.validate()?;
    Ok(ds)
}

/// Serializes a dataset in the log format, with truth rows when known.
pub fn write_log(ds: &Dataset, unit: LogUnit) -> String {
    let mut out = String::new();
    for ap in &ds.aps {
        let _ = writeln!(out, "#ap,{},{},{}", ap.id, ap.position.x, ap.position.y);
    }
    if let Some(truth) = &ds.truth {
        for (n, p) in truth.iter().enumerate() {
            let _ = writeln!(out, "#truth,{},{},{}", n + 1, p.x, p.y);
        }
    }
    let _ = writeln!(out, "step,t,theta,ap_id,{}", unit.column());
    for set in &ds.measurements {
        let s = set.step;
        for (ap, rtt) in ds.aps.iter().zip(&set.rtts) {
            if let Some(rtt) = rtt {
                let value = match unit {
                    LogUnit::RttSeconds => *rtt,
                    LogUnit::RangeMeters => crate::types::rtt_to_range(*rtt).expect("validated"),
                };
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    s.index, s.timestamp, s.cumulative_heading, ap.id, value
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
#ap,1,0.0,0.0
#ap,2,10.0,0.0
step,t,theta,ap_id,range_m
1,0.0,0.0,1,5.0
1,0.0,0.0,2,7.0
2,0.5,0.0,1,5.5
3,1.0,1.5707963267948966,2,6.0
";

    #[test]
    fn parses_sample_with_missing_readings() {
        let ds = parse_log(SAMPLE).unwrap();
        assert_eq!(ds.aps.len(), 2);
        assert_eq!(ds.measurements.len(), 3);
        assert!(ds.measurements[1].rtts[1].is_none());
        let r = crate::types::rtt_to_range(ds.measurements[0].rtts[1].unwrap()).unwrap();
        assert!((r - 7.0).abs() < 1e-12);
        assert!(
            (ds.measurements[2].step.heading_change - std::f64::consts::FRAC_PI_2).abs() < 1e-15
        );
        assert!(ds.truth.is_none());
    }

    #[test]
    fn malformed_row_names_its_line() {
        let bad = SAMPLE.replace("2,0.5,0.0,1,5.5", "2,0.5,zero,1,5.5");
        match parse_log(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn undeclared_ap_is_rejected() {
        let bad = SAMPLE.replace("2,0.5,0.0,1,5.5", "2,0.5,0.0,9,5.5");
        match parse_log(&bad) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 6);
                assert!(msg.contains("not declared"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotone_timestamps_are_rejected() {
        let bad = SAMPLE.replace("3,1.0,", "3,0.2,");
        assert!(matches!(parse_log(&bad), Err(Error::Parse { line: 7, .. })));
    }

    #[test]
    fn skipped_step_is_rejected() {
        let bad = SAMPLE.replace("3,1.0,", "4,1.0,");
        assert!(matches!(parse_log(&bad), Err(Error::Parse { line: 7, .. })));
    }

    #[test]
    fn rows_before_header_are_rejected() {
        assert!(matches!(
            parse_log("#ap,1,0,0\n1,0,0,1,5\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn nonpositive_reading_is_rejected() {
        let bad = SAMPLE.replace("1,0.0,0.0,2,7.0", "1,0.0,0.0,2,-7.0");
        assert!(matches!(parse_log(&bad), Err(Error::Parse { line: 5, .. })));
    }

    #[test]
    fn inconsistent_step_header_is_rejected() {
        let bad = SAMPLE.replace("1,0.0,0.0,2,7.0", "1,0.1,0.0,2,7.0");
        assert!(matches!(parse_log(&bad), Err(Error::Parse { line: 5, .. })));
    }

    #[test]
    fn write_then_parse_round_trips() {
        for unit in [LogUnit::RttSeconds, LogUnit::RangeMeters] {
            let ds = parse_log(SAMPLE).unwrap();
            let back = parse_log(&write_log(&ds, unit)).unwrap();
            assert_eq!(back.aps, ds.aps);
            for (a, b) in back.measurements.iter().zip(&ds.measurements) {
                assert_eq!(a.step, b.step);
                for (x, y) in a.rtts.iter().zip(&b.rtts) {
                    match (x, y) {
                        (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-15 * y),
                        (None, None) => {}
                        _ => panic!("presence differs"),
                    }
                }
            }
        }
    }
}
