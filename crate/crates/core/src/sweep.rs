//! Monte Carlo parameter sweeps over random scenarios.
//!
//! Every sweep point runs the three algorithms on the same seeds, so per-seed
//! errors can be compared pairwise. Seeds run on the rayon pool and results
//! keep seed order, which keeps the output deterministic.

use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::ops::Range;

use crate::arbitrary::Weights;
use crate::ensemble::{median, CandidateCount};
use crate::error::{Error, Result};
use crate::pipeline::{
    build_tables, finish, outcomes_from_tables, prepare, Algorithm, Dataset, PipelineConfig,
};
use crate::sim::RandomScenario;

/// Swept parameter with its values.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// Reference-step candidate count `C`.
    Candidates(Vec<CandidateCount>),
    /// Weight `w1` of the linear-system residual (`w2 = 1 - w1`).
    W1(Vec<f64>),
    /// Range noise standard deviation in meters.
    Noise(Vec<f64>),
    /// Step count `N`.
    Steps(Vec<usize>),
    /// AP count `M`.
    Aps(Vec<usize>),
}

fn parse_list<T>(values: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    let out = values
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).ok_or_else(|| Error::Config(format!("bad sweep value {s:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    Ok(out)
}

/// Parses a candidate count: an integer, `auto`, `N` or a multiple like `0.25N`.
pub fn parse_candidates(s: &str) -> Option<CandidateCount> {
    if s.eq_ignore_ascii_case("auto") {
        return Some(CandidateCount::Auto);
    }
    if let Some(f) = s.strip_suffix(['N', 'n']) {
        let f = if f.is_empty() { 1.0 } else { f.parse().ok()? };
        return (f > 0.0 && f <= 1.0).then_some(CandidateCount::Fraction(f));
    }
    s.parse().ok().map(CandidateCount::Fixed)
}

impl Sweep {
    /// `parameter` is one of `C`, `w1`, `sigma`, `N`, `M`; `values` is a
    /// comma-separated list.
    pub fn parse(parameter: &str, values: &str) -> Result<Self> {
        match parameter {
            "C" | "candidates" => parse_list(values, parse_candidates).map(Sweep::Candidates),
            "w1" => {
                let v = parse_list(values, |s| s.parse().ok())?;
                for &w in &v {
                    Weights::new(w)?;
                }
                Ok(Sweep::W1(v))
            }
            "sigma" | "noise" => {
                let v: Vec<f64> = parse_list(values, |s| s.parse().ok())?;
                if v.iter().any(|s| !(*s >= 0.0)) {
                    return Err(Error::Config("noise must be non-negative".into()));
                }
                Ok(Sweep::Noise(v))
            }
            "N" | "steps" => {
                parse_list(values, |s| s.parse().ok().filter(|&n: &usize| n >= 1)).map(Sweep::Steps)
            }
            "M" | "aps" => {
                parse_list(values, |s| s.parse().ok().filter(|&m: &usize| m >= 1)).map(Sweep::Aps)
            }
            other => Err(Error::Config(format!("unknown sweep parameter {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Sweep::Candidates(_) => "C",
            Sweep::W1(_) => "w1",
            Sweep::Noise(_) => "sigma",
            Sweep::Steps(_) => "N",
            Sweep::Aps(_) => "M",
        }
    }

    fn len(&self) -> usize {
        match self {
            Sweep::Candidates(v) => v.len(),
            Sweep::W1(v) | Sweep::Noise(v) => v.len(),
            Sweep::Steps(v) | Sweep::Aps(v) => v.len(),
        }
    }

    /// Label and numeric value of point `i`. Fractional candidate counts are
    /// reported at the suite's step count.
    fn point(&self, i: usize, steps: usize) -> (String, f64) {
        match self {
            Sweep::Candidates(v) => {
                let label = match v[i] {
                    CandidateCount::Auto => "auto".to_string(),
                    CandidateCount::Fixed(c) => c.to_string(),
                    CandidateCount::Fraction(f) if f == 1.0 => "N".to_string(),
                    CandidateCount::Fraction(f) => format!("{f}N"),
                };
                (label, v[i].resolve(steps) as f64)
            }
            Sweep::W1(v) | Sweep::Noise(v) => (v[i].to_string(), v[i]),
            Sweep::Steps(v) | Sweep::Aps(v) => (v[i].to_string(), v[i] as f64),
        }
    }
}

/// Mean positioning error per seed, `None` where the run failed or resolved
/// no step.
#[derive(Debug, Clone, PartialEq)]
pub struct PointErrors {
    pub label: String,
    pub value: f64,
    /// Indexed like [`Algorithm::ALL`].
    pub errors: [Vec<Option<f64>>; 3],
}

impl PointErrors {
    pub fn of(&self, algorithm: Algorithm) -> &[Option<f64>] {
        let i = Algorithm::ALL
            .iter()
            .position(|a| *a == algorithm)
            .expect("listed");
        &self.errors[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: &'static str,
    pub label: String,
    pub value: f64,
    pub algorithm: Algorithm,
    pub runs: usize,
    pub failures: usize,
    /// Mean and median over successful runs of each run's mean error.
    pub mean: Option<f64>,
    pub median: Option<f64>,
}

/// Mean error of each algorithm on one dataset, sharing the ranging stage.
fn compare_errors(
    ds: &Result<Dataset>,
    cfg: &PipelineConfig,
    counts: &[CandidateCount],
) -> Vec<[Option<f64>; 3]> {
    let failed = vec![[None; 3]; counts.len()];
    let Ok(ds) = ds else { return failed };
    let Ok(prep) = prepare(ds, cfg) else {
        return failed;
    };
    let max = |n: usize| counts.iter().map(|c| c.resolve(n)).max().unwrap_or(2);
    let tables = build_tables(&prep, max, &cfg.ensemble);
    counts
        .iter()
        .map(|c| {
            let outcomes = outcomes_from_tables(&tables, |n| c.resolve(n));
            Algorithm::ALL.map(|a| {
                finish(&prep, &outcomes, a, &cfg.omega, ds.truth.as_deref())
                    .ok()
                    .and_then(|r| r.mean_error())
            })
        })
        .collect()
}

/// Runs every sweep point on `seeds` of `base`.
pub fn run_sweep(
    base: &RandomScenario,
    cfg: &PipelineConfig,
    sweep: &Sweep,
    seeds: Range<u64>,
) -> Vec<PointErrors> {
    let seeds: Vec<u64> = seeds.collect();
    let points = sweep.len();
    // per seed, per point
    let per_seed: Vec<Vec<[Option<f64>; 3]>> = seeds
        .par_iter()
        .map(|&seed| match sweep {
            Sweep::Candidates(counts) => {
                let ds = Dataset::from_scenario(&base.build(seed));
                compare_errors(&ds, cfg, counts)
            }
            Sweep::W1(ws) => {
                let ds = Dataset::from_scenario(&base.build(seed));
                ws.iter()
                    .map(|&w| {
                        let mut c = *cfg;
                        c.ensemble.gamma.weights = Weights::new(w).expect("validated on parse");
                        compare_errors(&ds, &c, &[c.ensemble.candidates])[0]
                    })
                    .collect()
            }
            _ => (0..points)
                .map(|i| {
                    let mut sc = base.clone();
                    match sweep {
                        Sweep::Noise(v) => sc.range_noise = v[i],
                        Sweep::Steps(v) => sc.steps = v[i],
                        Sweep::Aps(v) => sc.aps = v[i],
                        _ => unreachable!(),
                    }
                    let ds = Dataset::from_scenario(&sc.build(seed));
                    compare_errors(&ds, cfg, &[cfg.ensemble.candidates])[0]
                })
                .collect(),
        })
        .collect();
    (0..points)
        .map(|i| {
            let (label, value) = sweep.point(i, base.steps);
            let errors = [0, 1, 2].map(|a| per_seed.iter().map(|s| s[i][a]).collect());
            PointErrors {
                label,
                value,
                errors,
            }
        })
        .collect()
}

pub fn summarize(sweep: &Sweep, points: &[PointErrors]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for p in points {
        for (a, errs) in Algorithm::ALL.iter().zip(&p.errors) {
            let ok: Vec<f64> = errs.iter().flatten().copied().collect();
            rows.push(SweepRow {
                parameter: sweep.name(),
                label: p.label.clone(),
                value: p.value,
                algorithm: *a,
                runs: errs.len(),
                failures: errs.len() - ok.len(),
                mean: (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64),
                median: median(&ok).ok(),
            });
        }
    }
    rows
}

/// `parameter,label,value,algorithm,runs,failures,mean,median`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("parameter,label,value,algorithm,runs,failures,mean,median\n");
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.parameter,
            r.label,
            r.value,
            r.algorithm,
            r.runs,
            r.failures,
            opt(r.mean),
            opt(r.median)
        );
    }
    out
}
