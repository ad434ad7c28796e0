//! End-to-end positioning: per-AP ranging, feasible-AP filtering, alignment
//! and averaging, plus the per-step multilateration baselines.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::alignment::{
    align_arbitrary, align_linear, average_fix, collinear, derive_relative_trajectory,
    filter_feasible, AlignmentSolution, Hypothesis, MirrorPair, OmegaSearchConfig,
    RelativeCandidates,
};
use crate::ensemble::{EnsembleConfig, EnsembleResult, PairTable};
use crate::error::{Error, Result};
use crate::geometry::{
    accumulate_directions, observations, DirectionAccumulators, StepObservation,
};
use crate::lsq::solve_rows;
use crate::sim::{
    evaluate_partial, generate_measurements, generate_truth, ErrorReport, ScenarioConfig,
};
use crate::types::{
    classify_mobility, quantize_heading, remap_heading_changes, rtt_to_range, ApDescriptor,
    MeasurementSet, MobilityClass, Point, RangingEstimate, StepEvent, LINEAR_HEADING_TOLERANCE,
};

/// Measurements for one walk, with ground truth when it is known.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub aps: Vec<ApDescriptor>,
    pub measurements: Vec<MeasurementSet>,
    pub truth: Option<Vec<Point>>,
}

impl Dataset {
    pub fn from_scenario(cfg: &ScenarioConfig) -> Result<Self> {
        let truth = generate_truth(cfg);
        let measurements = generate_measurements(cfg, &truth)?;
        let ds = Self {
            aps: cfg.descriptors(),
            measurements,
            truth: Some(truth.positions),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.measurements.is_empty() {
            return Err(Error::Empty("measurement sets"));
        }
        let mut ids: Vec<u32> = self.aps.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidMeasurement("AP ids must be unique".into()));
        }
        if self
            .aps
            .iter()
            .any(|a| !a.position.iter().all(|v| v.is_finite()))
        {
            return Err(Error::InvalidMeasurement(
                "AP positions must be finite".into(),
            ));
        }
        for (n, set) in self.measurements.iter().enumerate() {
            if set.rtts.len() != self.aps.len() {
                return Err(Error::LengthMismatch {
                    expected: self.aps.len(),
                    got: set.rtts.len(),
                });
            }
            if set.step.index != n + 1 {
                return Err(Error::InvalidMeasurement(format!(
                    "step {} found at position {}",
                    set.step.index,
                    n + 1
                )));
            }
            for rtt in set.rtts.iter().flatten() {
                rtt_to_range(*rtt)?;
            }
        }
        if self
            .measurements
            .windows(2)
            .any(|w| !(w[1].step.timestamp > w[0].step.timestamp))
        {
            return Err(Error::InvalidMeasurement(
                "timestamps must be strictly increasing".into(),
            ));
        }
        if let Some(t) = &self.truth {
            if t.len() != self.measurements.len() {
                return Err(Error::LengthMismatch {
                    expected: self.measurements.len(),
                    got: t.len(),
                });
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> Vec<StepEvent> {
        self.measurements.iter().map(|m| m.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    FullPipeline,
    NoTaBaseline,
    RawRttBaseline,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [
        Algorithm::FullPipeline,
        Algorithm::NoTaBaseline,
        Algorithm::RawRttBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FullPipeline => "full-pipeline",
            Algorithm::NoTaBaseline => "no-ta-baseline",
            Algorithm::RawRttBaseline => "raw-rtt-baseline",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

/// Algorithm settings for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub algorithm: Algorithm,
    pub ensemble: EnsembleConfig,
    pub omega: OmegaSearchConfig,
    /// Snap reported heading changes to multiples of a right angle.
    pub quantize_heading: bool,
    pub heading_tolerance: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::FullPipeline,
            ensemble: EnsembleConfig::default(),
            omega: OmegaSearchConfig::default(),
            quantize_heading: false,
            heading_tolerance: LINEAR_HEADING_TOLERANCE,
        }
    }
}

/// One AP's ranges joined with the walk's heading accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct ApInput {
    pub ap: ApDescriptor,
    pub obs: Vec<StepObservation>,
    /// Range per step, `None` where the AP was not heard.
    pub ranges: Vec<Option<f64>>,
}

impl ApInput {
    pub fn min_range(&self) -> f64 {
        self.obs
            .iter()
            .map(|o| o.range)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Dataset after heading conditioning and mobility classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub mobility: MobilityClass,
    pub steps: Vec<StepEvent>,
    pub acc: DirectionAccumulators,
    pub inputs: Vec<ApInput>,
}

pub fn prepare(ds: &Dataset, cfg: &PipelineConfig) -> Result<Prepared> {
    ds.validate()?;
    let mut steps = ds.steps();
    if cfg.quantize_heading {
        steps = remap_heading_changes(&steps, quantize_heading);
    }
    let mobility = classify_mobility(&steps, cfg.heading_tolerance)?;
    if steps.len() < mobility.min_steps() {
        return Err(Error::TooFewSteps {
            mobility,
            required: mobility.min_steps(),
            got: steps.len(),
        });
    }
    let acc = accumulate_directions(&steps);
    let inputs = ds
        .aps
        .iter()
        .enumerate()
        .map(|(m, ap)| {
            let ranges = ds
                .measurements
                .iter()
                .map(|set| set.rtts[m].map(rtt_to_range).transpose())
                .collect::<Result<Vec<_>>>()?;
            Ok(ApInput {
                ap: *ap,
                obs: observations(&acc, &ranges),
                ranges,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        mobility,
        steps,
        acc,
        inputs,
    })
}

/// Ranging result for one AP; failures are kept so they can be reported.
#[derive(Debug, Clone, PartialEq)]
pub struct ApOutcome {
    pub ap_id: u32,
    pub result: Result<EnsembleResult>,
}

impl ApOutcome {
    pub fn estimate(&self) -> Option<&RangingEstimate> {
        self.result.as_ref().ok().map(|r| &r.estimate)
    }
}

/// Pair table of one AP at the largest candidate count a run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ApTable {
    pub ap_id: u32,
    pub table: Result<PairTable>,
}

pub fn build_tables(
    prep: &Prepared,
    max_candidates: impl Fn(usize) -> usize,
    cfg: &EnsembleConfig,
) -> Vec<ApTable> {
    prep.inputs
        .iter()
        .map(|inp| ApTable {
            ap_id: inp.ap.id,
            table: PairTable::build(
                inp.ap.id,
                inp.obs.clone(),
                prep.mobility,
                max_candidates(inp.obs.len()),
                &cfg.gamma,
            ),
        })
        .collect()
}

/// Aggregates each AP's table at the count chosen by `count`.
pub fn outcomes_from_tables(tables: &[ApTable], count: impl Fn(usize) -> usize) -> Vec<ApOutcome> {
    tables
        .iter()
        .map(|t| ApOutcome {
            ap_id: t.ap_id,
            result: t
                .table
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|tab| tab.aggregate(count(tab.obs.len()))),
        })
        .collect()
}

/// Per-AP joint bias and step-length estimation.
pub fn estimate_aps(prep: &Prepared, cfg: &EnsembleConfig) -> Vec<ApOutcome> {
    let count = |n: usize| cfg.candidates.resolve(n);
    outcomes_from_tables(&build_tables(prep, count, cfg), count)
}

/// Feasible estimates in AP order.
pub fn feasible_estimates(prep: &Prepared, outcomes: &[ApOutcome]) -> Result<Vec<RangingEstimate>> {
    let mut ests = Vec::new();
    let mut mins = Vec::new();
    for (inp, o) in prep.inputs.iter().zip(outcomes) {
        if let Some(e) = o.estimate() {
            ests.push(*e);
            mins.push(inp.min_range());
        }
    }
    let f = filter_feasible(&ests, &mins)?;
    Ok(ests.into_iter().filter(|e| f.contains(&e.ap_id)).collect())
}

/// Aligns the feasible APs' relative trajectories and averages them.
pub fn locate(
    prep: &Prepared,
    feasible: &[RangingEstimate],
    omega: &OmegaSearchConfig,
) -> Result<AlignmentSolution> {
    let min = prep.mobility.min_aps();
    if feasible.len() < min {
        return Err(Error::TooFewAps {
            mobility: prep.mobility,
            required: min,
            got: feasible.len(),
        });
    }
    let find = |id: u32| {
        prep.inputs
            .iter()
            .find(|i| i.ap.id == id)
            .map(|i| i.ap)
            .expect("estimate for a known AP")
    };
    match prep.mobility {
        MobilityClass::Arbitrary => {
            let mut trajs = Vec::with_capacity(feasible.len());
            for e in feasible {
                if let RelativeCandidates::Unique(t) =
                    derive_relative_trajectory(e, &prep.acc, prep.mobility)?
                {
                    trajs.push(t);
                }
            }
            let aps: Vec<ApDescriptor> = feasible.iter().map(|e| find(e.ap_id)).collect();
            align_arbitrary(&aps, &trajs, omega)
        }
        MobilityClass::Linear => {
            let mut pairs = Vec::with_capacity(feasible.len());
            for e in feasible {
                if let RelativeCandidates::Mirror { plus, minus } =
                    derive_relative_trajectory(e, &prep.acc, prep.mobility)?
                {
                    pairs.push(MirrorPair {
                        ap: find(e.ap_id),
                        plus,
                        minus,
                    });
                }
            }
            align_linear(&pairs, omega)
        }
    }
}

/// Per-step linear least-squares multilateration against the AP with the
/// smallest range. Steps with fewer than three usable APs, or collinear
/// ones, stay unresolved.
pub fn multilaterate(anchors: &[(ApDescriptor, f64)]) -> Option<Point> {
    if anchors.len() < 3 {
        return None;
    }
    let refs: Vec<&ApDescriptor> = anchors.iter().map(|(a, _)| a).collect();
    if collinear(&refs) {
        return None;
    }
    let (ref_ap, ref_r) = anchors
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.id.cmp(&b.0.id)))
        .copied()?;
    let pr = ref_ap.position;
    let mut rows = Vec::with_capacity(anchors.len() - 1);
    let mut rhs = Vec::with_capacity(anchors.len() - 1);
    for (ap, r) in anchors {
        if ap.id == ref_ap.id {
            continue;
        }
        let pm = ap.position;
        let row = 2.0 * (pm - pr);
        rows.push([row.x, row.y]);
        rhs.push(ref_r * ref_r - r * r + pm.norm_squared() - pr.norm_squared());
    }
    solve_rows(&rows, &rhs).map(|[x, y]| Point::new(x, y))
}

/// Baseline positions from per-AP ranges, optionally bias-compensated.
/// Only APs in `compensation` take part when it is given.
pub fn baseline_positions(
    prep: &Prepared,
    compensation: Option<&[RangingEstimate]>,
) -> Vec<Option<Point>> {
    (0..prep.steps.len())
        .map(|n| {
            let anchors: Vec<(ApDescriptor, f64)> = prep
                .inputs
                .iter()
                .filter_map(|inp| {
                    let r = inp.ranges[n]?;
                    match compensation {
                        None => Some((inp.ap, r)),
                        Some(ests) => ests
                            .iter()
                            .find(|e| e.ap_id == inp.ap.id)
                            .map(|e| (inp.ap, r - e.bias)),
                    }
                })
                .collect();
            multilaterate(&anchors)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApSummary {
    pub id: u32,
    pub step_length: Option<f64>,
    pub bias: Option<f64>,
    pub feasible: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSummary {
    pub e3: f64,
    pub reference: Option<u32>,
    pub hypothesis: Option<Hypothesis>,
    pub collinear_warning: bool,
}

/// Everything a run produces; this is what `metrics.json` serializes,
/// minus the per-step positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub algorithm: Algorithm,
    pub mobility: MobilityClass,
    pub steps: usize,
    pub omega: Option<f64>,
    pub feasible_aps: Vec<u32>,
    pub aps: Vec<ApSummary>,
    pub alignment: Option<AlignmentSummary>,
    pub error: Option<ErrorReport>,
    pub unresolved_steps: usize,
    #[serde(skip)]
    pub positions: Vec<Option<Point>>,
    #[serde(skip)]
    pub truth: Option<Vec<Point>>,
}

impl RunOutput {
    pub fn metrics_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    /// `n,x_est,y_est[,x_true,y_true,err]`; unresolved steps leave the
    /// estimate columns empty.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("n,x_est,y_est");
        if self.truth.is_some() {
            out.push_str(",x_true,y_true,err");
        }
        out.push('\n');
        for (n, p) in self.positions.iter().enumerate() {
            match p {
                Some(p) => out.push_str(&format!("{},{},{}", n + 1, p.x, p.y)),
                None => out.push_str(&format!("{},,", n + 1)),
            }
            if let Some(t) = &self.truth {
                let t = t[n];
                let err = p.map(|p| (p - t).norm().to_string()).unwrap_or_default();
                out.push_str(&format!(",{},{},{}", t.x, t.y, err));
            }
            out.push('\n');
        }
        out
    }

    pub fn mean_error(&self) -> Option<f64> {
        self.error.map(|e| e.mean)
    }
}

fn summarize(
    prep: &Prepared,
    outcomes: &[ApOutcome],
    feasible: &[RangingEstimate],
) -> Vec<ApSummary> {
    prep.inputs
        .iter()
        .zip(outcomes)
        .map(|(inp, o)| {
            let est = o.estimate();
            ApSummary {
                id: inp.ap.id,
                step_length: est.map(|e| e.step_length),
                bias: est.map(|e| e.bias),
                feasible: feasible.iter().any(|e| e.ap_id == inp.ap.id),
                error: o.result.as_ref().err().map(|e| e.code().to_string()),
            }
        })
        .collect()
}

/// Runs one algorithm from already-estimated APs.
pub fn finish(
    prep: &Prepared,
    outcomes: &[ApOutcome],
    algorithm: Algorithm,
    omega: &OmegaSearchConfig,
    truth: Option<&[Point]>,
) -> Result<RunOutput> {
    let feasible = feasible_estimates(prep, outcomes)?;
    let (positions, omega_star, alignment) = match algorithm {
        Algorithm::FullPipeline => {
            let sol = locate(prep, &feasible, omega)?;
            let fix = average_fix(&sol)?;
            let summary = AlignmentSummary {
                e3: sol.e3,
                reference: sol.reference,
                hypothesis: sol.hypothesis,
                collinear_warning: sol.collinear_warning,
            };
            (
                fix.positions.into_iter().map(Some).collect(),
                Some(sol.omega),
                Some(summary),
            )
        }
        Algorithm::NoTaBaseline => (baseline_positions(prep, Some(&feasible)), None, None),
        Algorithm::RawRttBaseline => (baseline_positions(prep, None), None, None),
    };
    let (error, unresolved) = match truth {
        Some(t) => match evaluate_partial(&positions, t) {
            Ok((r, u)) => (Some(r), u),
            Err(Error::Empty(_)) => (None, positions.len()),
            Err(e) => return Err(e),
        },
        None => (None, positions.iter().filter(|p| p.is_none()).count()),
    };
    Ok(RunOutput {
        algorithm,
        mobility: prep.mobility,
        steps: prep.steps.len(),
        omega: omega_star,
        feasible_aps: feasible.iter().map(|e| e.ap_id).collect(),
        aps: summarize(prep, outcomes, &feasible),
        alignment,
        error,
        unresolved_steps: unresolved,
        positions,
        truth: truth.map(<[Point]>::to_vec),
    })
}

pub fn run_pipeline(ds: &Dataset, cfg: &PipelineConfig) -> Result<RunOutput> {
    let prep = prepare(ds, cfg)?;
    let outcomes = if cfg.algorithm == Algorithm::RawRttBaseline {
        Vec::new()
    } else {
        estimate_aps(&prep, &cfg.ensemble)
    };
    let outcomes = if outcomes.is_empty() {
        prep.inputs
            .iter()
            .map(|i| ApOutcome {
                ap_id: i.ap.id,
                result: Err(Error::Infeasible("ranging not run for the raw baseline")),
            })
            .collect()
    } else {
        outcomes
    };
    finish(
        &prep,
        &outcomes,
        cfg.algorithm,
        &cfg.omega,
        ds.truth.as_deref(),
    )
}

/// Runs all three algorithms, sharing the per-AP ranging stage.
pub fn compare(ds: &Dataset, cfg: &PipelineConfig) -> Result<Vec<RunOutput>> {
    let prep = prepare(ds, cfg)?;
    let outcomes = estimate_aps(&prep, &cfg.ensemble);
    let truth = ds.truth.as_deref();
    Algorithm::ALL
        .into_iter()
        .map(|a| finish(&prep, &outcomes, a, &cfg.omega, truth))
        .collect()
}
