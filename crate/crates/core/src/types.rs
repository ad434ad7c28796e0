//! Measurement and trajectory value types.
//!
//! Angles are radians and distances meters throughout; degrees only appear
//! at I/O boundaries. All types here are plain immutable values.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2-D point or displacement in meters.
pub type Point = Vector2<f64>;

/// Propagation speed used to turn round-trip times into ranges.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Default tolerance for treating a cumulative heading as zero.
pub const LINEAR_HEADING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApDescriptor {
    pub id: u32,
    pub position: Point,
}

impl ApDescriptor {
    pub fn new(id: u32, x: f64, y: f64) -> Self {
        Self {
            id,
            position: Point::new(x, y),
        }
    }
}

/// One detected walking step.
///
/// `index` is 1-based. `heading_change` is the direction change reported at
/// this step and `cumulative_heading` the running sum of all changes so far.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub index: usize,
    pub timestamp: f64,
    pub heading_change: f64,
    pub cumulative_heading: f64,
}

impl StepEvent {
    /// Builds a step sequence from per-step heading changes. The first change
    /// must be zero and timestamps must be strictly increasing.
    pub fn sequence_from_changes(timestamps: &[f64], changes: &[f64]) -> Result<Vec<StepEvent>> {
        if timestamps.len() != changes.len() {
            return Err(Error::LengthMismatch {
                expected: timestamps.len(),
                got: changes.len(),
            });
        }
        if timestamps.is_empty() {
            return Err(Error::Empty("step sequence"));
        }
        if changes[0] != 0.0 {
            return Err(Error::InvalidMeasurement(
                "first step must carry zero heading change".into(),
            ));
        }
        let mut theta = 0.0;
        let mut out = Vec::with_capacity(changes.len());
        for (i, (&t, &mu)) in timestamps.iter().zip(changes).enumerate() {
            if !t.is_finite() || !mu.is_finite() {
                return Err(Error::InvalidMeasurement(format!(
                    "step {}: non-finite value",
                    i + 1
                )));
            }
            if i > 0 && t <= timestamps[i - 1] {
                return Err(Error::InvalidMeasurement(format!(
                    "step {}: timestamp not strictly increasing",
                    i + 1
                )));
            }
            theta += mu;
            out.push(StepEvent {
                index: i + 1,
                timestamp: t,
                heading_change: mu,
                cumulative_heading: theta,
            });
        }
        Ok(out)
    }

    /// Builds a step sequence from cumulative headings (the first must be 0).
    pub fn sequence_from_headings(timestamps: &[f64], headings: &[f64]) -> Result<Vec<StepEvent>> {
        if headings.is_empty() {
            return Err(Error::Empty("step sequence"));
        }
        let changes: Vec<f64> = headings
            .iter()
            .enumerate()
            .map(|(i, &h)| if i == 0 { h } else { h - headings[i - 1] })
            .collect();
        Self::sequence_from_changes(timestamps, &changes)
    }
}

/// Re-accumulates a step sequence after mapping every heading change.
pub fn remap_heading_changes(steps: &[StepEvent], f: impl Fn(f64) -> f64) -> Vec<StepEvent> {
    let mut theta = 0.0;
    steps
        .iter()
        .map(|s| {
            let mu = if s.index == 1 {
                0.0
            } else {
                f(s.heading_change)
            };
            theta += mu;
            StepEvent {
                heading_change: mu,
                cumulative_heading: theta,
                ..*s
            }
        })
        .collect()
}

/// Per-step RTT readings; `None` marks an AP that did not answer at this step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub step: StepEvent,
    pub rtts: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MobilityClass {
    Linear,
    Arbitrary,
}

impl MobilityClass {
    /// Fewest steps for which a single reference pair gives a unique solution.
    pub fn min_steps(self) -> usize {
        match self {
            MobilityClass::Linear => 4,
            MobilityClass::Arbitrary => 5,
        }
    }

    /// Fewest feasible APs for which alignment has a unique heading.
    pub fn min_aps(self) -> usize {
        match self {
            MobilityClass::Linear => 3,
            MobilityClass::Arbitrary => 2,
        }
    }
}

impl fmt::Display for MobilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MobilityClass::Linear => "linear",
            MobilityClass::Arbitrary => "arbitrary",
        })
    }
}

/// Per-AP result of joint bias and step-length estimation, with the initial
/// position `z1` expressed in the AP-local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangingEstimate {
    pub ap_id: u32,
    pub step_length: f64,
    pub bias: f64,
    pub z1: Point,
    /// Linear walks leave the sign of `z1.y` undetermined for a single AP.
    pub linear_sign_ambiguous: bool,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryVariant {
    Unique,
    Plus,
    Minus,
}

/// A user path in one AP's local frame (origin at the AP, X along the
/// initial heading).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeTrajectory {
    pub ap_id: u32,
    pub points: Vec<Point>,
    pub variant: TrajectoryVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEstimate {
    pub positions: Vec<Point>,
    pub heading: f64,
    pub contributing_aps: Vec<u32>,
}

/// Converts a round-trip time in seconds into a one-way range in meters.
pub fn rtt_to_range(rtt: f64) -> Result<f64> {
    if !(rtt > 0.0) || !rtt.is_finite() {
        return Err(Error::InvalidMeasurement(format!(
            "round-trip time must be positive, got {rtt}"
        )));
    }
    Ok(SPEED_OF_LIGHT * rtt / 2.0)
}

pub fn range_to_rtt(range: f64) -> f64 {
    2.0 * range / SPEED_OF_LIGHT
}

/// Linear iff every cumulative heading is within `tolerance` of zero.
pub fn classify_mobility(steps: &[StepEvent], tolerance: f64) -> Result<MobilityClass> {
    if steps.is_empty() {
        return Err(Error::Empty("step sequence"));
    }
    if steps
        .iter()
        .all(|s| s.cumulative_heading.abs() <= tolerance)
    {
        Ok(MobilityClass::Linear)
    } else {
        Ok(MobilityClass::Arbitrary)
    }
}

/// Snaps a heading change to the nearest of {0, pi/2, pi, -pi/2}
/// (-pi/2 standing in for 3pi/2).
pub fn quantize_heading(raw: f64) -> f64 {
    let k = (raw / FRAC_PI_2).round() as i64;
    match k.rem_euclid(4) {
        0 => 0.0,
        1 => FRAC_PI_2,
        2 => PI,
        _ => -FRAC_PI_2,
    }
}
