//! Joint bias and step-length estimation for a straight walk.
//!
//! On a straight walk `(q1 + c_n d)^2 + u1^2 = (r_n - b)^2`. Subtracting the
//! equations of two reference steps eliminates `q1` and leaves a system that
//! is linear in `[d^2, b]`. `q1` and `|u1|` are recovered afterwards, and the
//! sign of `u1` is left for multi-AP alignment to decide.

use crate::error::{Error, Result};
use crate::geometry::{ReferenceStepPair, StepObservation};
use crate::lsq::{residual_norm, solve_rows};
use crate::types::MobilityClass;

/// Below this `|u1|` the AP sits on the walking line and both mirror
/// hypotheses coincide.
pub const ON_AXIS_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystemE1 {
    pub rows: Vec<[f64; 2]>,
    pub rhs: Vec<f64>,
    /// Observation positions that produced each row.
    pub row_index: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPairSolution {
    pub d_squared: f64,
    pub bias: f64,
    pub residual: f64,
}

impl LinearPairSolution {
    /// `None` when noise drove `d^2` non-positive.
    pub fn step_length(&self) -> Option<f64> {
        (self.d_squared > 0.0).then(|| self.d_squared.sqrt())
    }
}

pub fn build_e1(obs: &[StepObservation], pair: ReferenceStepPair) -> Result<LinearSystemE1> {
    let min = MobilityClass::Linear.min_steps();
    if obs.len() < min {
        return Err(Error::TooFewSteps {
            mobility: MobilityClass::Linear,
            required: min,
            got: obs.len(),
        });
    }
    let pair = ReferenceStepPair::new(pair.first, pair.second, obs.len())?;
    let (o1, o2) = (obs[pair.first], obs[pair.second]);
    let col1 = o1.c - o2.c;

    let mut sys = LinearSystemE1 {
        rows: Vec::with_capacity(obs.len() - 2),
        rhs: Vec::with_capacity(obs.len() - 2),
        row_index: Vec::with_capacity(obs.len() - 2),
    };
    for (n, o) in obs.iter().enumerate() {
        if pair.contains(n) {
            continue;
        }
        let (g1, g2) = (o.c - o1.c, o.c - o2.c);
        if g1 == 0.0 || g2 == 0.0 {
            continue;
        }
        let col2 = 2.0 * ((o.range - o1.range) / g1 - (o.range - o2.range) / g2);
        let r2 = o.range * o.range;
        let rhs = (r2 - o1.range * o1.range) / g1 - (r2 - o2.range * o2.range) / g2;
        sys.rows.push([col1, col2]);
        sys.rhs.push(rhs);
        sys.row_index.push(n);
    }
    Ok(sys)
}

pub fn solve_e1(sys: &LinearSystemE1) -> Result<LinearPairSolution> {
    let x = solve_rows(&sys.rows, &sys.rhs).ok_or(Error::RankDeficient("linear-mobility"))?;
    Ok(LinearPairSolution {
        d_squared: x[0],
        bias: x[1],
        residual: residual_norm(&sys.rows, &sys.rhs, x),
    })
}

/// Averages the closed-form `q1` of every (reference, other step) pair.
pub fn recover_q1_linear(
    obs: &[StepObservation],
    step_length: f64,
    bias: f64,
    pair: ReferenceStepPair,
) -> Result<f64> {
    if !(step_length > 0.0) {
        return Err(Error::Infeasible("step length must be positive"));
    }
    let d = step_length;
    let mut sum = 0.0;
    let mut count = 0usize;
    for a in pair.members() {
        let oa = obs[a];
        for (n, o) in obs.iter().enumerate() {
            let gap = o.c - oa.c;
            if n == a || gap == 0.0 {
                continue;
            }
            let num = o.range * o.range
                - oa.range * oa.range
                - 2.0 * bias * (o.range - oa.range)
                - (o.c * o.c - oa.c * oa.c) * d * d;
            sum += num / (2.0 * gap * d);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Infeasible("no terms for initial along-track offset"));
    }
    Ok(sum / count as f64)
}

/// Magnitude of the cross-track offset; the two candidates are `+/-`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossTrack {
    pub magnitude: f64,
    /// Radicands that went negative under noise and were clamped to zero.
    pub clamped: usize,
    pub terms: usize,
}

impl CrossTrack {
    pub fn plus(&self) -> f64 {
        self.magnitude
    }

    pub fn minus(&self) -> f64 {
        -self.magnitude
    }

    /// More than half the radicands clamped means the geometry is inconsistent.
    pub fn feasible(&self) -> bool {
        2 * self.clamped <= self.terms
    }

    pub fn on_axis(&self) -> bool {
        self.magnitude < ON_AXIS_THRESHOLD
    }
}

pub fn recover_u1_linear(
    obs: &[StepObservation],
    step_length: f64,
    bias: f64,
    q1: f64,
) -> Result<CrossTrack> {
    if !(step_length > 0.0) {
        return Err(Error::Infeasible("step length must be positive"));
    }
    let mut sum = 0.0;
    let mut clamped = 0usize;
    for o in obs {
        let along = q1 + o.c * step_length;
        let radial = o.range - bias;
        let radicand = radial * radial - along * along;
        if radicand < 0.0 {
            clamped += 1;
        } else {
            sum += radicand.sqrt();
        }
    }
    if obs.is_empty() || clamped == obs.len() {
        return Err(Error::Infeasible("every cross-track radicand is negative"));
    }
    Ok(CrossTrack {
        magnitude: sum / obs.len() as f64,
        clamped,
        terms: obs.len(),
    })
}
