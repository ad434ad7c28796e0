//! Synthetic scenarios: ground-truth walks, biased noisy RTT measurements and
//! error statistics against the truth.
//!
//! Randomness comes from ChaCha20 seeded by the scenario seed. Headings use
//! stream 0 and the AP at list position `m` uses stream `m + 1`, so adding an
//! AP never perturbs the draws of the others.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};
use crate::types::{range_to_rtt, ApDescriptor, MeasurementSet, Point, StepEvent};

/// Draws allowed before a non-positive noisy range becomes an error.
const MAX_RESAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApConfig {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    /// Constant range bias in meters.
    #[serde(default)]
    pub bias: f64,
}

impl ApConfig {
    pub fn descriptor(&self) -> ApDescriptor {
        ApDescriptor::new(self.id, self.x, self.y)
    }
}

/// Heading change applied at a 1-based step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub step: usize,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub steps: usize,
    pub step_length: f64,
    /// Initial heading in the global frame.
    pub heading: f64,
    pub start: [f64; 2],
    #[serde(default = "default_interval")]
    pub step_interval: f64,
    #[serde(default)]
    pub range_noise: f64,
    /// Standard deviation of the error on each reported turn.
    #[serde(default)]
    pub heading_noise: f64,
    #[serde(default)]
    pub turns: Vec<Turn>,
    pub aps: Vec<ApConfig>,
}

fn default_interval() -> f64 {
    0.5
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if !(self.step_length > 0.0) {
            return bad(format!(
                "step length must be positive, got {}",
                self.step_length
            ));
        }
        if !(self.step_interval > 0.0) {
            return bad("step interval must be positive".into());
        }
        if !(self.range_noise >= 0.0) || !(self.heading_noise >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        if !self.heading.is_finite() || !self.start.iter().all(|v| v.is_finite()) {
            return bad("heading and start must be finite".into());
        }
        for t in &self.turns {
            if t.step < 2 || t.step > self.steps || !t.angle.is_finite() {
                return bad(format!(
                    "turn at step {} must lie in [2, {}]",
                    t.step, self.steps
                ));
            }
        }
        let mut ids: Vec<u32> = self.aps.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("AP ids must be unique".into());
        }
        for a in &self.aps {
            if !(a.bias >= 0.0) || !a.x.is_finite() || !a.y.is_finite() {
                return bad(format!(
                    "AP {}: bias must be non-negative and position finite",
                    a.id
                ));
            }
        }
        Ok(())
    }

    /// True heading change at every step (0-based vector).
    pub fn heading_changes(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.steps];
        for t in &self.turns {
            mu[t.step - 1] += t.angle;
        }
        mu
    }

    pub fn descriptors(&self) -> Vec<ApDescriptor> {
        self.aps.iter().map(ApConfig::descriptor).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub positions: Vec<Point>,
    /// Cumulative heading per step.
    pub headings: Vec<f64>,
    /// `distances[m][n]`: true distance from AP `m` to step `n`.
    pub distances: Vec<Vec<f64>>,
}

pub fn generate_truth(cfg: &ScenarioConfig) -> GroundTruth {
    let mut headings = Vec::with_capacity(cfg.steps);
    let mut theta = 0.0;
    for mu in cfg.heading_changes() {
        theta += mu;
        headings.push(theta);
    }
    let mut positions = Vec::with_capacity(cfg.steps);
    let mut p = Point::new(cfg.start[0], cfg.start[1]);
    for (n, th) in headings.iter().enumerate() {
        positions.push(p);
        if n + 1 < cfg.steps {
            let a = cfg.heading + th;
            p += cfg.step_length * Point::new(a.cos(), a.sin());
        }
    }
    let distances = cfg
        .aps
        .iter()
        .map(|ap| {
            let q = Point::new(ap.x, ap.y);
            positions.iter().map(|p| (p - q).norm()).collect()
        })
        .collect();
    GroundTruth {
        positions,
        headings,
        distances,
    }
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal(sigma: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))
}

/// Noisy measurement sets for every step. Only steps with a true turn carry
/// heading noise: straight steps report no change, as a turn detector would.
pub fn generate_measurements(
    cfg: &ScenarioConfig,
    truth: &GroundTruth,
) -> Result<Vec<MeasurementSet>> {
    cfg.validate()?;
    let mut heading_rng = stream(cfg.seed, 0);
    let heading_noise = normal(cfg.heading_noise)?;
    let reported: Vec<f64> = cfg
        .heading_changes()
        .into_iter()
        .map(|mu| {
            if mu != 0.0 && cfg.heading_noise > 0.0 {
                mu + heading_noise.sample(&mut heading_rng)
            } else {
                mu
            }
        })
        .collect();
    let timestamps: Vec<f64> = (0..cfg.steps)
        .map(|n| n as f64 * cfg.step_interval)
        .collect();
    let steps = StepEvent::sequence_from_changes(&timestamps, &reported)?;

    let range_noise = normal(cfg.range_noise)?;
    let mut rtts = vec![Vec::with_capacity(cfg.aps.len()); cfg.steps];
    for (m, ap) in cfg.aps.iter().enumerate() {
        let mut rng = stream(cfg.seed, m as u64 + 1);
        for (n, &dist) in truth.distances[m].iter().enumerate() {
            let mut attempt = 0;
            let range = loop {
                let eps = if cfg.range_noise > 0.0 {
                    range_noise.sample(&mut rng)
                } else {
                    0.0
                };
                let r = dist + ap.bias + eps;
                if r > 0.0 {
                    break r;
                }
                attempt += 1;
                if attempt >= MAX_RESAMPLES {
                    return Err(Error::InvalidMeasurement(format!(
                        "AP {}: could not draw a positive range at step {}",
                        ap.id,
                        n + 1
                    )));
                }
            };
            rtts[n].push(Some(range_to_rtt(range)));
        }
    }
    Ok(steps
        .into_iter()
        .zip(rtts)
        .map(|(step, rtts)| MeasurementSet { step, rtts })
        .collect())
}

/// Summary statistics of per-step positioning error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

impl ErrorReport {
    pub fn from_errors(errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::Empty("error sample"));
        }
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let var = sorted.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Ok(Self {
            min: sorted[0],
            max: sorted[n - 1],
            mean,
            median,
            std: var.sqrt(),
        })
    }
}

pub fn step_errors(estimate: &[Point], truth: &[Point]) -> Result<Vec<f64>> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    Ok(estimate
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).norm())
        .collect())
}

pub fn evaluate(estimate: &[Point], truth: &[Point]) -> Result<ErrorReport> {
    ErrorReport::from_errors(&step_errors(estimate, truth)?)
}

/// Evaluates only resolved steps; returns the report and the number of
/// unresolved steps.
pub fn evaluate_partial(
    estimate: &[Option<Point>],
    truth: &[Point],
) -> Result<(ErrorReport, usize)> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    let errors: Vec<f64> = estimate
        .iter()
        .zip(truth)
        .filter_map(|(p, t)| p.map(|p| (p - t).norm()))
        .collect();
    let unresolved = estimate.len() - errors.len();
    Ok((ErrorReport::from_errors(&errors)?, unresolved))
}

/// Uniform biases in `[lo, hi]`.
pub fn sample_biases(rng: &mut impl Rng, count: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..count)
        .map(|_| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
        .collect()
}

/// Walk shape of a random scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkShape {
    /// Straight walk.
    Linear,
    /// Right-angle turns at random steps, at least one, staying inside
    /// the site.
    Corridor,
}

/// Recipe for random scenarios; [`RandomScenario::build`] turns a seed into a
/// concrete [`ScenarioConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomScenario {
    pub aps: usize,
    pub steps: usize,
    pub shape: WalkShape,
    pub step_length: f64,
    /// APs are placed uniformly in `[0, area]^2`; the walk starts inside it.
    pub area: f64,
    pub bias_range: [f64; 2],
    pub range_noise: f64,
    pub heading_noise: f64,
    /// Mean number of steps between turns.
    pub turn_spacing: f64,
    /// Minimum AP distance from a straight walk's line.
    pub min_clearance: f64,
}

impl Default for RandomScenario {
    fn default() -> Self {
        Self {
            aps: 10,
            steps: 70,
            shape: WalkShape::Corridor,
            step_length: 0.7,
            area: 30.0,
            bias_range: [1.0, 5.0],
            range_noise: 0.5,
            heading_noise: 0.0,
            turn_spacing: 15.0,
            min_clearance: 1.0,
        }
    }
}

impl RandomScenario {
    /// The NLOS-heavy benchmark suite: 10 APs, 70 steps, biases in [1, 5] m
    /// and 0.5 m range noise.
    pub fn nlos_suite() -> Self {
        Self::default()
    }

    pub fn build(&self, seed: u64) -> ScenarioConfig {
        // layout draws live on their own stream so they never collide with
        // the measurement streams of the generated scenario
        let mut rng = stream(seed, u64::MAX);
        let heading = rng.gen_range(0.0..TAU);
        let margin = 0.25 * self.area;
        let start = [
            rng.gen_range(margin..self.area - margin),
            rng.gen_range(margin..self.area - margin),
        ];
        let turns = match self.shape {
            WalkShape::Linear => Vec::new(),
            WalkShape::Corridor => self.random_turns(&mut rng, heading, start),
        };
        let biases = sample_biases(&mut rng, self.aps, self.bias_range[0], self.bias_range[1]);
        let mut aps = Vec::with_capacity(self.aps);
        let dir = Point::new(heading.cos(), heading.sin());
        let origin = Point::new(start[0], start[1]);
        while aps.len() < self.aps {
            let p = Point::new(rng.gen_range(0.0..self.area), rng.gen_range(0.0..self.area));
            if self.shape == WalkShape::Linear {
                let off = p - origin;
                if (off.x * dir.y - off.y * dir.x).abs() < self.min_clearance {
                    continue;
                }
            }
            let id = aps.len() as u32 + 1;
            aps.push(ApConfig {
                id,
                x: p.x,
                y: p.y,
                bias: biases[id as usize - 1],
            });
        }
        ScenarioConfig {
            seed,
            steps: self.steps,
            step_length: self.step_length,
            heading,
            start,
            step_interval: default_interval(),
            range_noise: self.range_noise,
            heading_noise: self.heading_noise,
            turns,
            aps,
        }
    }

    /// Right-angle turns at random steps. A turn is also forced whenever the
    /// next step would leave the site, so the walk stays among the APs.
    fn random_turns(&self, rng: &mut ChaCha20Rng, heading: f64, start: [f64; 2]) -> Vec<Turn> {
        let mut turns = Vec::new();
        if self.steps < 2 {
            return turns;
        }
        let p = (1.0 / self.turn_spacing.max(1.0)).min(1.0);
        let inside = |q: Point| q.x >= 0.0 && q.y >= 0.0 && q.x <= self.area && q.y <= self.area;
        let mut pos = Point::new(start[0], start[1]);
        let mut theta = 0.0;
        let advance = |pos: Point, theta: f64| {
            let a = heading + theta;
            pos + self.step_length * Point::new(a.cos(), a.sin())
        };
        // step n+1 moves along the heading accumulated up to step n, so a
        // turn at the final step would change nothing
        for step in 1..self.steps {
            if step >= 2 {
                let mut angle = if rng.gen_bool(p) {
                    if rng.gen_bool(0.5) {
                        FRAC_PI_2
                    } else {
                        -FRAC_PI_2
                    }
                } else {
                    0.0
                };
                if !inside(advance(pos, theta + angle)) {
                    let left = inside(advance(pos, theta + FRAC_PI_2));
                    let right = inside(advance(pos, theta - FRAC_PI_2));
                    angle = match (left, right) {
                        (true, true) => {
                            if rng.gen_bool(0.5) {
                                FRAC_PI_2
                            } else {
                                -FRAC_PI_2
                            }
                        }
                        (true, false) => FRAC_PI_2,
                        (false, true) => -FRAC_PI_2,
                        (false, false) => PI,
                    };
                }
                if angle != 0.0 {
                    theta += angle;
                    turns.push(Turn { step, angle });
                }
            }
            pos = advance(pos, theta);
        }
        if turns.is_empty() && self.steps >= 3 {
            let step = rng.gen_range(2..self.steps);
            turns.push(Turn {
                step,
                angle: FRAC_PI_2,
            });
        }
        turns
    }
}
