//! Joint bias and step-length estimation for a walk with turns.
//!
//! Writing the initial relative position in polar form `R, gamma` turns the
//! per-step range equations into `2 d R f_{n,a}(gamma) + d^2 eta_{n,a} = ...`.
//! Combining the equations of two reference steps cancels `R`, leaving a
//! system linear in `[d^2, b]` for every fixed `gamma`. `gamma` is found by
//! a 1-D search and the initial position is then solved directly.
//!
//! The cosine sums satisfy
//! `f_{n,a}(gamma) = cos(gamma) (c_n - c_a) + sin(gamma) (s_n - s_a)`, so every
//! entry of the linear system is a linear form in `(cos gamma, sin gamma)`
//! and its normal equations are quadratic forms precomputed once per pair.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{DirectionAccumulators, ReferenceStepPair, StepObservation};
use crate::lsq::{residual_norm, solve_rows, NormalEquations2};
use crate::search::{golden_section, minimize_around, periodic_minimize, SearchResult};
use crate::types::{MobilityClass, Point};

/// `|f_{n,a}|` below this is skipped in the latent-radius spread.
pub const F_SKIP: f64 = 1e-9;

/// Relative size of `f_{a1,a2}(gamma)` under which the system is treated as
/// underdetermined.
const GAMMA_HAT_REL: f64 = 1e-9;

/// The explicit polish searches within one grid cell divided by this.
const POLISH_CELL_FRACTION: f64 = 64.0;

/// Search around the rank-deficient angle: samples from this many grid cells
/// away down to [`ROOT_INNER`], each a [`ROOT_RATIO`] of the previous offset.
/// Feasible gamma near that angle form islands whose width is a small
/// fraction of their distance to it.
const ROOT_CELLS: f64 = 8.0;
const ROOT_INNER: f64 = 1e-8;
const ROOT_RATIO: f64 = 0.95;

/// Polar form of the initial relative position, `gamma` folded into `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarLatent {
    pub radius: f64,
    pub gamma: f64,
}

impl PolarLatent {
    pub fn from_point(z1: Point) -> Self {
        let mut gamma = z1.y.atan2(z1.x);
        if gamma < 0.0 {
            gamma += PI;
        }
        if gamma >= PI {
            gamma -= PI;
        }
        Self {
            radius: z1.norm(),
            gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w1: f64,
    pub w2: f64,
}

impl Weights {
    pub fn new(w1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w1) {
            return Err(Error::Config(format!("w1 must lie in [0, 1], got {w1}")));
        }
        Ok(Self { w1, w2: 1.0 - w1 })
    }
}

impl Default for Weights {
    fn default() -> Self {
        Self { w1: 0.0, w2: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSearchConfig {
    pub grid: usize,
    pub weights: Weights,
    /// Number of lowest grid-local minima refined by golden section.
    pub refine_cells: usize,
    /// Golden-section bracket width at which refinement stops.
    pub refine_tol: f64,
}

impl Default for GammaSearchConfig {
    fn default() -> Self {
        Self {
            grid: 2048,
            weights: Weights::default(),
            refine_cells: 8,
            refine_tol: 1e-10,
        }
    }
}

impl GammaSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid == 0 {
            return Err(Error::Config("gamma grid must be positive".into()));
        }
        if self.refine_cells == 0 {
            return Err(Error::Config(
                "at least one grid cell must be refined".into(),
            ));
        }
        if !(self.refine_tol > 0.0) {
            return Err(Error::Config(
                "refinement tolerance must be positive".into(),
            ));
        }
        let Weights { w1, w2 } = self.weights;
        if w1 < 0.0 || w2 < 0.0 || ((w1 + w2) - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "weights must be non-negative and sum to 1, got {w1}, {w2}"
            )));
        }
        Ok(())
    }
}

/// `sum_{i<n} cos(theta_i - gamma) - sum_{i<a} cos(theta_i - gamma)` for
/// 0-based steps `n`, `a`.
pub fn f_na(acc: &DirectionAccumulators, n: usize, a: usize, gamma: f64) -> f64 {
    let (s, c) = gamma.sin_cos();
    c * (acc.c[n] - acc.c[a]) + s * (acc.s[n] - acc.s[a])
}

fn f_obs(o: &StepObservation, a: &StepObservation, cos: f64, sin: f64) -> f64 {
    cos * (o.c - a.c) + sin * (o.s - a.s)
}

fn eta(o: &StepObservation, a: &StepObservation) -> f64 {
    o.offset_sq() - a.offset_sq()
}

fn check_steps(obs: &[StepObservation]) -> Result<()> {
    let min = MobilityClass::Arbitrary.min_steps();
    if obs.len() < min {
        return Err(Error::TooFewSteps {
            mobility: MobilityClass::Arbitrary,
            required: min,
            got: obs.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemE2 {
    pub rows: Vec<[f64; 2]>,
    pub rhs: Vec<f64>,
    pub row_index: Vec<usize>,
}

pub fn build_e2(obs: &[StepObservation], pair: ReferenceStepPair, gamma: f64) -> Result<SystemE2> {
    check_steps(obs)?;
    let pair = ReferenceStepPair::new(pair.first, pair.second, obs.len())?;
    let (o1, o2) = (&obs[pair.first], &obs[pair.second]);
    let (sin, cos) = gamma.sin_cos();
    let mut sys = SystemE2 {
        rows: Vec::with_capacity(obs.len() - 2),
        rhs: Vec::with_capacity(obs.len() - 2),
        row_index: Vec::with_capacity(obs.len() - 2),
    };
    for (n, o) in obs.iter().enumerate() {
        if pair.contains(n) {
            continue;
        }
        let f1 = f_obs(o, o1, cos, sin);
        let f2 = f_obs(o, o2, cos, sin);
        let alpha = f2 * eta(o, o1) - f1 * eta(o, o2);
        let beta = 2.0 * (f2 * (o.range - o1.range) - f1 * (o.range - o2.range));
        let r2 = o.range * o.range;
        let zeta = f2 * (r2 - o1.range * o1.range) - f1 * (r2 - o2.range * o2.range);
        sys.rows.push([alpha, beta]);
        sys.rhs.push(zeta);
        sys.row_index.push(n);
    }
    Ok(sys)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct E2Solution {
    pub d_squared: f64,
    pub bias: f64,
    /// `||A x - b||` at the least-squares solution.
    pub residual: f64,
}

impl E2Solution {
    pub fn step_length(&self) -> Option<f64> {
        (self.d_squared > 0.0).then(|| self.d_squared.sqrt())
    }
}

pub fn solve_e2(sys: &SystemE2) -> Result<E2Solution> {
    let x = solve_rows(&sys.rows, &sys.rhs).ok_or(Error::Underdetermined)?;
    Ok(E2Solution {
        d_squared: x[0],
        bias: x[1],
        residual: residual_norm(&sys.rows, &sys.rhs, x),
    })
}

/// One `(n, a)` term of the latent-radius estimate.
#[derive(Debug, Clone, Copy)]
struct RadiusTerm {
    dc: f64,
    ds: f64,
    dq: f64,
    dr: f64,
    eta: f64,
}

fn radius_terms(obs: &[StepObservation], pair: ReferenceStepPair) -> Vec<RadiusTerm> {
    let mut terms = Vec::with_capacity(2 * obs.len());
    for a in pair.members() {
        let oa = &obs[a];
        for (n, o) in obs.iter().enumerate() {
            if n == a {
                continue;
            }
            terms.push(RadiusTerm {
                dc: o.c - oa.c,
                ds: o.s - oa.s,
                dq: o.range * o.range - oa.range * oa.range,
                dr: o.range - oa.range,
                eta: eta(o, oa),
            });
        }
    }
    terms
}

/// Population standard deviation of the latent-radius estimates, or +inf
/// when fewer than two terms survive.
fn radius_spread(
    terms: &[RadiusTerm],
    cos: f64,
    sin: f64,
    d: f64,
    b: f64,
    scratch: &mut Vec<f64>,
) -> f64 {
    scratch.clear();
    let d_sq = d * d;
    for t in terms {
        let f = cos * t.dc + sin * t.ds;
        if f.abs() < F_SKIP {
            continue;
        }
        scratch.push((t.dq - 2.0 * b * t.dr - d_sq * t.eta) / (2.0 * f * d));
    }
    if scratch.len() < 2 {
        return f64::INFINITY;
    }
    let inv = 1.0 / scratch.len() as f64;
    let mean = scratch.iter().sum::<f64>() * inv;
    (scratch.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() * inv).sqrt()
}

/// Spread of the latent radius implied by `(gamma, d, b)`; zero at the true
/// parameters for noise-free data.
pub fn e2_cost(
    obs: &[StepObservation],
    pair: ReferenceStepPair,
    gamma: f64,
    d: f64,
    b: f64,
) -> f64 {
    if !(d > 0.0) {
        return f64::INFINITY;
    }
    let (sin, cos) = gamma.sin_cos();
    let terms = radius_terms(obs, pair);
    radius_spread(&terms, cos, sin, d, b, &mut Vec::with_capacity(terms.len()))
}

/// Quadratic form `cc cos^2 + 2 cs cos sin + ss sin^2`.
#[derive(Debug, Clone, Copy, Default)]
struct Quad {
    cc: f64,
    cs: f64,
    ss: f64,
}

impl Quad {
    fn add(&mut self, u: (f64, f64), v: (f64, f64)) {
        self.cc += u.0 * v.0;
        self.cs += 0.5 * (u.0 * v.1 + u.1 * v.0);
        self.ss += u.1 * v.1;
    }

    fn eval(&self, c: f64, s: f64) -> f64 {
        self.cc * c * c + 2.0 * self.cs * c * s + self.ss * s * s
    }
}

/// Per-pair precomputation that evaluates the gamma criterion in O(1) for
/// the linear solve plus one pass over the radius terms.
#[derive(Debug, Clone)]
pub struct GammaProfile {
    // (cos, sin) coefficients of alpha, beta, zeta per row
    coeffs: Vec<[(f64, f64); 3]>,
    aa: Quad,
    ab: Quad,
    bb: Quad,
    az: Quad,
    bz: Quad,
    pair_dc: f64,
    pair_ds: f64,
    min_range: f64,
    terms: Vec<RadiusTerm>,
    scratch: Vec<f64>,
}

/// Cost and solution at one gamma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPoint {
    pub d_squared: f64,
    pub bias: f64,
    pub cost: f64,
}

impl GammaProfile {
    pub fn new(obs: &[StepObservation], pair: ReferenceStepPair) -> Result<Self> {
        check_steps(obs)?;
        let pair = ReferenceStepPair::new(pair.first, pair.second, obs.len())?;
        let (o1, o2) = (&obs[pair.first], &obs[pair.second]);
        let mut coeffs = Vec::with_capacity(obs.len() - 2);
        let (mut aa, mut ab, mut bb, mut az, mut bz) = Default::default();
        for (n, o) in obs.iter().enumerate() {
            if pair.contains(n) {
                continue;
            }
            let (c1, s1) = (o.c - o1.c, o.s - o1.s);
            let (c2, s2) = (o.c - o2.c, o.s - o2.s);
            let (e1, e2) = (eta(o, o1), eta(o, o2));
            let (dr1, dr2) = (o.range - o1.range, o.range - o2.range);
            let r2 = o.range * o.range;
            let (dq1, dq2) = (r2 - o1.range * o1.range, r2 - o2.range * o2.range);
            let alpha = (c2 * e1 - c1 * e2, s2 * e1 - s1 * e2);
            let beta = (2.0 * (c2 * dr1 - c1 * dr2), 2.0 * (s2 * dr1 - s1 * dr2));
            let zeta = (c2 * dq1 - c1 * dq2, s2 * dq1 - s1 * dq2);
            Quad::add(&mut aa, alpha, alpha);
            Quad::add(&mut ab, alpha, beta);
            Quad::add(&mut bb, beta, beta);
            Quad::add(&mut az, alpha, zeta);
            Quad::add(&mut bz, beta, zeta);
            coeffs.push([alpha, beta, zeta]);
        }
        let terms = radius_terms(obs, pair);
        Ok(Self {
            coeffs,
            aa,
            ab,
            bb,
            az,
            bz,
            pair_dc: o1.c - o2.c,
            pair_ds: o1.s - o2.s,
            min_range: obs.iter().map(|o| o.range).fold(f64::INFINITY, f64::min),
            scratch: Vec::with_capacity(terms.len()),
            terms,
        })
    }

    /// The gamma in `[0, pi)` where `f_{a1,a2}` vanishes.
    pub fn degenerate_angle(&self) -> f64 {
        (-self.pair_dc).atan2(self.pair_ds).rem_euclid(PI)
    }

    /// True where `f_{a1,a2}(gamma)` vanishes and the system drops to rank 1.
    pub fn is_degenerate(&self, gamma: f64) -> bool {
        let (s, c) = gamma.sin_cos();
        let f = c * self.pair_dc + s * self.pair_ds;
        f.abs() <= GAMMA_HAT_REL * (self.pair_dc.abs() + self.pair_ds.abs())
    }

    /// Least-squares `[d^2, b]` at `gamma`, `None` when underdetermined.
    pub fn solve_at(&self, gamma: f64) -> Option<[f64; 2]> {
        if self.is_degenerate(gamma) {
            return None;
        }
        let (s, c) = gamma.sin_cos();
        let ne = NormalEquations2 {
            xx: self.aa.eval(c, s),
            xy: self.ab.eval(c, s),
            yy: self.bb.eval(c, s),
            xb: self.az.eval(c, s),
            yb: self.bz.eval(c, s),
            bb: 0.0,
            rows: self.coeffs.len(),
        };
        ne.solve()
    }

    /// Residual of the linear system at `gamma` for a given solution.
    pub fn residual(&self, gamma: f64, x: [f64; 2]) -> f64 {
        let (s, c) = gamma.sin_cos();
        self.coeffs
            .iter()
            .map(|[a, b, z]| {
                let e =
                    (c * a.0 + s * a.1) * x[0] + (c * b.0 + s * b.1) * x[1] - (c * z.0 + s * z.1);
                e * e
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Weighted criterion at `gamma`; `None` outside the feasible set
    /// (`d > 0` and every calibrated range positive) or where underdetermined.
    pub fn evaluate(&mut self, gamma: f64, weights: Weights) -> Option<GammaPoint> {
        let x = self.solve_at(gamma)?;
        let residual = (weights.w1 > 0.0).then(|| self.residual(gamma, x));
        self.score(gamma, x, weights, residual)
    }

    fn score(
        &mut self,
        gamma: f64,
        x: [f64; 2],
        weights: Weights,
        residual: Option<f64>,
    ) -> Option<GammaPoint> {
        let [d_squared, bias] = x;
        if !(d_squared > 0.0) || !(self.min_range - bias > 0.0) {
            return None;
        }
        let mut cost = 0.0;
        if let Some(r) = residual {
            cost += weights.w1 * r;
        }
        if weights.w2 > 0.0 {
            let (s, c) = gamma.sin_cos();
            cost += weights.w2
                * radius_spread(&self.terms, c, s, d_squared.sqrt(), bias, &mut self.scratch);
        }
        cost.is_finite().then_some(GammaPoint {
            d_squared,
            bias,
            cost,
        })
    }
    /// Like [`GammaProfile::evaluate`], but solves the explicit rows by an
    /// orthogonal factorisation instead of the accumulated normal equations.
    /// Slower, and accurate where the system is poorly conditioned.
    pub fn evaluate_exact(&mut self, gamma: f64, weights: Weights) -> Option<GammaPoint> {
        if self.is_degenerate(gamma) {
            return None;
        }
        let (s, c) = gamma.sin_cos();
        let lin = |u: (f64, f64)| u.0 * c + u.1 * s;
        let rows: Vec<[f64; 2]> = self
            .coeffs
            .iter()
            .map(|[a, b, _]| [lin(*a), lin(*b)])
            .collect();
        let rhs: Vec<f64> = self.coeffs.iter().map(|[_, _, z]| lin(*z)).collect();
        let x = solve_rows(&rows, &rhs)?;
        let residual = (weights.w1 > 0.0).then(|| residual_norm(&rows, &rhs, x));
        self.score(gamma, x, weights, residual)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaEstimate {
    pub gamma: f64,
    pub step_length: f64,
    pub bias: f64,
    pub cost: f64,
}

/// Minimises the weighted criterion over feasible gamma in `[0, pi)`: a
/// uniform grid with refinement of its local minima, and a geometric sweep
/// towards the rank-deficient angle where the grid is too coarse. Both use the
/// cheap profile; a last golden-section refinement within a small fraction of
/// a grid cell around the winner uses the explicit solve.
pub fn search_gamma(
    obs: &[StepObservation],
    pair: ReferenceStepPair,
    cfg: &GammaSearchConfig,
) -> Result<GammaEstimate> {
    cfg.validate()?;
    let mut profile = GammaProfile::new(obs, pair)?;
    let weights = cfg.weights;
    let grid = periodic_minimize(
        |g| {
            profile
                .evaluate(g, weights)
                .map_or(f64::INFINITY, |p| p.cost)
        },
        PI,
        cfg.grid,
        cfg.refine_cells,
        cfg.refine_tol,
    );
    let root = profile.degenerate_angle();
    let cell = PI / cfg.grid as f64;
    let near_root = minimize_around(
        |g| {
            profile
                .evaluate(g, weights)
                .map_or(f64::INFINITY, |p| p.cost)
        },
        root,
        ROOT_INNER,
        ROOT_CELLS * cell,
        ROOT_RATIO,
        cfg.refine_cells,
        cfg.refine_tol,
    )
    .map(|r| SearchResult {
        argmin: r.argmin.rem_euclid(PI),
        value: r.value,
    });
    let coarse = match (grid, near_root) {
        (Some(g), Some(r)) if r.value < g.value => r,
        (Some(g), _) => g,
        (None, r) => r.ok_or(Error::NoFeasibleGamma)?,
    };
    let half_width = cell / POLISH_CELL_FRACTION;
    let mut exact = |g: f64| {
        profile
            .evaluate_exact(g, weights)
            .map_or(f64::INFINITY, |p| p.cost)
    };
    let at_coarse = exact(coarse.argmin);
    let (polished, value) = golden_section(
        &mut exact,
        coarse.argmin - half_width,
        coarse.argmin + half_width,
        cfg.refine_tol,
    );
    let (gamma, cost) = if value < at_coarse {
        (polished.rem_euclid(PI), value)
    } else {
        (coarse.argmin, at_coarse)
    };
    if !cost.is_finite() {
        return Err(Error::NoFeasibleGamma);
    }
    let sol = solve_e2(&build_e2(obs, pair, gamma)?)?;
    let d = sol.step_length().ok_or(Error::NoFeasibleGamma)?;
    Ok(GammaEstimate {
        gamma,
        step_length: d,
        bias: sol.bias,
        cost,
    })
}

/// Solves for the initial relative position given step length and bias.
pub fn build_and_solve_e3(
    obs: &[StepObservation],
    pair: ReferenceStepPair,
    d: f64,
    b: f64,
) -> Result<Point> {
    if !(d > 0.0) {
        return Err(Error::Infeasible("step length must be positive"));
    }
    let pair = ReferenceStepPair::new(pair.first, pair.second, obs.len())?;
    let terms = radius_terms(obs, pair);
    let rows: Vec<[f64; 2]> = terms.iter().map(|t| [t.dc, t.ds]).collect();
    let rhs: Vec<f64> = terms
        .iter()
        .map(|t| (t.dq - 2.0 * b * t.dr - d * d * t.eta) / (2.0 * d))
        .collect();
    let [q1, u1] = solve_rows(&rows, &rhs).ok_or(Error::RankDeficient("initial-position"))?;
    Ok(Point::new(q1, u1))
}
