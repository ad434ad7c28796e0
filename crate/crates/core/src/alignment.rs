//! Rotating per-AP relative trajectories into one global frame.
//!
//! Each AP's estimate gives the walk in that AP's local frame. The only
//! unknown left is the initial heading `omega` shared by all frames; it is
//! found by minimising the summed pairwise distance between the trajectories
//! once each is rotated by `omega` and translated to its AP.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geometry::{local_to_global, propagate_trajectory, rotate, DirectionAccumulators};
use crate::search::periodic_minimize;
use crate::types::{
    ApDescriptor, MobilityClass, Point, RangingEstimate, RelativeTrajectory, TrajectoryEstimate,
    TrajectoryVariant,
};

/// Largest AP-triple triangle area (m^2) under which the APs count as collinear.
pub const COLLINEAR_AREA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaSearchConfig {
    pub grid: usize,
    /// Number of lowest grid-local minima refined by golden section.
    pub refine_cells: usize,
    pub refine_tol: f64,
}

impl Default for OmegaSearchConfig {
    fn default() -> Self {
        Self {
            grid: 4096,
            refine_cells: 4,
            refine_tol: 1e-10,
        }
    }
}

/// Relative trajectory of one AP: unique for walks with turns, a mirror
/// pair for straight walks.
#[derive(Debug, Clone, PartialEq)]
pub enum RelativeCandidates {
    Unique(RelativeTrajectory),
    Mirror {
        plus: RelativeTrajectory,
        minus: RelativeTrajectory,
    },
}

pub fn derive_relative_trajectory(
    est: &RangingEstimate,
    acc: &DirectionAccumulators,
    mobility: MobilityClass,
) -> Result<RelativeCandidates> {
    if !est.feasible || !(est.step_length > 0.0) || !est.z1.iter().all(|v| v.is_finite()) {
        return Err(Error::Infeasible(
            "relative trajectory needs a feasible estimate",
        ));
    }
    let build = |z1: Point, variant| RelativeTrajectory {
        ap_id: est.ap_id,
        points: propagate_trajectory(z1, est.step_length, acc),
        variant,
    };
    Ok(match mobility {
        MobilityClass::Arbitrary => {
            RelativeCandidates::Unique(build(est.z1, TrajectoryVariant::Unique))
        }
        MobilityClass::Linear => {
            let u = est.z1.y.abs();
            RelativeCandidates::Mirror {
                plus: build(Point::new(est.z1.x, u), TrajectoryVariant::Plus),
                minus: build(Point::new(est.z1.x, -u), TrajectoryVariant::Minus),
            }
        }
    })
}

/// AP ids whose estimates have positive step length, leave every calibrated
/// range positive and carry a finite initial position.
pub fn filter_feasible(estimates: &[RangingEstimate], min_ranges: &[f64]) -> Result<Vec<u32>> {
    if estimates.len() != min_ranges.len() {
        return Err(Error::LengthMismatch {
            expected: estimates.len(),
            got: min_ranges.len(),
        });
    }
    Ok(estimates
        .iter()
        .zip(min_ranges)
        .filter(|(e, &r)| {
            e.feasible
                && e.step_length > 0.0
                && r - e.bias > 0.0
                && e.z1.iter().all(|v| v.is_finite())
        })
        .map(|(e, _)| e.ap_id)
        .collect())
}

/// Largest triangle area over all AP triples.
pub fn max_triangle_area(aps: &[&ApDescriptor]) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..aps.len() {
        for j in i + 1..aps.len() {
            for k in j + 1..aps.len() {
                let u = aps[j].position - aps[i].position;
                let v = aps[k].position - aps[i].position;
                best = best.max(0.5 * (u.x * v.y - u.y * v.x).abs());
            }
        }
    }
    best
}

pub fn collinear(aps: &[&ApDescriptor]) -> bool {
    max_triangle_area(aps) < COLLINEAR_AREA
}

/// Precomputed pairwise differences for fast evaluation of the alignment
/// error as a function of `omega`.
#[derive(Debug, Clone)]
pub struct AlignmentCost {
    // (p_i - p_j, [z_n^i - z_n^j])
    pairs: Vec<(Point, Vec<Point>)>,
}

impl AlignmentCost {
    pub fn new(members: &[(&ApDescriptor, &[Point])]) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::Empty("alignment needs at least two trajectories"));
        }
        let len = members[0].1.len();
        let mut pairs = Vec::with_capacity(members.len() * (members.len() - 1) / 2);
        for (i, (ap_i, z_i)) in members.iter().enumerate() {
            if z_i.len() != len {
                return Err(Error::LengthMismatch {
                    expected: len,
                    got: z_i.len(),
                });
            }
            for (ap_j, z_j) in &members[i + 1..] {
                let dz = z_i.iter().zip(z_j.iter()).map(|(a, b)| a - b).collect();
                pairs.push((ap_i.position - ap_j.position, dz));
            }
        }
        Ok(Self { pairs })
    }

    /// Sum over unordered AP pairs and steps of the distance between the two
    /// global positions.
    pub fn eval(&self, omega: f64) -> f64 {
        // ||R(w) dz + dp|| = ||dz + R(-w) dp||
        self.pairs
            .iter()
            .map(|(dp, dz)| {
                let u = rotate(*dp, -omega);
                dz.iter().map(|z| (z + u).norm()).sum::<f64>()
            })
            .sum()
    }
}

pub fn e3(members: &[(&ApDescriptor, &[Point])], omega: f64) -> Result<f64> {
    Ok(AlignmentCost::new(members)?.eval(omega))
}

/// Sign hypothesis for straight walks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedTrajectory {
    pub ap_id: u32,
    pub variant: TrajectoryVariant,
    pub global: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSolution {
    /// Heading in `[0, 2pi)`.
    pub omega: f64,
    pub e3: f64,
    pub reference: Option<u32>,
    pub hypothesis: Option<Hypothesis>,
    /// Best alignment error of the rejected sign hypothesis (straight walks).
    pub rejected_e3: Option<f64>,
    pub collinear_warning: bool,
    pub members: Vec<AlignedTrajectory>,
}

fn find_ap<'a>(aps: &'a [ApDescriptor], id: u32) -> Result<&'a ApDescriptor> {
    aps.iter()
        .find(|a| a.id == id)
        .ok_or_else(|| Error::Config(format!("no AP with id {id}")))
}

fn search_omega(cost: &AlignmentCost, cfg: &OmegaSearchConfig) -> Result<(f64, f64)> {
    let best = periodic_minimize(
        |w| cost.eval(w),
        TAU,
        cfg.grid,
        cfg.refine_cells,
        cfg.refine_tol,
    )
    .ok_or(Error::Infeasible(
        "alignment error is not finite for any heading",
    ))?;
    Ok((best.argmin, best.value))
}

fn globalize(ap: &ApDescriptor, traj: &RelativeTrajectory, omega: f64) -> AlignedTrajectory {
    AlignedTrajectory {
        ap_id: traj.ap_id,
        variant: traj.variant,
        global: traj
            .points
            .iter()
            .map(|z| local_to_global(*z, ap, omega))
            .collect(),
    }
}

pub fn align_arbitrary(
    aps: &[ApDescriptor],
    trajectories: &[RelativeTrajectory],
    cfg: &OmegaSearchConfig,
) -> Result<AlignmentSolution> {
    let min = MobilityClass::Arbitrary.min_aps();
    if trajectories.len() < min {
        return Err(Error::TooFewAps {
            mobility: MobilityClass::Arbitrary,
            required: min,
            got: trajectories.len(),
        });
    }
    let descs = trajectories
        .iter()
        .map(|t| find_ap(aps, t.ap_id))
        .collect::<Result<Vec<_>>>()?;
    let members: Vec<(&ApDescriptor, &[Point])> = descs
        .iter()
        .zip(trajectories)
        .map(|(a, t)| (*a, t.points.as_slice()))
        .collect();
    let cost = AlignmentCost::new(&members)?;
    let (omega, value) = search_omega(&cost, cfg)?;
    Ok(AlignmentSolution {
        omega,
        e3: value,
        reference: None,
        hypothesis: None,
        rejected_e3: None,
        collinear_warning: false,
        members: descs
            .iter()
            .zip(trajectories)
            .map(|(a, t)| globalize(a, t, omega))
            .collect(),
    })
}

/// One AP's mirror pair for straight-walk alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct MirrorPair {
    pub ap: ApDescriptor,
    pub plus: RelativeTrajectory,
    pub minus: RelativeTrajectory,
}

/// Summed deviation between the inter-AP distance and the distance between
/// two relative trajectories, which agree exactly for correctly signed pairs.
pub fn distance_mismatch(p_r: Point, z_r: &[Point], p_m: Point, z_m: &[Point]) -> f64 {
    let gap = (p_r - p_m).norm();
    z_r.iter()
        .zip(z_m)
        .map(|(a, b)| (gap - (a - b).norm()).abs())
        .sum()
}

/// Variant choices for every AP under the two hypotheses anchored at the
/// reference AP (index into `pairs`). The second sequence mirrors the first.
pub fn resolve_linear_signs(
    pairs: &[MirrorPair],
    reference: usize,
) -> Result<(Vec<Hypothesis>, Vec<Hypothesis>)> {
    let r = pairs
        .get(reference)
        .ok_or_else(|| Error::Config(format!("reference index {reference} out of range")))?;
    let mut plus = Vec::with_capacity(pairs.len());
    for (m, p) in pairs.iter().enumerate() {
        if m == reference {
            plus.push(Hypothesis::Plus);
            continue;
        }
        let psi1 = distance_mismatch(r.ap.position, &r.plus.points, p.ap.position, &p.plus.points);
        let psi2 = distance_mismatch(
            r.ap.position,
            &r.plus.points,
            p.ap.position,
            &p.minus.points,
        );
        plus.push(if psi1 <= psi2 {
            Hypothesis::Plus
        } else {
            Hypothesis::Minus
        });
    }
    let minus = plus
        .iter()
        .map(|h| match h {
            Hypothesis::Plus => Hypothesis::Minus,
            Hypothesis::Minus => Hypothesis::Plus,
        })
        .collect();
    Ok((plus, minus))
}

fn pick(pair: &MirrorPair, h: Hypothesis) -> &RelativeTrajectory {
    match h {
        Hypothesis::Plus => &pair.plus,
        Hypothesis::Minus => &pair.minus,
    }
}

/// Searches over reference AP, sign hypothesis and heading; ties go to the
/// smallest reference id, then to the plus hypothesis.
pub fn align_linear(pairs: &[MirrorPair], cfg: &OmegaSearchConfig) -> Result<AlignmentSolution> {
    let min = MobilityClass::Linear.min_aps();
    if pairs.len() < min {
        return Err(Error::TooFewAps {
            mobility: MobilityClass::Linear,
            required: min,
            got: pairs.len(),
        });
    }
    let descs: Vec<&ApDescriptor> = pairs.iter().map(|p| &p.ap).collect();
    let warning = collinear(&descs);

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by_key(|&i| pairs[i].ap.id);

    struct Best {
        value: f64,
        omega: f64,
        reference: usize,
        hypothesis: Hypothesis,
        choices: Vec<Hypothesis>,
        rejected: f64,
    }
    let mut best: Option<Best> = None;
    for &r in &order {
        let (yp, ym) = resolve_linear_signs(pairs, r)?;
        let mut found = Vec::with_capacity(2);
        for (hyp, choices) in [(Hypothesis::Plus, yp), (Hypothesis::Minus, ym)] {
            let members: Vec<(&ApDescriptor, &[Point])> = pairs
                .iter()
                .zip(&choices)
                .map(|(p, &h)| (&p.ap, pick(p, h).points.as_slice()))
                .collect();
            let cost = AlignmentCost::new(&members)?;
            let (omega, value) = search_omega(&cost, cfg)?;
            found.push((hyp, choices, omega, value));
        }
        let values = [found[0].3, found[1].3];
        for (i, (hyp, choices, omega, value)) in found.into_iter().enumerate() {
            if best.as_ref().map_or(true, |b| value < b.value) {
                best = Some(Best {
                    value,
                    omega,
                    reference: r,
                    hypothesis: hyp,
                    choices,
                    rejected: values[1 - i],
                });
            }
        }
    }
    let best = best.expect("at least three APs were searched");
    Ok(AlignmentSolution {
        omega: best.omega,
        e3: best.value,
        reference: Some(pairs[best.reference].ap.id),
        hypothesis: Some(best.hypothesis),
        rejected_e3: Some(best.rejected),
        collinear_warning: warning,
        members: pairs
            .iter()
            .zip(&best.choices)
            .map(|(p, &h)| globalize(&p.ap, pick(p, h), best.omega))
            .collect(),
    })
}

/// Step-wise mean of the aligned global trajectories.
pub fn average_fix(solution: &AlignmentSolution) -> Result<TrajectoryEstimate> {
    let first = solution
        .members
        .first()
        .ok_or(Error::Empty("aligned trajectories"))?;
    let len = first.global.len();
    let mut sum = vec![Point::zeros(); len];
    for m in &solution.members {
        if m.global.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                got: m.global.len(),
            });
        }
        for (s, p) in sum.iter_mut().zip(&m.global) {
            *s += p;
        }
    }
    let k = solution.members.len() as f64;
    Ok(TrajectoryEstimate {
        positions: sum.into_iter().map(|s| s / k).collect(),
        heading: solution.omega,
        contributing_aps: solution.members.iter().map(|m| m.ap_id).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// Ground-truth walk in the global frame plus each AP's exact local view.
    struct Oracle {
        aps: Vec<ApDescriptor>,
        global: Vec<Point>,
        acc: DirectionAccumulators,
        d: f64,
        omega: f64,
    }

    impl Oracle {
        fn new(aps: Vec<ApDescriptor>, start: Point, d: f64, omega: f64, thetas: &[f64]) -> Self {
            let mut global = vec![start];
            for t in &thetas[..thetas.len() - 1] {
                let last = *global.last().unwrap();
                global.push(last + d * Point::new((omega + t).cos(), (omega + t).sin()));
            }
            Self {
                aps,
                global,
                acc: DirectionAccumulators::from_headings(thetas),
                d,
                omega,
            }
        }

        /// Local initial position for AP `i`: `R(-omega)(p_1 - p_AP)`.
        fn z1(&self, i: usize) -> Point {
            rotate(self.global[0] - self.aps[i].position, -self.omega)
        }

        fn estimate(&self, i: usize) -> RangingEstimate {
            RangingEstimate {
                ap_id: self.aps[i].id,
                step_length: self.d,
                bias: 0.0,
                z1: self.z1(i),
                linear_sign_ambiguous: false,
                feasible: true,
            }
        }

        fn unique(&self) -> Vec<RelativeTrajectory> {
            (0..self.aps.len())
                .map(|i| {
                    match derive_relative_trajectory(
                        &self.estimate(i),
                        &self.acc,
                        MobilityClass::Arbitrary,
                    )
                    .unwrap()
                    {
                        RelativeCandidates::Unique(t) => t,
                        _ => unreachable!(),
                    }
                })
                .collect()
        }

        /// Mirror pairs with the magnitude of u1 only, as a linear estimator
        /// would report.
        fn mirrors(&self) -> Vec<MirrorPair> {
            (0..self.aps.len())
                .map(|i| {
                    let mut e = self.estimate(i);
                    e.z1.y = e.z1.y.abs();
                    match derive_relative_trajectory(&e, &self.acc, MobilityClass::Linear).unwrap()
                    {
                        RelativeCandidates::Mirror { plus, minus } => MirrorPair {
                            ap: self.aps[i],
                            plus,
                            minus,
                        },
                        _ => unreachable!(),
                    }
                })
                .collect()
        }
    }

    fn l_turns(n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| if k < n / 2 { 0.0 } else { FRAC_PI_2 })
            .collect()
    }

    fn aps3() -> Vec<ApDescriptor> {
        vec![
            ApDescriptor::new(1, 0.0, 0.0),
            ApDescriptor::new(2, 15.0, 2.0),
            ApDescriptor::new(3, 4.0, 12.0),
        ]
    }

    #[test]
    fn relative_trajectory_examples() {
        let acc = DirectionAccumulators::from_headings(&[0.0, FRAC_PI_2, FRAC_PI_2, FRAC_PI_2]);
        let est = RangingEstimate {
            ap_id: 1,
            step_length: 1.0,
            bias: 0.0,
            z1: Point::new(1.0, 0.0),
            linear_sign_ambiguous: false,
            feasible: true,
        };
        let RelativeCandidates::Unique(t) =
            derive_relative_trajectory(&est, &acc, MobilityClass::Arbitrary).unwrap()
        else {
            panic!()
        };
        let expect = [
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(2.0, 2.0),
        ];
        for (a, b) in t.points.iter().zip(expect) {
            assert!((a - b).norm() < 1e-14);
        }

        let acc = DirectionAccumulators::from_headings(&[0.0; 5]);
        let est = RangingEstimate {
            z1: Point::new(-2.0, 4.0),
            ..est
        };
        let RelativeCandidates::Mirror { plus, minus } =
            derive_relative_trajectory(&est, &acc, MobilityClass::Linear).unwrap()
        else {
            panic!()
        };
        assert!(plus.points.iter().all(|p| p.y == 4.0));
        assert!(minus.points.iter().all(|p| p.y == -4.0));
        for (a, b) in plus.points.iter().zip(&minus.points) {
            assert_eq!(a.norm(), b.norm());
        }

        let bad = RangingEstimate {
            feasible: false,
            ..est
        };
        assert!(derive_relative_trajectory(&bad, &acc, MobilityClass::Linear).is_err());
    }

    #[test]
    fn feasibility_filter() {
        let ok = RangingEstimate {
            ap_id: 1,
            step_length: 0.7,
            bias: 2.0,
            z1: Point::new(1.0, 2.0),
            linear_sign_ambiguous: false,
            feasible: true,
        };
        let neg = RangingEstimate {
            ap_id: 2,
            step_length: -0.1,
            ..ok
        };
        let big_bias = RangingEstimate {
            ap_id: 3,
            bias: 5.0,
            ..ok
        };
        let unreal = RangingEstimate {
            ap_id: 4,
            z1: Point::new(f64::NAN, 0.0),
            ..ok
        };
        let f = filter_feasible(&[ok, neg, big_bias, unreal], &[4.0, 4.0, 5.0, 4.0]).unwrap();
        assert_eq!(f, vec![1]);
        assert!(filter_feasible(&[ok], &[]).is_err());
    }

    #[test]
    fn e3_vanishes_at_truth() {
        let o = Oracle::new(aps3(), Point::new(3.0, 4.0), 0.7, 0.8, &l_turns(12));
        let trajs = o.unique();
        let members: Vec<(&ApDescriptor, &[Point])> = o
            .aps
            .iter()
            .zip(&trajs)
            .map(|(a, t)| (a, t.points.as_slice()))
            .collect();
        assert!(e3(&members, 0.8).unwrap() < 1e-9);
        assert!(e3(&members, 0.8 + PI).unwrap() > 1.0);
        let dup = [members[0], (members[0].0, members[0].1)];
        assert_eq!(e3(&dup, 1.3).unwrap(), 0.0);
        assert!(e3(&members[..1], 0.0).is_err());
    }

    #[test]
    fn arbitrary_alignment_recovers_truth() {
        for m in [2usize, 3] {
            let aps: Vec<ApDescriptor> = aps3().into_iter().take(m).collect();
            let o = Oracle::new(aps, Point::new(3.0, 4.0), 0.7, 5.5, &l_turns(12));
            let sol = align_arbitrary(&o.aps, &o.unique(), &OmegaSearchConfig::default()).unwrap();
            assert!((sol.omega - 5.5).abs() < 1e-6, "{}", sol.omega);
            let fix = average_fix(&sol).unwrap();
            for (p, t) in fix.positions.iter().zip(&o.global) {
                assert!((p - t).norm() < 1e-6);
            }
            // all per-AP global trajectories coincide
            for a in &sol.members {
                for b in &sol.members {
                    for (p, q) in a.global.iter().zip(&b.global) {
                        assert!((p - q).norm() < 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn arbitrary_alignment_needs_two_aps() {
        let o = Oracle::new(aps3(), Point::new(3.0, 4.0), 0.7, 1.0, &l_turns(8));
        let err =
            align_arbitrary(&o.aps, &o.unique()[..1], &OmegaSearchConfig::default()).unwrap_err();
        assert_eq!(err.code(), "min-aps-arbitrary");
    }

    #[test]
    fn linear_alignment_recovers_truth_and_signs() {
        let o = Oracle::new(aps3(), Point::new(3.0, 5.0), 0.7, 2.2, &[0.0; 10]);
        let pairs = o.mirrors();
        let sol = align_linear(&pairs, &OmegaSearchConfig::default()).unwrap();
        assert!(!sol.collinear_warning);
        assert!((sol.omega - 2.2).abs() < 1e-6);
        assert!(sol.rejected_e3.unwrap() > sol.e3 + 1e-3);
        let fix = average_fix(&sol).unwrap();
        for (p, t) in fix.positions.iter().zip(&o.global) {
            assert!((p - t).norm() < 1e-6);
        }
        // chosen variants match the true sign of each local cross-track offset
        for (i, m) in sol.members.iter().enumerate() {
            let truth = if o.z1(i).y >= 0.0 {
                TrajectoryVariant::Plus
            } else {
                TrajectoryVariant::Minus
            };
            assert_eq!(m.variant, truth);
        }
    }

    #[test]
    fn sign_resolution_exact_for_one_hypothesis() {
        let o = Oracle::new(aps3(), Point::new(3.0, 5.0), 0.7, 2.2, &[0.0; 10]);
        let pairs = o.mirrors();
        let r = &pairs[0];
        for p in &pairs[1..] {
            let psi1 =
                distance_mismatch(r.ap.position, &r.plus.points, p.ap.position, &p.plus.points);
            let psi2 = distance_mismatch(
                r.ap.position,
                &r.plus.points,
                p.ap.position,
                &p.minus.points,
            );
            assert!(psi1.min(psi2) < 1e-9);
            assert!(psi1.max(psi2) > 1e-3);
        }
        let (yp, ym) = resolve_linear_signs(&pairs, 0).unwrap();
        assert_eq!(yp[0], Hypothesis::Plus);
        assert_eq!(ym[0], Hypothesis::Minus);
        assert!(yp.iter().zip(&ym).all(|(a, b)| a != b));
    }

    #[test]
    fn linear_alignment_needs_three_aps() {
        let o = Oracle::new(aps3(), Point::new(3.0, 5.0), 0.7, 2.2, &[0.0; 10]);
        let err = align_linear(&o.mirrors()[..2], &OmegaSearchConfig::default()).unwrap_err();
        assert_eq!(err.code(), "min-aps-linear");
    }

    #[test]
    fn collinear_aps_flagged_with_equal_hypotheses() {
        let aps = vec![
            ApDescriptor::new(1, 0.0, 0.0),
            ApDescriptor::new(2, 5.0, 5.0),
            ApDescriptor::new(3, 10.0, 10.0),
        ];
        let o = Oracle::new(aps, Point::new(3.0, -2.0), 0.7, 0.4, &[0.0; 10]);
        let sol = align_linear(&o.mirrors(), &OmegaSearchConfig::default()).unwrap();
        assert!(sol.collinear_warning);
        assert!((sol.rejected_e3.unwrap() - sol.e3).abs() < 1e-6);
    }

    #[test]
    fn linear_mirror_headings() {
        // two APs: both sign hypotheses align exactly, at headings mirrored
        // about the inter-AP direction
        let aps = vec![
            ApDescriptor::new(1, 0.0, 0.0),
            ApDescriptor::new(2, 9.0, 4.0),
        ];
        let o = Oracle::new(aps.clone(), Point::new(2.0, 6.0), 0.7, 1.1, &[0.0; 10]);
        let pairs = o.mirrors();
        let cfg = OmegaSearchConfig::default();
        let mut omegas = Vec::new();
        for (h1, h2) in [
            (Hypothesis::Plus, Hypothesis::Plus),
            (Hypothesis::Plus, Hypothesis::Minus),
        ] {
            let members = [
                (&aps[0], pick(&pairs[0], h1).points.as_slice()),
                (&aps[1], pick(&pairs[1], h2).points.as_slice()),
            ];
            let (w, v) = search_omega(&AlignmentCost::new(&members).unwrap(), &cfg).unwrap();
            if v < 1e-7 {
                omegas.push(w);
            }
            let members = [
                (&aps[0], pick(&pairs[0], flip(h1)).points.as_slice()),
                (&aps[1], pick(&pairs[1], flip(h2)).points.as_slice()),
            ];
            let (w, v) = search_omega(&AlignmentCost::new(&members).unwrap(), &cfg).unwrap();
            if v < 1e-7 {
                omegas.push(w);
            }
        }
        assert_eq!(omegas.len(), 2);
        let axis = 2.0
            * (aps[0].position - aps[1].position)
                .y
                .atan2((aps[0].position - aps[1].position).x);
        let diff = (omegas[0] + omegas[1] - axis).rem_euclid(TAU);
        assert!(diff.min(TAU - diff) < 1e-6, "{omegas:?}");
    }

    fn flip(h: Hypothesis) -> Hypothesis {
        match h {
            Hypothesis::Plus => Hypothesis::Minus,
            Hypothesis::Minus => Hypothesis::Plus,
        }
    }

    #[test]
    fn averaging() {
        let sol = AlignmentSolution {
            omega: 0.0,
            e3: 0.0,
            reference: None,
            hypothesis: None,
            rejected_e3: None,
            collinear_warning: false,
            members: vec![
                AlignedTrajectory {
                    ap_id: 1,
                    variant: TrajectoryVariant::Unique,
                    global: vec![Point::new(1.0, 1.0), Point::new(2.0, 0.0)],
                },
                AlignedTrajectory {
                    ap_id: 2,
                    variant: TrajectoryVariant::Unique,
                    global: vec![Point::new(1.0, 3.0), Point::new(2.0, 0.0)],
                },
            ],
        };
        let fix = average_fix(&sol).unwrap();
        assert_eq!(
            fix.positions,
            vec![Point::new(1.0, 2.0), Point::new(2.0, 0.0)]
        );
        assert_eq!(fix.contributing_aps, vec![1, 2]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn distance_preserved_for_correct_signs(
                sx in -20.0f64..20.0, sy in -20.0f64..20.0,
                ax in -20.0f64..20.0, ay in -20.0f64..20.0,
                omega in 0.0f64..TAU, d in 0.3f64..1.2,
            ) {
                let aps = vec![ApDescriptor::new(1, 0.0, 0.0), ApDescriptor::new(2, ax, ay)];
                let o = Oracle::new(aps, Point::new(sx, sy), d, omega, &[0.0, 0.0, FRAC_PI_2, 1.0, 1.0, -0.5]);
                let t = o.unique();
                let gap = ax.hypot(ay);
                for n in 0..t[0].points.len() {
                    let dz = t[0].points[n] - t[1].points[n];
                    prop_assert!((dz.norm() - gap).abs() <= 1e-9 * (1.0 + gap));
                    // step-shift invariance of the difference
                    if n > 0 {
                        let prev = t[0].points[n - 1] - t[1].points[n - 1];
                        prop_assert!((dz - prev).norm() <= 1e-12 * (1.0 + gap));
                    }
                }
            }

            #[test]
            fn two_ap_alignment_has_unique_zero(
                sx in -10.0f64..10.0, sy in -10.0f64..10.0,
                ax in 3.0f64..20.0, ay in -20.0f64..20.0,
                omega in 0.0f64..TAU,
            ) {
                let aps = vec![ApDescriptor::new(1, 0.0, 0.0), ApDescriptor::new(2, ax, ay)];
                let o = Oracle::new(aps, Point::new(sx, sy), 0.7, omega, &l_turns(10));
                let t = o.unique();
                let cost = AlignmentCost::new(&[(&o.aps[0], t[0].points.as_slice()), (&o.aps[1], t[1].points.as_slice())]).unwrap();
                let zeros = (0..720).filter(|k| cost.eval(*k as f64 * TAU / 720.0) < 1e-3).count();
                prop_assert!(zeros <= 1);
                let off = (omega + PI).rem_euclid(TAU);
                prop_assert!(cost.eval(off) > 0.0);
            }
        }
    }
}
