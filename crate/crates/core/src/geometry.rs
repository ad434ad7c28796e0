//! Frame transforms and the heading accumulators shared by both ranging
//! solvers.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::types::{ApDescriptor, Point, StepEvent};

/// Wraps an angle into `[0, 2pi)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Heading angle kept in `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct RotationAngle(f64);

impl RotationAngle {
    pub fn new(radians: f64) -> Self {
        Self(normalize_angle(radians))
    }

    pub fn radians(self) -> f64 {
        self.0
    }
}

/// Prefix sums of the heading directions: `c[n] = sum_{j<n} cos(theta_j)`
/// and likewise `s[n]` with sines (0-based, so `c[0] = s[0] = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionAccumulators {
    pub c: Vec<f64>,
    pub s: Vec<f64>,
}

impl DirectionAccumulators {
    pub fn from_headings(headings: &[f64]) -> Self {
        let n = headings.len();
        let mut c = Vec::with_capacity(n);
        let mut s = Vec::with_capacity(n);
        let (mut cc, mut ss) = (0.0, 0.0);
        for (i, &theta) in headings.iter().enumerate() {
            c.push(cc);
            s.push(ss);
            if i + 1 < n {
                let (sin, cos) = theta.sin_cos();
                cc += cos;
                ss += sin;
            }
        }
        Self { c, s }
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Offset of step `n` from step 1 in units of step length.
    pub fn offset(&self, n: usize) -> Point {
        Point::new(self.c[n], self.s[n])
    }
}

pub fn accumulate_directions(steps: &[StepEvent]) -> DirectionAccumulators {
    let headings: Vec<f64> = steps.iter().map(|s| s.cumulative_heading).collect();
    DirectionAccumulators::from_headings(&headings)
}

/// Rotation by `angle` (counter-clockwise).
pub fn rotate(v: Point, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    Point::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

pub fn local_to_global(z: Point, ap: &ApDescriptor, heading: f64) -> Point {
    ap.position + rotate(z, heading)
}

/// `z_n = z_1 + d * [c_n, s_n]` for every step.
pub fn propagate_trajectory(
    z1: Point,
    step_length: f64,
    acc: &DirectionAccumulators,
) -> Vec<Point> {
    (0..acc.len())
        .map(|n| z1 + step_length * acc.offset(n))
        .collect()
}

/// One usable step for one AP: its heading offsets and measured range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepObservation {
    /// 0-based step index into the full step sequence.
    pub step: usize,
    pub c: f64,
    pub s: f64,
    pub range: f64,
}

impl StepObservation {
    /// `c^2 + s^2`, the squared offset from step 1 in step-length units.
    pub fn offset_sq(&self) -> f64 {
        self.c * self.c + self.s * self.s
    }
}

/// Pairs each present range with its step's accumulators.
pub fn observations(acc: &DirectionAccumulators, ranges: &[Option<f64>]) -> Vec<StepObservation> {
    ranges
        .iter()
        .enumerate()
        .take(acc.len())
        .filter_map(|(n, r)| {
            r.map(|range| StepObservation {
                step: n,
                c: acc.c[n],
                s: acc.s[n],
                range,
            })
        })
        .collect()
}

/// Two distinct reference steps, given as positions into an AP's
/// observation list (not raw step numbers, since steps may be missing).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReferenceStepPair {
    pub first: usize,
    pub second: usize,
}

impl ReferenceStepPair {
    pub fn new(first: usize, second: usize, len: usize) -> crate::error::Result<Self> {
        if first == second || first >= len || second >= len {
            return Err(crate::error::Error::InvalidPair { first, second, len });
        }
        Ok(Self { first, second })
    }

    pub fn contains(&self, i: usize) -> bool {
        i == self.first || i == self.second
    }

    pub fn members(&self) -> [usize; 2] {
        [self.first, self.second]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: Point, b: Point, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn accumulators() {
        let acc = DirectionAccumulators::from_headings(&[0.0, 0.0, 0.0]);
        assert_eq!(acc.c, vec![0.0, 1.0, 2.0]);
        assert_eq!(acc.s, vec![0.0, 0.0, 0.0]);

        let acc = DirectionAccumulators::from_headings(&[0.0, FRAC_PI_2, FRAC_PI_2]);
        let expect_c = [0.0, 1.0, 1.0];
        let expect_s = [0.0, 0.0, 1.0];
        for n in 0..3 {
            assert!((acc.c[n] - expect_c[n]).abs() < 1e-15);
            assert!((acc.s[n] - expect_s[n]).abs() < 1e-15);
        }

        let acc = DirectionAccumulators::from_headings(&[0.0, PI]);
        assert_eq!(acc.c, vec![0.0, 1.0]);
        assert_eq!(acc.s, vec![0.0, 0.0]);
    }

    #[test]
    fn linear_accumulators_count_steps() {
        let acc = DirectionAccumulators::from_headings(&[0.0; 50]);
        for n in 0..50 {
            assert_eq!(acc.c[n], n as f64);
            assert_eq!(acc.s[n], 0.0);
        }
    }

    #[test]
    fn rotation_examples() {
        assert!(close(
            rotate(Point::new(1.0, 0.0), FRAC_PI_2),
            Point::new(0.0, 1.0),
            1e-15
        ));
        assert_eq!(rotate(Point::new(3.0, 4.0), 0.0), Point::new(3.0, 4.0));
        assert!(close(
            rotate(Point::new(1.0, 1.0), PI),
            Point::new(-1.0, -1.0),
            1e-15
        ));
    }

    #[test]
    fn local_to_global_examples() {
        let ap = ApDescriptor::new(1, 5.0, 5.0);
        assert_eq!(
            local_to_global(Point::zeros(), &ap, 1.234),
            Point::new(5.0, 5.0)
        );
        let origin = ApDescriptor::new(1, 0.0, 0.0);
        assert_eq!(
            local_to_global(Point::new(1.0, 0.0), &origin, 0.0),
            Point::new(1.0, 0.0)
        );
        let ap = ApDescriptor::new(1, 1.0, 1.0);
        assert!(close(
            local_to_global(Point::new(2.0, 0.0), &ap, FRAC_PI_2),
            Point::new(1.0, 3.0),
            1e-15
        ));
    }

    #[test]
    fn propagation_examples() {
        let acc = DirectionAccumulators::from_headings(&[0.0, 0.0, 0.0]);
        let pts = propagate_trajectory(Point::zeros(), 1.0, &acc);
        assert_eq!(
            pts,
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(2.0, 0.0)
            ]
        );

        let acc = DirectionAccumulators::from_headings(&[0.0, FRAC_PI_2, 0.0]);
        let pts = propagate_trajectory(Point::new(1.0, 1.0), 2.0, &acc);
        assert_eq!(pts[0], Point::new(1.0, 1.0));
        assert_eq!(pts[1], Point::new(3.0, 1.0));
        assert!(close(pts[2], Point::new(3.0, 3.0), 1e-15));
    }

    #[test]
    fn observations_skip_missing() {
        let acc = DirectionAccumulators::from_headings(&[0.0; 4]);
        let obs = observations(&acc, &[Some(3.0), None, Some(5.0), Some(6.0)]);
        assert_eq!(obs.len(), 3);
        assert_eq!(obs[1].step, 2);
        assert_eq!(obs[1].c, 2.0);
    }

    #[test]
    fn normalize_wraps() {
        assert_eq!(normalize_angle(-1e-300), 0.0);
        assert!((normalize_angle(-FRAC_PI_2) - 1.5 * PI).abs() < 1e-15);
        assert_eq!(normalize_angle(TAU), 0.0);
        assert_eq!(RotationAngle::new(3.0 * PI).radians(), normalize_angle(PI));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rotation_preserves_norm(x in -1e3f64..1e3, y in -1e3f64..1e3, w in -10.0f64..10.0) {
                let v = Point::new(x, y);
                let r = rotate(v, w);
                let tol = 4.0 * f64::EPSILON * v.norm().max(f64::MIN_POSITIVE);
                prop_assert!((r.norm() - v.norm()).abs() <= tol.max(4.0 * f64::EPSILON));
            }

            #[test]
            fn rotation_round_trip(x in -1e3f64..1e3, y in -1e3f64..1e3, w in -10.0f64..10.0) {
                let v = Point::new(x, y);
                let back = rotate(rotate(v, w), -w);
                prop_assert!((back - v).norm() <= 1e-12);
            }

            #[test]
            fn distinct_angles_give_distinct_rotations(
                x in -10.0f64..10.0, y in -10.0f64..10.0,
                w1 in 0.0f64..TAU, w2 in 0.0f64..TAU,
            ) {
                let v = Point::new(x, y);
                prop_assume!(v.norm() > 1e-3);
                let diff = (w1 - w2).rem_euclid(TAU);
                prop_assume!(diff > 1e-9 && diff < TAU - 1e-9);
                prop_assert!(rotate(v, w1) != rotate(v, w2));
            }

            #[test]
            fn propagation_telescopes(
                thetas in proptest::collection::vec(-3.2f64..3.2, 2..30),
                d in 0.1f64..2.0,
                qx in -20.0f64..20.0, qy in -20.0f64..20.0,
            ) {
                let acc = DirectionAccumulators::from_headings(&thetas);
                let pts = propagate_trajectory(Point::new(qx, qy), d, &acc);
                for n in 0..pts.len() - 1 {
                    let step = pts[n + 1] - pts[n];
                    let expect = d * Point::new(thetas[n].cos(), thetas[n].sin());
                    prop_assert!((step - expect).norm() <= 1e-12 * (1.0 + pts[n].norm()));
                }
            }
        }
    }
}
