//! Candidate reference-step selection and median aggregation over all
//! candidate pairs, producing one [`RangingEstimate`] per AP.

use serde::{Deserialize, Serialize};

use crate::arbitrary::{build_and_solve_e3, search_gamma, GammaSearchConfig};
use crate::error::{Error, Result};
use crate::geometry::{ReferenceStepPair, StepObservation};
use crate::linear::{build_e1, recover_q1_linear, recover_u1_linear, solve_e1};
use crate::types::{MobilityClass, Point, RangingEstimate};

/// Positions of the `count` smallest ranges, ordered by range with ties
/// going to the smaller position.
pub fn select_candidates(ranges: &[f64], count: usize) -> Result<Vec<usize>> {
    if count < 2 || count > ranges.len() {
        return Err(Error::Config(format!(
            "candidate count must lie in [2, {}], got {count}",
            ranges.len()
        )));
    }
    let mut order: Vec<usize> = (0..ranges.len()).collect();
    order.sort_by(|&a, &b| ranges[a].total_cmp(&ranges[b]).then(a.cmp(&b)));
    order.truncate(count);
    Ok(order)
}

/// `max(2, round(N / 4))`.
pub fn default_candidate_count(steps: usize) -> usize {
    ((steps as f64 * 0.25).round() as usize).max(2)
}

/// Order-statistic median; even counts average the two central values.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("median input"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

/// How many candidate reference steps to use for an AP.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateCount {
    /// [`default_candidate_count`] of the AP's observation count.
    #[default]
    Auto,
    Fixed(usize),
    /// `max(2, round(f * N))` for the AP's observation count `N`.
    Fraction(f64),
}

impl CandidateCount {
    /// Concrete count for an AP with `observed` ranges, clamped to `[2, N]`.
    pub fn resolve(self, observed: usize) -> usize {
        let c = match self {
            CandidateCount::Auto => default_candidate_count(observed),
            CandidateCount::Fixed(c) => c,
            CandidateCount::Fraction(f) => ((f * observed as f64).round() as usize).max(2),
        };
        c.clamp(2, observed.max(2))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub candidates: CandidateCount,
    pub gamma: GammaSearchConfig,
}

/// Estimate from one reference step pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEstimate {
    pub pair: ReferenceStepPair,
    /// Candidate ranks (0 = smallest range) of the two reference steps.
    pub ranks: [usize; 2],
    pub step_length: f64,
    pub bias: f64,
    pub feasible: bool,
}

impl PairEstimate {
    fn infeasible(pair: ReferenceStepPair, ranks: [usize; 2]) -> Self {
        Self {
            pair,
            ranks,
            step_length: f64::NAN,
            bias: f64::NAN,
            feasible: false,
        }
    }
}

fn min_range(obs: &[StepObservation]) -> f64 {
    obs.iter().map(|o| o.range).fold(f64::INFINITY, f64::min)
}

fn check_steps(obs: &[StepObservation], mobility: MobilityClass) -> Result<()> {
    if obs.len() < mobility.min_steps() {
        return Err(Error::TooFewSteps {
            mobility,
            required: mobility.min_steps(),
            got: obs.len(),
        });
    }
    Ok(())
}

/// Step length and bias from one pair; infeasible results are kept with
/// `feasible = false`.
pub fn estimate_pair(
    obs: &[StepObservation],
    mobility: MobilityClass,
    pair: ReferenceStepPair,
    ranks: [usize; 2],
    gamma: &GammaSearchConfig,
) -> Result<PairEstimate> {
    check_steps(obs, mobility)?;
    let solved = match mobility {
        MobilityClass::Linear => build_e1(obs, pair)
            .and_then(|sys| solve_e1(&sys))
            .map(|s| (s.step_length(), s.bias)),
        MobilityClass::Arbitrary => {
            search_gamma(obs, pair, gamma).map(|g| (Some(g.step_length), g.bias))
        }
    };
    let (d, b) = match solved {
        Ok((Some(d), b)) => (d, b),
        Ok((None, _)) => return Ok(PairEstimate::infeasible(pair, ranks)),
        Err(e @ Error::InvalidPair { .. }) => return Err(e),
        Err(_) => return Ok(PairEstimate::infeasible(pair, ranks)),
    };
    let feasible = d > 0.0 && d.is_finite() && b.is_finite() && min_range(obs) - b > 0.0;
    Ok(PairEstimate {
        pair,
        ranks,
        step_length: d,
        bias: b,
        feasible,
    })
}

/// Aggregated estimate together with the pairs it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub estimate: RangingEstimate,
    pub pairs: Vec<PairEstimate>,
    /// Pairs that yielded an initial-position sample at the aggregate.
    pub z1_samples: usize,
}

/// Medians of step length and bias over the feasible pairs.
pub fn aggregate_step_and_bias(pairs: &[PairEstimate]) -> Option<(f64, f64)> {
    let (d, b): (Vec<f64>, Vec<f64>) = pairs
        .iter()
        .filter(|p| p.feasible)
        .map(|p| (p.step_length, p.bias))
        .unzip();
    Some((median(&d).ok()?, median(&b).ok()?))
}

/// Medians over feasible pairs, then per-pair initial-position recovery at
/// the shared `(d*, b*)` and a component-wise median.
pub fn aggregate_pairs(
    ap_id: u32,
    obs: &[StepObservation],
    mobility: MobilityClass,
    pairs: Vec<PairEstimate>,
) -> Result<EnsembleResult> {
    let (d, b) = aggregate_step_and_bias(&pairs).ok_or(Error::NoFeasiblePairs { ap: ap_id })?;
    let feasible_pairs = pairs.iter().filter(|p| p.feasible);
    let (z1, samples) = match mobility {
        MobilityClass::Linear => {
            let mut qs = Vec::new();
            let mut us = Vec::new();
            for p in feasible_pairs {
                let Ok(q1) = recover_q1_linear(obs, d, b, p.pair) else {
                    continue;
                };
                match recover_u1_linear(obs, d, b, q1) {
                    Ok(u) if u.feasible() => {
                        qs.push(q1);
                        us.push(u.magnitude.abs());
                    }
                    _ => {}
                }
            }
            let n = qs.len();
            match (median(&qs), median(&us)) {
                (Ok(q), Ok(u)) => (Some(Point::new(q, u)), n),
                _ => (None, 0),
            }
        }
        MobilityClass::Arbitrary => {
            let mut qs = Vec::new();
            let mut us = Vec::new();
            for p in feasible_pairs {
                if let Ok(z) = build_and_solve_e3(obs, p.pair, d, b) {
                    qs.push(z.x);
                    us.push(z.y);
                }
            }
            let n = qs.len();
            match (median(&qs), median(&us)) {
                (Ok(q), Ok(u)) => (Some(Point::new(q, u)), n),
                _ => (None, 0),
            }
        }
    };
    let feasible = z1.is_some() && d > 0.0 && min_range(obs) - b > 0.0;
    Ok(EnsembleResult {
        estimate: RangingEstimate {
            ap_id,
            step_length: d,
            bias: b,
            z1: z1.unwrap_or_else(|| Point::new(f64::NAN, f64::NAN)),
            linear_sign_ambiguous: mobility == MobilityClass::Linear,
            feasible,
        },
        pairs,
        z1_samples: samples,
    })
}

/// Every pair among the `max_candidates` smallest ranges, evaluated once so
/// that any smaller candidate count can be aggregated from the same table.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable {
    pub ap_id: u32,
    pub mobility: MobilityClass,
    pub obs: Vec<StepObservation>,
    /// Observation positions ordered by candidate rank.
    pub ranked: Vec<usize>,
    pub pairs: Vec<PairEstimate>,
}

impl PairTable {
    pub fn build(
        ap_id: u32,
        obs: Vec<StepObservation>,
        mobility: MobilityClass,
        max_candidates: usize,
        gamma: &GammaSearchConfig,
    ) -> Result<Self> {
        check_steps(&obs, mobility)?;
        let ranges: Vec<f64> = obs.iter().map(|o| o.range).collect();
        let ranked = select_candidates(&ranges, max_candidates.min(obs.len()))?;
        let mut pairs = Vec::with_capacity(ranked.len() * (ranked.len() - 1) / 2);
        for i in 0..ranked.len() {
            for j in i + 1..ranked.len() {
                let (a, b) = (ranked[i].min(ranked[j]), ranked[i].max(ranked[j]));
                let pair = ReferenceStepPair::new(a, b, obs.len())?;
                pairs.push(estimate_pair(&obs, mobility, pair, [i, j], gamma)?);
            }
        }
        Ok(Self {
            ap_id,
            mobility,
            obs,
            ranked,
            pairs,
        })
    }

    /// Largest candidate count this table can serve.
    pub fn max_candidates(&self) -> usize {
        self.ranked.len()
    }

    /// Pairs whose reference steps both rank below `count`.
    pub fn subset(&self, count: usize) -> Vec<PairEstimate> {
        self.pairs
            .iter()
            .filter(|p| p.ranks[0] < count && p.ranks[1] < count)
            .copied()
            .collect()
    }

    /// Aggregate for `count` candidates (clamped to the table size).
    pub fn aggregate(&self, count: usize) -> Result<EnsembleResult> {
        let count = count.clamp(2, self.max_candidates());
        aggregate_pairs(self.ap_id, &self.obs, self.mobility, self.subset(count))
    }
}

/// Full per-AP estimation: candidates, all pairs, medians.
pub fn estimate_ap(
    ap_id: u32,
    obs: &[StepObservation],
    mobility: MobilityClass,
    cfg: &EnsembleConfig,
) -> Result<EnsembleResult> {
    check_steps(obs, mobility)?;
    let count = cfg.candidates.resolve(obs.len());
    PairTable::build(ap_id, obs.to_vec(), mobility, count, &cfg.gamma)?.aggregate(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{observations, DirectionAccumulators};
    use std::f64::consts::FRAC_PI_2;

    fn walk(z1: Point, d: f64, b: f64, thetas: &[f64]) -> Vec<StepObservation> {
        let mut p = z1;
        let mut ranges = Vec::new();
        for &t in thetas {
            ranges.push(Some(p.norm() + b));
            p += d * Point::new(t.cos(), t.sin());
        }
        observations(&DirectionAccumulators::from_headings(thetas), &ranges)
    }

    fn l_walk(n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| if k < n / 2 { 0.0 } else { FRAC_PI_2 })
            .collect()
    }

    #[test]
    fn candidate_examples() {
        assert_eq!(
            select_candidates(&[5.0, 3.0, 9.0, 1.0], 2).unwrap(),
            vec![3, 1]
        );
        assert_eq!(select_candidates(&[2.0, 2.0, 2.0], 2).unwrap(), vec![0, 1]);
        let mut all = select_candidates(&[4.0, 1.0, 3.0], 3).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
        assert!(select_candidates(&[1.0, 2.0], 3).is_err());
        assert!(select_candidates(&[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn default_count_examples() {
        assert_eq!(default_candidate_count(70), 18);
        assert_eq!(default_candidate_count(8), 2);
        assert_eq!(default_candidate_count(28), 7);
    }

    #[test]
    fn candidate_count_resolution() {
        assert_eq!(CandidateCount::Auto.resolve(70), 18);
        assert_eq!(CandidateCount::Fraction(0.5).resolve(70), 35);
        assert_eq!(CandidateCount::Fraction(1.0).resolve(70), 70);
        assert_eq!(CandidateCount::Fixed(100).resolve(70), 70);
        assert_eq!(CandidateCount::Fixed(0).resolve(70), 2);
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[1.0, 3.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 100.0]).unwrap(), 2.5);
        assert_eq!(median(&[7.0]).unwrap(), 7.0);
        assert!(median(&[]).is_err());
    }

    #[test]
    fn noise_free_arbitrary_pairs_agree() {
        let obs = walk(Point::new(2.0, 5.0), 0.65, 1.5, &l_walk(12));
        let cfg = EnsembleConfig {
            candidates: CandidateCount::Fixed(3),
            ..Default::default()
        };
        let res = estimate_ap(7, &obs, MobilityClass::Arbitrary, &cfg).unwrap();
        assert_eq!(res.pairs.len(), 3);
        for p in &res.pairs {
            assert!(p.feasible);
            assert!((p.step_length - res.estimate.step_length).abs() < 1e-7);
            assert!((p.bias - res.estimate.bias).abs() < 1e-7);
        }
        let e = res.estimate;
        assert!(e.feasible && !e.linear_sign_ambiguous);
        assert_eq!(e.ap_id, 7);
        assert!((e.step_length - 0.65).abs() < 1e-6);
        assert!((e.bias - 1.5).abs() < 1e-6);
        assert!((e.z1 - Point::new(2.0, 5.0)).norm() < 1e-6);
    }

    #[test]
    fn noise_free_linear_estimate() {
        let obs = walk(Point::new(-3.0, 4.0), 0.7, 2.0, &[0.0; 10]);
        let res = estimate_ap(1, &obs, MobilityClass::Linear, &EnsembleConfig::default()).unwrap();
        let e = res.estimate;
        assert!(e.feasible && e.linear_sign_ambiguous);
        assert!((e.step_length - 0.7).abs() < 1e-6);
        assert!((e.bias - 2.0).abs() < 1e-6);
        assert!((e.z1 - Point::new(-3.0, 4.0)).norm() < 1e-5);
    }

    #[test]
    fn too_few_steps() {
        let obs = walk(Point::new(2.0, 5.0), 0.65, 1.5, &l_walk(4));
        let err = estimate_ap(
            1,
            &obs,
            MobilityClass::Arbitrary,
            &EnsembleConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.code(), "min-steps-arbitrary");
        let obs = walk(Point::new(2.0, 5.0), 0.65, 1.5, &[0.0; 3]);
        let err =
            estimate_ap(1, &obs, MobilityClass::Linear, &EnsembleConfig::default()).unwrap_err();
        assert_eq!(err.code(), "min-steps-linear");
    }

    #[test]
    fn no_feasible_pairs() {
        let mut obs = walk(Point::new(2.0, 5.0), 0.65, 1.5, &l_walk(10));
        for o in &mut obs {
            o.range = 0.01;
        }
        let err = estimate_ap(
            3,
            &obs,
            MobilityClass::Arbitrary,
            &EnsembleConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err, Error::NoFeasiblePairs { ap: 3 });
    }

    #[test]
    fn corrupted_minority_leaves_median_unchanged() {
        let obs = walk(Point::new(2.0, 5.0), 0.65, 1.5, &l_walk(14));
        let cfg = EnsembleConfig {
            candidates: CandidateCount::Fixed(5),
            ..Default::default()
        };
        let clean = estimate_ap(1, &obs, MobilityClass::Arbitrary, &cfg).unwrap();
        assert_eq!(clean.pairs.len(), 10);
        let mut pairs = clean.pairs.clone();
        pairs[4].step_length *= 10.0;
        let (d, b) = aggregate_step_and_bias(&pairs).unwrap();
        assert!((d - clean.estimate.step_length).abs() < 1e-9);
        assert!((b - clean.estimate.bias).abs() < 1e-9);
    }

    #[test]
    fn pair_table_subsets_match_direct_runs() {
        let obs = walk(Point::new(-4.0, 3.0), 0.6, 1.0, &l_walk(16));
        let g = GammaSearchConfig {
            grid: 256,
            ..Default::default()
        };
        let table = PairTable::build(1, obs.clone(), MobilityClass::Arbitrary, 8, &g).unwrap();
        assert_eq!(table.pairs.len(), 28);
        for c in [2, 4, 8] {
            let direct = estimate_ap(
                1,
                &obs,
                MobilityClass::Arbitrary,
                &EnsembleConfig {
                    candidates: CandidateCount::Fixed(c),
                    gamma: g,
                },
            )
            .unwrap();
            let from_table = table.aggregate(c).unwrap();
            assert_eq!(direct.estimate, from_table.estimate);
            assert_eq!(from_table.pairs.len(), c * (c - 1) / 2);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn median_is_permutation_invariant(mut v in proptest::collection::vec(-1e3f64..1e3, 1..40), seed in any::<u64>()) {
                let m = median(&v).unwrap();
                // deterministic shuffle
                let mut s = seed;
                for i in (1..v.len()).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    v.swap(i, (s >> 33) as usize % (i + 1));
                }
                prop_assert_eq!(median(&v).unwrap(), m);
            }

            #[test]
            fn minority_corruption_stays_within_clean_order_statistics(
                clean in proptest::collection::vec(0.1f64..10.0, 5..40),
                frac in 0.0f64..0.49,
                scale in 2.0f64..1e3,
            ) {
                let k = ((clean.len() as f64) * frac) as usize;
                let mut corrupted = clean.clone();
                for v in corrupted.iter_mut().take(k) {
                    *v *= scale;
                }
                let m = median(&corrupted).unwrap();
                // the corrupted median lies between clean order statistics
                // displaced by at most k positions
                let mut sorted = clean.clone();
                sorted.sort_by(f64::total_cmp);
                let n = sorted.len();
                let lo = sorted[((n - 1) / 2).saturating_sub(k)];
                let hi = sorted[(n / 2 + k).min(n - 1)];
                prop_assert!(m >= lo && m <= hi);
            }

            #[test]
            fn candidates_are_the_smallest(r in proptest::collection::vec(0.1f64..50.0, 2..40), c in 2usize..40) {
                prop_assume!(c <= r.len());
                let sel = select_candidates(&r, c).unwrap();
                prop_assert_eq!(sel.len(), c);
                let worst = sel.iter().map(|&i| r[i]).fold(f64::MIN, f64::max);
                let outside = (0..r.len()).filter(|i| !sel.contains(i)).map(|i| r[i]).fold(f64::INFINITY, f64::min);
                prop_assert!(worst <= outside);
            }
        }
    }
}
