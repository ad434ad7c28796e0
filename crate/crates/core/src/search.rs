//! One-dimensional search: uniform or geometric sampling, then refinement of
//! the lowest local minima by golden section with a sampled zoom fallback.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimisation of `f` on `[lo, hi]` down to a bracket of
/// width `tol`. Non-finite values compare as +inf.
pub fn golden_section(
    mut f: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> (f64, f64) {
    let mut eval = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = eval(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = eval(x2);
        }
        if x1 == x2 {
            break;
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Samples per zoom round.
const ZOOM_SAMPLES: usize = 16;

/// Minimises `f` on `[lo, hi]` by repeated uniform sampling: each round keeps
/// the two sub-intervals next to the best sample, until the bracket is at most
/// `tol` wide. Unlike golden section this tolerates infinite plateaus and
/// narrow feasible islands. Non-finite values compare as +inf; ties keep the
/// smaller abscissa.
pub fn zoom_section(
    mut f: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> (f64, f64) {
    let mut best = (0.5 * (lo + hi), f64::INFINITY);
    while hi - lo > tol {
        let h = (hi - lo) / ZOOM_SAMPLES as f64;
        let mut round = (lo, f64::INFINITY, 0);
        for i in 0..=ZOOM_SAMPLES {
            let x = lo + i as f64 * h;
            let v = f(x);
            if v < round.1 {
                round = (x, v, i);
            }
        }
        if !round.1.is_finite() {
            break;
        }
        if round.1 < best.1 {
            best = (round.0, round.1);
        }
        let i = round.2;
        let (new_lo, new_hi) = (
            lo + i.saturating_sub(1) as f64 * h,
            lo + (i + 1).min(ZOOM_SAMPLES) as f64 * h,
        );
        if new_hi - new_lo >= hi - lo {
            break;
        }
        (lo, hi) = (new_lo, new_hi);
    }
    best
}

/// Result of a periodic grid search: minimiser folded into `[0, period)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchResult {
    pub argmin: f64,
    pub value: f64,
}

/// Samples `f` at the centres of `grid` uniform cells of `[0, period)`, then
/// refines the `keep` lowest local minima of the samples by [`golden_section`],
/// falling back to [`zoom_section`] where that does not improve on the sample,
/// and returns the best refined point.
/// Ties keep the smallest angle. Returns `None` when every grid value is
/// infinite.
///
/// Refining several cells matters when a sharp minimum sits between samples
/// while a broad valley elsewhere samples lower. Cell centres keep the grid off
/// round angles such as multiples of a right angle over a power of two, where
/// costs built from right-angle walks can have isolated removable
/// singularities.
pub fn periodic_minimize(
    mut f: impl FnMut(f64) -> f64,
    period: f64,
    grid: usize,
    keep: usize,
    tol: f64,
) -> Option<SearchResult> {
    let grid = grid.max(1);
    let step = period / grid as f64;
    let xs: Vec<f64> = (0..grid).map(|k| (k as f64 + 0.5) * step).collect();
    let vs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let brackets = (0..grid).map(|k| (xs[k] - step, xs[k] + step)).collect();
    let neighbours = |k: usize| ((k + grid - 1) % grid, (k + 1) % grid);
    refine_local_minima(&mut f, &xs, &vs, brackets, neighbours, keep, tol)
        .map(|(x, v)| {
            let mut folded = x.rem_euclid(period);
            if folded >= period {
                folded = 0.0;
            }
            (folded, v)
        })
        .map(|(argmin, value)| SearchResult { argmin, value })
}

/// Searches both sides of `centre` at offsets shrinking geometrically by
/// `ratio` from `outer` down to `inner`, then refines the `keep` lowest local
/// minima like [`periodic_minimize`]. The sample spacing stays a fixed
/// fraction of the distance to `centre`, which catches minima whose width
/// scales with that distance. Returns `None` when no sample is finite.
pub fn minimize_around(
    mut f: impl FnMut(f64) -> f64,
    centre: f64,
    inner: f64,
    outer: f64,
    ratio: f64,
    keep: usize,
    tol: f64,
) -> Option<SearchResult> {
    assert!(0.0 < ratio && ratio < 1.0 && 0.0 < inner && inner < outer);
    let mut offsets = Vec::new();
    let mut o = outer;
    while o >= inner {
        offsets.push(o);
        o *= ratio;
    }
    let xs: Vec<f64> = offsets
        .iter()
        .map(|o| centre - o)
        .chain(offsets.iter().rev().map(|o| centre + o))
        .collect();
    let vs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let last = xs.len() - 1;
    let neighbours = |k: usize| (k.saturating_sub(1), (k + 1).min(last));
    let brackets = (0..xs.len())
        .map(|k| {
            let (lo, hi) = neighbours(k);
            (xs[lo], xs[hi])
        })
        .collect();
    refine_local_minima(&mut f, &xs, &vs, brackets, neighbours, keep, tol)
        .map(|(argmin, value)| SearchResult { argmin, value })
}

fn refine_local_minima(
    f: &mut impl FnMut(f64) -> f64,
    xs: &[f64],
    vs: &[f64],
    brackets: Vec<(f64, f64)>,
    neighbours: impl Fn(usize) -> (usize, usize),
    keep: usize,
    tol: f64,
) -> Option<(f64, f64)> {
    // the lowest finite sample always qualifies, so this is empty only when
    // nothing is finite
    let mut cells: Vec<usize> = (0..xs.len())
        .filter(|&k| {
            let (prev, next) = neighbours(k);
            vs[k].is_finite() && !(vs[prev] < vs[k]) && !(vs[next] < vs[k])
        })
        .collect();
    cells.sort_by(|&a, &b| vs[a].total_cmp(&vs[b]).then(a.cmp(&b)));
    cells.truncate(keep.max(1));
    let mut best: Option<(f64, f64)> = None;
    for k in cells {
        let (lo, hi) = brackets[k];
        let mut cand = (xs[k], vs[k]);
        let golden = golden_section(&mut *f, lo, hi, tol);
        if golden.1 < cand.1 {
            cand = golden;
        } else {
            // golden section stalls on infinite plateaus around a narrow
            // feasible island
            let zoom = zoom_section(&mut *f, lo, hi, tol);
            if zoom.1 < cand.1 {
                cand = zoom;
            }
        }
        let better = match best {
            None => true,
            Some((bx, bv)) => cand.1 < bv || (cand.1 == bv && cand.0 < bx),
        };
        if better {
            best = Some(cand);
        }
    }
    best
}
