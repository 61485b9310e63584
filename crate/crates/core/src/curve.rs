//! Privacy curves and trade-off functions of discrete binary experiments.

use crate::dist::{DiscreteLaw, TvInterval};
use crate::error::{Error, Result};

/// Which hockey-stick divergence to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `delta_{Q||P}(eps) = sup_A Q(A) - e^eps P(A)`.
    Forward,
    /// `delta_{P||Q}(eps)`.
    Reverse,
    /// Maximum of the two.
    TwoSided,
}

/// A privacy-curve value together with the truncation slack around it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaResult {
    pub value: f64,
    pub slack: f64,
}

fn one_sided(pairs: &[(f64, f64)], e: f64) -> f64 {
    pairs
        .iter()
        .map(|&(p, q)| (q - e * p).max(0.0))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Exact positive-part sum over the union of supports.
///
/// Slack: truncated mass of the dominating-side law counts once, truncated mass
/// of the reference law counts `e^eps` times.
pub fn delta_np<L: DiscreteLaw>(p: &L, q: &L, eps: f64, direction: Direction) -> DeltaResult {
    let pairs = p.paired(q);
    let e = eps.exp();
    let (tp, tq) = (p.truncated_mass(), q.truncated_mass());
    let forward = || DeltaResult {
        value: one_sided(&pairs, e),
        slack: tq + e * tp,
    };
    let reverse = || {
        let swapped: Vec<(f64, f64)> = pairs.iter().map(|&(a, b)| (b, a)).collect();
        DeltaResult {
            value: one_sided(&swapped, e),
            slack: tp + e * tq,
        }
    };
    match direction {
        Direction::Forward => forward(),
        Direction::Reverse => reverse(),
        Direction::TwoSided => {
            let (f, r) = (forward(), reverse());
            DeltaResult {
                value: f.value.max(r.value),
                slack: f.slack.max(r.slack),
            }
        }
    }
}

/// Piecewise-affine trade-off function given by its knots.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffCurve {
    knots: Vec<(f64, f64)>,
}

impl TradeoffCurve {
    /// Validates: first `alpha` is 0, `alpha` strictly increasing, `beta` nonincreasing, convex.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("trade-off curve: {m}")));
        if knots.is_empty() || knots[0].0 != 0.0 {
            return bad("must start at alpha = 0");
        }
        if knots
            .iter()
            .any(|&(a, b)| !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b))
        {
            return bad("knots must lie in the unit square");
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return bad("alpha must be strictly increasing");
            }
            if w[1].1 > w[0].1 {
                return bad("beta must be nonincreasing");
            }
        }
        for w in knots.windows(3) {
            let s1 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            let s2 = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
            if s2 < s1 - 1e-9 * s1.abs().max(1.0) {
                return bad("curve must be convex");
            }
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// `f(alpha)` by linear interpolation; flat beyond the last knot.
    pub fn eval(&self, alpha: f64) -> f64 {
        let k = &self.knots;
        if alpha <= 0.0 {
            return k[0].1;
        }
        match k.iter().position(|&(a, _)| a >= alpha) {
            None => k[k.len() - 1].1,
            Some(0) => k[0].1,
            Some(i) => {
                let (a0, b0) = k[i - 1];
                let (a1, b1) = k[i];
                b0 + (b1 - b0) * (alpha - a0) / (a1 - a0)
            }
        }
    }

    /// Largest `|f - g|` over the union of both knot sets.
    pub fn max_gap(&self, other: &Self) -> f64 {
        self.knots
            .iter()
            .chain(other.knots.iter())
            .map(|&(a, _)| (self.eval(a) - other.eval(a)).abs())
            .fold(0.0, f64::max)
    }
}

/// Lower convex envelope of points sorted by `alpha`.
pub(crate) fn lower_envelope(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &pt in points {
        if let Some(last) = hull.last_mut() {
            if pt.0 <= last.0 {
                last.1 = last.1.min(pt.1);
                continue;
            }
        }
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (pt.1 - a.1) - (b.1 - a.1) * (pt.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(pt);
    }
    hull
}

/// Neyman–Pearson trade-off curve of a fully enumerated pair.
///
/// Outcomes are ordered by likelihood ratio `Q/P`, largest first, with
/// `Q`-only outcomes leading; tied ratios form one segment.
pub fn tradeoff_generic<L: DiscreteLaw>(p: &L, q: &L) -> Result<TradeoffCurve> {
    let tail = p.truncated_mass() + q.truncated_mass();
    if tail > 1e-12 {
        return Err(Error::TruncationExceeded {
            what: "tradeoff_generic",
            mass: tail,
            tol: 1e-12,
        });
    }
    let pairs = p.paired(q);
    let q_only: f64 = pairs.iter().filter(|(a, _)| *a == 0.0).map(|(_, b)| b).sum();
    let mut rest: Vec<(f64, f64)> = pairs.into_iter().filter(|(a, _)| *a > 0.0).collect();
    rest.sort_by(|x, y| (y.1 / y.0).total_cmp(&(x.1 / x.0)));

    let mut knots = vec![(0.0, (1.0 - q_only).max(0.0))];
    let (mut alpha, mut power) = (0.0, q_only);
    let mut i = 0;
    while i < rest.len() {
        let r = rest[i].1 / rest[i].0;
        let mut j = i;
        while j < rest.len() && (rest[j].1 / rest[j].0 - r).abs() <= 1e-12 * r.max(1e-300) {
            alpha += rest[j].0;
            power += rest[j].1;
            j += 1;
        }
        knots.push((alpha, (1.0 - power).max(0.0)));
        i = j;
    }
    // Close the curve at (1, beta_end); the enumerated totals differ from one by at most the tails.
    if let Some(last) = knots.last_mut() {
        if last.0 > 0.0 {
            last.0 = 1.0;
            if last.1 <= 1e-12 {
                last.1 = 0.0;
            }
        }
    }
    if knots.len() == 1 || knots[knots.len() - 1].0 < 1.0 {
        let b = knots[knots.len() - 1].1;
        knots.push((1.0, b.min(knots[0].1)));
    }
    let mut hull = lower_envelope(&knots);
    for i in 1..hull.len() {
        if hull[i].1 > hull[i - 1].1 {
            hull[i].1 = hull[i - 1].1;
        }
    }
    TradeoffCurve::new(hull)
}

/// `sup_alpha 1 - f(alpha) - e^eps alpha`, attained at a knot.
pub fn delta_from_tradeoff(curve: &TradeoffCurve, eps: f64) -> f64 {
    let e = eps.exp();
    curve.knots().iter().map(|&(a, b)| 1.0 - b - e * a).fold(0.0, f64::max)
}

/// `TV(Q_n, Q) + e^eps TV(P_n, P)` using the upper ends of both intervals.
pub fn curve_stability_bound(tv_p: TvInterval, tv_q: TvInterval, eps: f64) -> f64 {
    tv_q.upper + eps.exp() * tv_p.upper
}

/// `P`-mass on enumerated points that `Q` does not charge; a lower bound on `delta_{P||Q}` at every `eps`.
pub fn floor_lower_bound<L: DiscreteLaw>(p: &L, q: &L) -> f64 {
    p.paired(q).iter().filter(|(_, b)| *b == 0.0).map(|(a, _)| a).sum()
}
