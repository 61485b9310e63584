//! Limit experiments of the critical regime.
//!
//! With `e^eps0 = c^2 n` the number of flipped reports stays O(1), and the
//! finite-n experiments converge to Poisson-shift (all-zeros null),
//! Skellam-shift (composition `pi`), or a compound-Poisson lattice law
//! (finite alphabets).

use crate::curve::TradeoffCurve;
use crate::dist::lattice::int_point;
use crate::dist::special::pois_pmf;
use crate::dist::{affine_map, make_poisson, make_skellam, IntDist, LatticeDist, SkellamMethod, DEFAULT_TAIL_EPS};
use crate::error::{invalid, Error, Result};

/// Signal parameter `c` and composition `pi` with the derived Poisson rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitParams {
    pub c: f64,
    pub lambda: f64,
    pub pi: f64,
    pub lambda0: f64,
    pub lambda1: f64,
}

impl LimitParams {
    pub fn new(c: f64, pi: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return invalid(format!("c = {c} must be finite and > 0"));
        }
        if !(0.0..=1.0).contains(&pi) {
            return invalid(format!("pi = {pi} outside [0, 1]"));
        }
        let lambda = 1.0 / (c * c);
        Ok(Self {
            c,
            lambda,
            pi,
            lambda0: (1.0 - pi) * lambda,
            lambda1: pi * lambda,
        })
    }
}

/// Single-dominant sparse-error intensities on a finite alphabet.
///
/// `alpha0[y]` is the limiting expected number of zero-users reporting `y`
/// (`alpha0[y0]` is unused and must be 0); likewise `alpha1` for one-users and `y1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensitySpec {
    pub alphabet: Vec<String>,
    pub y0: usize,
    pub y1: usize,
    pub alpha0: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub pi: f64,
}

impl IntensitySpec {
    pub fn new(
        alphabet: Vec<String>,
        y0: usize,
        y1: usize,
        alpha0: Vec<f64>,
        alpha1: Vec<f64>,
        pi: f64,
    ) -> Result<Self> {
        let d = alphabet.len();
        if d < 2 {
            return invalid("alphabet needs at least two symbols");
        }
        if y0 >= d || y1 >= d || y0 == y1 {
            return invalid("dominant outputs must be distinct alphabet members");
        }
        if alpha0.len() != d || alpha1.len() != d {
            return invalid("intensity vectors must match the alphabet length");
        }
        if alpha0.iter().chain(&alpha1).any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return invalid("intensities must be finite and >= 0");
        }
        if alpha0[y0] != 0.0 || alpha1[y1] != 0.0 {
            return invalid("intensity on a row's own dominant output must be 0");
        }
        if !(0.0..=1.0).contains(&pi) {
            return invalid(format!("pi = {pi} outside [0, 1]"));
        }
        Ok(Self {
            alphabet,
            y0,
            y1,
            alpha0,
            alpha1,
            pi,
        })
    }

    pub fn dim(&self) -> usize {
        self.alphabet.len()
    }

    pub fn with_pi(&self, pi: f64) -> Result<Self> {
        Self::new(
            self.alphabet.clone(),
            self.y0,
            self.y1,
            self.alpha0.clone(),
            self.alpha1.clone(),
            pi,
        )
    }
}

/// `(Poi(lambda), 1 + Poi(lambda))`.
pub fn poisson_shift_pair(lambda: f64, tail_eps: f64) -> Result<(IntDist, IntDist)> {
    if !(lambda > 0.0) {
        return invalid(format!("lambda = {lambda} must be > 0"));
    }
    let p = make_poisson(lambda, tail_eps)?;
    let q = affine_map(&p, 1, 1)?;
    Ok((p, q))
}

/// `(D, 1 + D)` with `D ~ Skellam(lambda0, lambda1)`.
pub fn skellam_shift_pair(params: &LimitParams, tail_eps: f64) -> Result<(IntDist, IntDist)> {
    let p = make_skellam(params.lambda0, params.lambda1, tail_eps, SkellamMethod::Convolution)?;
    let q = affine_map(&p, 1, 1)?;
    Ok((p, q))
}

/// `P(J >= m)` for `J ~ Poi(lambda)`, accurate in relative terms in the upper tail.
pub fn poisson_upper_tail(lambda: f64, m: u64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    if (m as f64) <= lambda {
        let head: f64 = (0..m).map(|j| pois_pmf(j, lambda)).sum();
        return (1.0 - head).max(0.0);
    }
    let mut term = pois_pmf(m, lambda);
    let mut sum = 0.0;
    let mut j = m;
    while term > 0.0 {
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
        j += 1;
        term *= lambda / j as f64;
    }
    sum
}

/// `P(J <= m)` for `J ~ Poi(lambda)`.
pub fn poisson_cdf(lambda: f64, m: u64) -> f64 {
    if (m as f64) <= lambda {
        (0..=m).map(|j| pois_pmf(j, lambda)).sum::<f64>().min(1.0)
    } else {
        1.0 - poisson_upper_tail(lambda, m + 1)
    }
}

/// Closed-form `delta_{Q||P}(eps)` of the Poisson-shift pair.
///
/// With `m = floor(lambda e^eps) + 1` the optimal rejection region is `{J + 1 >= m}`.
pub fn poisson_shift_delta_closed(lambda: f64, eps: f64) -> Result<f64> {
    if !(lambda > 0.0) || !(eps >= 0.0) {
        return invalid(format!("need lambda > 0 and eps >= 0 (got {lambda}, {eps})"));
    }
    let t = lambda * eps.exp();
    if t > 1e15 {
        // both tails are below the smallest positive double
        return Ok(0.0);
    }
    let m = t.floor() as u64 + 1;
    let e = eps.exp();
    let v = poisson_upper_tail(lambda, m - 1) - e * poisson_upper_tail(lambda, m);
    Ok(v.clamp(0.0, 1.0))
}

/// Knots `(P(J >= m), P(J <= m - 2))`, `m = m_max, ..., 1`, framed by `(0, 1)` and `(1, 0)`.
///
/// `m_max` defaults to the Poisson truncation point at the default tail tolerance.
pub fn poisson_shift_tradeoff(lambda: f64, m_max: Option<u64>) -> Result<TradeoffCurve> {
    if !(lambda > 0.0) {
        return invalid(format!("lambda = {lambda} must be > 0"));
    }
    let m_max = match m_max {
        Some(m) => m,
        None => make_poisson(lambda, DEFAULT_TAIL_EPS)?.max_point() as u64,
    }
    .max(1);
    let beyond = poisson_upper_tail(lambda, m_max);
    if beyond > 1e-12 {
        return Err(Error::TruncationExceeded {
            what: "poisson_shift_tradeoff",
            mass: beyond,
            tol: 1e-12,
        });
    }
    let mut knots = vec![(0.0, 1.0)];
    for m in (1..=m_max).rev() {
        let a = poisson_upper_tail(lambda, m);
        let b = if m >= 2 { poisson_cdf(lambda, m - 2) } else { 0.0 };
        if a > knots[knots.len() - 1].0 {
            knots.push((a, b));
        }
    }
    knots.push((1.0, 0.0));
    TradeoffCurve::new(knots)
}

/// Compound-Poisson limit `H = sum U_y (e_y - e_y0) + sum V_y (e_y - e_y1)` and `H + e_y1 - e_y0`.
///
/// Coordinates with zero rate are skipped; each nonzero coordinate gets an
/// equal share of `tail_eps`.
pub fn compound_poisson_limit(spec: &IntensitySpec, tail_eps: f64) -> Result<(LatticeDist, LatticeDist)> {
    let d = spec.dim();
    if d > 8 {
        return Err(Error::Guard(format!("alphabet size {d} > 8")));
    }
    let unit = |y: usize| {
        let mut v = vec![0i64; d];
        v[y] = 1;
        v
    };
    let mut coords: Vec<(f64, Vec<i64>)> = Vec::new();
    for y in 0..d {
        let r0 = (1.0 - spec.pi) * spec.alpha0[y];
        if y != spec.y0 && r0 > 0.0 {
            let mut j = unit(y);
            j[spec.y0] -= 1;
            coords.push((r0, j));
        }
    }
    for y in 0..d {
        let r1 = spec.pi * spec.alpha1[y];
        if y != spec.y1 && r1 > 0.0 {
            let mut j = unit(y);
            j[spec.y1] -= 1;
            coords.push((r1, j));
        }
    }
    let share = tail_eps / coords.len().max(1) as f64;
    let mut p = LatticeDist::point_mass(int_point(&vec![0; d]));
    for (rate, jump) in &coords {
        p = p.add_along(&make_poisson(*rate, share)?, &int_point(jump));
    }
    let mut shift = vec![0i64; d];
    shift[spec.y1] += 1;
    shift[spec.y0] -= 1;
    let q = p.shift(&int_point(&shift));
    Ok((p, q))
}

/// Scalar pair on the switched coordinate at a boundary composition.
///
/// At `pi = 0` the `y1` coordinate carries `Poi(alpha0(y1))` under the null and is
/// shifted by `+1` under the alternative. At `pi = 1` the `y0` coordinate carries
/// `Poi(alpha1(y0))` and the alternative shifts it by `-1`, so the returned pair
/// is `(Poi, Poi - 1)`: the Poisson-shift experiment with the roles of null and
/// alternative exchanged. All other coordinates are independent of the hypothesis.
pub fn boundary_factorization(spec: &IntensitySpec, tail_eps: f64) -> Result<(IntDist, IntDist)> {
    if spec.pi == 0.0 {
        let p = make_poisson(spec.alpha0[spec.y1], tail_eps)?;
        let q = affine_map(&p, 1, 1)?;
        Ok((p, q))
    } else if spec.pi == 1.0 {
        let p = make_poisson(spec.alpha1[spec.y0], tail_eps)?;
        let q = affine_map(&p, 1, -1)?;
        Ok((p, q))
    } else {
        invalid(format!("boundary_factorization needs pi in {{0, 1}}, got {}", spec.pi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{delta_np, Direction};

    #[test]
    fn poisson_shift_examples() {
        let (p, q) = poisson_shift_pair(1.0, 1e-14).unwrap();
        assert_eq!(q.pmf(0), 0.0);
        for j in 1..10 {
            assert_eq!(q.pmf(j), p.pmf(j - 1));
        }
        assert!((p.pmf(0) - (-1.0f64).exp()).abs() < 1e-16);
        assert!(poisson_shift_pair(0.0, 1e-14).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let e1 = (-1.0f64).exp();
        assert!((poisson_shift_delta_closed(1.0, 0.0).unwrap() - e1).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..40 {
            let v = poisson_shift_delta_closed(1.0, i as f64 * 0.5).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        assert!(prev < 1e-30);
        // m = floor(2) + 1 = 3: delta = P(J >= 2) - 2 P(J >= 3)
        let v = poisson_shift_delta_closed(1.0, 2f64.ln()).unwrap();
        let expect = poisson_upper_tail(1.0, 2) - 2.0 * poisson_upper_tail(1.0, 3);
        assert!((v - expect).abs() < 1e-16);
    }

    #[test]
    fn tails_are_consistent() {
        for &lam in &[0.25, 1.0, 4.0, 30.0] {
            for m in 0..60u64 {
                let s = poisson_upper_tail(lam, m) + poisson_cdf(lam, m.saturating_sub(1));
                if m > 0 {
                    assert!((s - 1.0).abs() < 1e-14, "lam={lam} m={m}");
                }
            }
        }
    }

    #[test]
    fn tradeoff_shape() {
        let c = poisson_shift_tradeoff(1.0, None).unwrap();
        assert_eq!(c.knots()[0], (0.0, 1.0));
        let fbar1 = 1.0 - (-1.0f64).exp();
        assert_eq!(c.eval(fbar1), 0.0);
        assert_eq!(c.eval(0.9), 0.0);
        assert!(c.eval(fbar1 - 1e-3) > 0.0);
        assert!(poisson_shift_tradeoff(1.0, Some(3)).is_err());
    }

    #[test]
    fn skellam_pair_boundaries() {
        let prm = LimitParams::new(1.0, 0.0).unwrap();
        assert_eq!(
            skellam_shift_pair(&prm, 1e-14).unwrap(),
            poisson_shift_pair(1.0, 1e-14).unwrap()
        );
        let prm = LimitParams::new(1.0, 1.0).unwrap();
        let (p, q) = skellam_shift_pair(&prm, 1e-14).unwrap();
        assert!(p.max_point() == 0 && q.max_point() == 1);
        let (ps, qs) = poisson_shift_pair(1.0, 1e-14).unwrap();
        // Reflection d -> 1 - d maps the pair onto (Q_inf, P_inf) of the Poisson shift.
        assert_eq!(affine_map(&p, -1, 1).unwrap(), qs);
        assert_eq!(affine_map(&q, -1, 1).unwrap(), ps);
        let prm = LimitParams::new(1.0, 0.5).unwrap();
        let (p, _) = skellam_shift_pair(&prm, 1e-14).unwrap();
        for d in 0..12 {
            assert!((p.pmf(d) - p.pmf(-d)).abs() < 1e-16);
        }
    }

    #[test]
    fn compound_trivial_and_boundary() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let spec = IntensitySpec::new(names.clone(), 0, 1, vec![0.0; 3], vec![0.0; 3], 0.5).unwrap();
        let (p, q) = compound_poisson_limit(&spec, 1e-14).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.prob(&int_point(&[0, 0, 0])), 1.0);
        assert_eq!(q.prob(&int_point(&[-1, 1, 0])), 1.0);

        let spec = IntensitySpec::new(names, 0, 1, vec![0.0, 0.7, 0.3], vec![0.4, 0.0, 0.2], 1.0).unwrap();
        let (bp, bq) = boundary_factorization(&spec, 1e-14).unwrap();
        let (lp, lq) = compound_poisson_limit(&spec, 1e-14).unwrap();
        for eps in [0.0, 0.5, 2.0] {
            for dir in [Direction::Forward, Direction::Reverse] {
                let a = delta_np(&bp, &bq, eps, dir).value;
                let b = delta_np(&lp, &lq, eps, dir).value;
                assert!((a - b).abs() < 1e-10);
            }
        }
        assert!(boundary_factorization(&spec.with_pi(0.5).unwrap(), 1e-14).is_err());
    }
}
