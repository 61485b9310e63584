//! Seeded samplers for the binomial/Poisson couplings and exact enumeration
//! of their joint laws for small populations.
//!
//! Binomial to Poisson: index `i` draws `N_i ~ Poi(p)` and always one uniform;
//! `X_i = 1` if `N_i >= 1`, otherwise `X_i ~ Bern(q)` with
//! `q = (p - (1 - e^-p)) / e^-p`. Then `X_i ~ Bern(p)` exactly and
//! `P(S != N) <= m p (1 - e^-p)` for `S = sum X_i`, `N = sum N_i`.

use std::collections::BTreeMap;

use crate::dist::make_poisson;
use crate::dist::special::{binom_pmf, pois_pmf};
use crate::error::{invalid, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th independent child stream of `seed`:
/// `mix64(seed ^ mix64(index + GOLDEN_GAMMA))`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(GOLDEN_GAMMA)))
}

/// Counter-based 64-bit generator: the state advances by a fixed odd constant
/// and each output is the xor-shift-multiply finalizer of the new state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeededStream {
    state: u64,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Independent child stream; see [`derive_seed`].
    pub fn split(&self, index: u64) -> Self {
        Self::new(derive_seed(self.state, index))
    }
}

/// Inversion sampler for `Poi(lambda)`, `lambda <= 30`, from the exact pmf.
#[derive(Debug, Clone)]
pub struct PoissonSampler {
    cdf: Vec<f64>,
}

impl PoissonSampler {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=30.0).contains(&lambda) {
            return invalid(format!("Poisson sampler supports 0 <= lambda <= 30, got {lambda}"));
        }
        let law = make_poisson(lambda, 1e-16)?;
        let mut acc = 0.0;
        let cdf = law
            .mass()
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        Ok(Self { cdf })
    }

    /// Smallest `j` with `F(j) > u`; `u` beyond the enumerated range maps one past it.
    pub fn sample_with(&self, u: f64) -> u64 {
        self.cdf.iter().position(|&c| u < c).unwrap_or(self.cdf.len()) as u64
    }

    pub fn sample(&self, s: &mut SeededStream) -> u64 {
        self.sample_with(s.next_f64())
    }
}

/// Summary of one coupling run.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingReport {
    pub n_samples: u64,
    pub mismatch_freq: f64,
    pub bound: f64,
    pub three_sigma: f64,
    /// Kolmogorov distance of each side's empirical marginal to its exact target.
    pub marginal_ks: (f64, f64),
}

fn three_sigma(bound: f64, n: u64) -> f64 {
    3.0 * (bound * (1.0 - bound) / n as f64).sqrt()
}

/// `q = (p - (1 - e^-p)) / e^-p = 1 - (1 - p) e^p`.
pub fn a1_q(p: f64) -> f64 {
    (1.0 - (1.0 - p) * p.exp()).clamp(0.0, 1.0)
}

/// `m p (1 - e^-p)`.
pub fn a1_bound(m: u64, p: f64) -> f64 {
    m as f64 * p * (-(-p).exp_m1())
}

/// One draw of the binomial/Poisson coupler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinomPoissonDraw {
    pub s: u64,
    pub n: u64,
    /// Some index had `N_i >= 2`, or `N_i = 0` with `X_i = 1`.
    pub bad_index: bool,
}

struct BinomPoissonCoupler {
    m: u64,
    q: f64,
    pois: PoissonSampler,
}

impl BinomPoissonCoupler {
    fn new(m: u64, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return invalid(format!("p = {p} must lie in (0, 1)"));
        }
        if m == 0 {
            return invalid("m must be >= 1");
        }
        Ok(Self {
            m,
            q: a1_q(p),
            pois: PoissonSampler::new(p)?,
        })
    }

    fn draw(&self, s: &mut SeededStream) -> BinomPoissonDraw {
        let (mut sum_x, mut sum_n, mut bad) = (0, 0, false);
        for _ in 0..self.m {
            let ni = self.pois.sample(s);
            let u = s.next_f64();
            let xi = if ni >= 1 { 1 } else { (u < self.q) as u64 };
            bad |= ni >= 2 || (ni == 0 && xi == 1);
            sum_x += xi;
            sum_n += ni;
        }
        BinomPoissonDraw {
            s: sum_x,
            n: sum_n,
            bad_index: bad,
        }
    }
}

/// Raw draws of the binomial/Poisson coupler, for trace-level checks.
pub fn binom_poisson_trace(m: u64, p: f64, seed: u64, n_samples: u64) -> Result<Vec<BinomPoissonDraw>> {
    let c = BinomPoissonCoupler::new(m, p)?;
    let mut s = SeededStream::new(seed);
    Ok((0..n_samples).map(|_| c.draw(&mut s)).collect())
}

fn bump(h: &mut Vec<u64>, x: u64) {
    let x = x as usize;
    if h.len() <= x {
        h.resize(x + 1, 0);
    }
    h[x] += 1;
}

/// Kolmogorov distance between a count histogram and an exact pmf on `0, 1, ...`.
fn ks_counts(hist: &[u64], n: u64, pmf: impl Fn(u64) -> f64, support_hint: usize) -> f64 {
    let top = hist.len().max(support_hint);
    let (mut fe, mut ft, mut ks) = (0.0f64, 0.0f64, 0.0f64);
    for x in 0..top {
        fe += *hist.get(x).unwrap_or(&0) as f64 / n as f64;
        ft += pmf(x as u64);
        ks = ks.max((fe - ft).abs());
    }
    ks
}

pub fn couple_binom_poisson(m: u64, p: f64, seed: u64, n_samples: u64) -> Result<CouplingReport> {
    if n_samples == 0 {
        return invalid("n_samples must be >= 1");
    }
    let c = BinomPoissonCoupler::new(m, p)?;
    let mut s = SeededStream::new(seed);
    let (mut hs, mut hn, mut mismatches) = (Vec::new(), Vec::new(), 0u64);
    for _ in 0..n_samples {
        let d = c.draw(&mut s);
        bump(&mut hs, d.s);
        bump(&mut hn, d.n);
        mismatches += (d.s != d.n) as u64;
    }
    let bound = a1_bound(m, p);
    let mp = m as f64 * p;
    Ok(CouplingReport {
        n_samples,
        mismatch_freq: mismatches as f64 / n_samples as f64,
        bound,
        three_sigma: three_sigma(bound, n_samples),
        marginal_ks: (
            ks_counts(&hs, n_samples, |x| binom_pmf(x, m, p, 1.0 - p), m as usize + 1),
            ks_counts(&hn, n_samples, |x| pois_pmf(x, mp), 0),
        ),
    })
}

/// Additive coupling `M' = M + R`, `R ~ Poi(|lambda' - lambda|)`, with the smaller rate as base.
pub fn couple_poisson_poisson(lambda: f64, lambda_prime: f64, seed: u64, n_samples: u64) -> Result<CouplingReport> {
    if n_samples == 0 {
        return invalid("n_samples must be >= 1");
    }
    let base = PoissonSampler::new(lambda.min(lambda_prime))?;
    let diff = (lambda_prime - lambda).abs();
    let extra = PoissonSampler::new(diff)?;
    let mut s = SeededStream::new(seed);
    let (mut h1, mut h2, mut mismatches) = (Vec::new(), Vec::new(), 0u64);
    for _ in 0..n_samples {
        let b = base.sample(&mut s);
        let r = extra.sample(&mut s);
        let (m, mp) = if lambda <= lambda_prime { (b, b + r) } else { (b + r, b) };
        bump(&mut h1, m);
        bump(&mut h2, mp);
        mismatches += (r != 0) as u64;
    }
    let bound = -(-diff).exp_m1();
    Ok(CouplingReport {
        n_samples,
        mismatch_freq: mismatches as f64 / n_samples as f64,
        bound,
        three_sigma: three_sigma(bound, n_samples),
        marginal_ks: (
            ks_counts(&h1, n_samples, |x| pois_pmf(x, lambda), 0),
            ks_counts(&h2, n_samples, |x| pois_pmf(x, lambda_prime), 0),
        ),
    })
}

fn validate_rare(probs: &[f64], rare: &[usize]) -> Result<(f64, Vec<f64>)> {
    if rare.is_empty() {
        return invalid("rare set must be nonempty");
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return invalid("probs must be a probability vector");
    }
    let mut seen = vec![false; probs.len()];
    for &b in rare {
        if b >= probs.len() || seen[b] {
            return invalid("rare set must list distinct alphabet indices");
        }
        seen[b] = true;
    }
    let pb: f64 = rare.iter().map(|&b| probs[b]).sum();
    if !(pb > 0.0 && pb < 1.0) {
        return invalid(format!("p_B = {pb} must lie in (0, 1)"));
    }
    let theta = rare.iter().map(|&b| probs[b] / pb).collect();
    Ok((pb, theta))
}

fn allocate(total: u64, theta: &[f64], s: &mut SeededStream) -> Vec<u64> {
    let mut counts = vec![0u64; theta.len()];
    if theta.len() == 1 {
        counts[0] = total;
        return counts;
    }
    for _ in 0..total {
        let u = s.next_f64();
        let mut acc = 0.0;
        let mut cat = theta.len() - 1;
        for (i, t) in theta.iter().enumerate() {
            acc += t;
            if u < acc {
                cat = i;
                break;
            }
        }
        counts[cat] += 1;
    }
    counts
}

/// Couples the rare-category counts of `Mult(m, probs)` with independent `Poi(m p_b)`.
///
/// Totals come from the binomial/Poisson coupler with `p_B`, driven by the
/// seed's own stream exactly as [`couple_binom_poisson`]. Allocations inside
/// `B` use child stream 1; when the totals agree one allocation serves both sides.
pub fn couple_multinomial_poisson(
    m: u64,
    probs: &[f64],
    rare: &[usize],
    seed: u64,
    n_samples: u64,
) -> Result<CouplingReport> {
    if n_samples == 0 {
        return invalid("n_samples must be >= 1");
    }
    let (pb, theta) = validate_rare(probs, rare)?;
    let c = BinomPoissonCoupler::new(m, pb)?;
    let mut s = SeededStream::new(seed);
    let mut alloc = s.split(1);
    let mut hx = vec![Vec::new(); rare.len()];
    let mut hu = vec![Vec::new(); rare.len()];
    let mut mismatches = 0u64;
    for _ in 0..n_samples {
        let d = c.draw(&mut s);
        let (x, u) = if d.s == d.n {
            let a = allocate(d.s, &theta, &mut alloc);
            (a.clone(), a)
        } else {
            let x = allocate(d.s, &theta, &mut alloc);
            let u = allocate(d.n, &theta, &mut alloc);
            (x, u)
        };
        mismatches += (x != u) as u64;
        for i in 0..rare.len() {
            bump(&mut hx[i], x[i]);
            bump(&mut hu[i], u[i]);
        }
    }
    let bound = a1_bound(m, pb);
    let mut ks = (0.0f64, 0.0f64);
    for (i, &b) in rare.iter().enumerate() {
        let p = probs[b];
        ks.0 = ks.0.max(ks_counts(
            &hx[i],
            n_samples,
            |x| binom_pmf(x, m, p, 1.0 - p),
            m as usize + 1,
        ));
        ks.1 = ks.1.max(ks_counts(&hu[i], n_samples, |x| pois_pmf(x, m as f64 * p), 0));
    }
    Ok(CouplingReport {
        n_samples,
        mismatch_freq: mismatches as f64 / n_samples as f64,
        bound,
        three_sigma: three_sigma(bound, n_samples),
        marginal_ks: ks,
    })
}

/// Exact joint law of a coupler's two outputs, enumerated over its decision tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactJoint<K: Ord> {
    pub probs: BTreeMap<K, f64>,
    /// Mass of branches cut by the per-draw Poisson cap.
    pub tail: f64,
}

impl<K: Ord + Clone> ExactJoint<K> {
    pub fn mismatch(&self, differ: impl Fn(&K) -> bool) -> f64 {
        self.probs.iter().filter(|(k, _)| differ(k)).map(|(_, v)| v).sum()
    }
}

const ENUM_CAP: u64 = 25;

/// Joint law of `(S, N)` for the binomial/Poisson coupler, `m <= 6`.
pub fn exact_binom_poisson(m: u64, p: f64) -> Result<ExactJoint<(u64, u64)>> {
    if m > 6 {
        return invalid("exact enumeration supports m <= 6");
    }
    BinomPoissonCoupler::new(m, p)?;
    let q = a1_q(p);
    // one index: (x, n) with probability
    let mut one: Vec<((u64, u64), f64)> = vec![((0, 0), pois_pmf(0, p) * (1.0 - q)), ((1, 0), pois_pmf(0, p) * q)];
    let mut cut = 1.0 - pois_pmf(0, p);
    for j in 1..=ENUM_CAP {
        one.push(((1, j), pois_pmf(j, p)));
        cut -= pois_pmf(j, p);
    }
    let mut joint: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    joint.insert((0, 0), 1.0);
    for _ in 0..m {
        let mut next = BTreeMap::new();
        for (&(sx, sn), &w) in &joint {
            for &((x, n), v) in &one {
                *next.entry((sx + x, sn + n)).or_insert(0.0) += w * v;
            }
        }
        joint = next;
    }
    Ok(ExactJoint {
        probs: joint,
        tail: (m as f64 * cut.max(0.0)).min(1.0),
    })
}

/// Joint law of `(M, M')` for the additive Poisson coupler.
pub fn exact_poisson_poisson(lambda: f64, lambda_prime: f64) -> Result<ExactJoint<(u64, u64)>> {
    if !(lambda >= 0.0 && lambda_prime >= 0.0) {
        return invalid("rates must be >= 0");
    }
    let base = lambda.min(lambda_prime);
    let diff = (lambda_prime - lambda).abs();
    let cap = ENUM_CAP + (4.0 * (lambda + lambda_prime)) as u64;
    let mut probs = BTreeMap::new();
    let mut total = 0.0;
    for b in 0..=cap {
        for r in 0..=cap {
            let w = pois_pmf(b, base) * pois_pmf(r, diff);
            total += w;
            let key = if lambda <= lambda_prime { (b, b + r) } else { (b + r, b) };
            *probs.entry(key).or_insert(0.0) += w;
        }
    }
    Ok(ExactJoint {
        probs,
        tail: (1.0 - total).max(0.0),
    })
}

fn compositions(total: u64, parts: usize) -> Vec<Vec<u64>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// `Mult(total, theta)` probability of `counts`.
pub fn multinomial_pmf(counts: &[u64], theta: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let mut lp = crate::dist::special::ln_factorial(total);
    for (&c, &t) in counts.iter().zip(theta) {
        if c > 0 {
            if t == 0.0 {
                return 0.0;
            }
            lp += c as f64 * t.ln() - crate::dist::special::ln_factorial(c);
        }
    }
    lp.exp()
}

/// Joint law of the rare-count vectors `(X_B, U_B)` for the multinomial coupler, `m <= 6`.
pub fn exact_multinomial_poisson(m: u64, probs: &[f64], rare: &[usize]) -> Result<ExactJoint<(Vec<u64>, Vec<u64>)>> {
    let (pb, theta) = validate_rare(probs, rare)?;
    let totals = exact_binom_poisson(m, pb)?;
    let mut out: BTreeMap<(Vec<u64>, Vec<u64>), f64> = BTreeMap::new();
    for (&(s, n), &w) in &totals.probs {
        if w < 1e-300 {
            continue;
        }
        let xs = compositions(s, theta.len());
        if s == n {
            for x in xs {
                let v = w * multinomial_pmf(&x, &theta);
                *out.entry((x.clone(), x)).or_insert(0.0) += v;
            }
        } else {
            let us = compositions(n, theta.len());
            for x in &xs {
                let px = multinomial_pmf(x, &theta);
                for u in &us {
                    *out.entry((x.clone(), u.clone())).or_insert(0.0) += w * px * multinomial_pmf(u, &theta);
                }
            }
        }
    }
    Ok(ExactJoint {
        probs: out,
        tail: totals.tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_values() {
        let q = a1_q(0.5);
        assert!((q - (0.5 - (1.0 - (-0.5f64).exp())) / (-0.5f64).exp()).abs() < 1e-15);
        assert!((q - 0.17564).abs() < 1e-5);
        for i in 1..1000 {
            let q = a1_q(i as f64 / 1000.0);
            assert!((0.0..=1.0).contains(&q));
        }
    }

    #[test]
    fn bounds() {
        assert!((a1_bound(50, 0.02) - (1.0 - (-0.02f64).exp())).abs() < 1e-15);
        let b = a1_bound(100, 0.01);
        assert!((b - 9.95e-3).abs() < 1e-5);
        for x in [0.1f64, 0.5, 2.0] {
            assert!(-(-x).exp_m1() <= x);
        }
    }

    #[test]
    fn stream_split_is_deterministic() {
        let a = SeededStream::new(7);
        assert_eq!(a.split(3), a.split(3));
        assert_ne!(a.split(3), a.split(4));
        let mut x = SeededStream::new(1);
        let u = x.next_f64();
        assert!((0.0..1.0).contains(&u));
    }

    #[test]
    fn equal_rates_never_mismatch() {
        let r = couple_poisson_poisson(1.3, 1.3, 5, 10_000).unwrap();
        assert_eq!(r.mismatch_freq, 0.0);
        assert_eq!(r.bound, 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(couple_binom_poisson(10, 0.0, 1, 10).is_err());
        assert!(couple_binom_poisson(10, 1.0, 1, 10).is_err());
        assert!(couple_multinomial_poisson(10, &[0.5, 0.5], &[0, 1], 1, 10).is_err());
        assert!(couple_multinomial_poisson(10, &[0.5, 0.5], &[], 1, 10).is_err());
        assert!(PoissonSampler::new(31.0).is_err());
    }
}
