//! Exact histogram experiments for sparse-error channels and the hybrid
//! Gaussian / compound-Poisson structure of the two-dominant regime.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;

use crate::bounds::{cint_constant, loglog_slope};
use crate::channel::{ChannelSpec, Dominant, SparseChannel};
use crate::coupling::SeededStream;
use crate::curve::{delta_np, Direction};
use crate::dist::lattice::{int_point, to_f64};
use crate::dist::special::{binom_pmf, ln_factorial};
use crate::dist::{make_binomial, LatticeDist, LatticePoint, Rational};
use crate::error::{invalid, Error, Result};
use crate::limit::{compound_poisson_limit, IntensitySpec};

pub const DEFAULT_RARE_CAP: u64 = 12;
const MAX_ENUM_DIM: usize = 6;
const MAX_TWO_DOMINANT_N: u64 = 128;
const MAX_ENUM_TAIL: f64 = 1e-9;

type Matrix = Vec<Vec<Rational>>;

fn zero() -> Rational {
    Rational::from_integer(0)
}

fn rat_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn unit(d: usize, y: usize) -> Vec<Rational> {
    let mut v = vec![zero(); d];
    v[y] = Rational::from_integer(1);
    v
}

fn matvec(m: &Matrix, x: &[Rational]) -> Vec<Rational> {
    m.iter()
        .map(|row| row.iter().zip(x).fold(zero(), |acc, (a, b)| acc + a * b))
        .collect()
}

fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).fold(zero(), |acc, (x, y)| acc + x * y)
}

fn sub(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Mean output vector of one row's dominant block.
fn dominant_mean(dom: &Dominant, d: usize) -> Vec<Rational> {
    match *dom {
        Dominant::Single(y) => unit(d, y),
        Dominant::Pair { a, b, split } => {
            let mut v = vec![zero(); d];
            v[a] = split;
            v[b] = Rational::from_integer(1) - split;
            v
        }
    }
}

/// Exact law of one group's output counts, keyed in mixed radix.
struct GroupLaw {
    probs: HashMap<u64, f64>,
    tail: f64,
}

fn group_law(w: &[f64], dom: &Dominant, m: u64, cap: u64, radix: &[u64]) -> GroupLaw {
    let rare: Vec<usize> = (0..w.len()).filter(|&y| !dom.contains(y) && w[y] > 0.0).collect();
    let dom_mass: f64 = dom.members().iter().map(|&y| w[y]).sum();
    let mut probs = HashMap::new();
    let mut enumerated = 0.0;
    let ln_m = ln_factorial(m);

    // Depth-first walk over rare count vectors; `left` users remain for the dominant block.
    let mut stack: Vec<(usize, u64, f64, u64)> = vec![(0, m, ln_m, 0)];
    while let Some((idx, left, lp, key)) = stack.pop() {
        if idx < rare.len() {
            let y = rare[idx];
            let ln_w = w[y].ln();
            for r in 0..=left.min(cap) {
                let term = -ln_factorial(r) + r as f64 * ln_w;
                stack.push((idx + 1, left - r, lp + term, key + r * radix[y]));
            }
            continue;
        }
        let base = if left == 0 {
            lp.exp()
        } else if dom_mass > 0.0 {
            (lp - ln_factorial(left) + left as f64 * dom_mass.ln()).exp()
        } else {
            0.0
        };
        if base == 0.0 {
            continue;
        }
        enumerated += base;
        match *dom {
            Dominant::Single(y) => {
                *probs.entry(key + left * radix[y]).or_insert(0.0) += base;
            }
            Dominant::Pair { a, b, split } => {
                let th = rat_f64(&split);
                for x in 0..=left {
                    let pb = binom_pmf(x, left, th, 1.0 - th);
                    if pb > 0.0 {
                        *probs.entry(key + x * radix[a] + (left - x) * radix[b]).or_insert(0.0) += base * pb;
                    }
                }
            }
        }
    }
    let truncated = !rare.is_empty() && cap < m;
    let tail = if truncated { (1.0 - enumerated).max(0.0) } else { 0.0 };
    GroupLaw { probs, tail }
}

fn convolve_keys(a: &GroupLaw, b: &GroupLaw) -> GroupLaw {
    let mut probs = HashMap::with_capacity(a.probs.len() * 4);
    for (&ka, &pa) in &a.probs {
        for (&kb, &pb) in &b.probs {
            *probs.entry(ka + kb).or_insert(0.0) += pa * pb;
        }
    }
    GroupLaw {
        probs,
        tail: a.tail + b.tail,
    }
}

/// Exact laws of the centered histogram under `k` and `k + 1` one-inputs.
///
/// Both laws are centered by `(n - k) mu0 + k mu1`, so the alternative carries
/// the shift in its support. Rare counts above `rare_cap` go to `tail_mass`.
pub fn exact_histogram_pair(channel: &SparseChannel, k: u64, rare_cap: u64) -> Result<(LatticeDist, LatticeDist)> {
    let d = channel.spec.dim();
    let n = channel.n;
    if d > MAX_ENUM_DIM {
        return Err(Error::Guard(format!(
            "alphabet size {d} > {MAX_ENUM_DIM} for exact enumeration"
        )));
    }
    if channel.spec.is_two_dominant() && n > MAX_TWO_DOMINANT_N {
        return Err(Error::Guard(format!(
            "n = {n} > {MAX_TWO_DOMINANT_N} for exact two-dominant enumeration"
        )));
    }
    if k + 1 > n {
        return invalid(format!("k = {k} must be <= n - 1 = {}", n.saturating_sub(1)));
    }
    let base = n + 1;
    let mut radix = Vec::with_capacity(d);
    let mut r: u64 = 1;
    for _ in 0..d {
        radix.push(r);
        r = r
            .checked_mul(base)
            .ok_or_else(|| Error::Guard(format!("n = {n} too large for |Y| = {d} enumeration keys")))?;
    }

    let (dom0, dom1) = (&channel.spec.dom0, &channel.spec.dom1);
    let law = |m0: u64, m1: u64| {
        let g0 = group_law(&channel.w0, dom0, m0, rare_cap, &radix);
        let g1 = group_law(&channel.w1, dom1, m1, rare_cap, &radix);
        convolve_keys(&g0, &g1)
    };
    let null = law(n - k, k);
    let alt = law(n - k - 1, k + 1);
    for g in [&null, &alt] {
        if g.tail > MAX_ENUM_TAIL {
            return Err(Error::TruncationExceeded {
                what: "exact_histogram_pair",
                mass: g.tail,
                tol: MAX_ENUM_TAIL,
            });
        }
    }

    let mu0 = dominant_mean(dom0, d);
    let mu1 = dominant_mean(dom1, d);
    let (nk, kk) = (Rational::from_integer((n - k) as i64), Rational::from_integer(k as i64));
    let center: Vec<Rational> = mu0.iter().zip(&mu1).map(|(a, b)| nk * a + kk * b).collect();
    let to_lattice = |g: GroupLaw| {
        let mut points = BTreeMap::new();
        for (key, p) in g.probs {
            let pt: LatticePoint = (0..d)
                .map(|y| Rational::from_integer(((key / radix[y]) % base) as i64) - center[y])
                .collect();
            *points.entry(pt).or_insert(0.0) += p;
        }
        LatticeDist::new(d, points, g.tail)
    };
    Ok((to_lattice(null)?, to_lattice(alt)?))
}

/// One jump of the limiting Levy measure before grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    /// Input bit of the erring user.
    pub b: usize,
    /// Output letter of the error.
    pub y: usize,
    pub vector: LatticePoint,
    /// Limiting intensity `alpha_b(y)`.
    pub intensity: f64,
    /// Levy weight: the intensity times the share of users with input `b`.
    pub weight: f64,
}

/// Projections, covariance and jump structure of a two-dominant channel.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    pub dim: usize,
    pub mu0: Vec<Rational>,
    pub mu1: Vec<Rational>,
    pub g0: Vec<Rational>,
    pub g1: Vec<Rational>,
    pub pi_g: Matrix,
    pub pi_j: Matrix,
    /// Inverse Gram matrix of `(g0, g1)`.
    pub gram_inv: [[Rational; 2]; 2],
    /// Gaussian covariance in `(g0, g1)` coefficient coordinates.
    pub sigma: [[f64; 2]; 2],
    pub m0: LatticePoint,
    pub m1: LatticePoint,
    pub jumps: Vec<Jump>,
    pub delta: LatticePoint,
    pub pi: f64,
}

impl HybridModel {
    pub fn project_j(&self, x: &[Rational]) -> LatticePoint {
        matvec(&self.pi_j, x)
    }

    pub fn project_g(&self, x: &[Rational]) -> LatticePoint {
        matvec(&self.pi_g, x)
    }

    /// Covariance of the Gaussian block as a `d x d` matrix.
    pub fn sigma_full(&self) -> Vec<Vec<f64>> {
        let g0 = to_f64(&self.g0);
        let g1 = to_f64(&self.g1);
        (0..self.dim)
            .map(|i| {
                (0..self.dim)
                    .map(|j| {
                        self.sigma[0][0] * g0[i] * g0[j]
                            + self.sigma[1][1] * g1[i] * g1[j]
                            + self.sigma[0][1] * (g0[i] * g1[j] + g1[i] * g0[j])
                    })
                    .collect()
            })
            .collect()
    }

    /// Levy measure with equal jump vectors merged.
    pub fn levy_measure(&self) -> BTreeMap<LatticePoint, f64> {
        let mut nu = BTreeMap::new();
        for j in &self.jumps {
            *nu.entry(j.vector.clone()).or_insert(0.0) += j.weight;
        }
        nu
    }

    /// Coefficients of `Pi_G x` in the `(g0, g1)` frame.
    pub fn frame_coords(&self, x: &[f64]) -> [f64; 2] {
        let g0 = to_f64(&self.g0);
        let g1 = to_f64(&self.g1);
        let a: f64 = x.iter().zip(&g0).map(|(p, q)| p * q).sum();
        let b: f64 = x.iter().zip(&g1).map(|(p, q)| p * q).sum();
        let gi = self.gram_inv.map(|row| row.map(|r| rat_f64(&r)));
        [gi[0][0] * a + gi[0][1] * b, gi[1][0] * a + gi[1][1] * b]
    }
}

/// Build the hybrid model of a two-dominant channel spec at composition `spec.pi`.
pub fn hybrid_setup(spec: &ChannelSpec) -> Result<HybridModel> {
    let d = spec.dim();
    let (
        Dominant::Pair {
            a: a0,
            b: b0,
            split: p0,
        },
        Dominant::Pair {
            a: a1,
            b: b1,
            split: p1,
        },
    ) = (&spec.dom0, &spec.dom1)
    else {
        return invalid("hybrid_setup needs a two-dominant channel");
    };
    if spec.dom0.members().iter().any(|&y| spec.dom1.contains(y)) {
        return invalid("overlapping dominant pairs are not supported");
    }
    let g0 = sub(&unit(d, *a0), &unit(d, *b0));
    let g1 = sub(&unit(d, *a1), &unit(d, *b1));
    let (g00, g01, g11) = (dot(&g0, &g0), dot(&g0, &g1), dot(&g1, &g1));
    let det = g00 * g11 - g01 * g01;
    if det == zero() {
        return invalid("degenerate Gram matrix");
    }
    let gram_inv = [[g11 / det, -g01 / det], [-g01 / det, g00 / det]];
    let gs = [&g0, &g1];
    let pi_g: Matrix = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let mut s = zero();
                    for (r, gr) in gs.iter().enumerate() {
                        for (c, gc) in gs.iter().enumerate() {
                            s += gr[i] * gram_inv[r][c] * gc[j];
                        }
                    }
                    s
                })
                .collect()
        })
        .collect();
    let pi_j: Matrix = (0..d)
        .map(|i| (0..d).map(|j| unit(d, i)[j] - pi_g[i][j]).collect())
        .collect();

    let mu0 = dominant_mean(&spec.dom0, d);
    let mu1 = dominant_mean(&spec.dom1, d);
    let m0 = matvec(&pi_j, &mu0);
    let m1 = matvec(&pi_j, &mu1);
    if m0 == m1 {
        return invalid("projected dominant means coincide");
    }
    let delta = sub(&m1, &m0);

    let var = |p: &Rational| {
        let p = rat_f64(p);
        p * (1.0 - p)
    };
    // Disjoint pairs give an orthogonal frame, so the coefficient covariance is diagonal.
    debug_assert!(g01 == zero());
    let sigma = [[(1.0 - spec.pi) * var(p0), 0.0], [0.0, spec.pi * var(p1)]];

    let mut jumps = Vec::new();
    for (b, (alpha, dom, mu, w)) in [
        (&spec.alpha0, &spec.dom0, &mu0, 1.0 - spec.pi),
        (&spec.alpha1, &spec.dom1, &mu1, spec.pi),
    ]
    .into_iter()
    .enumerate()
    {
        for (y, &a) in alpha.iter().enumerate() {
            if dom.contains(y) || a == 0.0 || w == 0.0 {
                continue;
            }
            jumps.push(Jump {
                b,
                y,
                vector: matvec(&pi_j, &sub(&unit(d, y), mu)),
                intensity: a,
                weight: w * a,
            });
        }
    }
    Ok(HybridModel {
        dim: d,
        mu0,
        mu1,
        g0,
        g1,
        pi_g,
        pi_j,
        gram_inv,
        sigma,
        m0,
        m1,
        jumps,
        delta,
        pi: spec.pi,
    })
}

/// Pushforward of a histogram pair through `Pi_J`, grouping points exactly.
pub fn project_jump_pair(pair: &(LatticeDist, LatticeDist), model: &HybridModel) -> Result<(LatticeDist, LatticeDist)> {
    if pair.0.dim() != model.dim || pair.1.dim() != model.dim {
        return invalid("histogram dimension does not match the hybrid model");
    }
    let f = |x: &[Rational]| model.project_j(x);
    Ok((pair.0.pushforward(model.dim, f), pair.1.pushforward(model.dim, f)))
}

/// Limit pair `(L(J), L(J + Delta))` of the projected jump experiment.
///
/// Built by grouping equal projected letters `Pi_J e_y` into a single-dominant
/// alphabet, taking its compound-Poisson limit, and mapping each coordinate
/// back to its projected letter.
pub fn projected_limit_pair(model: &HybridModel, tail_eps: f64) -> Result<(LatticeDist, LatticeDist)> {
    let d = model.dim;
    let mut letters: Vec<LatticePoint> = Vec::new();
    let index_of = |w: LatticePoint, letters: &mut Vec<LatticePoint>| match letters.iter().position(|x| *x == w) {
        Some(i) => i,
        None => {
            letters.push(w);
            letters.len() - 1
        }
    };
    let y0 = index_of(model.m0.clone(), &mut letters);
    let y1 = index_of(model.m1.clone(), &mut letters);
    let mut pending = Vec::new();
    for j in &model.jumps {
        let mb = if j.b == 0 { &model.m0 } else { &model.m1 };
        let w: LatticePoint = j.vector.iter().zip(mb).map(|(a, b)| a + b).collect();
        pending.push((j.b, index_of(w, &mut letters), j.intensity));
    }
    let dj = letters.len();
    let mut alpha = [vec![0.0; dj], vec![0.0; dj]];
    for (b, idx, intensity) in pending {
        alpha[b][idx] += intensity;
    }
    let [alpha0, alpha1] = alpha;
    let spec = IntensitySpec::new(
        (0..dj).map(|i| format!("w{i}")).collect(),
        y0,
        y1,
        alpha0,
        alpha1,
        model.pi,
    )?;
    let (p, q) = compound_poisson_limit(&spec, tail_eps)?;
    let map = |h: &[Rational]| -> LatticePoint {
        let mut out = vec![zero(); d];
        for (hw, w) in h.iter().zip(&letters) {
            for (o, c) in out.iter_mut().zip(w) {
                *o += hw * c;
            }
        }
        out
    };
    Ok((p.pushforward(d, map), q.pushforward(d, map)))
}

/// Same limit pair, built directly as a sum of independent Poisson multiples of each jump.
pub fn projected_limit_pair_ungrouped(model: &HybridModel, tail_eps: f64) -> Result<(LatticeDist, LatticeDist)> {
    let share = tail_eps / model.jumps.len().max(1) as f64;
    let mut p = LatticeDist::point_mass(vec![zero(); model.dim]);
    for j in &model.jumps {
        p = p.add_along(&crate::dist::make_poisson(j.weight, share)?, &j.vector);
    }
    let q = p.shift(&model.delta);
    Ok((p, q))
}

/// One `(u, v)` evaluation point; `u` pairs with the Gaussian block, `v` with the jump block.
#[derive(Debug, Clone, PartialEq)]
pub struct CfPoint {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfTable {
    pub grid: Vec<CfPoint>,
    pub finite_null: Vec<Complex64>,
    pub finite_alt: Vec<Complex64>,
    pub limit_null: Vec<Complex64>,
    pub limit_alt: Vec<Complex64>,
    pub sup_null: f64,
    pub sup_alt: f64,
}

/// Fixed 25-point grid: five Gaussian directions times five jump frequencies.
pub fn default_cf_grid(model: &HybridModel) -> Vec<CfPoint> {
    let d = model.dim;
    let g0 = to_f64(&model.g0);
    let g1 = to_f64(&model.g1);
    let ramp: Vec<Rational> = (0..d).map(|i| Rational::from_integer(i as i64 + 1)).collect();
    let r = to_f64(&model.project_j(&ramp));
    let us = [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5), (1.0, -0.7)];
    let vs = [0.0, 0.3, 0.8, 1.5, 2.5];
    let mut grid = Vec::with_capacity(25);
    for &(s, t) in &us {
        for &th in &vs {
            grid.push(CfPoint {
                u: (0..d).map(|i| s * g0[i] + t * g1[i]).collect(),
                v: r.iter().map(|x| th * x).collect(),
            });
        }
    }
    grid
}

fn fdot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Characteristic functions of `S_n = (n^{-1/2} Pi_G H, Pi_J H)` and of the limit, on `grid`.
pub fn hybrid_cf(model: &HybridModel, channel: &SparseChannel, k: u64, grid: &[CfPoint]) -> Result<CfTable> {
    let d = model.dim;
    let n = channel.n;
    if k + 1 > n {
        return invalid(format!("k = {k} must be <= n - 1"));
    }
    if n > i32::MAX as u64 {
        return invalid("n too large");
    }
    if grid.iter().any(|g| g.u.len() != d || g.v.len() != d) {
        return invalid("grid point of wrong dimension");
    }
    let sqrt_n = (n as f64).sqrt();
    let sig = model.sigma_full();
    let nu = model.levy_measure();
    let delta = to_f64(&model.delta);
    let mus = [&model.mu0, &model.mu1];
    // Per-letter projected offsets e_y - mu_b in both blocks.
    let offsets: Vec<Vec<(Vec<f64>, Vec<f64>)>> = mus
        .iter()
        .map(|mu| {
            (0..d)
                .map(|y| {
                    let e = sub(&unit(d, y), mu);
                    (to_f64(&model.project_g(&e)), to_f64(&model.project_j(&e)))
                })
                .collect()
        })
        .collect();
    let shift_g = to_f64(&model.project_g(&sub(&model.mu1, &model.mu0)));

    let mut table = CfTable {
        grid: grid.to_vec(),
        finite_null: Vec::new(),
        finite_alt: Vec::new(),
        limit_null: Vec::new(),
        limit_alt: Vec::new(),
        sup_null: 0.0,
        sup_alt: 0.0,
    };
    for pt in grid {
        let phi = |b: usize| -> Complex64 {
            let w = channel.row(b);
            (0..d)
                .filter(|&y| w[y] > 0.0)
                .map(|y| {
                    let (og, oj) = &offsets[b][y];
                    w[y] * Complex64::from_polar(1.0, fdot(&pt.u, og) / sqrt_n + fdot(&pt.v, oj))
                })
                .sum()
        };
        let (f0, f1) = (phi(0), phi(1));
        let null = f0.powi((n - k) as i32) * f1.powi(k as i32);
        let alt = f0.powi((n - k - 1) as i32)
            * f1.powi((k + 1) as i32)
            * Complex64::from_polar(1.0, fdot(&pt.u, &shift_g) / sqrt_n + fdot(&pt.v, &delta));
        let quad: f64 = (0..d).map(|i| pt.u[i] * fdot(&sig[i], &pt.u)).sum();
        let mut expo = Complex64::new(-0.5 * quad, 0.0);
        for (jv, &wt) in &nu {
            expo += wt * (Complex64::from_polar(1.0, fdot(&pt.v, &to_f64(jv))) - 1.0);
        }
        let lim = expo.exp();
        let lim_alt = lim * Complex64::from_polar(1.0, fdot(&pt.v, &delta));
        table.sup_null = table.sup_null.max((null - lim).norm());
        table.sup_alt = table.sup_alt.max((alt - lim_alt).norm());
        table.finite_null.push(null);
        table.finite_alt.push(alt);
        table.limit_null.push(lim);
        table.limit_alt.push(lim_alt);
    }
    Ok(table)
}

/// One Monte Carlo draw of `S_n`: Gaussian block in `(g0, g1)` coordinates, exact jump block.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridSample {
    pub gauss: [f64; 2],
    pub jump: LatticePoint,
}

/// Inversion sampler for binomials, caching one cdf per `(m, p)`.
#[derive(Default)]
struct BinomialCache {
    cdfs: HashMap<(u64, u64), (i64, Vec<f64>)>,
}

impl BinomialCache {
    fn draw(&mut self, m: u64, p: f64, stream: &mut SeededStream) -> Result<u64> {
        let u = stream.next_f64();
        if m == 0 || p <= 0.0 {
            return Ok(0);
        }
        if p >= 1.0 {
            return Ok(m);
        }
        let entry = match self.cdfs.entry((m, p.to_bits())) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                let law = make_binomial(m, p)?;
                let mut acc = 0.0;
                let mut cdf: Vec<f64> = law
                    .mass()
                    .iter()
                    .map(|x| {
                        acc += x;
                        acc
                    })
                    .collect();
                if let Some(last) = cdf.last_mut() {
                    *last = f64::INFINITY;
                }
                e.insert((law.offset(), cdf))
            }
        };
        let i = entry.1.partition_point(|&c| c < u);
        Ok((entry.0 + i as i64) as u64)
    }
}

fn draw_group(
    counts: &mut [u64],
    w: &[f64],
    dom: &Dominant,
    m: u64,
    cache: &mut BinomialCache,
    stream: &mut SeededStream,
) -> Result<()> {
    let rare: Vec<usize> = (0..w.len()).filter(|&y| !dom.contains(y) && w[y] > 0.0).collect();
    let mut left = m;
    for (i, &y) in rare.iter().enumerate() {
        let rest: f64 = rare[i..].iter().map(|&z| w[z]).sum::<f64>() + dom.members().iter().map(|&z| w[z]).sum::<f64>();
        let r = cache.draw(left, (w[y] / rest).min(1.0), stream)?;
        counts[y] += r;
        left -= r;
    }
    match *dom {
        Dominant::Single(y) => counts[y] += left,
        Dominant::Pair { a, b, split } => {
            let x = cache.draw(left, rat_f64(&split), stream)?;
            counts[a] += x;
            counts[b] += left - x;
        }
    }
    Ok(())
}

/// Seeded draws of `S_n` under the null `T_{n,k}`.
pub fn hybrid_mc_sample(channel: &SparseChannel, k: u64, seed: u64, n_samples: usize) -> Result<Vec<HybridSample>> {
    let model = hybrid_setup(&channel.spec)?;
    let (d, n) = (model.dim, channel.n);
    if k > n {
        return invalid("k must be <= n");
    }
    let (nk, kk) = (Rational::from_integer((n - k) as i64), Rational::from_integer(k as i64));
    let center: Vec<Rational> = model.mu0.iter().zip(&model.mu1).map(|(a, b)| nk * a + kk * b).collect();
    let center_f = to_f64(&center);
    let center_j = model.project_j(&center);
    let sqrt_n = (n as f64).sqrt();
    let mut stream = SeededStream::new(seed);
    let mut cache = BinomialCache::default();
    let mut out = Vec::with_capacity(n_samples);
    let mut counts = vec![0u64; d];
    for _ in 0..n_samples {
        counts.iter_mut().for_each(|c| *c = 0);
        draw_group(
            &mut counts,
            &channel.w0,
            &channel.spec.dom0,
            n - k,
            &mut cache,
            &mut stream,
        )?;
        draw_group(&mut counts, &channel.w1, &channel.spec.dom1, k, &mut cache, &mut stream)?;
        let h: Vec<f64> = counts.iter().zip(&center_f).map(|(c, m)| *c as f64 - m).collect();
        let fc = model.frame_coords(&h);
        let nj = model.project_j(&int_point(&counts.iter().map(|&c| c as i64).collect::<Vec<_>>()));
        out.push(HybridSample {
            gauss: [fc[0] / sqrt_n, fc[1] / sqrt_n],
            jump: sub(&nj, &center_j),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub n: u64,
    pub k: u64,
    pub delta_full: f64,
    pub delta_proj: f64,
    pub gap: f64,
    /// `C_int (1 + e^eps) / sqrt(n)`; `None` at a boundary composition.
    pub bound: Option<f64>,
    /// `gap * sqrt(n) / (1 + e^eps)`.
    pub empirical_constant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub eps: f64,
    pub rows: Vec<GapRow>,
    pub cint: Option<f64>,
    pub slope: Option<f64>,
    /// `|delta(limit x R) - delta(limit)|` for an independent common factor `R`.
    pub common_factor_gap: f64,
}

/// Exact full-versus-projected privacy-curve gap along `n_grid`, with `k = floor(pi n)`.
///
/// The smoothing bound is only reported for interior compositions; boundary
/// compositions are accepted so the non-vanishing gap there can be observed.
pub fn hybrid_delta_gap(spec: &ChannelSpec, eps: f64, n_grid: &[u64]) -> Result<GapReport> {
    if !(eps >= 0.0) {
        return invalid("eps must be >= 0");
    }
    let model = hybrid_setup(spec)?;
    let cint = if spec.pi > 0.0 && spec.pi < 1.0 {
        match (&spec.dom0, &spec.dom1) {
            (Dominant::Pair { split: p0, .. }, Dominant::Pair { split: p1, .. }) => cint_constant(
                rat_f64(p0),
                rat_f64(p1),
                spec.pi,
                spec.rare_total(0),
                spec.rare_total(1),
            )
            .ok(),
            _ => None,
        }
    } else {
        None
    };
    let factor = 1.0 + eps.exp();
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let k = ((spec.pi * n as f64).floor() as u64).min(n.saturating_sub(1));
        let channel = crate::channel::channel_from_intensities(spec, n)?;
        let full = exact_histogram_pair(&channel, k, DEFAULT_RARE_CAP)?;
        let proj = project_jump_pair(&full, &model)?;
        let delta_full = delta_np(&full.0, &full.1, eps, Direction::Forward).value;
        let delta_proj = delta_np(&proj.0, &proj.1, eps, Direction::Forward).value;
        let gap = (delta_full - delta_proj).abs();
        rows.push(GapRow {
            n,
            k,
            delta_full,
            delta_proj,
            gap,
            bound: cint.map(|c| c * factor / (n as f64).sqrt()),
            empirical_constant: gap * (n as f64).sqrt() / factor,
        });
    }
    let slope = loglog_slope(&rows.iter().map(|r| (r.n as f64, r.gap)).collect::<Vec<_>>());

    let (pl, ql) = projected_limit_pair(&model, 1e-12)?;
    let base = delta_np(&pl, &ql, eps, Direction::Forward).value;
    let common = common_factor()?;
    let with = delta_np(&pl.product(&common), &ql.product(&common), eps, Direction::Forward).value;
    Ok(GapReport {
        eps,
        rows,
        cint,
        slope,
        common_factor_gap: (with - base).abs(),
    })
}

/// A lattice stand-in for the Gaussian factor: independent centered binomials on `g0`, `g1`.
fn common_factor() -> Result<LatticeDist> {
    let b = make_binomial(8, 0.5)?;
    let a = LatticeDist::embed(&b, &[Rational::from_integer(-2)], &[Rational::new(1, 2)]);
    Ok(a.product(&a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::channel_from_intensities;
    use crate::dist::tv_distance;

    fn two_dominant(alpha0: [f64; 4], alpha1: [f64; 4], p0: Rational, p1: Rational, pi: f64) -> ChannelSpec {
        ChannelSpec::new(
            ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect(),
            Dominant::Pair { a: 0, b: 1, split: p0 },
            Dominant::Pair { a: 2, b: 3, split: p1 },
            alpha0.to_vec(),
            alpha1.to_vec(),
            pi,
        )
        .unwrap()
    }

    fn half() -> Rational {
        Rational::new(1, 2)
    }

    #[test]
    fn projections_are_exact() {
        let spec = two_dominant(
            [0.0, 0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            Rational::new(1, 3),
            half(),
            0.5,
        );
        let m = hybrid_setup(&spec).unwrap();
        assert_eq!(m.gram_inv, [[half(), zero()], [zero(), half()]]);
        let d = m.dim;
        let mul = |a: &Matrix, b: &Matrix| -> Matrix {
            (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| (0..d).fold(zero(), |s, t| s + a[i][t] * b[t][j]))
                        .collect()
                })
                .collect()
        };
        assert_eq!(mul(&m.pi_g, &m.pi_g), m.pi_g);
        assert_eq!(mul(&m.pi_j, &m.pi_j), m.pi_j);
        assert!(mul(&m.pi_g, &m.pi_j).iter().flatten().all(|x| *x == zero()));
        assert!(m.project_j(&m.g0).iter().all(|x| *x == zero()));
        assert!(m.project_j(&m.g1).iter().all(|x| *x == zero()));
        assert!(m.delta.iter().all(|x| 2 % *x.denom() == 0));
        assert_ne!(m.m0, m.m1);
    }

    #[test]
    fn deterministic_channel_gives_point_masses() {
        let spec = two_dominant(
            [0.0; 4],
            [0.0; 4],
            Rational::from_integer(1),
            Rational::from_integer(0),
            0.5,
        );
        let ch = channel_from_intensities(&spec, 10).unwrap();
        let pair = exact_histogram_pair(&ch, 5, DEFAULT_RARE_CAP).unwrap();
        assert_eq!(pair.0.len(), 1);
        assert_eq!(pair.0.prob(&int_point(&[0, 0, 0, 0])), 1.0);
        // split 1 on D0 and split 0 on D1: one user moves from a to d.
        assert_eq!(pair.1.prob(&int_point(&[-1, 0, 0, 1])), 1.0);
        let model = hybrid_setup(&spec).unwrap();
        let proj = project_jump_pair(&pair, &model).unwrap();
        assert_eq!(proj.1.prob(&model.delta), 1.0);
        let rep = hybrid_delta_gap(&spec, 1.0, &[8, 16]).unwrap();
        assert!(rep.rows.iter().all(|r| r.gap == 0.0));
    }

    #[test]
    fn limit_routes_agree() {
        let spec = two_dominant(
            [0.0, 0.0, 1.0, 0.5],
            [0.7, 0.0, 0.0, 0.0],
            half(),
            Rational::new(1, 4),
            0.4,
        );
        let m = hybrid_setup(&spec).unwrap();
        let a = projected_limit_pair(&m, 1e-13).unwrap();
        let b = projected_limit_pair_ungrouped(&m, 1e-13).unwrap();
        assert!(tv_distance(&a.0, &b.0).upper < 1e-11);
        assert!(tv_distance(&a.1, &b.1).upper < 1e-11);
        let gp = m.levy_measure();
        let total: f64 = gp.values().sum();
        assert!((total - (0.6 * 1.5 + 0.4 * 0.7)).abs() < 1e-15);
    }

    #[test]
    fn cf_at_origin_and_gaussian_slice() {
        let spec = two_dominant([0.0, 0.0, 1.0, 0.0], [1.0, 0.0, 0.0, 0.0], half(), half(), 0.5);
        let m = hybrid_setup(&spec).unwrap();
        let ch = channel_from_intensities(&spec, 100).unwrap();
        let grid = default_cf_grid(&m);
        assert_eq!(grid.len(), 25);
        let t = hybrid_cf(&m, &ch, 50, &grid).unwrap();
        assert!((t.finite_null[0] - 1.0).norm() < 1e-12);
        assert!((t.limit_null[0] - 1.0).norm() < 1e-15);
        // v = 0 rows: limit is exp(-u'Su/2).
        for i in (0..25).step_by(5) {
            assert!(t.limit_null[i].im.abs() < 1e-15 && t.limit_null[i].re > 0.0);
        }
    }

    #[test]
    fn enumeration_guards() {
        let spec = two_dominant([0.0, 0.0, 1.0, 0.0], [1.0, 0.0, 0.0, 0.0], half(), half(), 0.5);
        let ch = channel_from_intensities(&spec, 200).unwrap();
        assert!(matches!(exact_histogram_pair(&ch, 100, 12), Err(Error::Guard(_))));
        let ch = channel_from_intensities(&spec, 20).unwrap();
        assert!(exact_histogram_pair(&ch, 20, 12).is_err());
    }
}
