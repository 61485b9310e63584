//! Explicit bound formulas, rate sweeps and regime diagnostics.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{Dominant, SparseChannel};
use crate::curve::{curve_stability_bound, delta_np, Direction};
use crate::dist::special::std_normal_cdf;
use crate::dist::{tv_distance, DiscreteLaw, IntDist, TvInterval};
use crate::error::{invalid, Error, Result};
use crate::limit::{poisson_shift_delta_closed, poisson_shift_pair, skellam_shift_pair, IntensitySpec, LimitParams};
use crate::rr::{canonical_pair, composition_pair, loglr_law, rr_config, Calibration, Hypothesis, RrConfig};

/// Terms of the Poisson-shift TV bounds for the all-zeros null.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonBounds {
    pub delta_n: f64,
    pub n_delta_sq: f64,
    /// `n delta_n - lambda`, signed.
    pub lambda_n_minus_lambda: f64,
    /// `(n - 1) delta_n - lambda`, signed.
    pub lambda_n1_minus_lambda: f64,
    /// `n delta (1 - e^-delta) + |lambda_n - lambda|`.
    pub tv_p: f64,
    /// `delta + (n - 1) delta (1 - e^-delta) + |lambda_{n-1} - lambda|`.
    pub tv_q: f64,
    pub tv_p_loose: f64,
    pub tv_q_loose: f64,
    /// `2/(c^2 n) + 2/(c^4 n)` with `c^2 = a_n`.
    pub canonical_composite: f64,
}

pub fn poisson_bounds(cfg: &RrConfig, lambda: f64) -> PoissonBounds {
    let n = cfg.n() as f64;
    let d = cfg.delta_n();
    let shrink = -(-d).exp_m1();
    let dl = n * d - lambda;
    let dl1 = (n - 1.0) * d - lambda;
    let c2 = cfg.a_n();
    PoissonBounds {
        delta_n: d,
        n_delta_sq: n * d * d,
        lambda_n_minus_lambda: dl,
        lambda_n1_minus_lambda: dl1,
        tv_p: n * d * shrink + dl.abs(),
        tv_q: d + (n - 1.0) * d * shrink + dl1.abs(),
        tv_p_loose: n * d * d + dl.abs(),
        tv_q_loose: d + (n - 1.0) * d * d + dl1.abs(),
        canonical_composite: 2.0 / (c2 * n) + 2.0 / (c2 * c2 * n),
    }
}

/// `u - log(1 + u)` without cancellation for small `u`.
fn u_minus_log1p(u: f64) -> f64 {
    if u.abs() < 1e-2 {
        // Alternating series u^2/2 - u^3/3 + ...; 12 terms reach machine precision here.
        let mut term = u;
        let mut s = 0.0;
        for j in 2..14 {
            term *= -u;
            s -= term / j as f64;
        }
        s
    } else {
        u - u.ln_1p()
    }
}

/// Sharp lower bound and atom-gap prediction for the canonical Poisson regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpLower {
    /// `e^{-1/c^2} / (4 c^4 n)`.
    pub lower_bound: f64,
    /// `e^{-1/c^2} / (2 c^4 n)`.
    pub predicted_atom_gap: f64,
    /// `(1 + 1/(c^2 n))^{-n} - e^{-1/c^2}`.
    pub exact_atom_gap: f64,
}

pub fn poisson_sharp_lower(c: f64, n: u64) -> Result<SharpLower> {
    if !(c > 0.0) || n == 0 {
        return invalid("poisson_sharp_lower needs c > 0 and n >= 1");
    }
    let (c2, nf) = (c * c, n as f64);
    let lambda = 1.0 / c2;
    let floor = (-lambda).exp();
    let u = 1.0 / (c2 * nf);
    Ok(SharpLower {
        lower_bound: floor / (4.0 * c2 * c2 * nf),
        predicted_atom_gap: floor / (2.0 * c2 * c2 * nf),
        exact_atom_gap: floor * (nf * u_minus_log1p(u)).exp_m1(),
    })
}

/// Terms of the Skellam-shift TV bounds and the generating-function lower proxy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkellamBounds {
    pub n_delta_sq: f64,
    pub lambda0_gap: f64,
    pub lambda1_gap: f64,
    pub lambda0_gap_alt: f64,
    pub lambda1_gap_alt: f64,
    pub tv_p: f64,
    pub tv_q: f64,
    pub tv_p_loose: f64,
    pub tv_q_loose: f64,
    /// `(2 c^2 + 3) / (c^4 n)` with `c^2 = a_n`.
    pub canonical_composite: f64,
    /// `e^{-1/c^2} / (4 c^4 n)`.
    pub sharp_lower: f64,
    /// `|G_n(i) - G_inf(i)|` from the exact pmfs.
    pub gf_gap: f64,
    /// `|G_inf(i)|` in closed form.
    pub gf_limit_abs: f64,
    /// `|G_inf(i)| sqrt(1/c^8 + 4 alpha_n^2 / c^4) / n`.
    pub gf_gap_predicted: f64,
    /// Truncated limit mass, bounding the error of `gf_gap`.
    pub gf_slack: f64,
}

impl SkellamBounds {
    /// `|G_n(i) - G_inf(i)| / 2`, a lower bound on `TV(P_n, P_inf)` up to `gf_slack`.
    pub fn gf_lower(&self) -> f64 {
        0.5 * self.gf_gap
    }
}

/// `sum_d p(d) i^d`.
fn gf_at_i(law: &IntDist) -> Complex64 {
    let units = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, -1.0),
    ];
    law.iter().map(|(d, p)| p * units[d.rem_euclid(4) as usize]).sum()
}

pub fn skellam_bounds(cfg: &RrConfig, params: &LimitParams) -> Result<SkellamBounds> {
    if !(params.pi > 0.0 && params.pi < 1.0) {
        return invalid("skellam_bounds needs an interior composition");
    }
    let (n, k) = (cfg.n() as f64, cfg.k() as f64);
    let d = cfg.delta_n();
    let shrink = -(-d).exp_m1();
    let (l0, l1) = (params.lambda0, params.lambda1);
    let g0 = ((n - k) * d - l0).abs();
    let g1 = (k * d - l1).abs();
    let g0a = ((n - k - 1.0) * d - l0).abs();
    let g1a = ((k + 1.0) * d - l1).abs();
    let c2 = cfg.a_n();
    let c4 = c2 * c2;
    let pc4 = params.c.powi(4);
    let (p, _) = composition_pair(cfg)?;
    let (lim, _) = skellam_shift_pair(params, 1e-15)?;
    let gf_gap = (gf_at_i(&p) - gf_at_i(&lim)).norm();
    let g_inf = (Complex64::new(l0, 0.0) * (Complex64::i() - 1.0) + l1 * (-Complex64::i() - 1.0)).exp();
    let alpha_n = k - params.pi * n;
    Ok(SkellamBounds {
        n_delta_sq: n * d * d,
        lambda0_gap: g0,
        lambda1_gap: g1,
        lambda0_gap_alt: g0a,
        lambda1_gap_alt: g1a,
        tv_p: n * d * shrink + g0 + g1,
        tv_q: n * d * shrink + g0a + g1a,
        tv_p_loose: n * d * d + g0 + g1,
        tv_q_loose: n * d * d + g0a + g1a,
        canonical_composite: (2.0 * c2 + 3.0) / (c4 * n),
        sharp_lower: (-params.lambda).exp() / (4.0 * pc4 * n),
        gf_gap,
        gf_limit_abs: g_inf.norm(),
        gf_gap_predicted: g_inf.norm() * (1.0 / (pc4 * pc4) + 4.0 * alpha_n * alpha_n / pc4).sqrt() / n,
        gf_slack: lim.tail_mass(),
    })
}

/// Terms of the multivariate TV bounds for a single-dominant channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateBounds {
    /// `1 - W_0(y0)`.
    pub p0n: f64,
    /// `1 - W_1(y1)`.
    pub p1n: f64,
    pub binomial_p: f64,
    pub binomial_q: f64,
    pub mismatch_p: f64,
    pub mismatch_q: f64,
    pub tv_p: f64,
    pub tv_q: f64,
}

pub fn multivariate_bounds(channel: &SparseChannel, k: u64, spec: &IntensitySpec) -> Result<MultivariateBounds> {
    let (Dominant::Single(y0), Dominant::Single(y1)) = (&channel.spec.dom0, &channel.spec.dom1) else {
        return invalid("multivariate_bounds needs a single-dominant channel");
    };
    let (y0, y1) = (*y0, *y1);
    if spec.dim() != channel.spec.dim() || spec.y0 != y0 || spec.y1 != y1 {
        return invalid("intensity spec does not match the channel");
    }
    let n = channel.n;
    if k >= n {
        return invalid(format!("k = {k} must be < n = {n}"));
    }
    let (nk, kf) = ((n - k) as f64, k as f64);
    // Rare masses summed directly: 1 - W(y) would cancel.
    let p0n: f64 = (0..spec.dim()).filter(|&y| y != y0).map(|y| channel.w0[y]).sum();
    let p1n: f64 = (0..spec.dim()).filter(|&y| y != y1).map(|y| channel.w1[y]).sum();
    let s0 = p0n * -(-p0n).exp_m1();
    let s1 = p1n * -(-p1n).exp_m1();
    let mismatch = |m0: f64, m1: f64| -> f64 {
        let a: f64 = (0..spec.dim())
            .filter(|&y| y != y0)
            .map(|y| (m0 * channel.w0[y] - (1.0 - spec.pi) * spec.alpha0[y]).abs())
            .sum();
        let b: f64 = (0..spec.dim())
            .filter(|&y| y != y1)
            .map(|y| (m1 * channel.w1[y] - spec.pi * spec.alpha1[y]).abs())
            .sum();
        a + b
    };
    let binomial_p = nk * s0 + kf * s1;
    let binomial_q = (nk - 1.0) * s0 + (kf + 1.0) * s1;
    let mismatch_p = mismatch(nk, kf);
    let mismatch_q = mismatch(nk - 1.0, kf + 1.0);
    Ok(MultivariateBounds {
        p0n,
        p1n,
        binomial_p,
        binomial_q,
        mismatch_p,
        mismatch_q,
        tv_p: binomial_p + mismatch_p,
        tv_q: binomial_q + mismatch_q,
    })
}

/// Interior conditional-smoothing constant for the two-dominant hybrid experiment.
///
/// `kappa = min(pi, 1 - pi) / 4`; `lambda0`, `lambda1` are the total rare
/// intensities of the two rows.
pub fn cint_constant(p0: f64, p1: f64, pi: f64, lambda0: f64, lambda1: f64) -> Result<f64> {
    for (name, v) in [("p0", p0), ("p1", p1), ("pi", pi)] {
        if !(v > 0.0 && v < 1.0) {
            return invalid(format!("cint_constant: {name} = {v} must lie in (0, 1)"));
        }
    }
    if !(lambda0 >= 0.0 && lambda1 >= 0.0) {
        return invalid("cint_constant: intensities must be >= 0");
    }
    let kappa = pi.min(1.0 - pi) / 4.0;
    let l = lambda0 + lambda1;
    let c = (2.0 / (p0 * (1.0 - p0))).sqrt() + (2.0 / (p1 * (1.0 - p1))).sqrt();
    Ok(c * (2.0 * l / (2.0 * kappa).sqrt() + (2.0 * l + 4.0 * l * l) / kappa))
}

/// Ordinary least-squares slope of `ln y` against `ln x`.
///
/// Points with a non-positive coordinate are skipped; `None` if fewer than two remain
/// or all `x` coincide.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// `round(10^x)` for `x = lo, lo + 1/per_decade, ..., hi`.
pub fn geometric_grid(lo_exp: f64, hi_exp: f64, per_decade: u32) -> Vec<u64> {
    let steps = ((hi_exp - lo_exp) * per_decade as f64).round() as u32;
    (0..=steps)
        .map(|i| 10f64.powf(lo_exp + i as f64 / per_decade as f64).round() as u64)
        .collect()
}

/// Paper bounds attached to one sweep row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowBounds {
    pub upper: f64,
    pub lower: f64,
    /// Whether the "sufficiently large n" condition of the lower bound holds at this `n`.
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub n: u64,
    /// `TV(P_n, P_inf)`.
    pub tv_exact: TvInterval,
    /// `TV(Q_n, Q_inf)`.
    pub tv_q: TvInterval,
    pub upper_bound: f64,
    pub lower_bound: f64,
    /// `|delta_n(eps) - delta_inf(eps)|` at the eps maximizing its ratio to the stability bound.
    pub delta_gap: f64,
    /// `TV(Q_n, Q) + e^eps TV(P_n, P)` at the eps achieving `delta_gap`.
    pub stability_bound: f64,
    pub eps_at_gap: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<RateRow>,
    /// OLS slope of `ln tv` on `ln n` over rows with `n >= 100`.
    pub slope: Option<f64>,
    /// Every row has `tv` indistinguishable from 0, so no rate is defined.
    pub degenerate: bool,
}

/// TV values below this are treated as zero when fitting rates.
const TV_ZERO: f64 = 1e-12;

/// Exact TV and privacy-curve gaps between `builder(n)` and a fixed limit pair.
///
/// Rows are computed in parallel and returned in grid order.
pub fn rate_sweep<L, B, F>(
    builder: B,
    limit: &(L, L),
    bounds: F,
    n_grid: &[u64],
    eps_grid: &[f64],
) -> Result<SweepResult>
where
    L: DiscreteLaw + Sync,
    B: Fn(u64) -> Result<(L, L)> + Sync,
    F: Fn(u64) -> RowBounds + Sync,
{
    if n_grid.len() < 4 {
        return invalid("rate_sweep needs at least 4 grid points");
    }
    if n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("n_grid must be strictly increasing");
    }
    let ratios: Vec<f64> = n_grid.windows(2).map(|w| (w[1] as f64 / w[0] as f64).ln()).collect();
    let (rmin, rmax) = ratios
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &r| (a.min(r), b.max(r)));
    if rmax > 1.25 * rmin + 0.05 {
        return invalid("n_grid must be (approximately) geometric");
    }
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e >= 0.0)) {
        return invalid("eps_grid must be nonempty with eps >= 0");
    }
    let limit_deltas: Vec<f64> = eps_grid
        .iter()
        .map(|&e| delta_np(&limit.0, &limit.1, e, Direction::Forward).value)
        .collect();
    let rows: Vec<RateRow> = n_grid
        .par_iter()
        .map(|&n| -> Result<RateRow> {
            let (p, q) = builder(n)?;
            let tv_p = tv_distance(&p, &limit.0);
            let tv_q = tv_distance(&q, &limit.1);
            let mut worst = (f64::NEG_INFINITY, 0.0, 0.0, eps_grid[0]);
            for (&e, &dl) in eps_grid.iter().zip(&limit_deltas) {
                let gap = (delta_np(&p, &q, e, Direction::Forward).value - dl).abs();
                let bound = curve_stability_bound(tv_p, tv_q, e);
                let ratio = if bound > 0.0 { gap / bound } else { gap };
                if ratio > worst.0 {
                    worst = (ratio, gap, bound, e);
                }
            }
            let b = bounds(n);
            Ok(RateRow {
                n,
                tv_exact: tv_p,
                tv_q,
                upper_bound: b.upper,
                lower_bound: b.lower,
                delta_gap: worst.1,
                stability_bound: worst.2,
                eps_at_gap: worst.3,
                valid: b.valid,
            })
        })
        .collect::<Result<_>>()?;
    let degenerate = rows.iter().all(|r| r.tv_exact.upper < TV_ZERO);
    if !degenerate {
        for r in rows.iter().filter(|r| r.tv_exact.upper >= TV_ZERO) {
            let slack = r.tv_exact.width();
            if slack > 0.01 * r.tv_exact.lower {
                return Err(Error::TruncationExceeded {
                    what: "rate_sweep",
                    mass: slack,
                    tol: 0.01 * r.tv_exact.lower,
                });
            }
        }
    }
    let slope = if degenerate {
        None
    } else {
        loglog_slope(
            &rows
                .iter()
                .filter(|r| r.n >= 100)
                .map(|r| (r.n as f64, r.tv_exact.lower))
                .collect::<Vec<_>>(),
        )
    };
    Ok(SweepResult {
        rows,
        slope,
        degenerate,
    })
}

/// Canonical RR (all-zeros null) against the Poisson-shift limit with `lambda = 1/c^2`.
pub fn poisson_sweep(c: f64, n_grid: &[u64], eps_grid: &[f64]) -> Result<SweepResult> {
    let limit = poisson_shift_pair(1.0 / (c * c), 1e-15)?;
    rate_sweep(
        |n| canonical_pair(&rr_config(n, Calibration::Canonical { c }, 0)?),
        &limit,
        |n| match poisson_sharp_lower(c, n) {
            Ok(s) => RowBounds {
                upper: 2.0 / (c.powi(4) * n as f64),
                lower: s.lower_bound,
                valid: s.exact_atom_gap >= s.lower_bound,
            },
            Err(_) => RowBounds {
                upper: f64::NAN,
                lower: f64::NAN,
                valid: false,
            },
        },
        n_grid,
        eps_grid,
    )
}

/// Composition RR with `k = floor(pi n)` against the Skellam-shift limit.
pub fn skellam_sweep(c: f64, pi: f64, n_grid: &[u64], eps_grid: &[f64]) -> Result<SweepResult> {
    let params = LimitParams::new(c, pi)?;
    let limit = skellam_shift_pair(&params, 1e-15)?;
    let cfg_at = |n: u64| rr_config(n, Calibration::Canonical { c }, (pi * n as f64).floor() as u64);
    rate_sweep(
        |n| composition_pair(&cfg_at(n)?),
        &limit,
        |n| match cfg_at(n).and_then(|cfg| skellam_bounds(&cfg, &params)) {
            Ok(b) => RowBounds {
                upper: b.canonical_composite,
                lower: b.sharp_lower,
                valid: b.gf_lower() - b.gf_slack >= b.sharp_lower,
            },
            Err(_) => RowBounds {
                upper: f64::NAN,
                lower: f64::NAN,
                valid: false,
            },
        },
        n_grid,
        eps_grid,
    )
}

/// How `e^eps0` scales with `n`.
#[derive(Debug, Clone, PartialEq)]
pub enum Scaling {
    /// `e^eps0 = n^alpha`.
    Power(f64),
    /// `e^eps0 = c^2 n`.
    Canonical(f64),
    /// Explicit `eps0` per grid point.
    Explicit(Vec<f64>),
}

impl Scaling {
    /// `eps0` at the `i`-th grid point `n`.
    pub fn eps0_at(&self, i: usize, n: u64) -> Result<f64> {
        match self {
            Scaling::Power(a) => Ok(a * (n as f64).ln()),
            Scaling::Canonical(c) => Ok((c * c * n as f64).ln()),
            Scaling::Explicit(v) => v
                .get(i)
                .copied()
                .ok_or_else(|| Error::InvalidParameter("explicit eps0 sequence shorter than n_grid".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    Subcritical,
    Critical { c: f64 },
    Supercritical,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeVerdict {
    pub regime: Regime,
    /// `(n, a_n)` with `a_n = e^eps0 / n`.
    pub a_n_trace: Vec<(u64, f64)>,
    /// Log-log slope of the trace.
    pub slope: Option<f64>,
}

/// Trace slopes within this of zero count as a constant `a_n`.
const CRITICAL_SLOPE_TOL: f64 = 0.05;
/// A critical trace must also stay within this ratio of its minimum.
const CRITICAL_SPREAD: f64 = 1.5;

pub fn classify_regime(scaling: &Scaling, n_grid: &[u64]) -> Result<RegimeVerdict> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[1] <= w[0]) || n_grid[0] == 0 {
        return invalid("n_grid must be nonempty, positive and strictly increasing");
    }
    if let Scaling::Explicit(v) = scaling {
        if v.len() != n_grid.len() {
            return invalid("explicit eps0 sequence must match n_grid");
        }
    }
    let trace: Vec<(u64, f64)> = n_grid
        .iter()
        .enumerate()
        .map(|(i, &n)| Ok((n, scaling.eps0_at(i, n)?.exp() / n as f64)))
        .collect::<Result<_>>()?;
    let slope = loglog_slope(&trace.iter().map(|&(n, a)| (n as f64, a)).collect::<Vec<_>>());
    let regime = match scaling {
        Scaling::Power(a) if *a < 1.0 => Regime::Subcritical,
        Scaling::Power(a) if *a > 1.0 => Regime::Supercritical,
        Scaling::Power(_) => Regime::Critical { c: 1.0 },
        Scaling::Canonical(c) => Regime::Critical { c: *c },
        Scaling::Explicit(_) => {
            let nonincreasing = trace.windows(2).all(|w| w[1].1 <= w[0].1);
            let nondecreasing = trace.windows(2).all(|w| w[1].1 >= w[0].1);
            let (lo, hi) = trace
                .iter()
                .fold((f64::MAX, 0.0f64), |(a, b), t| (a.min(t.1), b.max(t.1)));
            match slope {
                Some(s) if s.abs() <= CRITICAL_SLOPE_TOL && hi <= CRITICAL_SPREAD * lo => Regime::Critical {
                    c: trace[trace.len() - 1].1.sqrt(),
                },
                Some(s) if s < 0.0 && nonincreasing => Regime::Subcritical,
                Some(s) if s > 0.0 && nondecreasing => Regime::Supercritical,
                _ => Regime::Indeterminate,
            }
        }
    };
    Ok(RegimeVerdict {
        regime,
        a_n_trace: trace,
        slope,
    })
}

/// Number of one-inputs as a function of `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KRule {
    Zero,
    /// `k = floor(f n)`, capped at `n - 1`.
    Fraction(f64),
}

impl KRule {
    pub fn k(&self, n: u64) -> u64 {
        match *self {
            KRule::Zero => 0,
            KRule::Fraction(f) => ((f * n as f64).floor() as u64).min(n.saturating_sub(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupercriticalRow {
    pub n: u64,
    pub k: u64,
    pub eps0: f64,
    pub tv: f64,
    /// `P(K = k)` under the null.
    pub p_separation: f64,
    /// `Q(K = k)` under the alternative.
    pub q_separation: f64,
    /// `L_n(0) = e^{-eps0}`.
    pub lr_at_zero: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupercriticalTable {
    pub rows: Vec<SupercriticalRow>,
    pub nondecreasing: bool,
}

pub fn supercritical_diagnostic(scaling: &Scaling, k_rule: KRule, n_grid: &[u64]) -> Result<SupercriticalTable> {
    let verdict = classify_regime(scaling, n_grid)?;
    if verdict.regime != Regime::Supercritical {
        return invalid(format!("scaling is not supercritical: {:?}", verdict.regime));
    }
    let rows: Vec<SupercriticalRow> = n_grid
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let eps0 = scaling.eps0_at(i, n)?;
            let cfg = rr_config(n, Calibration::Explicit { eps0 }, k_rule.k(n))?;
            let (p, q) = composition_pair(&cfg)?;
            Ok(SupercriticalRow {
                n,
                k: cfg.k(),
                eps0,
                tv: tv_distance(&p, &q).lower,
                p_separation: p.pmf(0),
                q_separation: q.pmf(0),
                lr_at_zero: (-eps0).exp(),
            })
        })
        .collect::<Result<_>>()?;
    let nondecreasing = rows.windows(2).all(|w| w[1].tv >= w[0].tv);
    Ok(SupercriticalTable { rows, nondecreasing })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsRow {
    pub n: u64,
    pub k: u64,
    pub h: f64,
    /// KS distance of `(Lambda + h^2/2)/h` under the null to `N(0, 1)`.
    pub ks_null: f64,
    /// KS distance of `(Lambda - h^2/2)/h` under the alternative.
    pub ks_alt: f64,
    /// Mass dropped to underflow, an additive slack on both distances.
    pub defect: f64,
}

/// Exact KS distance between the discrete law `atoms` (sorted values) and `Phi`.
fn ks_to_normal(atoms: &[(f64, f64)]) -> f64 {
    let mut cdf = 0.0;
    let mut ks: f64 = 0.0;
    for &(z, p) in atoms {
        let phi = std_normal_cdf(z);
        ks = ks.max((cdf - phi).abs());
        cdf += p;
        ks = ks.max((cdf - phi).abs());
    }
    ks
}

/// Gaussianization check for `e^eps0 = n^alpha` with `alpha` in (0, 1).
pub fn subcritical_gaussian_check(alpha: f64, k_rule: KRule, n_grid: &[u64]) -> Result<Vec<KsRow>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha = {alpha} must lie in (0, 1)"));
    }
    n_grid
        .par_iter()
        .map(|&n| {
            let cfg = rr_config(
                n,
                Calibration::Explicit {
                    eps0: alpha * (n as f64).ln(),
                },
                k_rule.k(n),
            )?;
            let null = loglr_law(&cfg, Hypothesis::Null)?;
            let alt = loglr_law(&cfg, Hypothesis::Alt)?;
            let h = null.h;
            let std = |law: &[(f64, f64)], sign: f64| -> Vec<(f64, f64)> {
                law.iter().map(|&(l, p)| ((l + sign * 0.5 * h * h) / h, p)).collect()
            };
            Ok(KsRow {
                n,
                k: cfg.k(),
                h,
                ks_null: ks_to_normal(&std(&null.atoms, 1.0)),
                ks_alt: ks_to_normal(&std(&alt.atoms, -1.0)),
                defect: null.defect.max(alt.defect),
            })
        })
        .collect()
}

/// Gaussian-DP privacy curve `Phi(-eps/mu + mu/2) - e^eps Phi(-eps/mu - mu/2)`.
pub fn gdp_delta(mu: f64, eps: f64) -> f64 {
    (std_normal_cdf(-eps / mu + mu / 2.0) - eps.exp() * std_normal_cdf(-eps / mu - mu / 2.0)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeRow {
    pub c: f64,
    pub eps: f64,
    pub delta_poisson: f64,
    pub delta_skellam: f64,
    pub delta_gauss: f64,
    pub gap_poisson: f64,
    pub gap_skellam: f64,
}

/// Poisson- and Skellam-shift curves against GDP with `mu = c` as `c` shrinks.
pub fn gaussian_edge_compare(c_grid: &[f64], eps_grid: &[f64]) -> Result<Vec<EdgeRow>> {
    if c_grid.iter().any(|c| !(*c > 0.0 && *c <= 1.0)) {
        return invalid("c_grid must lie in (0, 1]");
    }
    let mut rows = Vec::new();
    for &c in c_grid {
        let (sp, sq) = skellam_shift_pair(&LimitParams::new(c, 0.5)?, 1e-14)?;
        for &eps in eps_grid {
            let dp = poisson_shift_delta_closed(1.0 / (c * c), eps)?;
            let ds = delta_np(&sp, &sq, eps, Direction::Forward).value;
            let dg = gdp_delta(c, eps);
            rows.push(EdgeRow {
                c,
                eps,
                delta_poisson: dp,
                delta_skellam: ds,
                delta_gauss: dg,
                gap_poisson: (dp - dg).abs(),
                gap_skellam: (ds - dg).abs(),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HiddenCountRow {
    pub n: u64,
    /// `(n - 1) e^{-eps0}`.
    pub clone_mean: f64,
    pub clone_limit: f64,
    /// `2 n delta_n`, the blanket mean with `gamma_n = 2 delta_n`.
    pub blanket_mean: f64,
    pub blanket_limit: f64,
}

pub fn hidden_count_diagnostic(c: f64, n_grid: &[u64]) -> Result<Vec<HiddenCountRow>> {
    n_grid
        .iter()
        .map(|&n| {
            let cfg = rr_config(n, Calibration::Canonical { c }, 0)?;
            let c2 = c * c;
            Ok(HiddenCountRow {
                n,
                clone_mean: (n - 1) as f64 / cfg.exp_eps0(),
                clone_limit: 1.0 / c2,
                blanket_mean: 2.0 * n as f64 * cfg.delta_n(),
                blanket_limit: 2.0 / c2,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonCommuting {
    pub n_grid: Vec<u64>,
    pub eps_grid: Vec<f64>,
    /// `delta_two` of the finite-n experiment, indexed `[n][eps]`.
    pub finite: Vec<Vec<f64>>,
    /// `delta_two` of the Poisson-shift limit per eps.
    pub limit: Vec<f64>,
    /// `e^{-lambda}`.
    pub floor: f64,
    /// `(1 + e^eps)(2/(c^2 n) + 2/(c^4 n))`, indexed `[n][eps]`.
    pub stability: Vec<Vec<f64>>,
}

/// Two-sided curves along both limits: `eps -> inf` at fixed `n`, and `n -> inf` at fixed `eps`.
pub fn noncommuting_demo(c: f64, n_grid: &[u64], eps_grid: &[f64]) -> Result<NonCommuting> {
    let lambda = 1.0 / (c * c);
    let (lp, lq) = poisson_shift_pair(lambda, 1e-15)?;
    let limit: Vec<f64> = eps_grid
        .iter()
        .map(|&e| delta_np(&lp, &lq, e, Direction::TwoSided).value)
        .collect();
    let mut finite = Vec::new();
    let mut stability = Vec::new();
    for &n in n_grid {
        let (p, q) = canonical_pair(&rr_config(n, Calibration::Canonical { c }, 0)?)?;
        finite.push(
            eps_grid
                .iter()
                .map(|&e| delta_np(&p, &q, e, Direction::TwoSided).value)
                .collect(),
        );
        let comp = 2.0 / (c * c * n as f64) + 2.0 / (c.powi(4) * n as f64);
        stability.push(eps_grid.iter().map(|&e| (1.0 + e.exp()) * comp).collect());
    }
    Ok(NonCommuting {
        n_grid: n_grid.to_vec(),
        eps_grid: eps_grid.to_vec(),
        finite,
        limit,
        floor: (-lambda).exp(),
        stability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_bound_examples() {
        let cfg = rr_config(100, Calibration::Canonical { c: 1.0 }, 0).unwrap();
        let b = poisson_bounds(&cfg, 1.0);
        assert!((b.canonical_composite - 0.04).abs() < 1e-15);
        assert!((b.lambda_n_minus_lambda + 1.0 / 101.0).abs() < 1e-15);
        assert!(b.tv_p <= b.tv_p_loose && b.tv_q <= b.tv_q_loose);
        assert!(b.tv_q_loose <= b.canonical_composite + 1e-15);
        let far = poisson_bounds(&rr_config(1 << 40, Calibration::Canonical { c: 1.0 }, 0).unwrap(), 1.0);
        assert!(far.tv_q < 1e-11);
    }

    #[test]
    fn atom_gap() {
        // Oracle: direct evaluation in extended precision is unavailable, so compare
        // against the two-term expansion at large n, where O(n^-2) is tiny.
        for c in [0.5, 1.0, 2.0] {
            let n = 1_000_000u64;
            let s = poisson_sharp_lower(c, n).unwrap();
            let c2: f64 = c * c;
            let l = 1.0 / c2;
            let nf = n as f64;
            let series = (-l).exp() * ((1.0 / (2.0 * c2 * c2 * nf) - 1.0 / (3.0 * c2.powi(3) * nf * nf)).exp() - 1.0);
            assert!((s.exact_atom_gap - series).abs() < 1e-6 * series, "c={c}");
            assert!(s.exact_atom_gap >= 0.0);
        }
        let s = poisson_sharp_lower(1.0, 10_000).unwrap();
        assert!((10_000.0 * s.exact_atom_gap - 0.5 * (-1.0f64).exp()).abs() <= 0.004);
        assert!((u_minus_log1p(1e-3) - (1e-3 - 1e-3f64.ln_1p())).abs() < 1e-18);
    }

    #[test]
    fn skellam_examples() {
        let params = LimitParams::new(1.0, 0.5).unwrap();
        let cfg = rr_config(100, Calibration::Canonical { c: 1.0 }, 50).unwrap();
        let b = skellam_bounds(&cfg, &params).unwrap();
        assert!((b.canonical_composite - 0.05).abs() < 1e-15);
        assert!((b.gf_limit_abs - (-1.0f64).exp()).abs() < 1e-15);
        assert!(b.tv_p_loose <= b.canonical_composite);
        assert!(skellam_bounds(&cfg, &LimitParams::new(1.0, 0.0).unwrap()).is_err());
    }

    #[test]
    fn cint_examples() {
        let v = cint_constant(0.5, 0.5, 0.5, 0.5, 0.5).unwrap();
        // (2 sqrt 8) * (2/sqrt(1/4) + (2 + 4)/(1/8)) = 5.656854... * 52
        assert!((v - 8f64.sqrt() * 2.0 * 52.0).abs() < 1e-10);
        assert_eq!(
            cint_constant(0.3, 0.6, 0.4, 0.2, 0.7).unwrap(),
            cint_constant(0.6, 0.3, 0.4, 0.7, 0.2).unwrap()
        );
        assert!(cint_constant(0.5, 0.5, 0.5, 0.5, 0.6).unwrap() > v);
        assert!(cint_constant(0.5, 0.5, 0.0, 0.5, 0.5).is_err());
        assert!(cint_constant(0.5, 0.5, 1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn slope_and_grid() {
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0].iter().map(|&x: &f64| (x, 3.0 / x)).collect();
        assert!((loglog_slope(&pts).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&[(1.0, 1.0)]), None);
        assert_eq!(geometric_grid(2.0, 4.0, 2), vec![100, 316, 1000, 3162, 10000]);
    }

    #[test]
    fn regimes() {
        let grid = geometric_grid(1.0, 4.0, 1);
        let v = |s: Scaling| classify_regime(&s, &grid).unwrap().regime;
        assert_eq!(v(Scaling::Power(0.5)), Regime::Subcritical);
        assert_eq!(v(Scaling::Canonical(2.0)), Regime::Critical { c: 2.0 });
        assert_eq!(v(Scaling::Power(2.0)), Regime::Supercritical);
        let explicit = |f: &dyn Fn(f64) -> f64| Scaling::Explicit(grid.iter().map(|&n| f(n as f64)).collect());
        match v(explicit(&|n| (4.0 * n).ln())) {
            Regime::Critical { c } => assert!((c - 2.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert_eq!(v(explicit(&|n| 0.5 * n.ln())), Regime::Subcritical);
        assert_eq!(v(explicit(&|n| (n * n.ln()).ln())), Regime::Supercritical);
        assert_eq!(v(Scaling::Explicit(vec![2.0, 9.0, 3.0, 12.0])), Regime::Indeterminate);
    }

    #[test]
    fn hidden_counts() {
        let rows = hidden_count_diagnostic(1.0, &[10_000]).unwrap();
        assert!((rows[0].clone_mean - 1.0).abs() <= 2e-4);
        assert!((rows[0].blanket_mean - 2.0).abs() <= 1e-3);
    }

    #[test]
    fn gdp_limits() {
        assert!(gdp_delta(1e-3, 1.0) < 1e-300);
        // eps = 0 gives TV of two unit-variance normals mu apart.
        assert!((gdp_delta(1.0, 0.0) - (2.0 * std_normal_cdf(0.5) - 1.0)).abs() < 1e-15);
    }
}
