//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always shown.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use critshuffle::bounds::*;
use critshuffle::channel::{channel_from_intensities, ChannelSpec};
use critshuffle::coupling::*;
use critshuffle::curve::{delta_from_tradeoff, delta_np, Direction};
use critshuffle::dist::special::{binom_pmf, pois_pmf};
use critshuffle::dist::{affine_map, make_skellam, tv_distance, IntDist, LatticeDist, Rational, SkellamMethod};
use critshuffle::hybrid::*;
use critshuffle::limit::*;
use critshuffle::rr::{canonical_pair, rr_config, Calibration};

/// Criteria that cannot hold as stated; each is evaluated faithfully and expected to FAIL.
///
/// 14: at c = 0.5, n = 1e4 the blanket mean misses its limit by exactly
/// 2/(c^2 (1 + c^2 n)) = 3.2e-3, above the 1e-3 tolerance.
const KNOWN_UNATTAINABLE: &[u32] = &[14];

struct Check {
    pass: bool,
    detail: String,
}

type Outcome = Result<Check, String>;

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Ok(Check {
        pass,
        detail: detail.into(),
    })
}

fn e<T, E: std::fmt::Debug>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|x| format!("{x:?}"))
}

const HALF_DECADES: [u64; 5] = [100, 316, 1000, 3162, 10000];

fn c1_poisson_sandwich() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for c in [0.5, 1.0, 2.0] {
        let s = e(poisson_sweep(c, &HALF_DECADES, &[0.0, 1.0, 2.0]))?;
        let valid: Vec<&RateRow> = s.rows.iter().filter(|r| r.valid).collect();
        let c4 = c.powi(4);
        let sandwich = valid.iter().all(|r| {
            let n = r.n as f64;
            let (lo, hi) = ((-1.0 / (c * c)).exp() / (4.0 * c4 * n), 2.0 / (c4 * n));
            (r.lower_bound - lo).abs() <= 1e-15 * lo
                && (r.upper_bound - hi).abs() <= 1e-15 * hi
                && lo <= r.tv_exact.upper
                && r.tv_exact.lower <= hi
        });
        let slope = s.slope.unwrap_or(f64::NAN);
        let slope_ok = (slope + 1.0).abs() <= 0.1;
        ok &= sandwich && slope_ok && !valid.is_empty();
        notes.push(format!(
            "c={c}: valid {}/{} slope {slope:.4}",
            valid.len(),
            s.rows.len()
        ));
    }
    check(ok, notes.join("; "))
}

fn c2_atom_gap() -> Outcome {
    let n = 10_000u64;
    let s = e(poisson_sharp_lower(1.0, n))?;
    let (p, _) = e(canonical_pair(&e(rr_config(n, Calibration::Canonical { c: 1.0 }, 0))?))?;
    let from_pmf = p.pmf(0) - (-1.0f64).exp();
    let target = 0.5 * (-1.0f64).exp();
    let scaled = n as f64 * s.exact_atom_gap;
    let agree = (from_pmf - s.exact_atom_gap).abs() <= 1e-9 * s.exact_atom_gap;
    check(
        (scaled - target).abs() <= 0.02 * target && agree,
        format!(
            "n*gap = {scaled:.6} vs {target:.6}; pmf route {:.6}",
            n as f64 * from_pmf
        ),
    )
}

fn c3_curve_convergence() -> Outcome {
    let mut worst: f64 = 0.0;
    for c in [0.5f64, 1.0, 2.0] {
        let (lp, lq) = e(poisson_shift_pair(1.0 / (c * c), 1e-15))?;
        for n in [100u64, 1000, 10000] {
            let (p, q) = e(canonical_pair(&e(rr_config(n, Calibration::Canonical { c }, 0))?))?;
            for eps in [0.0f64, 1.0, 2.0] {
                let gap = (delta_np(&p, &q, eps, Direction::Forward).value
                    - delta_np(&lp, &lq, eps, Direction::Forward).value)
                    .abs();
                let bound = (1.0 + eps.exp()) * (2.0 / (c * c * n as f64) + 2.0 / (c.powi(4) * n as f64));
                worst = worst.max(gap / bound);
            }
        }
    }
    check(worst <= 1.0, format!("max gap/bound = {worst:.4} over 27 cells"))
}

fn c4_closed_form() -> Outcome {
    let (mut w_np, mut w_tr) = (0.0f64, 0.0f64);
    for lambda in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let (p, q) = e(poisson_shift_pair(lambda, 1e-15))?;
        let curve = e(poisson_shift_tradeoff(lambda, None))?;
        for eps in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let closed = e(poisson_shift_delta_closed(lambda, eps))?;
            w_np = w_np.max((closed - delta_np(&p, &q, eps, Direction::Forward).value).abs());
            w_tr = w_tr.max((closed - delta_from_tradeoff(&curve, eps)).abs());
        }
    }
    check(
        w_np <= 1e-12 && w_tr <= 1e-10,
        format!("series {w_np:.2e}, trade-off {w_tr:.2e}"),
    )
}

fn c5_floor() -> Outcome {
    let floor = (-1.0f64).exp();
    let (p, q) = e(poisson_shift_pair(1.0, 1e-15))?;
    let floor_err = [0.0, 1.0, 3.0, 10.0]
        .iter()
        .map(|&eps| (delta_np(&p, &q, eps, Direction::Reverse).value - floor).abs())
        .fold(0.0f64, f64::max);
    let a = e(noncommuting_demo(1.0, &[1000], &[20.0]))?;
    let b = e(noncommuting_demo(1.0, &[10000], &[3.0]))?;
    let far = a.finite[0][0];
    let near = (b.finite[0][0] - floor).abs();
    check(
        floor_err <= 1e-12 && far < 1e-6 && near <= 8.5e-3,
        format!("floor err {floor_err:.1e}; n=1e3 eps=20: {far:.2e}; n=1e4 eps=3: |d - e^-1| = {near:.2e}"),
    )
}

fn c6_skellam_sandwich() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for c in [0.5, 1.0] {
        let params = e(LimitParams::new(c, 0.5))?;
        let s = e(skellam_sweep(c, 0.5, &HALF_DECADES, &[0.0, 1.0]))?;
        let upper_ok = s.rows.iter().all(|r| {
            let bound = (2.0 * c * c + 3.0) / (c.powi(4) * r.n as f64);
            r.tv_exact.lower <= bound && r.tv_q.lower <= bound
        });
        let mut gf_ok = true;
        let mut ratio = f64::NAN;
        for r in &s.rows {
            let cfg = e(rr_config(r.n, Calibration::Canonical { c }, r.n / 2))?;
            let b = e(skellam_bounds(&cfg, &params))?;
            gf_ok &= r.tv_exact.upper >= b.gf_lower() - b.gf_slack;
            if r.n == 10000 {
                ratio = b.gf_gap / b.gf_gap_predicted;
            }
        }
        let ratio_ok = (ratio - 1.0).abs() <= 0.1;
        ok &= upper_ok && gf_ok && ratio_ok;
        notes.push(format!(
            "c={c}: upper {upper_ok}, gf lower {gf_ok}, n=1e4 gf ratio {ratio:.4}"
        ));
    }
    check(ok, notes.join("; "))
}

fn shift_one(p: &IntDist) -> Result<IntDist, String> {
    e(affine_map(p, 1, 1))
}

fn c7_skellam_structure() -> Outcome {
    let mut positive = true;
    for (l0, l1) in [(0.5, 0.5), (2.0, 0.1), (0.05, 3.0), (8.0, 8.0)] {
        let s = e(make_skellam(l0, l1, 1e-14, SkellamMethod::Bessel))?;
        positive &= s.iter().all(|(_, m)| m > 0.0);
    }
    let sk = e(make_skellam(1.0, 1e-4, 1e-14, SkellamMethod::Convolution))?;
    let (pp, pq) = e(poisson_shift_pair(1.0, 1e-14))?;
    let tv_p = tv_distance(&sk, &pp).upper;
    let tv_q = tv_distance(&shift_one(&sk)?, &pq).upper;
    let mut monotone = true;
    for eps in [0.0, 1.0] {
        let mut prev = -1.0;
        for c in [0.5, 0.75, 1.0, 1.5, 2.0] {
            let (p, q) = e(skellam_shift_pair(&e(LimitParams::new(c, 0.5))?, 1e-15))?;
            let d = delta_np(&p, &q, eps, Direction::TwoSided).value;
            monotone &= d >= prev;
            prev = d;
        }
    }
    check(
        positive && tv_p <= 1e-3 && tv_q <= 1e-3 && monotone,
        format!("positive {positive}; boundary TV {tv_p:.2e}/{tv_q:.2e}; monotone in c {monotone}"),
    )
}

fn c8_multivariate_reductions() -> Outcome {
    let c: f64 = 0.8;
    let pi = 0.3;
    let l = 1.0 / (c * c);
    let spec = e(IntensitySpec::new(
        vec!["0".into(), "1".into()],
        0,
        1,
        vec![0.0, l],
        vec![l, 0.0],
        pi,
    ))?;
    let (hp, hq) = e(compound_poisson_limit(&spec, 1e-14))?;
    let proj = |h: &LatticeDist| h.pushforward(1, |x| vec![x[1]]);
    let (sp, sq) = e(skellam_shift_pair(&e(LimitParams::new(c, pi))?, 1e-14))?;
    let one = [Rational::from_integer(0)];
    let dir = [Rational::from_integer(1)];
    let tv_p = tv_distance(&proj(&hp), &LatticeDist::embed(&sp, &one, &dir)).upper;
    let tv_q = tv_distance(&proj(&hq), &LatticeDist::embed(&sq, &one, &dir)).upper;

    let lam = 1.3;
    let boundary = e(IntensitySpec::new(
        vec!["a".into(), "b".into(), "z".into()],
        0,
        1,
        vec![0.0, lam, 0.7],
        vec![0.4, 0.0, 0.9],
        0.0,
    ))?;
    let (bp, bq) = e(compound_poisson_limit(&boundary, 1e-14))?;
    let mut worst: f64 = 0.0;
    for eps in [0.0, 0.5, 1.0, 2.0, 3.0] {
        let d = delta_np(&bp, &bq, eps, Direction::Forward).value;
        worst = worst.max((d - e(poisson_shift_delta_closed(lam, eps))?).abs());
    }
    check(
        tv_p <= 1e-10 && tv_q <= 1e-10 && worst <= 1e-10,
        format!("|Y|=2 vs Skellam TV {tv_p:.1e}/{tv_q:.1e}; pi=0 curve err {worst:.1e}"),
    )
}

fn three_letter() -> Result<IntensitySpec, String> {
    e(IntensitySpec::new(
        vec!["a".into(), "b".into(), "z".into()],
        0,
        1,
        vec![0.0, 1.0, 0.5],
        vec![0.8, 0.0, 0.3],
        0.5,
    ))
}

fn c9_multivariate_rate() -> Outcome {
    let spec = three_letter()?;
    let cspec = ChannelSpec::from(&spec);
    let limit = e(compound_poisson_limit(&spec, 1e-13))?;
    let grid = [100u64, 316, 1000, 3162];
    let s = e(rate_sweep(
        |n| {
            let ch = channel_from_intensities(&cspec, n)?;
            exact_histogram_pair(&ch, n / 2, DEFAULT_RARE_CAP)
        },
        &limit,
        |_| RowBounds {
            upper: f64::NAN,
            lower: 0.0,
            valid: true,
        },
        &grid,
        &[0.0, 1.0],
    ))?;
    let mut ok = true;
    let mut notes = Vec::new();
    for r in s.rows.iter().filter(|r| r.n == 100 || r.n == 1000) {
        let ch = e(channel_from_intensities(&cspec, r.n))?;
        let b = e(multivariate_bounds(&ch, r.n / 2, &spec))?;
        ok &= r.tv_exact.upper <= b.tv_p && r.tv_q.upper <= b.tv_q;
        notes.push(format!(
            "n={}: TV {:.3e}/{:.3e} <= {:.3e}/{:.3e}",
            r.n, r.tv_exact.upper, r.tv_q.upper, b.tv_p, b.tv_q
        ));
    }
    let slope = s.slope.unwrap_or(f64::NAN);
    ok &= (slope + 1.0).abs() <= 0.15;
    notes.push(format!("slope {slope:.4}"));
    check(ok, notes.join("; "))
}

fn c10_couplings() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let samples = 1_000_000;
    // A1: exact marginals for m <= 6, then sampling.
    for (i, &(m, p)) in [(6u64, 0.1), (4, 0.3), (5, 0.02)].iter().enumerate() {
        let j = e(exact_binom_poisson(m, p))?;
        let mut err: f64 = 0.0;
        for s in 0..=m {
            let ms: f64 = j.probs.iter().filter(|(k, _)| k.0 == s).map(|(_, v)| v).sum();
            err = err.max((ms - binom_pmf(s, m, p, 1.0 - p)).abs());
        }
        for t in 0..10 {
            let mn: f64 = j.probs.iter().filter(|(k, _)| k.1 == t).map(|(_, v)| v).sum();
            err = err.max((mn - pois_pmf(t, m as f64 * p)).abs());
        }
        let exact_mismatch = j.mismatch(|k| k.0 != k.1);
        let bound = a1_bound(m, p);
        ok &= err <= 1e-12 + j.tail && exact_mismatch <= bound + j.tail;
        let r = e(couple_binom_poisson(m, p, 1000 + i as u64, samples))?;
        ok &= r.mismatch_freq <= r.bound + r.three_sigma;
        notes.push(format!(
            "A1 m={m} p={p}: marg {err:.1e}, freq {:.4} <= {:.4}",
            r.mismatch_freq, r.bound
        ));
    }
    for (i, &(l, lp)) in [(1.0, 1.2), (0.5, 0.45), (3.0, 3.5)].iter().enumerate() {
        let j = e(exact_poisson_poisson(l, lp))?;
        let mut err: f64 = 0.0;
        for t in 0..12 {
            let a: f64 = j.probs.iter().filter(|(k, _)| k.0 == t).map(|(_, v)| v).sum();
            let b: f64 = j.probs.iter().filter(|(k, _)| k.1 == t).map(|(_, v)| v).sum();
            err = err.max((a - pois_pmf(t, l)).abs()).max((b - pois_pmf(t, lp)).abs());
        }
        let r = e(couple_poisson_poisson(l, lp, 2000 + i as u64, samples))?;
        ok &= err <= 1e-12 + j.tail && r.mismatch_freq <= r.bound + r.three_sigma;
        notes.push(format!(
            "A2 {l}->{lp}: marg {err:.1e}, freq {:.4} <= {:.4}",
            r.mismatch_freq, r.bound
        ));
    }
    let cases: [(u64, Vec<f64>, Vec<usize>); 3] = [
        (6, vec![0.9, 0.06, 0.04], vec![1, 2]),
        (5, vec![0.8, 0.1, 0.05, 0.05], vec![1, 2, 3]),
        (4, vec![0.7, 0.3], vec![1]),
    ];
    for (i, (m, probs, rare)) in cases.iter().enumerate() {
        let j = e(exact_multinomial_poisson(*m, probs, rare))?;
        let mut err: f64 = 0.0;
        for (b, &y) in rare.iter().enumerate() {
            for t in 0..=*m {
                let a: f64 = j.probs.iter().filter(|(k, _)| k.0[b] == t).map(|(_, v)| v).sum();
                let u: f64 = j.probs.iter().filter(|(k, _)| k.1[b] == t).map(|(_, v)| v).sum();
                err = err
                    .max((a - binom_pmf(t, *m, probs[y], 1.0 - probs[y])).abs())
                    .max((u - pois_pmf(t, *m as f64 * probs[y])).abs());
            }
        }
        let r = e(couple_multinomial_poisson(*m, probs, rare, 3000 + i as u64, samples))?;
        ok &= err <= 1e-12 + j.tail && r.mismatch_freq <= r.bound + r.three_sigma;
        notes.push(format!(
            "A3 m={m} |B|={}: marg {err:.1e}, freq {:.4} <= {:.4}",
            rare.len(),
            r.mismatch_freq,
            r.bound
        ));
    }
    check(ok, notes.join("; "))
}

fn c11_supercritical() -> Outcome {
    let grid = [10u64, 100, 1000, 10000];
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, rule) in [("k=0", KRule::Zero), ("k=n/2", KRule::Fraction(0.5))] {
        let t = e(supercritical_diagnostic(&Scaling::Power(2.0), rule, &grid))?;
        let last = t.rows.last().map(|r| r.tv).unwrap_or(0.0);
        ok &= t.nondecreasing && last >= 0.999;
        notes.push(format!(
            "{name}: nondecreasing {}, TV(1e4) = {last:.6}",
            t.nondecreasing
        ));
    }
    check(ok, notes.join("; "))
}

fn c12_subcritical() -> Outcome {
    let rows = e(subcritical_gaussian_check(
        0.5,
        KRule::Zero,
        &[100, 1000, 10000, 100000],
    ))?;
    let ks: Vec<f64> = rows.iter().map(|r| r.ks_null + r.defect).collect();
    let decreasing = ks.windows(2).all(|w| w[1] < w[0]);
    let last = *ks.last().unwrap();
    check(
        decreasing && last <= 0.05,
        format!(
            "KS {}",
            ks.iter().map(|k| format!("{k:.4}")).collect::<Vec<_>>().join(" > ")
        ),
    )
}

/// Projected LR of the first jump atom equals `e` exactly in the limit, which
/// makes the smoothing gap decay at its worst-case n^{-1/2} rate at eps = 1.
fn hybrid_rate_channel() -> String {
    format!(
        "alphabet = a b c d\nmode = two\ndominant0 = a b\ndominant1 = c d\nsplit0 = 1/2\nsplit1 = 1/2\nalpha0 = c:{}\npi = 0.5\n",
        2.0 * (-1.0f64).exp()
    )
}

const HYBRID_GENERIC: &str = "alphabet = a b c d\nmode = two\ndominant0 = a b\ndominant1 = c d\n\
split0 = 1/2\nsplit1 = 1/2\nalpha0 = c:1\nalpha1 = a:1\npi = 0.5\n";

const HYBRID_BOUNDARY: &str = "alphabet = a b c d\nmode = two\ndominant0 = a b\ndominant1 = c d\n\
split0 = 1/2\nsplit1 = 9/10\nalpha0 = c:0.5 d:0.5\nalpha1 = a:1\npi = 0\n";

fn c13_hybrid() -> Outcome {
    let spec = e(ChannelSpec::parse(&hybrid_rate_channel()))?;
    let model = e(hybrid_setup(&spec))?;
    let grid = default_cf_grid(&model);
    let mut sups = Vec::new();
    for n in [100u64, 1000, 10000] {
        let ch = e(channel_from_intensities(&spec, n))?;
        let t = e(hybrid_cf(&model, &ch, n / 2, &grid))?;
        sups.push(t.sup_null.max(t.sup_alt));
    }
    let cf_ok = grid.len() == 25 && sups.windows(2).all(|w| w[1] < w[0]);

    let ns = [8u64, 16, 32, 64];
    let rep = e(hybrid_delta_gap(&spec, 1.0, &ns))?;
    let within = rep.rows.iter().all(|r| r.bound.is_some_and(|b| r.gap <= b));
    let slope = rep.slope.unwrap_or(f64::NAN);
    let slope_ok = (slope + 0.5).abs() <= 0.2;
    let identity_ok = rep.common_factor_gap <= 1e-12;

    let generic = e(hybrid_delta_gap(&e(ChannelSpec::parse(HYBRID_GENERIC))?, 1.0, &ns))?;
    let generic_ok = generic.rows.iter().all(|r| r.bound.is_some_and(|b| r.gap <= b));

    // Non-vanishing: the boundary gap stays above a fixed level and does not trend down.
    let b = e(hybrid_delta_gap(&e(ChannelSpec::parse(HYBRID_BOUNDARY))?, 1.0, &ns))?;
    let b_min = b.rows.iter().map(|r| r.gap).fold(f64::MAX, f64::min);
    let b_slope = b.slope.unwrap_or(f64::NAN);
    let boundary_ok = b_min >= 0.05 && b_slope > -0.1;

    check(
        cf_ok && within && slope_ok && identity_ok && generic_ok && boundary_ok,
        format!(
            "CF sup {}; gap slope {slope:.3} (C_emp {:.3}, C_int {:.1}); identity {:.1e}; \
             generic slope {:.2}; boundary min gap {b_min:.4} slope {b_slope:.3}",
            sups.iter().map(|s| format!("{s:.2e}")).collect::<Vec<_>>().join(" > "),
            rep.rows.iter().map(|r| r.empirical_constant).fold(0.0f64, f64::max),
            rep.cint.unwrap_or(f64::NAN),
            rep.common_factor_gap,
            generic.slope.unwrap_or(f64::NAN),
        ),
    )
}

fn c14_hidden_counts() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for c in [0.5, 1.0, 2.0] {
        let r = e(hidden_count_diagnostic(c, &[10000]))?[0];
        let dc = (r.clone_mean - r.clone_limit).abs();
        let db = (r.blanket_mean - r.blanket_limit).abs();
        ok &= dc <= 1e-3 && db <= 1e-3;
        notes.push(format!("c={c}: clone {dc:.1e}, blanket {db:.1e}"));
    }
    check(ok, notes.join("; "))
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    // Skip quietly under `--list` and similar probes from the test runner.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [Criterion; 14] = [
        (
            1,
            "Poisson TV sandwich and rate",
            Duration::from_secs(30),
            c1_poisson_sandwich,
        ),
        (2, "atom-gap constant", Duration::from_secs(1), c2_atom_gap),
        (
            3,
            "privacy-curve convergence",
            Duration::from_secs(30),
            c3_curve_convergence,
        ),
        (
            4,
            "closed form vs series vs trade-off",
            Duration::from_secs(5),
            c4_closed_form,
        ),
        (5, "floor and non-commuting limits", Duration::from_secs(10), c5_floor),
        (6, "Skellam TV sandwich", Duration::from_secs(60), c6_skellam_sandwich),
        (7, "Skellam structure", Duration::from_secs(30), c7_skellam_structure),
        (
            8,
            "multivariate reductions",
            Duration::from_secs(10),
            c8_multivariate_reductions,
        ),
        (9, "multivariate rate", Duration::from_secs(120), c9_multivariate_rate),
        (10, "couplings", Duration::from_secs(120), c10_couplings),
        (
            11,
            "super-critical separation",
            Duration::from_secs(10),
            c11_supercritical,
        ),
        (
            12,
            "sub-critical Gaussianization",
            Duration::from_secs(120),
            c12_subcritical,
        ),
        (
            13,
            "hybrid CF, smoothing gap, boundary",
            Duration::from_secs(300),
            c13_hybrid,
        ),
        (14, "hidden-count means", Duration::from_secs(1), c14_hidden_counts),
    ];
    let mut unexpected = 0;
    for (id, name, budget, f) in criteria {
        let t = Instant::now();
        let out = f();
        let elapsed = t.elapsed();
        let (pass, detail) = match out {
            Ok(c) => (c.pass, c.detail),
            Err(msg) => (false, format!("error: {msg}")),
        };
        let in_time = elapsed <= budget;
        let status = if pass && in_time { "PASS" } else { "FAIL" };
        let known = KNOWN_UNATTAINABLE.contains(&id);
        let tag = match (status == "PASS", known) {
            (false, true) => " [known unattainable]",
            (true, true) => " [expected to fail, passed]",
            _ => "",
        };
        println!(
            "{status} {id:>2} {name}{tag} ({:.2}s / {}s) {detail}",
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        if (status == "PASS") == known {
            unexpected += 1;
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criterion result(s) differ from expectation");
        ExitCode::FAILURE
    }
}
