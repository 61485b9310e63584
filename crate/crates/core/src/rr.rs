//! Finite-n shuffled binary randomized response.
//!
//! Each of `n` users flips its bit with probability `delta_n = 1/(1 + e^eps0)`;
//! the analyst sees the count of reported ones. Under the null `k` users hold a
//! one; the alternative moves one user from zero to one. Counts are centered
//! at `k`, so the pair is `(A - B, 1 + A' - B')` with binomial `A`, `B`.

use crate::dist::{affine_map, convolve, make_binomial, IntDist};
use crate::error::{invalid, Result};

/// How the local privacy level is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Calibration {
    /// Explicit `eps0 > 0`.
    Explicit { eps0: f64 },
    /// Critical calibration `e^eps0 = c^2 n`.
    Canonical { c: f64 },
}

/// Scalar parameters of one finite-n instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrConfig {
    n: u64,
    k: u64,
    eps0: f64,
    exp_eps0: f64,
    delta_n: f64,
}

impl RrConfig {
    pub fn n(&self) -> u64 {
        self.n
    }
    pub fn k(&self) -> u64 {
        self.k
    }
    pub fn eps0(&self) -> f64 {
        self.eps0
    }
    /// `e^eps0`, exact under canonical calibration.
    pub fn exp_eps0(&self) -> f64 {
        self.exp_eps0
    }
    pub fn delta_n(&self) -> f64 {
        self.delta_n
    }
    /// `a_n = e^eps0 / n`.
    pub fn a_n(&self) -> f64 {
        self.exp_eps0 / self.n as f64
    }
    pub fn pi_n(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
    /// Same calibration with a different composition count.
    pub fn with_k(&self, k: u64) -> Result<Self> {
        if k >= self.n {
            return invalid(format!("k = {k} must be < n = {}", self.n));
        }
        Ok(Self { k, ..*self })
    }
}

pub fn rr_config(n: u64, calibration: Calibration, k: u64) -> Result<RrConfig> {
    if n == 0 {
        return invalid("n must be >= 1");
    }
    if k >= n {
        return invalid(format!("k = {k} must be < n = {n}"));
    }
    let (eps0, exp_eps0, delta_n) = match calibration {
        Calibration::Explicit { eps0 } => {
            if !(eps0 > 0.0) || !eps0.is_finite() {
                return invalid(format!("eps0 = {eps0} must be finite and > 0"));
            }
            let e = eps0.exp();
            (eps0, e, 1.0 / (1.0 + e))
        }
        Calibration::Canonical { c } => {
            if !(c > 0.0) || !c.is_finite() {
                return invalid(format!("c = {c} must be finite and > 0"));
            }
            let e = c * c * n as f64;
            if e <= 1.0 {
                return invalid(format!("c^2 n = {e} must exceed 1 so that eps0 > 0"));
            }
            (e.ln(), e, 1.0 / (1.0 + e))
        }
    };
    Ok(RrConfig {
        n,
        k,
        eps0,
        exp_eps0,
        delta_n,
    })
}

/// `(Bin(n, delta), Bin(n-1, delta) + Bern(1-delta))` for the all-zeros null.
pub fn canonical_pair(cfg: &RrConfig) -> Result<(IntDist, IntDist)> {
    if cfg.k != 0 {
        return invalid("canonical_pair requires k = 0");
    }
    let d = cfg.delta_n;
    let p = make_binomial(cfg.n, d)?;
    let q = convolve(&make_binomial(cfg.n - 1, d)?, &IntDist::bernoulli(1.0 - d)?);
    Ok((p, q))
}

/// Centered laws `Bin(n-k, d) - Bin(k, d)` and `1 + Bin(n-k-1, d) - Bin(k+1, d)`.
pub fn composition_pair(cfg: &RrConfig) -> Result<(IntDist, IntDist)> {
    let (n, k, d) = (cfg.n, cfg.k, cfg.delta_n);
    let p = convolve(&make_binomial(n - k, d)?, &affine_map(&make_binomial(k, d)?, -1, 0)?);
    let q = convolve(
        &make_binomial(n - k - 1, d)?,
        &affine_map(&make_binomial(k + 1, d)?, -1, 0)?,
    );
    Ok((p, affine_map(&q, 1, 1)?))
}

/// `Q(m)/P(m) = e^-eps0 + (e^eps0 - e^-eps0) m / n` for the canonical pair.
pub fn likelihood_ratio_canonical(cfg: &RrConfig, m: u64) -> Result<f64> {
    if cfg.k != 0 {
        return invalid("likelihood_ratio_canonical requires k = 0");
    }
    if m > cfg.n {
        return invalid(format!("m = {m} outside 0..={}", cfg.n));
    }
    let e = cfg.exp_eps0;
    Ok(1.0 / e + (e - 1.0 / e) * m as f64 / cfg.n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    Null,
    Alt,
}

/// Exact law of the log-likelihood ratio under one hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLaw {
    /// `(log Q/P, probability)`, values strictly increasing.
    pub atoms: Vec<(f64, f64)>,
    /// `h_n = Delta_n / sqrt(v_n)`.
    pub h: f64,
    /// `v_n = n delta (1 - delta)`.
    pub v: f64,
    /// `Delta_n = 1 - 2 delta`.
    pub big_delta: f64,
    /// Mass of the scored hypothesis on points dropped for underflow.
    pub defect: f64,
    /// Mass of the other hypothesis on the dropped points.
    pub dual_defect: f64,
}

/// Pmf entries below this are treated as underflowed.
pub const UNDERFLOW: f64 = 1e-300;

pub fn loglr_law(cfg: &RrConfig, hypothesis: Hypothesis) -> Result<ScoredLaw> {
    let (p, q) = composition_pair(cfg)?;
    let lo = p.offset().min(q.offset());
    let hi = p.max_point().max(q.max_point());
    let mut raw = Vec::with_capacity((hi - lo + 1) as usize);
    let (mut defect_p, mut defect_q) = (0.0, 0.0);
    for x in lo..=hi {
        let (pm, qm) = (p.pmf(x), q.pmf(x));
        if pm < UNDERFLOW || qm < UNDERFLOW {
            defect_p += pm;
            defect_q += qm;
            continue;
        }
        let w = match hypothesis {
            Hypothesis::Null => pm,
            Hypothesis::Alt => qm,
        };
        raw.push((qm.ln() - pm.ln(), w));
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
    for (v, w) in raw {
        match atoms.last_mut() {
            Some(last) if (v - last.0).abs() <= 1e-12 * v.abs().max(last.0.abs()).max(1.0) => last.1 += w,
            _ => atoms.push((v, w)),
        }
    }
    let (defect, dual_defect) = match hypothesis {
        Hypothesis::Null => (defect_p, defect_q),
        Hypothesis::Alt => (defect_q, defect_p),
    };
    let d = cfg.delta_n;
    let v = cfg.n as f64 * d * (1.0 - d);
    let big_delta = 1.0 - 2.0 * d;
    Ok(ScoredLaw {
        atoms,
        h: big_delta / v.sqrt(),
        v,
        big_delta,
        defect,
        dual_defect,
    })
}
