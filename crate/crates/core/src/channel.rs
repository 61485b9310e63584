//! Sparse-error channels on a finite alphabet and their text format.
//!
//! A channel spec lists, for each input bit `b`, its dominant output (or
//! dominant pair with a split) and the limiting intensities `alpha_b(y)` of the
//! rare outputs. Instantiating at population size `n` puts mass
//! `alpha_b(y) / n` on each rare output and the remainder on the dominant block.
//!
//! ```text
//! # two-dominant example
//! alphabet  = a b c d
//! mode      = two          # or: single
//! dominant0 = a b          # single mode: one symbol
//! dominant1 = c d
//! split0    = 1/2          # share of the first dominant symbol (two mode only)
//! split1    = 0.3
//! alpha0    = c:1 d:0.25   # symbol:intensity, omitted symbols are 0
//! alpha1    = a:1
//! pi        = 0.5          # optional, default 0.5
//! ```

use std::collections::BTreeMap;

use crate::dist::Rational;
use crate::error::{invalid, Error, Result};
use crate::limit::IntensitySpec;

/// Dominant block of one channel row.
#[derive(Debug, Clone, PartialEq)]
pub enum Dominant {
    Single(usize),
    /// Outputs `a`, `b` receive shares `split` and `1 - split` of the dominant mass.
    Pair {
        a: usize,
        b: usize,
        split: Rational,
    },
}

impl Dominant {
    pub fn contains(&self, y: usize) -> bool {
        match *self {
            Dominant::Single(s) => s == y,
            Dominant::Pair { a, b, .. } => a == y || b == y,
        }
    }

    pub fn members(&self) -> Vec<usize> {
        match *self {
            Dominant::Single(s) => vec![s],
            Dominant::Pair { a, b, .. } => vec![a, b],
        }
    }
}

/// Limiting description of a sparse-error channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub alphabet: Vec<String>,
    pub dom0: Dominant,
    pub dom1: Dominant,
    pub alpha0: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub pi: f64,
}

impl ChannelSpec {
    pub fn new(
        alphabet: Vec<String>,
        dom0: Dominant,
        dom1: Dominant,
        alpha0: Vec<f64>,
        alpha1: Vec<f64>,
        pi: f64,
    ) -> Result<Self> {
        let d = alphabet.len();
        if d < 2 {
            return invalid("alphabet needs at least two symbols");
        }
        let mut names = alphabet.clone();
        names.sort();
        names.dedup();
        if names.len() != d {
            return invalid("alphabet symbols must be distinct");
        }
        for dom in [&dom0, &dom1] {
            if dom.members().iter().any(|&y| y >= d) {
                return invalid("dominant output outside the alphabet");
            }
            if let Dominant::Pair { a, b, split } = dom {
                if a == b {
                    return invalid("dominant pair needs two distinct outputs");
                }
                if *split < Rational::from_integer(0) || *split > Rational::from_integer(1) {
                    return invalid("split must lie in [0, 1]");
                }
            }
        }
        match (&dom0, &dom1) {
            (Dominant::Single(a), Dominant::Single(b)) if a == b => {
                return invalid("dominant outputs y0 and y1 must differ")
            }
            (Dominant::Single(_), Dominant::Single(_)) => {}
            (Dominant::Pair { .. }, Dominant::Pair { .. }) => {
                if dom0.members().iter().any(|&y| dom1.contains(y)) {
                    return invalid("overlapping dominant pairs are not supported");
                }
            }
            _ => return invalid("both rows must use the same dominant mode"),
        }
        if alpha0.len() != d || alpha1.len() != d {
            return invalid("intensity vectors must match the alphabet length");
        }
        if alpha0.iter().chain(&alpha1).any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return invalid("intensities must be finite and >= 0");
        }
        if dom0.members().iter().any(|&y| alpha0[y] != 0.0) || dom1.members().iter().any(|&y| alpha1[y] != 0.0) {
            return invalid("intensity on a row's own dominant outputs must be 0");
        }
        if !(0.0..=1.0).contains(&pi) {
            return invalid(format!("pi = {pi} outside [0, 1]"));
        }
        Ok(Self {
            alphabet,
            dom0,
            dom1,
            alpha0,
            alpha1,
            pi,
        })
    }

    pub fn dim(&self) -> usize {
        self.alphabet.len()
    }

    pub fn is_two_dominant(&self) -> bool {
        matches!(self.dom0, Dominant::Pair { .. })
    }

    pub fn with_pi(&self, pi: f64) -> Result<Self> {
        let mut s = self.clone();
        s.pi = pi;
        Self::new(s.alphabet, s.dom0, s.dom1, s.alpha0, s.alpha1, s.pi)
    }

    /// Single-dominant view, if the spec is in that mode.
    pub fn intensity_spec(&self) -> Result<IntensitySpec> {
        match (&self.dom0, &self.dom1) {
            (Dominant::Single(y0), Dominant::Single(y1)) => IntensitySpec::new(
                self.alphabet.clone(),
                *y0,
                *y1,
                self.alpha0.clone(),
                self.alpha1.clone(),
                self.pi,
            ),
            _ => invalid("channel is not single-dominant"),
        }
    }

    /// Total rare intensity `Lambda_b` of row `b`.
    pub fn rare_total(&self, b: usize) -> f64 {
        if b == 0 {
            self.alpha0.iter().sum()
        } else {
            self.alpha1.iter().sum()
        }
    }

    /// Parse the declarative text format described in the module docs.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(Error::Parse {
                line: i + 1,
                msg: "expected `key = value`".into(),
            })?;
            let key = k.trim().to_string();
            if kv.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        let need = |key: &str| {
            kv.get(key).cloned().ok_or(Error::Parse {
                line: 0,
                msg: format!("missing key `{key}`"),
            })
        };
        let (_, alpha_line) = need("alphabet")?;
        let alphabet: Vec<String> = alpha_line.split_whitespace().map(str::to_string).collect();
        let index = |line: usize, sym: &str| {
            alphabet.iter().position(|s| s == sym).ok_or(Error::Parse {
                line,
                msg: format!("unknown symbol `{sym}`"),
            })
        };
        let (mline, mode) = need("mode")?;
        let two = match mode.as_str() {
            "single" => false,
            "two" => true,
            other => {
                return Err(Error::Parse {
                    line: mline,
                    msg: format!("mode must be `single` or `two`, got `{other}`"),
                })
            }
        };
        let dominant = |b: usize| -> Result<Dominant> {
            let (line, v) = need(&format!("dominant{b}"))?;
            let syms: Vec<&str> = v.split_whitespace().collect();
            if two {
                if syms.len() != 2 {
                    return Err(Error::Parse {
                        line,
                        msg: "two mode needs a pair of dominant symbols".into(),
                    });
                }
                let (sl, sv) = need(&format!("split{b}"))?;
                let split = parse_rational(&sv).map_err(|msg| Error::Parse { line: sl, msg })?;
                Ok(Dominant::Pair {
                    a: index(line, syms[0])?,
                    b: index(line, syms[1])?,
                    split,
                })
            } else {
                if syms.len() != 1 {
                    return Err(Error::Parse {
                        line,
                        msg: "single mode needs exactly one dominant symbol".into(),
                    });
                }
                Ok(Dominant::Single(index(line, syms[0])?))
            }
        };
        let dom0 = dominant(0)?;
        let dom1 = dominant(1)?;
        let intensities = |b: usize| -> Result<Vec<f64>> {
            let mut out = vec![0.0; alphabet.len()];
            if let Some((line, v)) = kv.get(&format!("alpha{b}")) {
                for item in v.split_whitespace() {
                    let (sym, val) = item.split_once(':').ok_or(Error::Parse {
                        line: *line,
                        msg: format!("expected `symbol:value`, got `{item}`"),
                    })?;
                    let y = index(*line, sym)?;
                    out[y] = val.parse().map_err(|_| Error::Parse {
                        line: *line,
                        msg: format!("bad intensity `{val}`"),
                    })?;
                }
            }
            Ok(out)
        };
        let pi = match kv.get("pi") {
            Some((line, v)) => v.parse().map_err(|_| Error::Parse {
                line: *line,
                msg: format!("bad pi `{v}`"),
            })?,
            None => 0.5,
        };
        let known = [
            "alphabet",
            "mode",
            "dominant0",
            "dominant1",
            "split0",
            "split1",
            "alpha0",
            "alpha1",
            "pi",
        ];
        if let Some((k, (line, _))) = kv.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            return Err(Error::Parse {
                line: *line,
                msg: format!("unknown key `{k}`"),
            });
        }
        Self::new(alphabet.clone(), dom0, dom1, intensities(0)?, intensities(1)?, pi)
    }
}

impl From<&IntensitySpec> for ChannelSpec {
    fn from(s: &IntensitySpec) -> Self {
        Self {
            alphabet: s.alphabet.clone(),
            dom0: Dominant::Single(s.y0),
            dom1: Dominant::Single(s.y1),
            alpha0: s.alpha0.clone(),
            alpha1: s.alpha1.clone(),
            pi: s.pi,
        }
    }
}

/// `"3/8"`, `"0.375"` or `"1"` as an exact rational.
pub fn parse_rational(s: &str) -> std::result::Result<Rational, String> {
    let s = s.trim();
    let bad = || format!("bad rational `{s}`");
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| bad())?;
        let d: i64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() > 15 || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let neg = int.starts_with('-');
    let int_v: i64 = if int.is_empty() || int == "-" {
        0
    } else {
        int.parse().map_err(|_| bad())?
    };
    let scale = 10i64.pow(frac.len() as u32);
    let frac_v: i64 = if frac.is_empty() {
        0
    } else {
        frac.parse().map_err(|_| bad())?
    };
    let num = int_v.abs() * scale + frac_v;
    Ok(Rational::new(if neg { -num } else { num }, scale))
}

/// A channel instantiated at population size `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseChannel {
    pub spec: ChannelSpec,
    pub n: u64,
    /// Row `W_0`, a probability vector over the alphabet.
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
}

impl SparseChannel {
    /// A channel with explicit rows, for instantiations that are not exact-rate.
    pub fn from_rows(spec: &ChannelSpec, n: u64, w0: Vec<f64>, w1: Vec<f64>) -> Result<Self> {
        let d = spec.dim();
        if n == 0 {
            return invalid("n must be >= 1");
        }
        for w in [&w0, &w1] {
            if w.len() != d || w.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return invalid("channel rows must be probability vectors over the alphabet");
            }
            if (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return invalid("channel row does not sum to 1");
            }
        }
        Ok(Self {
            spec: spec.clone(),
            n,
            w0,
            w1,
        })
    }

    pub fn row(&self, b: usize) -> &[f64] {
        if b == 0 {
            &self.w0
        } else {
            &self.w1
        }
    }

    pub fn dominant(&self, b: usize) -> &Dominant {
        if b == 0 {
            &self.spec.dom0
        } else {
            &self.spec.dom1
        }
    }
}

fn rat_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn instantiate_row(alpha: &[f64], dom: &Dominant, n: u64) -> Result<Vec<f64>> {
    let nf = n as f64;
    let mut w: Vec<f64> = alpha.iter().map(|a| a / nf).collect();
    let rest = 1.0 - w.iter().sum::<f64>();
    if rest < 0.0 {
        return invalid(format!("n = {n} too small: rare intensities exceed n"));
    }
    match *dom {
        Dominant::Single(y) => w[y] = rest,
        Dominant::Pair { a, b, split } => {
            let s = rat_f64(&split);
            w[a] = rest * s;
            w[b] = rest * (1.0 - s);
        }
    }
    Ok(w)
}

/// Exact-rate instantiation `W_b(y) = alpha_b(y) / n` off the dominant block.
pub fn channel_from_intensities(spec: &ChannelSpec, n: u64) -> Result<SparseChannel> {
    if n == 0 {
        return invalid("n must be >= 1");
    }
    Ok(SparseChannel {
        spec: spec.clone(),
        n,
        w0: instantiate_row(&spec.alpha0, &spec.dom0, n)?,
        w1: instantiate_row(&spec.alpha1, &spec.dom1, n)?,
    })
}
