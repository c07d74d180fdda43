//! Closed-form basis functions on the line: the Faber–Schauder hats over
//! dyadic intervals and their realizations as differences of ReLU and
//! Softplus units.
//!
//! All functions here are total on finite inputs; restriction to \[0,1\]
//! happens in the expansion/evaluation layer. The hats used throughout peak
//! at height 1/2 (not 1), which is what makes the ReLU second-difference
//! identity coefficient-free.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

/// Largest supported dyadic level. Keeps every quantity (2^n, ranks, the
/// sharpness schedule 2^(2n+5)) exactly representable in an f64.
pub const MAX_LEVEL: u32 = 25;

/// 2^n as an f64, exact for n <= 52.
#[inline]
pub(crate) fn pow2(n: u32) -> f64 {
    debug_assert!(n <= 52);
    (1u64 << n) as f64
}

/// Level/offset index (n, k) with 0 <= k < 2^n, addressing the dyadic
/// interval [k/2^n, (k+1)/2^n].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicIndex {
    n: u32,
    k: u32,
}

impl DyadicIndex {
    /// Creates the index (n, k).
    ///
    /// Panics if `n > MAX_LEVEL` or `k >= 2^n`; indices are structural and a
    /// violation is always a caller bug.
    pub fn new(n: u32, k: u32) -> Self {
        assert!(n <= MAX_LEVEL, "level {n} exceeds MAX_LEVEL = {MAX_LEVEL}");
        assert!(
            (k as u64) < (1u64 << n),
            "offset {k} out of range for level {n}"
        );
        Self { n, k }
    }

    pub fn n(self) -> u32 {
        self.n
    }

    pub fn k(self) -> u32 {
        self.k
    }

    /// Position in the dictionary order (0,0), (1,0), (1,1), (2,0), ...;
    /// equals 2^n + k - 1.
    pub fn rank(self) -> u64 {
        (1u64 << self.n) + self.k as u64 - 1
    }

    /// Inverse of [`rank`](Self::rank).
    pub fn from_rank(rank: u64) -> Self {
        let r = rank + 1;
        let n = 63 - r.leading_zeros();
        Self::new(n, (r - (1u64 << n)) as u32)
    }

    /// Left endpoint k/2^n of the support interval.
    pub fn left(self) -> f64 {
        self.k as f64 / pow2(self.n)
    }

    /// Right endpoint (k+1)/2^n of the support interval.
    pub fn right(self) -> f64 {
        (self.k as f64 + 1.0) / pow2(self.n)
    }

    /// Support midpoint (k + 1/2)/2^n, where the hat peaks.
    pub fn midpoint(self) -> f64 {
        (self.k as f64 + 0.5) / pow2(self.n)
    }
}

impl fmt::Display for DyadicIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.n, self.k)
    }
}

/// The coefficient frames a hat expansion can be rendered in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisKind {
    /// The Schauder hats themselves.
    Hat,
    /// Pairs of ReLU units r(2^n x - k), r(2^n x - (k + 1/2)).
    ReluPair,
    /// Pairs of Softplus units at the same shifts, sharpness a(n,k).
    SoftplusPair,
    /// Sigmoidal first differences d at integer and half shifts.
    SigmoidalDiff,
    /// Softplus-smoothed sigmoidal first differences u at the same shifts.
    SigmoidalSoftplusDiff,
    /// The five-term ReLU combination g: pointwise equal to the hat but
    /// rejected for synthesis (its partial sums are not norm-controlled).
    CounterexampleG,
}

impl BasisKind {
    /// True for frames built from Softplus units; these carry a perturbation
    /// budget instead of an exact identity.
    pub fn is_softplus(self) -> bool {
        matches!(
            self,
            BasisKind::SoftplusPair | BasisKind::SigmoidalSoftplusDiff
        )
    }

    /// True for frames that may synthesize partial sums.
    pub fn can_synthesize(self) -> bool {
        !matches!(self, BasisKind::CounterexampleG)
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BasisKind::Hat => "hat",
            BasisKind::ReluPair => "relu-pair",
            BasisKind::SoftplusPair => "softplus-pair",
            BasisKind::SigmoidalDiff => "sigmoidal-diff",
            BasisKind::SigmoidalSoftplusDiff => "sigmoidal-softplus-diff",
            BasisKind::CounterexampleG => "counterexample-g",
        };
        f.write_str(s)
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hat" => Ok(BasisKind::Hat),
            "relu-pair" => Ok(BasisKind::ReluPair),
            "softplus-pair" => Ok(BasisKind::SoftplusPair),
            "sigmoidal-diff" => Ok(BasisKind::SigmoidalDiff),
            "sigmoidal-softplus-diff" => Ok(BasisKind::SigmoidalSoftplusDiff),
            "counterexample-g" => Ok(BasisKind::CounterexampleG),
            other => Err(Error::InvalidArg(format!(
                "unknown basis kind `{other}` (expected hat, relu-pair, softplus-pair, \
                 sigmoidal-diff, sigmoidal-softplus-diff, or counterexample-g)"
            ))),
        }
    }
}

/// Configuration for the Softplus frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftplusConfig {
    /// Budget constant K > 0. Larger K sharpens every unit so that the total
    /// Softplus-vs-ReLU perturbation stays below 1/(2K).
    pub k: f64,
}

impl SoftplusConfig {
    pub fn new(k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidArg(format!(
                "softplus budget constant K must be finite and positive, got {k}"
            )));
        }
        Ok(Self { k })
    }
}

impl Default for SoftplusConfig {
    fn default() -> Self {
        Self { k: 1.0 }
    }
}

/// max(0, x).
#[inline]
pub fn relu(x: f64) -> f64 {
    assert!(x.is_finite(), "relu requires finite input, got {x}");
    x.max(0.0)
}

/// Softplus with sharpness a: ln(1 + e^(a x)) / a.
///
/// Evaluated in the overflow-free form max(x, 0) + ln(1 + e^(-|a x|)) / a, so
/// it is usable at the very large sharpness values of the per-level schedule.
#[inline]
pub fn softplus(a: f64, x: f64) -> f64 {
    assert!(
        a.is_finite() && a > 0.0,
        "softplus sharpness must be finite and positive, got {a}"
    );
    assert!(x.is_finite(), "softplus requires finite input, got {x}");
    x.max(0.0) + (-(a * x).abs()).exp().ln_1p() / a
}

/// The Schauder hat s_(n,k): piecewise linear, supported on
/// [k/2^n, (k+1)/2^n], peaking at height 1/2 over the midpoint.
#[inline]
pub fn hat(idx: DyadicIndex, x: f64) -> f64 {
    assert!(x.is_finite(), "hat requires finite input, got {x}");
    let delta = pow2(idx.n) * x - idx.k as f64;
    if delta <= 0.0 || delta >= 1.0 {
        0.0
    } else {
        delta.min(1.0 - delta)
    }
}

/// ReLU second difference t_(n,k)(x) = r(u) - 2 r(u - 1/2) + r(u - 1) with
/// u = 2^n x - k. Pointwise equal to the hat s_(n,k).
#[inline]
pub fn t_fn(idx: DyadicIndex, x: f64) -> f64 {
    let u = pow2(idx.n) * x - idx.k as f64;
    relu(u) - 2.0 * relu(u - 0.5) + relu(u - 1.0)
}

/// Sigmoidal first difference d_(n,k)(x) = r(u) - r(u - 1/2), u = 2^n x - k.
///
/// Ramps from 0 to 1/2 across the left half of the support and saturates at
/// 1/2 to the right (the literal two-ReLU form; no rescaling to 1).
#[inline]
pub fn d_fn(idx: DyadicIndex, x: f64) -> f64 {
    let u = pow2(idx.n) * x - idx.k as f64;
    relu(u) - relu(u - 0.5)
}

/// The half-shift partner of [`d_fn`]: d evaluated at shift k + 1/2, i.e.
/// r(u - 1/2) - r(u - 1). Satisfies t_(n,k) = d_fn - d_fn_half.
#[inline]
pub fn d_fn_half(idx: DyadicIndex, x: f64) -> f64 {
    let u = pow2(idx.n) * x - idx.k as f64;
    relu(u - 0.5) - relu(u - 1.0)
}

/// Five-term ReLU combination
/// g_(n,k)(x) = r(u) - r(u - 1/2) - r(1/2 - u) + r(1 - u) - 1/2, u = 2^n x - k.
///
/// Pointwise equal to the hat s_(n,k), yet unusable as a basis: the partial
/// sums of its terms are not uniformly controlled.
#[inline]
pub fn g_fn(idx: DyadicIndex, x: f64) -> f64 {
    let u = pow2(idx.n) * x - idx.k as f64;
    relu(u) - relu(u - 0.5) - relu(0.5 - u) + relu(1.0 - u) - 0.5
}

/// Per-element sharpness schedule a(n,k) = 4 ln2 * 2K * 2^(2n+2).
///
/// Independent of k; grows like 4^n so that the summed Softplus-vs-ReLU gap
/// over a whole level keeps shrinking geometrically.
#[inline]
pub fn sharpness(idx: DyadicIndex, cfg: &SoftplusConfig) -> f64 {
    4.0 * LN_2 * 2.0 * cfg.k * pow2(2 * idx.n + 2)
}

/// Softplus second difference with an explicit sharpness a:
/// p_a(u) - 2 p_a(u - 1/2) + p_a(u - 1), u = 2^n x - k.
#[inline]
pub fn q_fn_with_a(idx: DyadicIndex, a: f64, x: f64) -> f64 {
    let u = pow2(idx.n) * x - idx.k as f64;
    softplus(a, u) - 2.0 * softplus(a, u - 0.5) + softplus(a, u - 1.0)
}

/// Softplus second difference q_(n,k) at the scheduled sharpness a(n,k);
/// the smooth perturbation of t_(n,k) with sup gap at most 4 ln2 / a(n,k).
#[inline]
pub fn q_fn(idx: DyadicIndex, cfg: &SoftplusConfig, x: f64) -> f64 {
    q_fn_with_a(idx, sharpness(idx, cfg), x)
}

/// Softplus first difference u_(n,k)(x) = p_a(u) - p_a(u - 1/2) at the
/// scheduled sharpness. Monotone, saturating near 1/2 to the right.
#[inline]
pub fn u_fn(idx: DyadicIndex, cfg: &SoftplusConfig, x: f64) -> f64 {
    let a = sharpness(idx, cfg);
    let u = pow2(idx.n) * x - idx.k as f64;
    softplus(a, u) - softplus(a, u - 0.5)
}

/// Half-shift partner of [`u_fn`]: p_a(u - 1/2) - p_a(u - 1), same sharpness.
/// Satisfies q_(n,k) = u_fn - u_fn_half exactly.
#[inline]
pub fn u_fn_half(idx: DyadicIndex, cfg: &SoftplusConfig, x: f64) -> f64 {
    let a = sharpness(idx, cfg);
    let u = pow2(idx.n) * x - idx.k as f64;
    softplus(a, u - 0.5) - softplus(a, u - 1.0)
}

/// Sup-norm bound 4 ln2 / a(n,k) on |t_(n,k) - q_(n,k)|.
#[inline]
pub fn gap_bound(idx: DyadicIndex, cfg: &SoftplusConfig) -> f64 {
    4.0 * LN_2 / sharpness(idx, cfg)
}
