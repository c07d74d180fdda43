//! Expansion coefficients: midpoint analysis into the hat system, dense
//! collocation oracles (an independent route to the same coefficients), and
//! regrouping into the unit-level frames.
//!
//! The hat peaks at 1/2, so the coefficient of s_(n,k) is twice the midpoint
//! deviation of f from its chord over the support interval. The two leading
//! coefficients anchor the affine part: alpha0 multiplies the indicator of
//! \[0,1\] and alpha1 multiplies s_1(x) = x.

use crate::basis::{hat, q_fn, BasisKind, DyadicIndex, SoftplusConfig};
use crate::error::{Error, Result};
use crate::expr::Func1D;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Largest level accepted by [`analyze`] (2^13 + 1 function samples).
pub const MAX_ANALYZE_LEVEL: u32 = 12;

/// Largest level accepted by the dense collocation routes (513 x 513 system).
pub const MAX_COLLOCATION_LEVEL: u32 = 8;

/// Condition-number ceiling beyond which [`analyze_q`] refuses to report
/// coefficients.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Hat-frame coefficients of a function through `max_level`.
///
/// `coeffs` is stored densely in dictionary-rank order and always holds
/// exactly 2^(max_level+1) - 1 entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    alpha0: f64,
    alpha1: f64,
    coeffs: Vec<f64>,
    max_level: u32,
}

impl Expansion {
    pub fn new(alpha0: f64, alpha1: f64, coeffs: Vec<f64>, max_level: u32) -> Result<Self> {
        let expected = (1usize << (max_level + 1)) - 1;
        if coeffs.len() != expected {
            return Err(Error::InvalidArg(format!(
                "expansion through level {max_level} needs {expected} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(Self {
            alpha0,
            alpha1,
            coeffs,
            max_level,
        })
    }

    /// The all-zero expansion through `max_level`.
    pub fn zero(max_level: u32) -> Self {
        let len = (1usize << (max_level + 1)) - 1;
        Self {
            alpha0: 0.0,
            alpha1: 0.0,
            coeffs: vec![0.0; len],
            max_level,
        }
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    /// Number of hat coefficients, 2^(max_level+1) - 1.
    pub fn num_hats(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficient of s_(n,k); panics if `idx` is beyond `max_level`.
    pub fn coeff(&self, idx: DyadicIndex) -> f64 {
        assert!(
            idx.n() <= self.max_level,
            "index {idx} beyond level {}",
            self.max_level
        );
        self.coeffs[idx.rank() as usize]
    }

    /// Coefficient with the boundary convention alpha_(n,-1) = 0.
    pub fn coeff_or_zero(&self, n: u32, k: i64) -> f64 {
        if k == -1 {
            0.0
        } else {
            assert!(k >= 0);
            self.coeff(DyadicIndex::new(n, k as u32))
        }
    }

    /// All hat coefficients in dictionary-rank order.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// The 2^n coefficients of level `n`.
    pub fn level(&self, n: u32) -> &[f64] {
        assert!(n <= self.max_level);
        let start = (1usize << n) - 1;
        &self.coeffs[start..start + (1usize << n)]
    }

    pub fn set_coeff(&mut self, idx: DyadicIndex, value: f64) {
        assert!(idx.n() <= self.max_level);
        self.coeffs[idx.rank() as usize] = value;
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ExpansionJson::from(self)).expect("expansion serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let mirror: ExpansionJson = serde_json::from_str(s)
            .map_err(|e| Error::InvalidArg(format!("invalid expansion JSON: {e}")))?;
        Expansion::try_from(mirror)
    }
}

/// Serialization mirror: `{"alpha0": ..., "alpha1": ..., "levels": [[...], ...]}`
/// with one inner list per level, offsets in increasing order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionJson {
    pub alpha0: f64,
    pub alpha1: f64,
    pub levels: Vec<Vec<f64>>,
}

impl From<&Expansion> for ExpansionJson {
    fn from(e: &Expansion) -> Self {
        let levels = (0..=e.max_level).map(|n| e.level(n).to_vec()).collect();
        Self {
            alpha0: e.alpha0,
            alpha1: e.alpha1,
            levels,
        }
    }
}

impl TryFrom<ExpansionJson> for Expansion {
    type Error = Error;

    fn try_from(j: ExpansionJson) -> Result<Self> {
        if j.levels.is_empty() {
            return Err(Error::InvalidArg(
                "expansion JSON needs at least level 0".to_string(),
            ));
        }
        let max_level = (j.levels.len() - 1) as u32;
        let mut coeffs = Vec::with_capacity((1usize << (max_level + 1)) - 1);
        for (n, level) in j.levels.iter().enumerate() {
            if level.len() != 1usize << n {
                return Err(Error::InvalidArg(format!(
                    "level {n} must hold {} coefficients, got {}",
                    1usize << n,
                    level.len()
                )));
            }
            coeffs.extend_from_slice(level);
        }
        Expansion::new(j.alpha0, j.alpha1, coeffs, max_level)
    }
}

/// Midpoint-rule analysis of `f` through `max_level`.
///
/// alpha0 = f(0), alpha1 = f(1) - f(0), and each hat coefficient is twice
/// the deviation of f at the support midpoint from the average of its
/// endpoint values. The resulting level-L partial sum interpolates f at
/// every dyadic point j/2^(L+1).
pub fn analyze(f: &Func1D, max_level: u32) -> Result<Expansion> {
    if max_level > MAX_ANALYZE_LEVEL {
        return Err(Error::InvalidArg(format!(
            "analysis level {max_level} exceeds the cap {MAX_ANALYZE_LEVEL}"
        )));
    }
    let m = 1usize << (max_level + 1);
    let mut v = Vec::with_capacity(m + 1);
    for j in 0..=m {
        v.push(f.eval(j as f64 / m as f64)?);
    }
    let alpha0 = v[0];
    let alpha1 = v[m] - v[0];
    let mut coeffs = Vec::with_capacity(2 * m - 1);
    for n in 0..=max_level {
        let stride = 1usize << (max_level + 1 - n);
        for k in 0..(1usize << n) {
            let l = k * stride;
            let r = l + stride;
            let mid = l + stride / 2;
            coeffs.push(2.0 * (v[mid] - 0.5 * (v[l] + v[r])));
        }
    }
    Expansion::new(alpha0, alpha1, coeffs, max_level)
}

fn collocation_points(max_level: u32) -> Vec<f64> {
    let m = 1usize << (max_level + 1);
    (0..=m).map(|j| j as f64 / m as f64).collect()
}

fn solve_collocation(
    f: &Func1D,
    max_level: u32,
    column: impl Fn(usize, f64) -> f64,
) -> Result<Expansion> {
    let pts = collocation_points(max_level);
    let m = pts.len();
    let a = DMatrix::from_fn(m, m, |i, c| column(c, pts[i]));
    let mut b = DVector::zeros(m);
    for (i, &x) in pts.iter().enumerate() {
        b[i] = f.eval(x)?;
    }
    let sol = a
        .lu()
        .solve(&b)
        .ok_or(Error::SingularSystem { level: max_level })?;
    let coeffs = sol.iter().skip(2).copied().collect();
    Expansion::new(sol[0], sol[1], coeffs, max_level)
}

/// Independent oracle for [`analyze`]: solves the dense square collocation
/// system V c = f on the dyadic grid of level `max_level + 1`, with columns
/// [1, x, s_(0,0), s_(1,0), ...] in dictionary order.
pub fn collocation_oracle(f: &Func1D, max_level: u32) -> Result<Expansion> {
    if max_level > MAX_COLLOCATION_LEVEL {
        return Err(Error::InvalidArg(format!(
            "collocation level {max_level} exceeds the cap {MAX_COLLOCATION_LEVEL}"
        )));
    }
    solve_collocation(f, max_level, |c, x| match c {
        0 => 1.0,
        1 => x,
        c => hat(DyadicIndex::from_rank((c - 2) as u64), x),
    })
}

/// Softplus-frame coefficients: collocation against the smooth columns
/// q_(n,k) instead of the hats. Because the q's overlap slightly, the
/// system is solved densely and rejected if its condition estimate exceeds
/// [`CONDITION_LIMIT`].
pub fn analyze_q(f: &Func1D, max_level: u32, cfg: &SoftplusConfig) -> Result<Expansion> {
    if max_level > MAX_COLLOCATION_LEVEL {
        return Err(Error::InvalidArg(format!(
            "collocation level {max_level} exceeds the cap {MAX_COLLOCATION_LEVEL}"
        )));
    }
    let pts = collocation_points(max_level);
    let m = pts.len();
    let a = DMatrix::from_fn(m, m, |i, c| match c {
        0 => 1.0,
        1 => pts[i],
        c => q_fn(DyadicIndex::from_rank((c - 2) as u64), cfg, pts[i]),
    });
    let sv = a.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = smax / smin;
    // NaN (0/0 singular values) counts as ill-conditioned too.
    if cond.is_nan() || cond > CONDITION_LIMIT {
        return Err(Error::IllConditioned {
            cond,
            limit: CONDITION_LIMIT,
        });
    }
    let mut b = DVector::zeros(m);
    for (i, &x) in pts.iter().enumerate() {
        b[i] = f.eval(x)?;
    }
    let sol = a
        .lu()
        .solve(&b)
        .ok_or(Error::SingularSystem { level: max_level })?;
    let coeffs = sol.iter().skip(2).copied().collect();
    Expansion::new(sol[0], sol[1], coeffs, max_level)
}

/// One regrouped series term: the coefficients applied to the unit at the
/// integer shift k and to its partner at the half shift k + 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegroupedTerm {
    pub idx: DyadicIndex,
    pub at_integer: f64,
    pub at_half: f64,
}

/// A hat expansion rendered in one of the unit-level frames.
#[derive(Debug, Clone, PartialEq)]
pub struct RegroupedExpansion {
    pub kind: BasisKind,
    pub alpha0: f64,
    pub alpha1: f64,
    /// Terms in dictionary order; within a term the integer-shift unit
    /// precedes the half-shift unit.
    pub terms: Vec<RegroupedTerm>,
}

/// The regrouping rule shared by [`regroup`] and the partial-sum evaluator.
///
/// Pair frames fold each hat's trailing ReLU into the next hat's leading one
/// (the leftover unit at shift 2^n vanishes on \[0,1\]); difference frames
/// split the hat into +/- copies of the saturating ramp.
pub(crate) fn pair_coefficients(e: &Expansion, kind: BasisKind, idx: DyadicIndex) -> (f64, f64) {
    let a_k = e.coeff(idx);
    match kind {
        BasisKind::Hat => (a_k, 0.0),
        BasisKind::ReluPair | BasisKind::SoftplusPair => (
            a_k + e.coeff_or_zero(idx.n(), idx.k() as i64 - 1),
            -2.0 * a_k,
        ),
        BasisKind::SigmoidalDiff | BasisKind::SigmoidalSoftplusDiff => (a_k, -a_k),
        BasisKind::CounterexampleG => unreachable!("rejected before regrouping"),
    }
}

/// Regroups hat coefficients into the requested frame.
///
/// For the Softplus frames the caller normally passes coefficients obtained
/// from [`analyze_q`]; the arithmetic itself is frame-agnostic, but `cfg`
/// must be present so the result can be rendered later. `CounterexampleG`
/// is rejected: it reproduces the hat pointwise, yet its five-term partial
/// sums are not uniformly controlled, so it cannot serve as a frame.
pub fn regroup(
    e: &Expansion,
    kind: BasisKind,
    cfg: Option<&SoftplusConfig>,
) -> Result<RegroupedExpansion> {
    if !kind.can_synthesize() {
        return Err(Error::UnsupportedBasis(kind.to_string()));
    }
    if kind.is_softplus() && cfg.is_none() {
        return Err(Error::InvalidArg(format!(
            "frame `{kind}` needs a SoftplusConfig"
        )));
    }
    let terms = (0..e.num_hats() as u64)
        .map(|rank| {
            let idx = DyadicIndex::from_rank(rank);
            let (at_integer, at_half) = pair_coefficients(e, kind, idx);
            RegroupedTerm {
                idx,
                at_integer,
                at_half,
            }
        })
        .collect();
    Ok(RegroupedExpansion {
        kind,
        alpha0: e.alpha0(),
        alpha1: e.alpha1(),
        terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn func(src: &str) -> Func1D {
        Func1D::from_expr(src).unwrap()
    }

    fn idx(n: u32, k: u32) -> DyadicIndex {
        DyadicIndex::new(n, k)
    }

    #[test]
    fn analyze_parabola_frozen_values() {
        let e = analyze(&func("x * (1 - x)"), 1).unwrap();
        assert_eq!(e.alpha0(), 0.0);
        assert_eq!(e.alpha1(), 0.0);
        assert!((e.coeff(idx(0, 0)) - 0.5).abs() < 1e-15);
        assert!((e.coeff(idx(1, 0)) - 0.125).abs() < 1e-15);
        assert!((e.coeff(idx(1, 1)) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn analyze_constant_has_only_alpha0() {
        let e = analyze(&func("0.7"), 2).unwrap();
        assert_eq!(e.alpha0(), 0.7);
        assert_eq!(e.alpha1(), 0.0);
        assert!(e.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn analyze_kink_function_stops_at_level_zero() {
        // |x - 1/2| is exactly the affine part plus -1 times the level-0 hat.
        let e = analyze(&func("abs(x - 0.5)"), 3).unwrap();
        assert_eq!(e.alpha0(), 0.5);
        assert_eq!(e.alpha1(), 0.0);
        assert!((e.coeff(idx(0, 0)) + 1.0).abs() < 1e-15);
        for n in 1..=3 {
            for &c in e.level(n) {
                assert!(c.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn boundary_coefficient_convention() {
        let e = analyze(&func("x * (1 - x)"), 1).unwrap();
        assert_eq!(e.coeff_or_zero(1, -1), 0.0);
        assert_eq!(e.coeff_or_zero(1, 0), e.coeff(idx(1, 0)));
    }

    #[test]
    fn expansion_validates_coefficient_count() {
        assert!(Expansion::new(0.0, 0.0, vec![0.0; 3], 1).is_ok());
        assert!(Expansion::new(0.0, 0.0, vec![0.0; 4], 1).is_err());
    }

    #[test]
    fn json_round_trip_preserves_everything() {
        let e = analyze(&func("exp(x)"), 2).unwrap();
        let s = e.to_json_string();
        let back = Expansion::from_json_str(&s).unwrap();
        assert_eq!(back, e);
        // Schema sanity: levels have lengths 1, 2, 4.
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        let levels = v["levels"].as_array().unwrap();
        assert_eq!(levels.len(), 3);
        assert_eq!(levels[2].as_array().unwrap().len(), 4);
    }

    #[test]
    fn malformed_json_levels_are_rejected() {
        let s = r#"{"alpha0": 0.0, "alpha1": 0.0, "levels": [[0.0], [0.0, 0.0, 0.0]]}"#;
        assert!(Expansion::from_json_str(s).is_err());
    }

    #[test]
    fn collocation_oracle_matches_analyze() {
        for src in ["x * (1 - x)", "sin(pi * x)", "exp(x)", "abs(x - 0.5)"] {
            let f = func(src);
            let direct = analyze(&f, 4).unwrap();
            let oracle = collocation_oracle(&f, 4).unwrap();
            assert!((direct.alpha0() - oracle.alpha0()).abs() < 1e-9, "{src}");
            assert!((direct.alpha1() - oracle.alpha1()).abs() < 1e-9, "{src}");
            for (a, b) in direct.coeffs().iter().zip(oracle.coeffs()) {
                assert!((a - b).abs() < 1e-9, "{src}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn collocation_recovers_a_pure_hat() {
        let target = idx(2, 1);
        let f = Func1D::from_fn(move |x| hat(target, x));
        let e = collocation_oracle(&f, 3).unwrap();
        for rank in 0..e.num_hats() as u64 {
            let i = DyadicIndex::from_rank(rank);
            let expected = if i == target { 1.0 } else { 0.0 };
            assert!((e.coeff(i) - expected).abs() < 1e-9, "coefficient at {i}");
        }
        assert!(e.alpha0().abs() < 1e-9);
        assert!(e.alpha1().abs() < 1e-9);
    }

    #[test]
    fn collocation_solves_at_the_level_cap() {
        // The system is triangular-like under dictionary order and stays
        // solvable at the largest supported level.
        let e = collocation_oracle(&func("exp(x)"), MAX_COLLOCATION_LEVEL).unwrap();
        assert_eq!(e.num_hats(), (1 << 9) - 1);
        assert!(collocation_oracle(&func("x"), MAX_COLLOCATION_LEVEL + 1).is_err());
    }

    #[test]
    fn analyze_q_recovers_a_pure_q_column() {
        let cfg = SoftplusConfig::default();
        let target = idx(1, 1);
        let f = Func1D::from_fn(move |x| q_fn(target, &SoftplusConfig::default(), x));
        let e = analyze_q(&f, 2, &cfg).unwrap();
        for rank in 0..e.num_hats() as u64 {
            let i = DyadicIndex::from_rank(rank);
            let expected = if i == target { 1.0 } else { 0.0 };
            assert!((e.coeff(i) - expected).abs() < 1e-6, "coefficient at {i}");
        }
    }

    #[test]
    fn analyze_q_of_a_constant_lands_on_alpha0() {
        let cfg = SoftplusConfig::default();
        let e = analyze_q(&func("0.7"), 3, &cfg).unwrap();
        assert!((e.alpha0() - 0.7).abs() < 1e-6);
        assert!(e.alpha1().abs() < 1e-6);
        assert!(e.coeffs().iter().all(|&c| c.abs() < 1e-6));
    }

    #[test]
    fn analyze_q_stays_near_the_hat_coefficients() {
        use crate::basis::gap_bound;
        let cfg = SoftplusConfig::default();
        let f = func("x * (1 - x)");
        let alpha = analyze(&f, 4).unwrap();
        let beta = analyze_q(&f, 4, &cfg).unwrap();
        for rank in 0..alpha.num_hats() as u64 {
            let i = DyadicIndex::from_rank(rank);
            let tol = 10.0 * gap_bound(i, &cfg);
            let diff = (alpha.coeff(i) - beta.coeff(i)).abs();
            assert!(diff <= tol, "beta vs alpha at {i}: {diff} > {tol}");
        }
    }

    #[test]
    fn regroup_relu_pair_frozen_values() {
        let e = analyze(&func("x * (1 - x)"), 1).unwrap();
        let r = regroup(&e, BasisKind::ReluPair, None).unwrap();
        assert_eq!(r.terms.len(), 3);
        // (0,0): alpha = 1/2, no left neighbor.
        assert!((r.terms[0].at_integer - 0.5).abs() < 1e-15);
        assert!((r.terms[0].at_half + 1.0).abs() < 1e-15);
        // (1,1): alpha = 1/8 with left neighbor 1/8.
        assert!((r.terms[2].at_integer - 0.25).abs() < 1e-15);
        assert!((r.terms[2].at_half + 0.25).abs() < 1e-15);
    }

    #[test]
    fn regroup_sigmoidal_diff_is_plus_minus() {
        let e = analyze(&func("x * (1 - x)"), 0).unwrap();
        let r = regroup(&e, BasisKind::SigmoidalDiff, None).unwrap();
        assert_eq!(r.terms[0].at_integer, 0.5);
        assert_eq!(r.terms[0].at_half, -0.5);
    }

    #[test]
    fn regroup_rejects_the_counterexample_and_missing_config() {
        let e = analyze(&func("x"), 1).unwrap();
        assert!(matches!(
            regroup(&e, BasisKind::CounterexampleG, None),
            Err(Error::UnsupportedBasis(_))
        ));
        assert!(regroup(&e, BasisKind::SoftplusPair, None).is_err());
        let cfg = SoftplusConfig::default();
        assert!(regroup(&e, BasisKind::SoftplusPair, Some(&cfg)).is_ok());
    }

    proptest! {
        #[test]
        fn regrouping_is_invertible(coeffs in proptest::collection::vec(-2.0f64..2.0, 7)) {
            let e = Expansion::new(0.3, -0.1, coeffs, 2).unwrap();
            let r = regroup(&e, BasisKind::ReluPair, None).unwrap();
            for term in &r.terms {
                // alpha recovers from the half-shift coefficient...
                let alpha = -term.at_half / 2.0;
                prop_assert!((alpha - e.coeff(term.idx)).abs() < 1e-12);
                // ...and the integer-shift coefficient is consistent with it.
                let left = e.coeff_or_zero(term.idx.n(), term.idx.k() as i64 - 1);
                prop_assert!((term.at_integer - (alpha + left)).abs() < 1e-12);
            }
        }
    }
}
