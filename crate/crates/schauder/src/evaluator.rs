//! Partial-sum evaluation of an expansion in any frame, sup-norm error
//! reports against the original function, frame-vs-frame identity checks,
//! and the Softplus perturbation budget.
//!
//! A rendered series is ordered as: the indicator term, then s_1(x) = x,
//! then the hats in dictionary order. In the hat frame each hat is one
//! series slot; in the pair frames each hat contributes two slots (the unit
//! at the integer shift first, its half-shift partner second). Truncations
//! are expressed against that ordering.

use crate::basis::{
    d_fn, d_fn_half, gap_bound, hat, pow2, q_fn, relu, sharpness, softplus, t_fn, u_fn, u_fn_half,
    BasisKind, DyadicIndex, SoftplusConfig,
};
use crate::coefficients::{pair_coefficients, Expansion};
use crate::error::{Error, Result};
use crate::expr::Func1D;
use crate::grid::{Grid, DEFAULT_GRID_BITS};
use serde::{Deserialize, Serialize};

/// How much of the ordered series to sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    /// Both affine slots plus every term of level at most the given level.
    LevelComplete(u32),
    /// The first `n` slots of the ordered series; 0 gives the empty sum.
    FirstN(usize),
}

/// An expansion together with a truncation of its rendered series.
#[derive(Debug, Clone, Copy)]
pub struct PartialSumSpec<'a> {
    pub expansion: &'a Expansion,
    pub truncation: Truncation,
}

impl<'a> PartialSumSpec<'a> {
    pub fn new(expansion: &'a Expansion, truncation: Truncation) -> Self {
        Self {
            expansion,
            truncation,
        }
    }

    /// Total slot count of the full rendered series in `kind`.
    pub fn series_len(&self, kind: BasisKind) -> usize {
        2 + self.expansion.num_hats() * slots_per_term(kind)
    }

    fn included_slots(&self, kind: BasisKind) -> Result<usize> {
        let available = self.series_len(kind);
        let requested = match self.truncation {
            Truncation::LevelComplete(level) => {
                if level > self.expansion.max_level() {
                    available + 1 // force the length check below to fail
                } else {
                    2 + ((1usize << (level + 1)) - 1) * slots_per_term(kind)
                }
            }
            Truncation::FirstN(n) => n,
        };
        if requested > available {
            return Err(Error::TruncationTooLong {
                requested,
                available,
            });
        }
        Ok(requested)
    }

    /// Deepest level any included term lives on (0 when only affine slots
    /// are included); used to pick a fine enough verification grid.
    fn included_level(&self, kind: BasisKind) -> u32 {
        match self.truncation {
            Truncation::LevelComplete(level) => level,
            Truncation::FirstN(n) => {
                let hat_slots = n.saturating_sub(2);
                if hat_slots == 0 {
                    0
                } else {
                    let last_rank = (hat_slots - 1) / slots_per_term(kind);
                    DyadicIndex::from_rank(last_rank as u64).n()
                }
            }
        }
    }
}

fn slots_per_term(kind: BasisKind) -> usize {
    if kind == BasisKind::Hat {
        1
    } else {
        2
    }
}

fn validate_kind(kind: BasisKind, cfg: Option<&SoftplusConfig>) -> Result<()> {
    if !kind.can_synthesize() {
        return Err(Error::UnsupportedBasis(kind.to_string()));
    }
    if kind.is_softplus() && cfg.is_none() {
        return Err(Error::InvalidArg(format!(
            "frame `{kind}` needs a SoftplusConfig"
        )));
    }
    Ok(())
}

/// The index of the only hat at level `n` that can be nonzero at `x`.
fn nonzero_k(n: u32, x: f64) -> u32 {
    let kf = (pow2(n) * x).floor();
    let max_k = (1u64 << n) - 1;
    if kf <= 0.0 {
        0
    } else if kf as u64 >= max_k {
        max_k as u32
    } else {
        kf as u32
    }
}

/// Values of the two units of one term at `x` (integer shift, half shift).
fn pair_values(
    kind: BasisKind,
    cfg: Option<&SoftplusConfig>,
    idx: DyadicIndex,
    x: f64,
) -> (f64, f64) {
    match kind {
        BasisKind::ReluPair => {
            let u = pow2(idx.n()) * x - idx.k() as f64;
            (relu(u), relu(u - 0.5))
        }
        BasisKind::SoftplusPair => {
            let cfg = cfg.expect("validated");
            let a = sharpness(idx, cfg);
            let u = pow2(idx.n()) * x - idx.k() as f64;
            (softplus(a, u), softplus(a, u - 0.5))
        }
        BasisKind::SigmoidalDiff => (d_fn(idx, x), d_fn_half(idx, x)),
        BasisKind::SigmoidalSoftplusDiff => {
            let cfg = cfg.expect("validated");
            (u_fn(idx, cfg, x), u_fn_half(idx, cfg, x))
        }
        BasisKind::Hat | BasisKind::CounterexampleG => unreachable!("validated"),
    }
}

/// Evaluates the truncated series of `spec.expansion` rendered in `kind`
/// at `x` in [0, 1].
///
/// For the hat frame only the single possibly-nonzero hat per level is
/// touched; the omitted terms are exactly zero there, so the result equals
/// the dense left-to-right sum.
pub fn eval_partial(
    spec: &PartialSumSpec,
    kind: BasisKind,
    cfg: Option<&SoftplusConfig>,
    x: f64,
) -> Result<f64> {
    validate_kind(kind, cfg)?;
    if !x.is_finite() || !(0.0..=1.0).contains(&x) {
        return Err(Error::Eval {
            x,
            message: "point outside [0, 1]".to_string(),
        });
    }
    let included = spec.included_slots(kind)?;
    let e = spec.expansion;
    let mut sum = 0.0;
    if included >= 1 {
        sum += e.alpha0();
    }
    if included >= 2 {
        sum += e.alpha1() * x;
    }
    let hat_slots = included.saturating_sub(2);
    if hat_slots == 0 {
        return Ok(sum);
    }
    match kind {
        BasisKind::Hat => {
            for n in 0..=e.max_level() {
                if ((1u64 << n) - 1) as usize >= hat_slots {
                    break;
                }
                let idx = DyadicIndex::new(n, nonzero_k(n, x));
                if (idx.rank() as usize) < hat_slots {
                    sum += e.coeff(idx) * hat(idx, x);
                }
            }
        }
        _ => {
            let full_terms = hat_slots / 2;
            let terms = full_terms + hat_slots % 2;
            for rank in 0..terms {
                let idx = DyadicIndex::from_rank(rank as u64);
                let (ci, ch) = pair_coefficients(e, kind, idx);
                let (v_int, v_half) = pair_values(kind, cfg, idx, x);
                sum += ci * v_int;
                if rank < full_terms {
                    sum += ch * v_half;
                }
            }
        }
    }
    Ok(sum)
}

/// Where and how badly a partial sum misses the target function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub sup_error: f64,
    pub argmax_x: f64,
    pub grid_size: usize,
}

/// Sup-norm error of the truncated series against `f` on the default
/// verification grid (uniform 2^14 + 1 points merged with the dyadic
/// breakpoints two levels past the truncation).
pub fn sup_error(
    f: &Func1D,
    spec: &PartialSumSpec,
    kind: BasisKind,
    cfg: Option<&SoftplusConfig>,
) -> Result<ErrorReport> {
    sup_error_with_bits(f, spec, kind, cfg, DEFAULT_GRID_BITS)
}

/// [`sup_error`] on a uniform grid of 2^bits + 1 points (plus breakpoints).
/// Ties in the maximum go to the smallest x.
pub fn sup_error_with_bits(
    f: &Func1D,
    spec: &PartialSumSpec,
    kind: BasisKind,
    cfg: Option<&SoftplusConfig>,
    bits: u32,
) -> Result<ErrorReport> {
    validate_kind(kind, cfg)?;
    spec.included_slots(kind)?;
    let level = spec.included_level(kind);
    let grid = Grid::verification(bits, (level + 2).min(crate::grid::MAX_GRID_BITS));
    let mut sup = f64::NEG_INFINITY;
    let mut argmax = 0.0;
    for &x in grid.points() {
        let err = (f.eval(x)? - eval_partial(spec, kind, cfg, x)?).abs();
        if err > sup {
            sup = err;
            argmax = x;
        }
    }
    Ok(ErrorReport {
        sup_error: sup,
        argmax_x: argmax,
        grid_size: grid.len(),
    })
}

/// Result of rendering one expansion in two frames and comparing the
/// level-complete partial sums at every level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameCheck {
    /// Largest pointwise gap seen over all levels and grid points.
    pub max_abs_diff: f64,
    pub argmax_x: f64,
    /// Level at which the largest gap occurred.
    pub level: u32,
    /// Certified allowance when a Softplus frame is involved: the summed
    /// coefficient-weighted sup bounds 4 ln2 / a(n,k). `None` for pairs of
    /// exact frames, where the gap is pure floating-point noise.
    pub budget: Option<f64>,
}

/// Renders `e` in two frames and compares their level-complete partial sums
/// at every level up to `e.max_level()`, on the default verification grid.
///
/// Both runnings sums accumulate in exactly the order [`eval_partial`] uses,
/// so the comparison is of the numbers the evaluator would actually produce.
pub fn frame_identity_check(
    e: &Expansion,
    kind_a: BasisKind,
    kind_b: BasisKind,
    cfg: Option<&SoftplusConfig>,
) -> Result<FrameCheck> {
    frame_identity_check_with_bits(e, kind_a, kind_b, cfg, DEFAULT_GRID_BITS)
}

/// [`frame_identity_check`] on a uniform grid of 2^bits + 1 points (plus
/// dyadic breakpoints).
pub fn frame_identity_check_with_bits(
    e: &Expansion,
    kind_a: BasisKind,
    kind_b: BasisKind,
    cfg: Option<&SoftplusConfig>,
    bits: u32,
) -> Result<FrameCheck> {
    validate_kind(kind_a, cfg)?;
    validate_kind(kind_b, cfg)?;
    let grid = Grid::verification(bits, e.max_level() + 2);
    let pts = grid.points();
    let mut acc_a: Vec<f64> = pts.iter().map(|&x| e.alpha0() + e.alpha1() * x).collect();
    let mut acc_b = acc_a.clone();
    let mut max_abs_diff = f64::NEG_INFINITY;
    let mut argmax_x = 0.0;
    let mut at_level = 0;
    for n in 0..=e.max_level() {
        add_level(&mut acc_a, pts, e, kind_a, cfg, n);
        add_level(&mut acc_b, pts, e, kind_b, cfg, n);
        for (i, &x) in pts.iter().enumerate() {
            let diff = (acc_a[i] - acc_b[i]).abs();
            if diff > max_abs_diff {
                max_abs_diff = diff;
                argmax_x = x;
                at_level = n;
            }
        }
    }
    let budget = if kind_a.is_softplus() || kind_b.is_softplus() {
        let cfg = cfg.expect("validated");
        let mut total = 0.0;
        for rank in 0..e.num_hats() as u64 {
            let idx = DyadicIndex::from_rank(rank);
            total += e.coeff(idx).abs() * gap_bound(idx, cfg);
        }
        Some(total)
    } else {
        None
    };
    Ok(FrameCheck {
        max_abs_diff,
        argmax_x,
        level: at_level,
        budget,
    })
}

/// Adds all level-`n` terms of the series in `kind` into the running sums,
/// matching the per-point summation order of [`eval_partial`].
fn add_level(
    acc: &mut [f64],
    pts: &[f64],
    e: &Expansion,
    kind: BasisKind,
    cfg: Option<&SoftplusConfig>,
    n: u32,
) {
    match kind {
        BasisKind::Hat => {
            for (i, &x) in pts.iter().enumerate() {
                let idx = DyadicIndex::new(n, nonzero_k(n, x));
                acc[i] += e.coeff(idx) * hat(idx, x);
            }
        }
        _ => {
            for k in 0..(1u32 << n) {
                let idx = DyadicIndex::new(n, k);
                let (ci, ch) = pair_coefficients(e, kind, idx);
                for (i, &x) in pts.iter().enumerate() {
                    let (v_int, v_half) = pair_values(kind, cfg, idx, x);
                    acc[i] += ci * v_int;
                    acc[i] += ch * v_half;
                }
            }
        }
    }
}

/// Measured and certified Softplus-vs-ReLU gap for one element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationRow {
    pub n: u32,
    pub k: u32,
    /// Scheduled sharpness a(n, k).
    pub a: f64,
    /// Measured sup of |t_(n,k) - q_(n,k)| over the grid.
    pub gap: f64,
    /// Certified bound 4 ln2 / a(n, k).
    pub bound: f64,
}

/// Summed element-wise gaps against the basis-perturbation threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationReport {
    pub rows: Vec<PerturbationRow>,
    /// Sum of the measured gaps.
    pub total: f64,
    /// Sum of the certified bounds.
    pub total_bound: f64,
    /// The perturbation threshold 1 / (2 K): staying below it keeps the
    /// perturbed system a basis.
    pub threshold: f64,
}

/// Largest level accepted by [`perturbation_budget`] (511 elements).
pub const MAX_PERTURBATION_LEVEL: u32 = 8;

/// Measures sup |t_(n,k) - q_(n,k)| for every element with n at most
/// `max_level` on a uniform grid of 2^bits + 1 points (merged with the
/// dyadic breakpoints), and totals them against the threshold 1 / (2 K).
pub fn perturbation_budget(
    max_level: u32,
    cfg: &SoftplusConfig,
    bits: u32,
) -> Result<PerturbationReport> {
    if max_level > MAX_PERTURBATION_LEVEL {
        return Err(Error::InvalidArg(format!(
            "perturbation level {max_level} exceeds the cap {MAX_PERTURBATION_LEVEL}"
        )));
    }
    let grid = Grid::verification(bits, max_level + 2);
    let mut rows = Vec::new();
    let mut total = 0.0;
    let mut total_bound = 0.0;
    for n in 0..=max_level {
        for k in 0..(1u32 << n) {
            let idx = DyadicIndex::new(n, k);
            let mut gap = 0.0_f64;
            for &x in grid.points() {
                gap = gap.max((t_fn(idx, x) - q_fn(idx, cfg, x)).abs());
            }
            let bound = gap_bound(idx, cfg);
            rows.push(PerturbationRow {
                n,
                k,
                a: sharpness(idx, cfg),
                gap,
                bound,
            });
            total += gap;
            total_bound += bound;
        }
    }
    Ok(PerturbationReport {
        rows,
        total,
        total_bound,
        threshold: 1.0 / (2.0 * cfg.k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::analyze;

    fn func(src: &str) -> Func1D {
        Func1D::from_expr(src).unwrap()
    }

    fn level_spec(e: &Expansion, level: u32) -> PartialSumSpec<'_> {
        PartialSumSpec::new(e, Truncation::LevelComplete(level))
    }

    #[test]
    fn parabola_level_zero_partial_sum() {
        let e = analyze(&func("x * (1 - x)"), 2).unwrap();
        let spec = level_spec(&e, 0);
        for kind in [
            BasisKind::Hat,
            BasisKind::ReluPair,
            BasisKind::SigmoidalDiff,
        ] {
            let v = eval_partial(&spec, kind, None, 0.5).unwrap();
            assert!((v - 0.25).abs() < 1e-15, "{kind} at 1/2: {v}");
            let v = eval_partial(&spec, kind, None, 0.25).unwrap();
            assert!((v - 0.125).abs() < 1e-15, "{kind} at 1/4: {v}");
        }
    }

    #[test]
    fn partial_sums_interpolate_at_dyadic_points() {
        let f = func("exp(x)");
        let e = analyze(&f, 3).unwrap();
        let spec = level_spec(&e, 3);
        for j in 0..=16 {
            let x = j as f64 / 16.0;
            let v = eval_partial(&spec, BasisKind::Hat, None, x).unwrap();
            assert!((v - f.eval(x).unwrap()).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn first_n_prefix_behaviour() {
        let e = analyze(&func("exp(x)"), 2).unwrap();
        let x = 0.3;
        let at = |n: usize| {
            eval_partial(
                &PartialSumSpec::new(&e, Truncation::FirstN(n)),
                BasisKind::ReluPair,
                None,
                x,
            )
            .unwrap()
        };
        assert_eq!(at(0), 0.0);
        assert_eq!(at(1), e.alpha0());
        assert_eq!(at(2), e.alpha0() + e.alpha1() * x);
        // The full prefix equals the level-complete sum, slot for slot.
        let full = eval_partial(&level_spec(&e, 2), BasisKind::ReluPair, None, x).unwrap();
        assert_eq!(at(2 + 2 * e.num_hats()), full);
        // Prefixes are monotone in information: each extra slot changes the
        // value by exactly that slot's contribution, so re-summing from
        // scratch must agree with itself when repeated.
        for n in 0..=(2 + 2 * e.num_hats()) {
            assert_eq!(at(n), at(n));
        }
    }

    #[test]
    fn first_n_matches_level_complete_in_every_frame() {
        let cfg = SoftplusConfig::default();
        let e = analyze(&func("sin(pi * x)"), 2).unwrap();
        for kind in [
            BasisKind::Hat,
            BasisKind::ReluPair,
            BasisKind::SoftplusPair,
            BasisKind::SigmoidalDiff,
            BasisKind::SigmoidalSoftplusDiff,
        ] {
            let n = 2 + e.num_hats() * if kind == BasisKind::Hat { 1 } else { 2 };
            for &x in &[0.0, 0.1, 0.5, 0.875, 1.0] {
                let a = eval_partial(
                    &PartialSumSpec::new(&e, Truncation::FirstN(n)),
                    kind,
                    Some(&cfg),
                    x,
                )
                .unwrap();
                let b = eval_partial(&level_spec(&e, 2), kind, Some(&cfg), x).unwrap();
                assert_eq!(a, b, "{kind} at {x}");
            }
        }
    }

    #[test]
    fn truncation_validation() {
        let e = analyze(&func("x"), 1).unwrap();
        let too_deep = PartialSumSpec::new(&e, Truncation::LevelComplete(2));
        assert!(matches!(
            eval_partial(&too_deep, BasisKind::Hat, None, 0.5),
            Err(Error::TruncationTooLong { .. })
        ));
        let too_long = PartialSumSpec::new(&e, Truncation::FirstN(6));
        assert!(eval_partial(&too_long, BasisKind::Hat, None, 0.5).is_err());
        // 6 slots do exist in a pair frame (2 affine + 2 terms x 2 units...
        // actually 2 + 3 * 2 = 8), so the same spec passes there.
        assert!(eval_partial(&too_long, BasisKind::ReluPair, None, 0.5).is_ok());
        assert!(matches!(
            eval_partial(&level_spec(&e, 0), BasisKind::Hat, None, 1.5),
            Err(Error::Eval { .. })
        ));
        assert!(matches!(
            eval_partial(&level_spec(&e, 0), BasisKind::CounterexampleG, None, 0.5),
            Err(Error::UnsupportedBasis(_))
        ));
        assert!(eval_partial(&level_spec(&e, 0), BasisKind::SoftplusPair, None, 0.5).is_err());
    }

    #[test]
    fn pure_hat_reproduces_exactly() {
        let target = DyadicIndex::new(1, 0);
        let f = Func1D::from_fn(move |x| hat(target, x));
        let e = analyze(&f, 1).unwrap();
        let rep = sup_error(&f, &level_spec(&e, 1), BasisKind::Hat, None).unwrap();
        assert_eq!(rep.sup_error, 0.0);
        assert_eq!(rep.argmax_x, 0.0);
    }

    #[test]
    fn parabola_sup_error_frozen_value() {
        // Piecewise-linear interpolation of x(1 - x) at step h misses by
        // exactly h^2 / 4 at every cell midpoint; at level 3 the step is
        // 1/16, so the sup is 1/1024, first attained at x = 1/32.
        let f = func("x * (1 - x)");
        let e = analyze(&f, 3).unwrap();
        let rep = sup_error(&f, &level_spec(&e, 3), BasisKind::Hat, None).unwrap();
        assert_eq!(rep.sup_error, 1.0 / 1024.0);
        assert_eq!(rep.argmax_x, 1.0 / 32.0);
        assert_eq!(rep.grid_size, (1 << 14) + 1);
    }

    #[test]
    fn parabola_error_quarters_per_level() {
        let f = func("x * (1 - x)");
        let mut prev = f64::NAN;
        for level in 2..=6 {
            let e = analyze(&f, level).unwrap();
            let rep = sup_error(&f, &level_spec(&e, level), BasisKind::Hat, None).unwrap();
            if level > 2 {
                let ratio = rep.sup_error / prev;
                assert!(
                    (0.2..=0.3).contains(&ratio),
                    "ratio at level {level}: {ratio}"
                );
            }
            prev = rep.sup_error;
        }
    }

    #[test]
    fn lipschitz_rate_bound_holds() {
        // For c-Lipschitz f the level-L interpolant misses by at most
        // c / 2^(L+1) (half a cell times the slope), comfortably below the
        // 2c / 2^L certificate used elsewhere.
        let f = func("abs(x - 1/3)");
        for level in 1..=6 {
            let e = analyze(&f, level).unwrap();
            let rep = sup_error(&f, &level_spec(&e, level), BasisKind::Hat, None).unwrap();
            assert!(
                rep.sup_error <= 2.0 / (1u64 << level) as f64,
                "level {level}: {}",
                rep.sup_error
            );
        }
    }

    #[test]
    fn exact_frames_agree_to_roundoff() {
        let e = analyze(&func("exp(x)"), 4).unwrap();
        for kind in [BasisKind::ReluPair, BasisKind::SigmoidalDiff] {
            let check = frame_identity_check(&e, BasisKind::Hat, kind, None).unwrap();
            assert!(
                check.max_abs_diff <= 1e-12,
                "{kind}: {}",
                check.max_abs_diff
            );
            assert!(check.budget.is_none());
        }
    }

    #[test]
    fn softplus_frames_stay_within_budget() {
        let cfg = SoftplusConfig::default();
        let e = analyze(&func("x * (1 - x)"), 3).unwrap();
        for kind in [BasisKind::SoftplusPair, BasisKind::SigmoidalSoftplusDiff] {
            let check = frame_identity_check(&e, BasisKind::Hat, kind, Some(&cfg)).unwrap();
            let budget = check.budget.unwrap();
            assert!(
                check.max_abs_diff <= budget,
                "{kind}: {} > {budget}",
                check.max_abs_diff
            );
            // The gap is real, not a vacuous certificate.
            assert!(
                check.max_abs_diff >= 0.05 * budget,
                "{kind}: {}",
                check.max_abs_diff
            );
        }
    }

    #[test]
    fn identical_frames_compare_to_zero() {
        let e = analyze(&func("sin(pi * x)"), 3).unwrap();
        let check =
            frame_identity_check(&e, BasisKind::ReluPair, BasisKind::ReluPair, None).unwrap();
        assert_eq!(check.max_abs_diff, 0.0);
    }

    #[test]
    fn perturbation_budget_certifies_every_element() {
        let cfg = SoftplusConfig::default();
        let report = perturbation_budget(2, &cfg, 12).unwrap();
        assert_eq!(report.rows.len(), 7);
        assert_eq!(report.threshold, 0.5);
        for row in &report.rows {
            assert!(
                row.gap <= row.bound,
                "({}, {}): {} > {}",
                row.n,
                row.k,
                row.gap,
                row.bound
            );
            assert!(
                row.gap >= 0.4 * row.bound,
                "({}, {}): gap suspiciously small",
                row.n,
                row.k
            );
        }
        assert!(report.total < report.threshold);
        assert!(report.total <= report.total_bound);
        assert!(perturbation_budget(9, &cfg, 12).is_err());
    }

    #[test]
    fn error_report_serializes_with_stable_field_names() {
        let rep = ErrorReport {
            sup_error: 0.5,
            argmax_x: 0.25,
            grid_size: 17,
        };
        let v: serde_json::Value =
            serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
        assert_eq!(v["sup_error"], 0.5);
        assert_eq!(v["argmax_x"], 0.25);
        assert_eq!(v["grid_size"], 17);
    }
}
