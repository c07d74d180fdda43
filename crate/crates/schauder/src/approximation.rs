//! Constructive rate-of-approximation machinery: the peak interpolant f_P
//! built from P = 2^p equispaced samples, and convergence sweeps that fit an
//! empirical rate exponent.
//!
//! For a c-Lipschitz f the interpolant deviates from f by at most 2c / P: its
//! nodes are the level-p hat peaks x_k = (2k+1) / 2^(p+1), every point of
//! \[0,1\] is within 1/P of a node, and the interpolant's own slope never
//! exceeds c. Because the nodes and the endpoints are dyadics of level p+1,
//! f_P is reproduced exactly by its hat expansion through level p, which is
//! what this module hands back.

use crate::basis::BasisKind;
use crate::coefficients::{analyze, Expansion, MAX_ANALYZE_LEVEL};
use crate::error::{Error, Result};
use crate::evaluator::{sup_error_with_bits, PartialSumSpec, Truncation};
use crate::expr::{Func1D, PiecewiseLinear};
use crate::grid::DEFAULT_GRID_BITS;
use serde::Serialize;

/// Largest accepted sampling exponent p (P = 4096 nodes).
pub const MAX_P: u32 = MAX_ANALYZE_LEVEL;

/// The interpolant f_P of a target function, held as an exact hat expansion.
#[derive(Debug, Clone)]
pub struct Interpolant {
    expansion: Expansion,
    p: u32,
    peaks: Vec<(f64, f64)>,
}

impl Interpolant {
    /// The hat expansion (through level p) that reproduces f_P exactly.
    pub fn expansion(&self) -> &Expansion {
        &self.expansion
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    /// The interpolation nodes (2k+1)/2^(p+1) with their target values.
    pub fn peaks(&self) -> &[(f64, f64)] {
        &self.peaks
    }

    /// Nominal series length of the construction: two affine terms plus one
    /// ReLU pair per node, 2P + 2 in total.
    pub fn n_terms(&self) -> usize {
        2 * self.peaks.len() + 2
    }

    /// The full partial sum of the stored expansion.
    pub fn spec(&self) -> PartialSumSpec<'_> {
        PartialSumSpec::new(
            &self.expansion,
            Truncation::LevelComplete(self.expansion.max_level()),
        )
    }
}

/// Builds the peak interpolant f_P, P = 2^p.
///
/// After peeling off the chord alpha0 + alpha1 x, the residual is sampled at
/// the P cell midpoints and joined piecewise-linearly, extended by constants
/// to the endpoints. The result interpolates f at every node, has slope at
/// most the slope of f between neighbouring nodes, and differs from f by at
/// most 2c / P when f is c-Lipschitz.
pub fn lipschitz_interpolant(f: &Func1D, p: u32) -> Result<Interpolant> {
    if p > MAX_P {
        return Err(Error::InvalidArg(format!(
            "sampling exponent {p} exceeds the cap {MAX_P}"
        )));
    }
    let big_p = 1usize << p;
    let alpha0 = f.eval(0.0)?;
    let alpha1 = f.eval(1.0)? - alpha0;
    let mut peaks = Vec::with_capacity(big_p);
    let denom = (2 * big_p) as f64;
    for k in 0..big_p {
        let x = (2 * k + 1) as f64 / denom;
        peaks.push((x, f.eval(x)?));
    }
    let mut xs = Vec::with_capacity(big_p + 2);
    let mut ys = Vec::with_capacity(big_p + 2);
    let residual = |(x, y): (f64, f64)| y - (alpha0 + alpha1 * x);
    xs.push(0.0);
    ys.push(alpha0 + residual(peaks[0]));
    for &(x, y) in &peaks {
        xs.push(x);
        ys.push(y);
    }
    xs.push(1.0);
    ys.push(alpha0 + alpha1 + residual(peaks[big_p - 1]));
    let f_p = Func1D::from_piecewise(PiecewiseLinear::new(xs, ys)?);
    // Every knot is a dyadic of level p + 1, so the level-p expansion grid
    // hits all of them and the analysis is exact.
    let expansion = analyze(&f_p, p)?;
    Ok(Interpolant {
        expansion,
        p,
        peaks,
    })
}

/// One row of a convergence sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub p: u32,
    /// Nominal term count 2P + 2 of the construction at this p.
    pub n_terms: usize,
    pub sup_error: f64,
    /// The Lipschitz certificate 2c / P.
    pub bound: f64,
}

/// Sup errors of f_P for p = 0..=p_max plus the fitted rate exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub points: Vec<RatePoint>,
    /// Least-squares slope of ln(sup_error) against ln(n_terms), or `None`
    /// when fewer than two points carry error above floating-point floor.
    pub fitted_slope: Option<f64>,
}

/// Sweeps the peak interpolant over p = 0..=p_max and fits the empirical
/// rate exponent. The target must carry a Lipschitz constant (see
/// [`Func1D::with_lipschitz`]) so each row gets its certificate 2c / P.
pub fn convergence_sweep(f: &Func1D, p_max: u32) -> Result<RateReport> {
    convergence_sweep_with_bits(f, p_max, DEFAULT_GRID_BITS)
}

/// [`convergence_sweep`] with the error measured on a uniform grid of
/// 2^bits + 1 points (plus dyadic breakpoints).
pub fn convergence_sweep_with_bits(f: &Func1D, p_max: u32, bits: u32) -> Result<RateReport> {
    let c = f.lipschitz().ok_or_else(|| {
        Error::InvalidArg("rate sweep needs a Lipschitz constant on the target".to_string())
    })?;
    if p_max > MAX_P {
        return Err(Error::InvalidArg(format!(
            "sweep exponent {p_max} exceeds the cap {MAX_P}"
        )));
    }
    let mut points = Vec::with_capacity(p_max as usize + 1);
    for p in 0..=p_max {
        let interp = lipschitz_interpolant(f, p)?;
        let rep = sup_error_with_bits(f, &interp.spec(), BasisKind::Hat, None, bits)?;
        let big_p = (1usize << p) as f64;
        points.push(RatePoint {
            p,
            n_terms: interp.n_terms(),
            sup_error: rep.sup_error,
            bound: 2.0 * c / big_p,
        });
    }
    let fitted_slope = fit_log_slope(&points);
    Ok(RateReport {
        points,
        fitted_slope,
    })
}

/// Ordinary least squares in log-log coordinates, ignoring points whose
/// error has collapsed to floating-point floor (below 1e-12).
pub fn fit_log_slope(points: &[RatePoint]) -> Option<f64> {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|pt| pt.sup_error >= 1e-12)
        .map(|pt| ((pt.n_terms as f64).ln(), pt.sup_error.ln()))
        .collect();
    if data.len() < 2 {
        return None;
    }
    let n = data.len() as f64;
    let mean_x = data.iter().map(|d| d.0).sum::<f64>() / n;
    let mean_y = data.iter().map(|d| d.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in &data {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::{eval_partial, sup_error};

    fn func(src: &str) -> Func1D {
        Func1D::from_expr(src).unwrap()
    }

    #[test]
    fn affine_functions_reproduce_exactly() {
        let f = func("0.3 + 0.4 * x");
        for p in 0..=4 {
            let interp = lipschitz_interpolant(&f, p).unwrap();
            let rep = sup_error(&f, &interp.spec(), BasisKind::Hat, None).unwrap();
            // Off-knot samples of the stored piecewise-linear form carry a
            // rounding ulp, so "exact" means machine epsilon here.
            assert!(rep.sup_error < 1e-14, "p = {p}: {}", rep.sup_error);
        }
        let report = convergence_sweep(&f.with_lipschitz(0.4).unwrap(), 3).unwrap();
        assert!(report.fitted_slope.is_none());
        assert!(report.points.iter().all(|pt| pt.sup_error < 1e-12));
    }

    #[test]
    fn interpolant_hits_every_peak() {
        let f = func("sin(pi * x)");
        let interp = lipschitz_interpolant(&f, 2).unwrap();
        assert_eq!(interp.peaks().len(), 4);
        let spec = interp.spec();
        for &(x, y) in interp.peaks() {
            let v = eval_partial(&spec, BasisKind::Hat, None, x).unwrap();
            assert!((v - y).abs() < 1e-13, "node {x}: {v} vs {y}");
        }
    }

    #[test]
    fn kink_function_error_halves_each_step() {
        // For |x - 1/2| the interpolant misses by exactly 2^-(p+1),
        // attained at the endpoints and the kink.
        let f = func("abs(x - 0.5)");
        for p in 0..=6 {
            let interp = lipschitz_interpolant(&f, p).unwrap();
            let rep = sup_error(&f, &interp.spec(), BasisKind::Hat, None).unwrap();
            let expected = 0.5_f64.powi(p as i32 + 1);
            assert!(
                (rep.sup_error - expected).abs() < 1e-15,
                "p = {p}: {}",
                rep.sup_error
            );
        }
    }

    #[test]
    fn sine_error_is_boundary_dominated() {
        // The constant extension beyond the first node dominates: the error
        // at x = 0 is exactly sin(pi / 2^(p+1)) up to the tiny alpha1 tilt.
        let f = func("sin(pi * x)");
        for p in 1..=5 {
            let interp = lipschitz_interpolant(&f, p).unwrap();
            let rep = sup_error(&f, &interp.spec(), BasisKind::Hat, None).unwrap();
            let expected = (std::f64::consts::PI / (1u64 << (p + 1)) as f64).sin();
            assert!(
                (rep.sup_error - expected).abs() < 1e-12,
                "p = {p}: {} vs {expected}",
                rep.sup_error
            );
            // The same clamp error appears at both endpoints; which one wins
            // is a matter of the last ulp of sin.
            assert!(
                rep.argmax_x == 0.0 || rep.argmax_x == 1.0,
                "argmax {}",
                rep.argmax_x
            );
        }
    }

    #[test]
    fn certificates_hold_with_real_margin() {
        let cases = [("abs(x - 0.5)", 1.0), ("sin(pi * x)", std::f64::consts::PI)];
        for (src, c) in cases {
            let f = func(src).with_lipschitz(c).unwrap();
            let report = convergence_sweep(&f, 6).unwrap();
            for pt in &report.points {
                assert!(pt.sup_error <= pt.bound, "{src} at p = {}", pt.p);
                assert!(pt.bound <= 2.0 * c, "{src} bound magnitude");
            }
        }
    }

    #[test]
    fn fitted_slopes_sit_near_minus_one() {
        for (src, c) in [("abs(x - 0.5)", 1.0), ("sin(pi * x)", std::f64::consts::PI)] {
            let f = func(src).with_lipschitz(c).unwrap();
            let report = convergence_sweep(&f, 7).unwrap();
            let slope = report.fitted_slope.unwrap();
            assert!((-1.45..=-0.85).contains(&slope), "{src}: slope {slope}");
        }
    }

    #[test]
    fn term_counts_follow_the_construction() {
        let f = func("exp(x)");
        let interp = lipschitz_interpolant(&f, 3).unwrap();
        assert_eq!(interp.n_terms(), 18);
        assert_eq!(interp.expansion().max_level(), 3);
    }

    #[test]
    fn sweep_requires_a_lipschitz_constant() {
        let err = convergence_sweep(&func("x"), 2).unwrap_err();
        assert!(matches!(err, Error::InvalidArg(_)));
        assert!(lipschitz_interpolant(&func("x"), MAX_P + 1).is_err());
    }

    #[test]
    fn slope_fit_needs_two_informative_points() {
        let mk = |e: f64| RatePoint {
            p: 0,
            n_terms: 4,
            sup_error: e,
            bound: 1.0,
        };
        assert!(fit_log_slope(&[]).is_none());
        assert!(fit_log_slope(&[mk(0.5)]).is_none());
        assert!(fit_log_slope(&[mk(0.5), mk(1e-15)]).is_none());
        // Two identical abscissae carry no slope information either.
        assert!(fit_log_slope(&[mk(0.5), mk(0.25)]).is_none());
        let pts = [
            RatePoint {
                p: 0,
                n_terms: 4,
                sup_error: 0.5,
                bound: 1.0,
            },
            RatePoint {
                p: 1,
                n_terms: 8,
                sup_error: 0.25,
                bound: 0.5,
            },
        ];
        let slope = fit_log_slope(&pts).unwrap();
        assert!((slope + 1.0).abs() < 1e-12);
    }
}
