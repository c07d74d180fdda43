//! Evaluation grids on \[0,1\].
//!
//! Verification sweeps use a uniform dyadic grid merged with all breakpoints
//! of the basis functions under test. Because the uniform grid is itself
//! dyadic, every point is exactly representable and evaluation of the
//! piecewise-linear bases at grid points involves no rounding.

/// Default exponent of the uniform verification grid: 2^14 + 1 points.
pub const DEFAULT_GRID_BITS: u32 = 14;

/// Largest accepted grid exponent (2^24 + 1 points is ~134 MB of f64).
pub const MAX_GRID_BITS: u32 = 24;

/// A sorted, deduplicated set of sample points in \[0,1\].
#[derive(Debug, Clone)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    /// Uniform grid { j / 2^bits : j = 0..=2^bits }.
    pub fn uniform(bits: u32) -> Self {
        assert!(
            bits <= MAX_GRID_BITS,
            "grid exponent {bits} exceeds {MAX_GRID_BITS}"
        );
        let n = 1usize << bits;
        let scale = n as f64;
        let points = (0..=n).map(|j| j as f64 / scale).collect();
        Self { points }
    }

    /// Uniform grid merged with every dyadic point j / 2^level.
    ///
    /// When `level <= bits` the dyadic points are already on the uniform
    /// grid and this is identical to [`uniform`](Self::uniform).
    pub fn verification(bits: u32, level: u32) -> Self {
        let base = Self::uniform(bits);
        if level <= bits {
            return base;
        }
        assert!(
            level <= MAX_GRID_BITS,
            "breakpoint level {level} exceeds {MAX_GRID_BITS}"
        );
        let n = 1usize << level;
        let scale = n as f64;
        let mut merged = Vec::with_capacity(base.points.len() + n + 1);
        let mut extra = (0..=n).map(|j| j as f64 / scale).peekable();
        for &p in &base.points {
            while let Some(&q) = extra.peek() {
                if q < p {
                    merged.push(q);
                    extra.next();
                } else {
                    if q == p {
                        extra.next();
                    }
                    break;
                }
            }
            merged.push(p);
        }
        merged.extend(extra);
        Self { points: merged }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
