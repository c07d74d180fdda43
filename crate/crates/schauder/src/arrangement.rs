//! ReLU plane arrangements over the unit square: the convex region
//! decomposition induced by a finite combination Σ alpha_i relu(w_i . x + b_i),
//! adjacency and zero-region audits, and a least-squares pyramid fit.
//!
//! On each open cell of the line arrangement the candidate function is
//! affine, with gradient Σ alpha_i w_i over the active planes. Crossing one
//! cell wall toggles exactly one activation, so the gradient jumps by
//! exactly alpha_i w_i. In particular two walls apart, a candidate that
//! vanishes on a cell cannot also vanish on a neighbouring cell unless the
//! crossed plane contributes nothing; the audits here measure precisely
//! those jumps.

use crate::basis::relu;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Geometric slack for point-on-line and merge decisions.
pub const GEOM_EPS: f64 = 1e-9;

/// Most planes accepted by [`build_arrangement`] (the cell count grows
/// quadratically).
pub const MAX_PLANES_ARRANGEMENT: usize = 64;

/// Most planes accepted by [`fit_pyramid`].
pub const MAX_PLANES_FIT: usize = 256;

/// Largest per-axis training grid accepted by [`fit_pyramid`].
pub const MAX_FIT_GRID: usize = 201;

/// Cells thinner than this are treated as degenerate and dropped.
const KEEP_AREA: f64 = 1e-12;

/// One ReLU unit alpha * relu(w . x + b) over the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReluPlane {
    pub w: [f64; 2],
    pub b: f64,
    pub alpha: f64,
}

impl ReluPlane {
    /// `w` must be finite and nonzero; `b` and `alpha` finite.
    pub fn new(w: [f64; 2], b: f64, alpha: f64) -> Result<Self> {
        let plane = Self { w, b, alpha };
        plane.validate()?;
        Ok(plane)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w[0].is_finite()
            && self.w[1].is_finite()
            && self.b.is_finite()
            && self.alpha.is_finite())
        {
            return Err(Error::Geometry(
                "plane parameters must be finite".to_string(),
            ));
        }
        if self.w[0] == 0.0 && self.w[1] == 0.0 {
            return Err(Error::Geometry("plane normal must be nonzero".to_string()));
        }
        Ok(())
    }

    /// Rescales so the normal is unit length; since
    /// relu(w . x + b) = |w| relu(ŵ . x + b̂), the weight moves into alpha.
    fn normalized(&self) -> ReluPlane {
        let norm = (self.w[0] * self.w[0] + self.w[1] * self.w[1]).sqrt();
        ReluPlane {
            w: [self.w[0] / norm, self.w[1] / norm],
            b: self.b / norm,
            alpha: self.alpha * norm,
        }
    }

    pub fn eval(&self, xy: [f64; 2]) -> f64 {
        self.alpha * relu(self.w[0] * xy[0] + self.w[1] * xy[1] + self.b)
    }
}

/// The candidate function Σ alpha_i relu(w_i . x + b_i) at a point.
pub fn candidate_value(planes: &[ReluPlane], xy: [f64; 2]) -> f64 {
    planes.iter().map(|p| p.eval(xy)).sum()
}

/// The pyramid with peak 1 over (1/2, 1/2) and square base
/// [1/4, 3/4] x [1/4, 3/4]: max(0, 1 - 4 max(|x - 1/2|, |y - 1/2|)).
/// It vanishes on and outside the base boundary. Defined on the closed unit
/// square only.
pub fn pyramid(x: f64, y: f64) -> f64 {
    assert!(
        (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y),
        "pyramid is defined on the unit square, got ({x}, {y})"
    );
    let m = (x - 0.5).abs().max((y - 0.5).abs());
    (1.0 - 4.0 * m).max(0.0)
}

/// One convex cell of the decomposition.
#[derive(Debug, Clone)]
pub struct Region {
    /// Counter-clockwise polygon.
    pub vertices: Vec<[f64; 2]>,
    /// Activation bit per (merged, normalized) plane: which side of each
    /// line the cell lies on, recorded as the arrangement is built.
    pub z: Vec<bool>,
    /// Gradient of the candidate on this cell: Σ over active planes of
    /// alpha_i ŵ_i.
    pub w_sum: [f64; 2],
    /// Offset of the candidate on this cell: Σ over active planes of
    /// alpha_i b̂_i.
    pub b_sum: f64,
    pub area: f64,
    pub centroid: [f64; 2],
}

/// Two cells sharing a wall segment on the given plane's line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Adjacency {
    pub region_a: usize,
    pub region_b: usize,
    pub line: usize,
}

/// The full cell decomposition of the unit square.
#[derive(Debug, Clone)]
pub struct RegionDecomposition {
    /// Normalized planes after merging coincident lines; `line` indices in
    /// [`Adjacency`] and the `z` vectors refer to this list.
    pub planes: Vec<ReluPlane>,
    pub regions: Vec<Region>,
    pub adjacency: Vec<Adjacency>,
    /// How many input planes were folded into an earlier coincident one.
    pub merges: usize,
}

fn classify(s: f64) -> i32 {
    if s > GEOM_EPS {
        1
    } else if s < -GEOM_EPS {
        -1
    } else {
        0
    }
}

/// Splits a convex polygon by the line w . x + b = 0 into the closed
/// negative-side and positive-side parts (either may come back degenerate).
fn split_polygon(poly: &[[f64; 2]], w: [f64; 2], b: f64) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let mut neg = Vec::with_capacity(poly.len() + 1);
    let mut pos = Vec::with_capacity(poly.len() + 1);
    let n = poly.len();
    for i in 0..n {
        let cur = poly[i];
        let nxt = poly[(i + 1) % n];
        let sc = w[0] * cur[0] + w[1] * cur[1] + b;
        let sn = w[0] * nxt[0] + w[1] * nxt[1] + b;
        let cc = classify(sc);
        let cn = classify(sn);
        if cc <= 0 {
            neg.push(cur);
        }
        if cc >= 0 {
            pos.push(cur);
        }
        if cc * cn < 0 {
            let t = sc / (sc - sn);
            let p = [
                cur[0] + t * (nxt[0] - cur[0]),
                cur[1] + t * (nxt[1] - cur[1]),
            ];
            neg.push(p);
            pos.push(p);
        }
    }
    (dedup_ring(neg), dedup_ring(pos))
}

/// Removes consecutive (near-)duplicate vertices, including around the wrap.
fn dedup_ring(mut poly: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let close =
        |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12;
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(poly.len());
    for v in poly.drain(..) {
        if out.last().is_some_and(|&last| close(last, v)) {
            continue;
        }
        out.push(v);
    }
    while out.len() >= 2 && close(out[0], *out.last().unwrap()) {
        out.pop();
    }
    out
}

/// Signed area (positive for counter-clockwise) and centroid.
fn area_centroid(poly: &[[f64; 2]]) -> (f64, [f64; 2]) {
    let mut a2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    let n = poly.len();
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        let cross = x0 * y1 - x1 * y0;
        a2 += cross;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    let area = a2 / 2.0;
    if area.abs() < f64::MIN_POSITIVE {
        return (0.0, poly[0]);
    }
    (area, [cx / (3.0 * a2), cy / (3.0 * a2)])
}

/// Normalizes the planes and folds together coincident lines.
///
/// Same-orientation coincident lines add their alphas (and vanish entirely
/// if the sum is zero); opposite-orientation coincidence is rejected,
/// because relu(s) and relu(-s) are not proportional and the two half-plane
/// indicators cannot be merged into one wall.
fn merge_planes(planes: &[ReluPlane]) -> Result<(Vec<ReluPlane>, usize)> {
    let mut merged: Vec<ReluPlane> = Vec::with_capacity(planes.len());
    let mut merges = 0;
    for plane in planes {
        plane.validate()?;
        if plane.alpha == 0.0 {
            return Err(Error::Geometry(
                "combination terms must have nonzero coefficients".to_string(),
            ));
        }
        let p = plane.normalized();
        let mut absorbed = false;
        for m in merged.iter_mut() {
            let same = (m.w[0] - p.w[0]).abs() <= GEOM_EPS
                && (m.w[1] - p.w[1]).abs() <= GEOM_EPS
                && (m.b - p.b).abs() <= GEOM_EPS;
            let opposite = (m.w[0] + p.w[0]).abs() <= GEOM_EPS
                && (m.w[1] + p.w[1]).abs() <= GEOM_EPS
                && (m.b + p.b).abs() <= GEOM_EPS;
            if same {
                m.alpha += p.alpha;
                merges += 1;
                absorbed = true;
                break;
            }
            if opposite {
                return Err(Error::Geometry(format!(
                    "coincident lines with opposite orientations: ({}, {}) . x + {} = 0",
                    p.w[0], p.w[1], p.b
                )));
            }
        }
        if !absorbed {
            merged.push(p);
        }
    }
    merged.retain(|m| m.alpha != 0.0);
    Ok((merged, merges))
}

/// Builds the cell decomposition of the unit square induced by the planes.
///
/// Lines are inserted one at a time, splitting every cell they cross;
/// degenerate slivers (fewer than three vertices or area below 1e-12) are
/// discarded. Activation bits, per-cell affine data, and wall adjacencies
/// are then read off the finished cells.
pub fn build_arrangement(planes: &[ReluPlane]) -> Result<RegionDecomposition> {
    if planes.len() > MAX_PLANES_ARRANGEMENT {
        return Err(Error::Geometry(format!(
            "{} planes exceed the arrangement cap {MAX_PLANES_ARRANGEMENT}",
            planes.len()
        )));
    }
    let (merged, merges) = merge_planes(planes)?;
    let square = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    // Each cell carries its side of every line inserted so far; recording
    // the bit at split time keeps it reliable even for very thin cells.
    let mut cells: Vec<(Vec<[f64; 2]>, Vec<bool>)> = vec![(square, Vec::new())];
    for plane in &merged {
        let mut next = Vec::with_capacity(cells.len() + 4);
        for (cell, bits) in &cells {
            let (neg, pos) = split_polygon(cell, plane.w, plane.b);
            for (part, side) in [(neg, false), (pos, true)] {
                if part.len() >= 3 && area_centroid(&part).0 >= KEEP_AREA {
                    let mut part_bits = bits.clone();
                    part_bits.push(side);
                    next.push((part, part_bits));
                }
            }
        }
        cells = next;
    }
    let regions: Vec<Region> = cells
        .into_iter()
        .map(|(vertices, z)| {
            let (area, centroid) = area_centroid(&vertices);
            let mut w_sum = [0.0, 0.0];
            let mut b_sum = 0.0;
            for (p, &active) in merged.iter().zip(&z) {
                if active {
                    w_sum[0] += p.alpha * p.w[0];
                    w_sum[1] += p.alpha * p.w[1];
                    b_sum += p.alpha * p.b;
                }
            }
            Region {
                vertices,
                z,
                w_sum,
                b_sum,
                area,
                centroid,
            }
        })
        .collect();
    let adjacency = wall_adjacency(&merged, &regions);
    Ok(RegionDecomposition {
        planes: merged,
        regions,
        adjacency,
        merges,
    })
}

/// Finds every pair of cells whose boundaries share a segment (not just a
/// point) of some plane's line.
fn wall_adjacency(planes: &[ReluPlane], regions: &[Region]) -> Vec<Adjacency> {
    let mut adjacency = Vec::new();
    for (line, plane) in planes.iter().enumerate() {
        // Direction along the line, for 1-D interval overlap tests.
        let dir = [-plane.w[1], plane.w[0]];
        let on_line =
            |v: [f64; 2]| (plane.w[0] * v[0] + plane.w[1] * v[1] + plane.b).abs() <= GEOM_EPS;
        // (region, segment interval along the line)
        let mut touching: Vec<(usize, f64, f64)> = Vec::new();
        for (r, region) in regions.iter().enumerate() {
            let n = region.vertices.len();
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut any = false;
            for i in 0..n {
                let a = region.vertices[i];
                let b = region.vertices[(i + 1) % n];
                if on_line(a) && on_line(b) {
                    for v in [a, b] {
                        let t = dir[0] * v[0] + dir[1] * v[1];
                        lo = lo.min(t);
                        hi = hi.max(t);
                    }
                    any = true;
                }
            }
            if any && hi - lo > GEOM_EPS {
                touching.push((r, lo, hi));
            }
        }
        for i in 0..touching.len() {
            for j in (i + 1)..touching.len() {
                let (ra, lo_a, hi_a) = touching[i];
                let (rb, lo_b, hi_b) = touching[j];
                if hi_a.min(hi_b) - lo_a.max(lo_b) > GEOM_EPS {
                    adjacency.push(Adjacency {
                        region_a: ra,
                        region_b: rb,
                        line,
                    });
                }
            }
        }
    }
    adjacency
}

/// A wall whose gradient jump deviates from alpha_i ŵ_i.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborViolation {
    pub region_a: usize,
    pub region_b: usize,
    pub line: usize,
    pub deviation: f64,
}

/// Outcome of verifying the gradient-jump relation across every wall.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborCheck {
    pub checked_edges: usize,
    /// Largest deviation seen across all walls (0 when there are none).
    pub max_deviation: f64,
    pub violation: Option<NeighborViolation>,
}

/// Verifies, wall by wall, that neighbouring cells differ in exactly the
/// crossed plane's activation bit and that their affine data differ by
/// exactly that plane's contribution (to within 1e-9).
pub fn check_neighbor_relation(dec: &RegionDecomposition) -> NeighborCheck {
    let mut max_deviation = 0.0_f64;
    let mut violation = None;
    for adj in &dec.adjacency {
        let a = &dec.regions[adj.region_a];
        let b = &dec.regions[adj.region_b];
        let plane = &dec.planes[adj.line];
        let bits_differ_elsewhere =
            a.z.iter()
                .zip(&b.z)
                .enumerate()
                .any(|(i, (za, zb))| i != adj.line && za != zb);
        let deviation = if bits_differ_elsewhere || a.z[adj.line] == b.z[adj.line] {
            f64::INFINITY
        } else {
            // Sign of the jump going from a to b.
            let s = if b.z[adj.line] { 1.0 } else { -1.0 };
            let dw0 = (b.w_sum[0] - a.w_sum[0]) - s * plane.alpha * plane.w[0];
            let dw1 = (b.w_sum[1] - a.w_sum[1]) - s * plane.alpha * plane.w[1];
            let db = (b.b_sum - a.b_sum) - s * plane.alpha * plane.b;
            dw0.abs().max(dw1.abs()).max(db.abs())
        };
        max_deviation = max_deviation.max(deviation);
        if deviation > GEOM_EPS && violation.is_none() {
            violation = Some(NeighborViolation {
                region_a: adj.region_a,
                region_b: adj.region_b,
                line: adj.line,
                deviation,
            });
        }
    }
    NeighborCheck {
        checked_edges: dec.adjacency.len(),
        max_deviation,
        violation,
    }
}

/// Zero cells and, crucially, walls between two zero cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroRegionAudit {
    /// Cells on which the candidate vanishes identically.
    pub zero_regions: Vec<usize>,
    /// Walls with a zero cell on both sides. For a candidate with every
    /// alpha_i nonzero this list must be empty: crossing a wall changes the
    /// gradient by alpha_i ŵ_i, which cannot vanish.
    pub zero_zero_edges: Vec<(usize, usize)>,
}

/// Flags every cell where the candidate is identically zero (gradient and
/// offset both below 1e-9) and every wall joining two such cells.
pub fn zero_region_audit(dec: &RegionDecomposition) -> ZeroRegionAudit {
    let is_zero = |r: &Region| {
        r.w_sum[0].abs() <= GEOM_EPS && r.w_sum[1].abs() <= GEOM_EPS && r.b_sum.abs() <= GEOM_EPS
    };
    let zero_flags: Vec<bool> = dec.regions.iter().map(is_zero).collect();
    let zero_regions = zero_flags
        .iter()
        .enumerate()
        .filter_map(|(i, &z)| z.then_some(i))
        .collect();
    let mut zero_zero_edges: Vec<(usize, usize)> = dec
        .adjacency
        .iter()
        .filter(|adj| zero_flags[adj.region_a] && zero_flags[adj.region_b])
        .map(|adj| {
            (
                adj.region_a.min(adj.region_b),
                adj.region_a.max(adj.region_b),
            )
        })
        .collect();
    zero_zero_edges.sort_unstable();
    zero_zero_edges.dedup();
    ZeroRegionAudit {
        zero_regions,
        zero_zero_edges,
    }
}

/// Draws `n` unit-normal planes with alpha = 1: angles uniform on [0, 2pi),
/// offsets uniform on [-1.5, 0.5] so most lines cross the square.
/// Deterministic in `seed`, and a longer draw extends a shorter one.
pub fn sample_planes(seed: u64, n: usize) -> Vec<ReluPlane> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let theta = rng.gen::<f64>() * std::f64::consts::TAU;
            let b = -1.5 + rng.gen::<f64>() * 2.0;
            ReluPlane {
                w: [theta.cos(), theta.sin()],
                b,
                alpha: 1.0,
            }
        })
        .collect()
}

/// A least-squares fit of the pyramid by `planes.len()` ReLU units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyramidFit {
    pub planes: Vec<ReluPlane>,
    pub seed: u64,
    pub grid: usize,
    /// Numerical rank of the design matrix at a relative 1e-12 cutoff.
    pub rank: usize,
    pub rank_deficient: bool,
    /// Root-mean-square residual on the training grid itself.
    pub training_residual_l2: f64,
    /// Root-mean-square residual on the twice-refined evaluation grid.
    pub residual_l2: f64,
    /// Sup residual on the twice-refined evaluation grid.
    pub residual_sup: f64,
}

fn square_grid(per_axis: usize) -> Vec<[f64; 2]> {
    let scale = (per_axis - 1) as f64;
    let mut pts = Vec::with_capacity(per_axis * per_axis);
    for iy in 0..per_axis {
        for ix in 0..per_axis {
            pts.push([ix as f64 / scale, iy as f64 / scale]);
        }
    }
    pts
}

/// Fits alphas for `n_planes` sampled ReLU units to the pyramid by
/// minimum-norm least squares on a `grid` x `grid` training lattice, then
/// scores the fit on the twice-refined lattice. Deterministic in
/// (`n_planes`, `seed`, `grid`). With zero planes the candidate is
/// identically zero and the sup residual is the pyramid peak, 1.
pub fn fit_pyramid(n_planes: usize, seed: u64, grid: usize) -> Result<PyramidFit> {
    if n_planes > MAX_PLANES_FIT {
        return Err(Error::InvalidArg(format!(
            "plane count must be at most {MAX_PLANES_FIT}, got {n_planes}"
        )));
    }
    if !(2..=MAX_FIT_GRID).contains(&grid) {
        return Err(Error::InvalidArg(format!(
            "training grid must be in 2..={MAX_FIT_GRID} points per axis, got {grid}"
        )));
    }
    let mut planes = sample_planes(seed, n_planes);
    let train = square_grid(grid);
    let mut rank = 0;
    if n_planes > 0 {
        let design = DMatrix::from_fn(train.len(), n_planes, |r, j| {
            let p = &planes[j];
            relu(p.w[0] * train[r][0] + p.w[1] * train[r][1] + p.b)
        });
        let target =
            DVector::from_iterator(train.len(), train.iter().map(|&pt| pyramid(pt[0], pt[1])));
        let svd = design.svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
        let cutoff = smax * 1e-12;
        rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        let alphas = svd
            .solve(&target, cutoff)
            .map_err(|m| Error::Geometry(format!("pyramid fit failed: {m}")))?;
        for (p, &a) in planes.iter_mut().zip(alphas.iter()) {
            p.alpha = a;
        }
    }
    let rms = |pts: &[[f64; 2]]| {
        let mut sup = 0.0_f64;
        let mut sq = 0.0_f64;
        for &pt in pts {
            let r = candidate_value(&planes, pt) - pyramid(pt[0], pt[1]);
            sup = sup.max(r.abs());
            sq += r * r;
        }
        (sup, (sq / pts.len() as f64).sqrt())
    };
    let (_, training_residual_l2) = rms(&train);
    let eval = square_grid(2 * grid - 1);
    let (residual_sup, residual_l2) = rms(&eval);
    Ok(PyramidFit {
        planes,
        seed,
        grid,
        rank,
        rank_deficient: rank < n_planes,
        training_residual_l2,
        residual_l2,
        residual_sup,
    })
}
