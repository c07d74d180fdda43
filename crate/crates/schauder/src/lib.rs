//! Constructive Schauder bases for C\[0,1\] built from ReLU and Softplus
//! units, plus a small 2-D lab for ReLU plane arrangements over the unit
//! square.
//!
//! The library provides:
//!
//! * the Faber–Schauder hat system over dyadic intervals, together with its
//!   exact realizations as ReLU second differences and sigmoidal first
//!   differences, and the Softplus-smoothed variants with a per-level
//!   sharpness schedule ([`basis`]);
//! * midpoint-rule coefficient analysis, an independent collocation oracle,
//!   and regrouping of hat coefficients into the unit-level frames
//!   ([`coefficients`]);
//! * partial-sum evaluation in any frame, sup-norm error reports, and
//!   frame-vs-frame identity checks ([`evaluator`]);
//! * equispaced-peak Lipschitz interpolants and a convergence-rate sweep
//!   ([`approximation`]);
//! * convex region decompositions of the unit square induced by finite ReLU
//!   plane combinations, adjacency/zero-region audits, and least-squares
//!   pyramid fits ([`arrangement`]);
//! * a tiny expression language for test functions ([`expr`]).

pub mod approximation;
pub mod arrangement;
pub mod basis;
pub mod coefficients;
pub mod error;
pub mod evaluator;
pub mod expr;
pub mod grid;

pub use approximation::{
    convergence_sweep, convergence_sweep_with_bits, fit_log_slope, lipschitz_interpolant,
    Interpolant, RatePoint, RateReport,
};
pub use arrangement::{
    build_arrangement, candidate_value, check_neighbor_relation, fit_pyramid, pyramid,
    sample_planes, zero_region_audit, Adjacency, NeighborCheck, PyramidFit, Region,
    RegionDecomposition, ReluPlane, ZeroRegionAudit,
};
pub use basis::{
    d_fn, d_fn_half, g_fn, gap_bound, hat, q_fn, q_fn_with_a, relu, sharpness, softplus, t_fn,
    u_fn, u_fn_half, BasisKind, DyadicIndex, SoftplusConfig, MAX_LEVEL,
};
pub use coefficients::{
    analyze, analyze_q, collocation_oracle, regroup, Expansion, RegroupedExpansion, RegroupedTerm,
};
pub use error::{Error, Result};
pub use evaluator::{
    eval_partial, frame_identity_check, frame_identity_check_with_bits, perturbation_budget,
    sup_error, sup_error_with_bits, ErrorReport, FrameCheck, PartialSumSpec, PerturbationReport,
    PerturbationRow, Truncation,
};
pub use expr::{Expr, Func1D};
pub use grid::{Grid, DEFAULT_GRID_BITS};
