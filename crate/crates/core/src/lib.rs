//! Limit laws of U-max and U-min statistics built from rotation-invariant
//! kernels of points on the unit circle.
//!
//! For a kernel `f` of degree `m` and i.i.d. points `ξ_1, …, ξ_n` with density
//! `p`, `H_n = max f(ξ_{i_1}, …, ξ_{i_m})` over all `m`-subsets satisfies
//!
//! ```text
//! P{ n^{2m/(m−1)} (M − H_n) ≤ t } → 1 − exp(−c t^{(m−1)/2})
//! ```
//!
//! where `M` is the maximum of `f` and `c` depends on the maximizers, the
//! Hessians there and `p`. The crate computes `M`, the maximizers and `c`,
//! simulates `H_n` exactly, and estimates the terms of the Poisson
//! approximation bound.
//!
//! The numeric core is generic over [`Real`] (`f32`, `f64`); exact
//! determinants work over any integral domain. The aliases below fix `f64`.

pub mod density;
pub mod error;
pub mod extremum;
pub mod kernel;
pub mod limit_law;
pub mod linalg;
pub mod poisson;
pub mod rng;
pub mod scalar;
pub mod simulate;

pub use density::{density_eval, product_integral, sample_angle, DensitySpec, DensityTable};
pub use error::{Error, ErrorClass, Result};
pub use extremum::{
    default_grid_n, find_max_oracle, hessian_fd, regular_polygon_analysis, validate_conditions,
    AnalysisSource, HessianMethod, HessianReport, MaxAnalysis, Maximizer, ValidationReport,
};
pub use kernel::{
    central_angles, eval_kernel, eval_on_points, g_second_derivative, AngleTuple, CirclePoint,
    CustomKernel, GFunction, KernelFamily, KernelSpec,
};
pub use limit_law::{
    limit_cdf, limit_constant_gapsum, limit_constant_general, rescale, LimitLaw, Mode,
};
pub use linalg::{det_exact, tridiagonal_det, tridiagonal_matrix, SquareMatrix};
pub use poisson::{
    bound_report, bound_rhs, estimate_joint, estimate_tau, silverman_brown_check, BoundReport,
    JointEstimate, Proposal, Sampling, SilvermanBrownRow,
};
pub use scalar::Real;
pub use simulate::{
    run_replicates, tail_probability, umax_bruteforce, umax_gapsum_dp, EmpiricalCDF, Evaluator,
    SimulationConfig, SimulationResult, TailEstimate,
};

/// A point on the circle in double precision.
pub type Point = CirclePoint<f64>;
/// Central angles in double precision.
pub type Angles = AngleTuple<f64>;
/// Hessian report in double precision.
pub type Hessian = HessianReport<f64>;
