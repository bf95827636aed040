//! Maximizers of `h` over the ordered simplex, Hessians at those points, and
//! the structural checks the limit theorem needs (interior, nondegenerate,
//! negative definite).
//!
//! U-min problems go through the same code with a negated kernel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{AngleTuple, GFunction, KernelFamily, KernelSpec};
use crate::linalg::{tridiagonal_det, SquareMatrix};
use crate::scalar::Real;

/// Gaps below this mark a maximizer as lying on the simplex boundary.
pub const BOUNDARY_GAP: f64 = 1e-6;
/// Maxima within this value of the best one belong to the maximal set.
pub const CLUSTER_VALUE_TOL: f64 = 1e-6;
/// Refined maxima further apart than this (sup norm) are distinct maximizers.
pub const CLUSTER_POSITION_TOL: f64 = 1e-3;
/// Smallest coordinate step of the refinement.
pub const REFINE_MIN_STEP: f64 = 1e-9;
/// Default finite-difference step for Hessians.
pub const DEFAULT_FD_STEP: f64 = 1e-4;
/// Default number of improvement rounds per step size.
pub const DEFAULT_REFINE_ITERS: usize = 64;
/// A determinant smaller than this in magnitude is treated as zero.
pub const DEGENERACY_TOL: f64 = 1e-12;

const MAX_CANDIDATES: usize = 24;
const SUPPRESSION_CELLS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianMethod {
    AnalyticGapsum,
    AnalyticPairwise,
    FiniteDifference,
}

/// Hessian of `h` at a point, with both determinant conventions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianReport<T> {
    pub matrix: SquareMatrix<T>,
    pub det_g: T,
    pub det_neg_g: T,
    pub method: HessianMethod,
}

impl<T: Real> HessianReport<T> {
    fn new(matrix: SquareMatrix<T>, method: HessianMethod) -> Self {
        let det_g = matrix.det();
        let det_neg_g = matrix.neg().det();
        Self {
            matrix,
            det_g,
            det_neg_g,
            method,
        }
    }

    pub fn is_negative_definite(&self) -> bool {
        self.matrix.is_negative_definite()
    }
}

/// One ordered maximizer `W_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Maximizer {
    /// Ascending central angles.
    pub angles: Vec<f64>,
    pub value: f64,
    /// `det(−G_i)` of the analysed (possibly negated) kernel.
    pub det_neg_hessian: f64,
}

impl Maximizer {
    /// Smallest of the `m` cyclic gaps `W_1, W_2 − W_1, …, 2π − W_{m−1}`.
    pub fn min_gap(&self) -> f64 {
        min_cyclic_gap(&self.angles)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisSource {
    GridOracle,
    RegularPolygon,
}

/// Maximal value and the ordered maximizers of a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxAnalysis {
    pub m: usize,
    /// Maximal value `M` of the analysed kernel. For a negated kernel this is
    /// `−μ`, minus the minimum of the original.
    pub max_value: f64,
    pub maximizers: Vec<Maximizer>,
    /// Permutation orbit length `(m − 1)!`.
    pub orbit_length: u64,
    /// Total number of maximal points `k = r (m − 1)!`.
    pub point_count: u64,
    pub negated: bool,
    pub source: AnalysisSource,
    pub hessian_method: HessianMethod,
}

impl MaxAnalysis {
    fn assemble(
        m: usize,
        max_value: f64,
        maximizers: Vec<Maximizer>,
        negated: bool,
        source: AnalysisSource,
        hessian_method: HessianMethod,
    ) -> Self {
        let orbit_length = factorial(m - 1);
        let point_count = orbit_length * maximizers.len() as u64;
        Self {
            m,
            max_value,
            maximizers,
            orbit_length,
            point_count,
            negated,
            source,
            hessian_method,
        }
    }

    /// Number of ordered maximizers `r`.
    pub fn ordered_count(&self) -> usize {
        self.maximizers.len()
    }

    /// Extremal value of the original kernel: `M` for U-max, `μ` for U-min.
    pub fn extremal_value(&self) -> f64 {
        if self.negated {
            -self.max_value
        } else {
            self.max_value
        }
    }
}

pub(crate) fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

fn min_cyclic_gap(angles: &[f64]) -> f64 {
    let mut prev = 0.0;
    let mut gap = f64::INFINITY;
    for &a in angles {
        gap = gap.min(a - prev);
        prev = a;
    }
    gap.min(std::f64::consts::TAU - prev)
}

/// Default oracle resolution: 120 cells per axis for `m ≤ 4`, 40 beyond.
pub fn default_grid_n(m: usize) -> usize {
    if m <= 4 {
        120
    } else {
        40.max(8 * (m - 1))
    }
}

fn canonical(x: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = x.iter().map(|&a| crate::scalar::reduce_angle(a)).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

// Odometer over 0 <= i_1 <= ... <= i_d <= top with i_1 fixed.
fn ordered_grid_slab(first: usize, d: usize, top: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx = vec![first; d];
    loop {
        visit(&idx);
        let mut k = d;
        loop {
            if k == 1 {
                return;
            }
            k -= 1;
            if idx[k] < top {
                idx[k] += 1;
                let v = idx[k];
                for slot in idx.iter_mut().skip(k + 1) {
                    *slot = v;
                }
                break;
            }
        }
    }
}

fn pattern_search(spec: &KernelSpec, start: &[f64], step0: f64, rounds: usize) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut fx = spec.eval_angles(&x);
    let mut step = step0;
    while step >= REFINE_MIN_STEP {
        for _ in 0..rounds.max(1) {
            let mut improved = false;
            for i in 0..x.len() {
                for dir in [1.0, -1.0] {
                    let old = x[i];
                    x[i] = old + dir * step;
                    let fy = spec.eval_angles(&x);
                    if fy > fx {
                        fx = fy;
                        improved = true;
                        break;
                    }
                    x[i] = old;
                }
            }
            if !improved {
                break;
            }
        }
        step *= 0.5;
    }
    (canonical(&x), fx)
}

/// Brute-force maximizer search: full grid over the ordered simplex at
/// resolution `2π/grid_n`, then coordinate pattern search from the best
/// separated grid cells with the step halving down to `1e-9`.
///
/// Refined maxima within [`CLUSTER_VALUE_TOL`] of the best are merged into
/// distinct maximizers when they lie within [`CLUSTER_POSITION_TOL`] of each
/// other. Hessians are finite-difference.
pub fn find_max_oracle(spec: &KernelSpec, grid_n: usize, refine_iters: usize) -> Result<MaxAnalysis> {
    let m = spec.degree();
    let d = m - 1;
    if grid_n < 8 * d {
        return Err(Error::InvalidParameter(format!(
            "grid_n = {grid_n} is below 8(m-1) = {}",
            8 * d
        )));
    }
    let cell = std::f64::consts::TAU / grid_n as f64;

    // Slabs are reduced in index order, so the result does not depend on
    // how rayon splits the work.
    let slabs: Vec<Vec<(f64, Vec<u16>)>> = (0..=grid_n)
        .into_par_iter()
        .map(|first| {
            let mut out = Vec::new();
            let mut beta = vec![0.0; d];
            ordered_grid_slab(first, d, grid_n, |idx| {
                for (b, &i) in beta.iter_mut().zip(idx) {
                    *b = cell * i as f64;
                }
                let v = spec.eval_angles(&beta);
                if !v.is_nan() {
                    out.push((v, idx.iter().map(|&i| i as u16).collect()));
                }
            });
            out
        })
        .collect();
    let mut grid: Vec<(f64, Vec<u16>)> = slabs.into_iter().flatten().collect();
    grid.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));

    if let Some((v, idx)) = grid.first() {
        if v.is_infinite() && *v > 0.0 {
            let _ = idx;
            return Err(Error::Unbounded(*v));
        }
    }

    let mut seeds: Vec<&Vec<u16>> = Vec::new();
    for (_, idx) in &grid {
        let far = seeds.iter().all(|s| {
            s.iter()
                .zip(idx.iter())
                .any(|(a, b)| (*a as usize).abs_diff(*b as usize) > SUPPRESSION_CELLS)
        });
        if far {
            seeds.push(idx);
            if seeds.len() == MAX_CANDIDATES {
                break;
            }
        }
    }

    let refined: Vec<(Vec<f64>, f64)> = seeds
        .par_iter()
        .map(|idx| {
            let start: Vec<f64> = idx.iter().map(|&i| cell * i as f64).collect();
            pattern_search(spec, &start, cell, refine_iters)
        })
        .collect();

    let best = refined
        .iter()
        .map(|r| r.1)
        .fold(f64::NEG_INFINITY, f64::max);
    if best.is_infinite() && best > 0.0 {
        return Err(Error::Unbounded(best));
    }
    let mut top: Vec<(Vec<f64>, f64)> = refined
        .into_iter()
        .filter(|r| r.1 >= best - CLUSTER_VALUE_TOL)
        .collect();
    top.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| a.0.partial_cmp(&b.0).unwrap())
    });
    let mut reps: Vec<(Vec<f64>, f64)> = Vec::new();
    for (x, v) in top {
        if reps.iter().all(|(r, _)| sup_dist(r, &x) > CLUSTER_POSITION_TOL) {
            reps.push((x, v));
        }
    }
    reps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    for (x, v) in &reps {
        let gap = min_cyclic_gap(x);
        if gap < BOUNDARY_GAP {
            return Err(Error::BoundaryMaximum {
                gap,
                maximizer: x.clone(),
                value: *v,
            });
        }
    }

    let mut maximizers = Vec::with_capacity(reps.len());
    for (x, v) in reps {
        let point = AngleTuple::new(x.clone())?;
        let hess = hessian_fd(spec, &point, DEFAULT_FD_STEP)?;
        maximizers.push(Maximizer {
            angles: x,
            value: v,
            det_neg_hessian: hess.det_neg_g,
        });
    }
    Ok(MaxAnalysis::assemble(
        m,
        best,
        maximizers,
        spec.is_negated(),
        AnalysisSource::GridOracle,
        HessianMethod::FiniteDifference,
    ))
}

fn structured_generator(spec: &KernelSpec) -> Result<&GFunction> {
    match spec.family() {
        KernelFamily::Custom => Err(Error::Family {
            expected: "gap-sum or pairwise-sum",
        }),
        _ => Ok(spec.generator().unwrap()),
    }
}

/// Maximal value of the regular-polygon candidate: `m g(2π/m)` for gap-sum,
/// `½ Σ_s m g(2πs/m)` for pairwise-sum (sign-adjusted for negated kernels).
pub fn regular_polygon_value(spec: &KernelSpec) -> Result<f64> {
    let g = structured_generator(spec)?;
    let m = spec.degree();
    let mf = m as f64;
    let tau = std::f64::consts::TAU;
    let v = match spec.family() {
        KernelFamily::GapSum => mf * g.eval(tau / mf),
        _ => 0.5 * (1..m).map(|s| mf * g.eval(tau * s as f64 / mf)).sum::<f64>(),
    };
    Ok(if spec.is_negated() { -v } else { v })
}

/// Analytic analysis at the regular `m`-gon. Does not certify that the
/// polygon is the global maximizer; [`find_max_oracle`] does that.
pub fn regular_polygon_analysis(spec: &KernelSpec) -> Result<MaxAnalysis> {
    let g = structured_generator(spec)?;
    let m = spec.degree();
    let hess: HessianReport<f64> = match spec.family() {
        KernelFamily::GapSum => gapsum_hessian(g, m)?,
        _ => pairwise_hessian_raw(g, m)?,
    };
    let hess = if spec.is_negated() {
        HessianReport::new(hess.matrix.neg(), hess.method)
    } else {
        hess
    };
    let value = regular_polygon_value(spec)?;
    let angles = AngleTuple::<f64>::regular_polygon(m)?.into_inner();
    Ok(MaxAnalysis::assemble(
        m,
        value,
        vec![Maximizer {
            angles,
            value,
            det_neg_hessian: hess.det_neg_g,
        }],
        spec.is_negated(),
        AnalysisSource::RegularPolygon,
        hess.method,
    ))
}

fn fd_hessian_once<T: Real>(spec: &KernelSpec, x: &[T], h: T) -> Result<SquareMatrix<T>> {
    let d = x.len();
    let mut p = x.to_vec();
    let eval = |p: &[T]| -> Result<T> {
        let v = spec.eval_angles(p);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!(
                "kernel is not finite near {:?}",
                x.iter().map(|v| v.to_f64().unwrap()).collect::<Vec<_>>()
            )))
        }
    };
    let f0 = eval(&p)?;
    let mut out = SquareMatrix::from_fn(d, |_, _| T::zero());
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    for i in 0..d {
        p[i] = x[i] + h;
        let fp = eval(&p)?;
        p[i] = x[i] - h;
        let fm = eval(&p)?;
        p[i] = x[i];
        out[(i, i)] = (fp - two * f0 + fm) / (h * h);
        for j in 0..i {
            let mut corner = |si: T, sj: T| -> Result<T> {
                p[i] = x[i] + si * h;
                p[j] = x[j] + sj * h;
                let v = eval(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let pp = corner(T::one(), T::one())?;
            let pm = corner(T::one(), -T::one())?;
            let mp = corner(-T::one(), T::one())?;
            let mm = corner(-T::one(), -T::one())?;
            let v = (pp - pm - mp + mm) / (four * h * h);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Central-difference Hessian of `h` at `point`, Richardson-extrapolated over
/// the steps `step` and `step/2`, then symmetrized.
pub fn hessian_fd<T: Real>(spec: &KernelSpec, point: &AngleTuple<T>, step: T) -> Result<HessianReport<T>> {
    if point.len() + 1 != spec.degree() {
        return Err(Error::AngleCount {
            expected: spec.degree() - 1,
            got: point.len(),
        });
    }
    let x = point.as_slice();
    let coarse = fd_hessian_once(spec, x, step)?;
    let fine = fd_hessian_once(spec, x, step * T::lit(0.5))?;
    let three = T::lit(3.0);
    let four = T::lit(4.0);
    let rich = SquareMatrix::from_fn(x.len(), |i, j| (four * fine[(i, j)] - coarse[(i, j)]) / three);
    Ok(HessianReport::new(rich.symmetrized(), HessianMethod::FiniteDifference))
}

/// `det(−G)` at the regular polygon of a gap-sum kernel:
/// `m (−g''(2π/m))^{m−1}`.
pub fn det_neg_hessian_gapsum<T: Real>(g: &GFunction, m: usize) -> Result<T> {
    if m < 2 {
        return Err(Error::Degree(m));
    }
    let mf = T::from_usize(m).unwrap();
    let g2: T = g.second_derivative(T::two_pi() / mf)?;
    if g2.abs() < T::lit(DEGENERACY_TOL) {
        return Err(Error::DegenerateHessian(format!(
            "g''(2pi/{m}) = 0 for generator {}",
            g.name()
        )));
    }
    Ok(mf * (-g2).powi((m - 1) as i32))
}

/// Analytic Hessian of a gap-sum kernel at the regular polygon,
/// `g''(2π/m) · B_{m−1}` with `B` the (2, −1) tridiagonal matrix.
pub fn gapsum_hessian<T: Real>(g: &GFunction, m: usize) -> Result<HessianReport<T>> {
    if m < 2 {
        return Err(Error::Degree(m));
    }
    let mf = T::from_usize(m).unwrap();
    let g2: T = g.second_derivative(T::two_pi() / mf)?;
    let matrix = SquareMatrix::from_fn(m - 1, |i, j| {
        if i == j {
            T::lit(2.0) * g2
        } else if i.abs_diff(j) == 1 {
            -g2
        } else {
            T::zero()
        }
    });
    // det(c B_n) = c^n (n + 1)
    let n = m - 1;
    let b_det = T::from_u64(tridiagonal_det::<u64>(n).unwrap()).unwrap();
    let det_g = g2.powi(n as i32) * b_det;
    let det_neg_g = (-g2).powi(n as i32) * b_det;
    Ok(HessianReport {
        matrix,
        det_g,
        det_neg_g,
        method: HessianMethod::AnalyticGapsum,
    })
}

fn pairwise_hessian_raw<T: Real>(g: &GFunction, m: usize) -> Result<HessianReport<T>> {
    if m < 2 {
        return Err(Error::Degree(m));
    }
    let mf = T::from_usize(m).unwrap();
    let tau = T::two_pi();
    let g2 = (1..m)
        .map(|s| g.second_derivative(tau * T::from_usize(s).unwrap() / mf))
        .collect::<Result<Vec<T>>>()?;
    let diag = g2.iter().fold(T::zero(), |acc, &v| acc + v);
    let matrix = SquareMatrix::from_fn(m - 1, |i, j| {
        if i == j {
            diag
        } else {
            -g2[i.abs_diff(j) - 1]
        }
    });
    Ok(HessianReport::new(matrix, HessianMethod::AnalyticPairwise))
}

/// Toeplitz Hessian of a pairwise-sum kernel at the regular polygon:
/// off-diagonal `−g''(2π|i−j|/m)`, diagonal `Σ_s g''(2πs/m)`.
pub fn pairwise_hessian<T: Real>(g: &GFunction, m: usize) -> Result<HessianReport<T>> {
    let report: HessianReport<T> = pairwise_hessian_raw(g, m)?;
    if report.det_g.abs() < T::lit(DEGENERACY_TOL) {
        return Err(Error::DegenerateHessian(format!(
            "Toeplitz Hessian of {} at m = {m} is singular",
            g.name()
        )));
    }
    Ok(report)
}

/// Outcome of the structural checks on an analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Every maximizer strictly inside the simplex (A4).
    pub interior_maximizers: bool,
    pub min_gap: f64,
    /// Every `det(−G_i)` nonzero (A6).
    pub nondegenerate_hessian: bool,
    /// Every Hessian negative definite by leading principal minors.
    pub negative_definite: bool,
    /// Pairwise kernels only: strict diagonal dominance of the analytic
    /// Toeplitz Hessian, which suffices for a nonzero determinant.
    pub diagonally_dominant: Option<bool>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.interior_maximizers
            && self.nondegenerate_hessian
            && self.negative_definite
            && self.diagonally_dominant.unwrap_or(true)
    }
}

/// Check Conditions A4 and A6 plus negative definiteness for `analysis`,
/// which must come from `spec` (same sign).
pub fn validate_conditions(spec: &KernelSpec, analysis: &MaxAnalysis) -> ValidationReport {
    let min_gap = analysis
        .maximizers
        .iter()
        .map(Maximizer::min_gap)
        .fold(f64::INFINITY, f64::min);
    let interior = !analysis.maximizers.is_empty() && min_gap >= BOUNDARY_GAP;
    let nondegenerate = !analysis.maximizers.is_empty()
        && analysis
            .maximizers
            .iter()
            .all(|w| w.det_neg_hessian.is_finite() && w.det_neg_hessian.abs() > DEGENERACY_TOL);
    let negative_definite = interior
        && analysis.maximizers.iter().all(|w| {
            AngleTuple::new(w.angles.clone())
                .and_then(|p| hessian_fd(spec, &p, DEFAULT_FD_STEP))
                .map(|h| h.is_negative_definite())
                .unwrap_or(false)
        });
    let diagonally_dominant = match spec.family() {
        KernelFamily::PairwiseSum => Some(
            pairwise_hessian_raw::<f64>(spec.generator().unwrap(), spec.degree())
                .map(|h| h.matrix.is_diagonally_dominant())
                .unwrap_or(false),
        ),
        _ => None,
    };
    ValidationReport {
        interior_maximizers: interior,
        min_gap,
        nondegenerate_hessian: nondegenerate,
        negative_definite,
        diagonally_dominant,
    }
}
