//! Poisson approximation of `P(H_n ≤ z)` and its error bound.
//!
//! With `p = P{f(ξ_1..ξ_m) > z}`, `λ = C(n,m) p` and
//! `τ(r) = P{f(ξ_1..ξ_m) > z, f(ξ_{1+m−r}..ξ_{2m−r}) > z} / p`,
//!
//! `|P(H_n ≤ z) − e^{−λ}| ≤ (1 − e^{−λ}) [p (C(n,m) − C(n−m,m))
//!                          + Σ_r C(m,r) C(n−m,m−r) τ(r)]`.
//!
//! `p` and the joint probabilities are estimated by sampling `2m − r` points
//! per trial. Near the maximum these events are far too rare for plain
//! sampling, so trials can instead draw the non-anchor points from a
//! proposal concentrated around the maximizer configuration and carry
//! likelihood-ratio weights.

use std::f64::consts::TAU;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::density::{DensitySpec, DensityTable, SAMPLER_TABLE};
use crate::error::{Error, Result};
use crate::extremum::MaxAnalysis;
use crate::kernel::{eval_on_points, CirclePoint, KernelSpec};
use crate::limit_law::LimitLaw;
use crate::rng::{count_events, sum_moments, Moments};
use crate::scalar::reduce_angle;
use crate::simulate::{draw_sample, umax, Evaluator, MIN_TAIL_SAMPLES};

/// Probability of a uniform draw in the proposal mixture.
pub const DEFENSIVE_WEIGHT: f64 = 0.2;
/// Upper limit of the proposal spread.
pub const MAX_SIGMA: f64 = 0.5;
/// Lower limit of the proposal spread.
pub const MIN_SIGMA: f64 = 1e-8;
const OFFSET_DEDUP_TOL: f64 = 1e-9;

/// Proposal for the points after the first of each block: with probability
/// `1 − α` a Gaussian around `anchor + d` for an offset `d` picked uniformly
/// from the maximizer vertex offsets, otherwise uniform on the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub offsets: Vec<f64>,
    pub sigma: f64,
    pub defensive: f64,
}

impl Proposal {
    /// Proposal for the event `{f > M − ε}` of the analysed kernel.
    ///
    /// The spread matches the quadratic ellipsoid `½ δᵀ(−G)δ < ε` through the
    /// geometric mean of the Hessian eigenvalues.
    pub fn for_level(analysis: &MaxAnalysis, eps: f64) -> Result<Self> {
        let k = (analysis.m - 1) as f64;
        let mut offsets = Vec::new();
        let mut scale = 0.0;
        for w in &analysis.maximizers {
            if !(w.det_neg_hessian > 0.0) {
                return Err(Error::DegenerateHessian(format!(
                    "det(-G) = {} at {:?}",
                    w.det_neg_hessian, w.angles
                )));
            }
            scale += w.det_neg_hessian.powf(1.0 / k);
            let pts: Vec<f64> = std::iter::once(0.0).chain(w.angles.iter().copied()).collect();
            for &a in &pts {
                for &b in &pts {
                    let d = reduce_angle(b - a);
                    if d > OFFSET_DEDUP_TOL && d < TAU - OFFSET_DEDUP_TOL {
                        offsets.push(d);
                    }
                }
            }
        }
        if offsets.is_empty() {
            return Err(Error::InvalidParameter("analysis has no maximizers".into()));
        }
        offsets.sort_by(f64::total_cmp);
        offsets.dedup_by(|a, b| (*a - *b).abs() < OFFSET_DEDUP_TOL);
        scale /= analysis.maximizers.len() as f64;
        let sigma = (eps.max(0.0) / scale).sqrt().clamp(MIN_SIGMA, MAX_SIGMA);
        Ok(Self {
            offsets,
            sigma,
            defensive: DEFENSIVE_WEIGHT,
        })
    }

    fn draw<R: Rng + ?Sized>(&self, anchor: f64, rng: &mut R) -> f64 {
        if rng.gen::<f64>() < self.defensive {
            return rng.gen::<f64>() * TAU;
        }
        let d = self.offsets[rng.gen_range(0..self.offsets.len())];
        let e: f64 = rng.sample(StandardNormal);
        reduce_angle(anchor + d + self.sigma * e)
    }

    fn pdf(&self, anchor: f64, y: f64) -> f64 {
        let norm = 1.0 / (self.sigma * TAU.sqrt());
        let mut mix = 0.0;
        for &d in &self.offsets {
            let mut delta = reduce_angle(y - anchor - d);
            if delta > std::f64::consts::PI {
                delta -= TAU;
            }
            for k in [-1.0, 0.0, 1.0] {
                let u = (delta + k * TAU) / self.sigma;
                mix += (-0.5 * u * u).exp();
            }
        }
        self.defensive / TAU + (1.0 - self.defensive) * norm * mix / self.offsets.len() as f64
    }
}

/// How trials draw their points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum Sampling {
    /// Every point straight from the density.
    Direct,
    /// Block anchors from the density, other points from the proposal.
    Importance(Proposal),
}

impl Sampling {
    pub fn name(&self) -> &'static str {
        match self {
            Sampling::Direct => "direct",
            Sampling::Importance(_) => "importance",
        }
    }

    /// Draw `count` points after `anchor` and return them with their weight.
    fn extend<R: Rng + ?Sized>(
        &self,
        table: &DensityTable,
        anchor: f64,
        count: usize,
        out: &mut Vec<CirclePoint<f64>>,
        rng: &mut R,
    ) -> f64 {
        let mut w = 1.0;
        for _ in 0..count {
            let y = match self {
                Sampling::Direct => table.sample(rng),
                Sampling::Importance(q) => {
                    let y = q.draw(anchor, rng);
                    w *= table.pdf(y) / q.pdf(anchor, y);
                    y
                }
            };
            out.push(CirclePoint::new(y));
        }
        w
    }
}

/// Estimates of `p` and `τ(1..m−1)` at one level `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEstimate {
    pub z: f64,
    pub samples: u64,
    pub sampling: String,
    pub p_hat: f64,
    pub p_std_err: f64,
    /// `τ̂(r)` for `r = 1..m−1`; `None` when `p̂ = 0`.
    pub tau_hat: Vec<Option<f64>>,
    pub tau_std_err: Vec<Option<f64>>,
    /// `p̂ τ̂(r)`, the joint exceedance probability.
    pub joint_hat: Vec<f64>,
}

impl JointEstimate {
    fn from_moments(z: f64, sampling: &Sampling, mo: &Moments) -> Result<Self> {
        let m = mo.dim();
        let p = mo.mean(0);
        let mut tau_hat = Vec::with_capacity(m - 1);
        let mut tau_std_err = Vec::with_capacity(m - 1);
        let mut joint_hat = Vec::with_capacity(m - 1);
        let n = mo.trials as f64;
        for r in 1..m {
            let j = mo.mean(r);
            joint_hat.push(j);
            if p > 0.0 {
                let tau = j / p;
                if !(0.0..=1.0 / p).contains(&tau) {
                    return Err(Error::Consistency { value: tau });
                }
                let var = (mo.cov(r, r) / (p * p) - 2.0 * j * mo.cov(0, r) / (p * p * p)
                    + j * j * mo.cov(0, 0) / (p * p * p * p))
                    / n;
                tau_hat.push(Some(tau));
                tau_std_err.push(Some(var.max(0.0).sqrt()));
            } else {
                tau_hat.push(None);
                tau_std_err.push(None);
            }
        }
        Ok(Self {
            z,
            samples: mo.trials,
            sampling: sampling.name().to_string(),
            p_hat: p,
            p_std_err: mo.std_err(0),
            tau_hat,
            tau_std_err,
            joint_hat,
        })
    }
}

/// Estimate `p` and every `τ(r)` from the same `mc_samples` trials. Each
/// trial draws one block of `m` points and, for every `r`, `m − r` further
/// points completing a second block that shares the last `r` points of the
/// first.
pub fn estimate_joint(
    spec: &KernelSpec,
    density: &DensitySpec,
    z: f64,
    mc_samples: u64,
    seed: u64,
    sampling: &Sampling,
) -> Result<JointEstimate> {
    if mc_samples < MIN_TAIL_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "mc_samples must be at least {MIN_TAIL_SAMPLES}, got {mc_samples}"
        )));
    }
    density.validate()?;
    let m = spec.degree();
    let table = DensityTable::new(density, SAMPLER_TABLE);
    let exceeds = |pts: &[CirclePoint<f64>]| eval_on_points(spec, pts).map_or(false, |v| v > z);
    let mo = sum_moments(seed, mc_samples, m, |rng, x| {
        let mut first = Vec::with_capacity(m);
        let x1 = table.sample(rng);
        first.push(CirclePoint::new(x1));
        let w1 = sampling.extend(&table, x1, m - 1, &mut first, rng);
        let hit = exceeds(&first);
        if hit {
            x[0] = w1;
        }
        let mut second = Vec::with_capacity(m);
        for r in 1..m {
            second.clear();
            second.extend_from_slice(&first[m - r..]);
            let anchor = second[0].theta();
            let w2 = sampling.extend(&table, anchor, m - r, &mut second, rng);
            if hit && exceeds(&second) {
                x[r] = w1 * w2;
            }
        }
    });
    JointEstimate::from_moments(z, sampling, &mo)
}

/// `τ̂(r)` alone; errors when `p̂ = 0`.
pub fn estimate_tau(
    spec: &KernelSpec,
    density: &DensitySpec,
    z: f64,
    r: usize,
    mc_samples: u64,
    seed: u64,
) -> Result<f64> {
    let m = spec.degree();
    if r == 0 || r >= m {
        return Err(Error::InvalidParameter(format!("r must lie in 1..={}, got {r}", m - 1)));
    }
    let est = estimate_joint(spec, density, z, mc_samples, seed, &Sampling::Direct)?;
    est.tau_hat[r - 1].ok_or(Error::UndefinedTau)
}

fn binomial_big(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut c = BigUint::from(1u32);
    for i in 0..k {
        c = c * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    c
}

fn big_to_f64(x: &BigUint) -> f64 {
    x.to_f64().unwrap_or(f64::INFINITY)
}

/// `λ = C(n, m) p`.
pub fn lambda(n: usize, m: usize, p: f64) -> f64 {
    big_to_f64(&binomial_big(n, m)) * p
}

/// Right side of the Poisson approximation bound. Binomials are exact big
/// integers; the difference `C(n,m) − C(n−m,m)` is formed before multiplying
/// by `p`.
pub fn bound_rhs(n: usize, m: usize, p_hat: f64, tau_hats: &[f64]) -> Result<f64> {
    if m < 2 {
        return Err(Error::Degree(m));
    }
    if n < m {
        return Err(Error::SampleSize { n, m });
    }
    if tau_hats.len() != m - 1 {
        return Err(Error::InvalidParameter(format!(
            "expected {} tau values, got {}",
            m - 1,
            tau_hats.len()
        )));
    }
    if !(p_hat >= 0.0) || tau_hats.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidParameter("p and tau must be nonnegative".into()));
    }
    let total = binomial_big(n, m);
    let disjoint = binomial_big(n - m, m);
    let mut bracket = big_to_f64(&(&total - &disjoint)) * p_hat;
    for (r, &tau) in (1..m).zip(tau_hats) {
        bracket += big_to_f64(&(binomial_big(m, r) * binomial_big(n - m, m - r))) * tau;
    }
    let lam = big_to_f64(&total) * p_hat;
    Ok(-(-lam).exp_m1() * bracket)
}

/// Empirical `P(H_n ≤ z)` from simulated samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LhsProbe {
    pub trials: u64,
    pub p_le_z: f64,
    pub std_err: f64,
    /// `|P̂(H_n ≤ z) − e^{−λ̂}|`.
    pub abs_diff: f64,
}

/// Monte Carlo `P(H_n ≤ z)` over `trials` samples of size `n`.
pub fn probe_cdf(
    spec: &KernelSpec,
    density: &DensitySpec,
    n: usize,
    z: f64,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if n < spec.degree() {
        return Err(Error::SampleSize { n, m: spec.degree() });
    }
    let table = DensityTable::new(density, SAMPLER_TABLE);
    let [le] = count_events(seed, trials, |rng| {
        let s = draw_sample(&table, n, rng);
        [umax(&s, spec, Evaluator::Auto).map_or(false, |h| h <= z)]
    });
    let q = le as f64 / trials as f64;
    Ok((q, (q * (1.0 - q) / trials as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub m: usize,
    pub z: f64,
    pub estimate: JointEstimate,
    pub lambda: f64,
    pub rhs: Option<f64>,
    pub lhs_probe: Option<LhsProbe>,
}

/// Estimate `p`, `τ(r)`, `λ` and the bound at level `z` for samples of size
/// `n`. `lhs_trials` adds a direct check of `P(H_n ≤ z)`.
#[allow(clippy::too_many_arguments)]
pub fn bound_report(
    spec: &KernelSpec,
    density: &DensitySpec,
    n: usize,
    z: f64,
    mc_samples: u64,
    seed: u64,
    sampling: &Sampling,
    lhs_trials: Option<u64>,
) -> Result<BoundReport> {
    let m = spec.degree();
    if n < m {
        return Err(Error::SampleSize { n, m });
    }
    let estimate = estimate_joint(spec, density, z, mc_samples, seed, sampling)?;
    let lam = lambda(n, m, estimate.p_hat);
    let rhs = if estimate.p_hat == 0.0 {
        Some(0.0)
    } else {
        let taus: Vec<f64> = estimate.tau_hat.iter().map(|t| t.unwrap_or(0.0)).collect();
        Some(bound_rhs(n, m, estimate.p_hat, &taus)?)
    };
    let lhs_probe = match lhs_trials {
        Some(trials) => {
            let (q, se) = probe_cdf(spec, density, n, z, trials, seed ^ LHS_STREAM_KEY)?;
            Some(LhsProbe {
                trials,
                p_le_z: q,
                std_err: se,
                abs_diff: (q - (-lam).exp()).abs(),
            })
        }
        None => None,
    };
    Ok(BoundReport {
        n,
        m,
        z,
        estimate,
        lambda: lam,
        rhs,
        lhs_probe,
    })
}

const LHS_STREAM_KEY: u64 = 0x5bd1_e995_5bd1_e995;
const GRID_STREAM_KEY: u64 = 0x9e37_79b9_7f4a_7c15;

/// Seed used for entry `k` of a grid of estimates.
pub fn grid_seed(master_seed: u64, k: usize) -> u64 {
    master_seed.wrapping_add(GRID_STREAM_KEY.wrapping_mul(k as u64 + 1))
}

/// One row of the Silverman–Brown diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilvermanBrownRow {
    pub n: usize,
    pub t: f64,
    /// `z_n(t) = M − t n^{−2m/(m−1)}`.
    pub z: f64,
    pub p_hat: f64,
    pub p_std_err: f64,
    pub lambda_hat: f64,
    pub lambda_std_err: f64,
    /// `λ_t = c t^{(m−1)/2}`.
    pub lambda_limit: f64,
    pub tau_hat: Vec<Option<f64>>,
    /// `n^{2m−r} p̂ τ̂(r)` for `r = 1..m−1`.
    pub sb_terms: Vec<f64>,
    pub rhs: f64,
}

/// Diagnostics along `z_n(t)` for each `n` of `n_grid`. `spec` is the kernel
/// whose maximum `max_value` is approached (negate it for U-min problems).
#[allow(clippy::too_many_arguments)]
pub fn silverman_brown_check(
    spec: &KernelSpec,
    density: &DensitySpec,
    law: &LimitLaw,
    max_value: f64,
    t: f64,
    n_grid: &[usize],
    mc_samples: u64,
    seed: u64,
    analysis: Option<&MaxAnalysis>,
) -> Result<Vec<SilvermanBrownRow>> {
    let m = spec.degree();
    if law.m != m {
        return Err(Error::InvalidParameter("limit law degree differs from the kernel".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t must be nonnegative, got {t}")));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for (k, &n) in n_grid.iter().enumerate() {
        if n < m {
            return Err(Error::SampleSize { n, m });
        }
        let eps = t * (n as f64).powf(-law.scaling_exponent);
        let z = max_value - eps;
        let sampling = match analysis {
            Some(a) => Sampling::Importance(Proposal::for_level(a, eps)?),
            None => Sampling::Direct,
        };
        let est = estimate_joint(spec, density, z, mc_samples, grid_seed(seed, k), &sampling)?;
        let c = big_to_f64(&binomial_big(n, m));
        let sb_terms = (1..m)
            .map(|r| (n as f64).powi((2 * m - r) as i32) * est.joint_hat[r - 1])
            .collect();
        let taus: Vec<f64> = est.tau_hat.iter().map(|t| t.unwrap_or(0.0)).collect();
        rows.push(SilvermanBrownRow {
            n,
            t,
            z,
            p_hat: est.p_hat,
            p_std_err: est.p_std_err,
            lambda_hat: c * est.p_hat,
            lambda_std_err: c * est.p_std_err,
            lambda_limit: law.intensity(t),
            rhs: bound_rhs(n, m, est.p_hat, &taus)?,
            tau_hat: est.tau_hat,
            sb_terms,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremum::regular_polygon_analysis;
    use crate::kernel::GFunction;
    use crate::limit_law::Mode;
    use std::f64::consts::PI;

    fn perimeter() -> KernelSpec {
        KernelSpec::gap_sum(GFunction::SinHalf, 3).unwrap()
    }

    #[test]
    fn rhs_examples() {
        assert_eq!(bound_rhs(10, 3, 0.0, &[0.0, 0.0]).unwrap(), 0.0);
        let expected = -(-0.12f64).exp_m1() * 0.085;
        let got = bound_rhs(10, 3, 0.001, &[0.0, 0.0]).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!(bound_rhs(10, 3, -1.0, &[0.0, 0.0]).is_err());
        assert!(bound_rhs(10, 3, 0.1, &[0.0]).is_err());
    }

    #[test]
    fn rhs_with_huge_binomials_is_finite() {
        let v = bound_rhs(5000, 6, 1e-19, &[1e-9; 5]).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn sure_event_gives_unit_tau() {
        let est = estimate_joint(&perimeter(), &DensitySpec::Uniform, -1.0, 20_000, 3, &Sampling::Direct).unwrap();
        assert_eq!(est.p_hat, 1.0);
        assert_eq!(est.tau_hat, vec![Some(1.0), Some(1.0)]);
    }

    #[test]
    fn impossible_event_leaves_tau_undefined() {
        let z = 3.0 * 3f64.sqrt() + 1e-9;
        let err = estimate_tau(&perimeter(), &DensitySpec::Uniform, z, 1, 20_000, 3).unwrap_err();
        assert_eq!(err, Error::UndefinedTau);
        assert!(estimate_tau(&perimeter(), &DensitySpec::Uniform, z, 3, 20_000, 3).is_err());
    }

    #[test]
    fn importance_matches_direct_at_moderate_level() {
        let spec = perimeter();
        let analysis = regular_polygon_analysis(&spec).unwrap();
        let eps = 0.05;
        let z = analysis.max_value - eps;
        let u = DensitySpec::Uniform;
        let direct = estimate_joint(&spec, &u, z, 400_000, 1, &Sampling::Direct).unwrap();
        let q = Sampling::Importance(Proposal::for_level(&analysis, eps).unwrap());
        let is = estimate_joint(&spec, &u, z, 400_000, 2, &q).unwrap();
        let se = (direct.p_std_err.powi(2) + is.p_std_err.powi(2)).sqrt();
        assert!((direct.p_hat - is.p_hat).abs() < 4.0 * se, "{direct:?} {is:?}");
        for r in 0..2 {
            let (a, b) = (direct.joint_hat[r], is.joint_hat[r]);
            assert!((a - b).abs() < 0.2 * a.max(b) + 1e-4, "r={} {a} {b}", r + 1);
        }
    }

    #[test]
    fn lambda_at_zero_level_is_zero() {
        let spec = perimeter();
        let analysis = regular_polygon_analysis(&spec).unwrap();
        let law = LimitLaw::from_analysis(&analysis, &DensitySpec::Uniform).unwrap();
        let rows = silverman_brown_check(
            &spec,
            &DensitySpec::Uniform,
            &law,
            analysis.max_value,
            0.0,
            &[50, 100],
            20_000,
            4,
            Some(&analysis),
        )
        .unwrap();
        for row in rows {
            assert_eq!(row.lambda_hat, 0.0);
            assert_eq!(row.tau_hat, vec![None, None]);
        }
    }

    #[test]
    fn lambda_tracks_the_limit() {
        let spec = perimeter();
        let analysis = regular_polygon_analysis(&spec).unwrap();
        let law = LimitLaw::from_analysis(&analysis, &DensitySpec::Uniform).unwrap();
        assert_eq!(law.mode, Mode::UMax);
        let rows = silverman_brown_check(
            &spec,
            &DensitySpec::Uniform,
            &law,
            analysis.max_value,
            1.0,
            &[50, 100, 200],
            200_000,
            8,
            Some(&analysis),
        )
        .unwrap();
        let target = 2.0 / (9.0 * PI);
        for row in &rows {
            // C(n,3) p vs n^3 p / 3!: the finite-n factor (1 − 1/n)(1 − 2/n)
            let finite = (1.0 - 1.0 / row.n as f64) * (1.0 - 2.0 / row.n as f64);
            assert!(
                (row.lambda_hat - target * finite).abs() < 3.0 * row.lambda_std_err + 0.01 * target,
                "{row:?}"
            );
        }
        assert!(rows[2].sb_terms[0] < rows[0].sb_terms[0]);
    }
}
