//! Exact U-max statistics of samples and Monte Carlo checks of the limit law.
//!
//! `H_n` is the maximum of the (possibly negated) kernel over all `C(n, m)`
//! subsets of a sample. Kernel values inside the subset loops come from
//! tables of generator values between sorted sample points, so each subset
//! costs `m` additions for gap-sum kernels and `m(m−1)/2` for pairwise ones.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{DensitySpec, DensityTable, SAMPLER_TABLE};
use crate::error::{Error, Result};
use crate::kernel::{eval_on_points, CirclePoint, KernelFamily, KernelSpec};
use crate::limit_law::{rescale, LimitLaw, Mode};
use crate::rng::{count_events, stream_rng};

/// `auto` switches to the gap-sum DP above this many subsets.
pub const AUTO_DP_THRESHOLD: u128 = 1_000_000;
/// Smallest accepted Monte Carlo sample for tail estimates.
pub const MIN_TAIL_SAMPLES: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evaluator {
    BruteForce,
    GapDp,
    Auto,
}

impl Evaluator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Evaluator::BruteForce => "brute-force",
            Evaluator::GapDp => "gap-dp",
            Evaluator::Auto => "auto",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub kernel: KernelSpec,
    pub density: DensitySpec,
    pub n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    pub mode: Mode,
    pub evaluator: Evaluator,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.kernel.degree();
        if self.n < m {
            return Err(Error::SampleSize { n: self.n, m });
        }
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("replicates must be at least 1".into()));
        }
        if self.evaluator == Evaluator::GapDp && self.kernel.family() != KernelFamily::GapSum {
            return Err(Error::Family { expected: "gap-sum" });
        }
        self.density.validate()?;
        binomial(self.n, m)?;
        Ok(())
    }

    /// Kernel whose U-max is the requested statistic.
    fn effective_kernel(&self) -> KernelSpec {
        match self.mode {
            Mode::UMax => self.kernel.clone(),
            Mode::UMin => self.kernel.negated(),
        }
    }

    fn resolved_evaluator(&self) -> Evaluator {
        match self.evaluator {
            Evaluator::Auto => {
                let big = binomial(self.n, self.kernel.degree()).map_or(true, |c| c > AUTO_DP_THRESHOLD);
                if self.kernel.family() == KernelFamily::GapSum && big {
                    Evaluator::GapDp
                } else {
                    Evaluator::BruteForce
                }
            }
            e => e,
        }
    }
}

/// Step function of the sorted rescaled replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCDF {
    values: Vec<f64>,
}

impl EmpiricalCDF {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `F̂(t) = #{T ≤ t} / N`, right-continuous.
    pub fn eval(&self, t: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.partition_point(|&v| v <= t) as f64 / self.values.len() as f64
    }

    /// `sup_t |F̂(t) − F(t)|` for a continuous `F`, attained at the jumps.
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let n = self.values.len() as f64;
        self.values
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                ((i + 1) as f64 / n - f).max(f - i as f64 / n)
            })
            .fold(0.0, f64::max)
    }
}

/// Min, median and max of the raw statistic over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl StatSummary {
    fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let k = v.len();
        let median = if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        };
        Self {
            min: v[0],
            median,
            max: v[k - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationEcho {
    pub m: usize,
    pub n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    pub mode: Mode,
    pub evaluator: Evaluator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub config: SimulationEcho,
    /// Evaluator actually used after resolving `auto`.
    pub evaluator_used: Evaluator,
    pub extremal_value: f64,
    pub coefficient: f64,
    pub scaling_exponent: f64,
    pub ecdf: EmpiricalCDF,
    pub ks_distance: f64,
    pub h_summary: StatSummary,
    /// Wall time; not serialized so reports stay reproducible.
    #[serde(skip)]
    pub elapsed_secs: f64,
}

/// Exact `C(n, k)`, or an overflow error when it does not fit below `2^63`.
pub fn binomial(n: usize, k: usize) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c
            .checked_mul((n - i) as u128)
            .ok_or(Error::SubsetOverflow { n, m: k })?
            / (i as u128 + 1);
    }
    if c >= 1 << 63 {
        return Err(Error::SubsetOverflow { n, m: k });
    }
    Ok(c)
}

/// Generator values between sorted points, sign already applied.
struct GapTables {
    n: usize,
    /// `g(θ_j − θ_i)` for `i < j`.
    forward: Vec<f64>,
    /// `g(2π − (θ_j − θ_i))` for `i < j`, the closing gap.
    closing: Vec<f64>,
}

impl GapTables {
    fn new(spec: &KernelSpec, sorted: &[f64]) -> Self {
        let g = spec.generator().expect("gap-sum kernel has a generator");
        let sign = if spec.is_negated() { -1.0 } else { 1.0 };
        let n = sorted.len();
        let mut forward = vec![0.0; n * n];
        let mut closing = vec![0.0; n * n];
        let tau = std::f64::consts::TAU;
        for i in 0..n {
            for j in i + 1..n {
                let d = sorted[j] - sorted[i];
                forward[i * n + j] = sign * g.eval(d);
                closing[i * n + j] = sign * g.eval(tau - d);
            }
        }
        Self { n, forward, closing }
    }

    #[inline]
    fn step(&self, i: usize, j: usize) -> f64 {
        self.forward[i * self.n + j]
    }

    #[inline]
    fn close(&self, i: usize, j: usize) -> f64 {
        self.closing[i * self.n + j]
    }
}

fn sorted_angles(points: &[CirclePoint<f64>]) -> Vec<f64> {
    let mut t: Vec<f64> = points.iter().map(|p| p.theta()).collect();
    t.sort_by(f64::total_cmp);
    t
}

fn check_sample(points: &[CirclePoint<f64>], spec: &KernelSpec) -> Result<()> {
    let m = spec.degree();
    if points.len() < m {
        return Err(Error::SampleSize { n: points.len(), m });
    }
    binomial(points.len(), m).map(|_| ())
}

/// `H_n` by enumerating all `C(n, m)` subsets in lexicographic order.
pub fn umax_bruteforce(points: &[CirclePoint<f64>], spec: &KernelSpec) -> Result<f64> {
    check_sample(points, spec)?;
    let m = spec.degree();
    let sorted = sorted_angles(points);
    let n = sorted.len();
    let mut idx: Vec<usize> = (0..m).collect();
    let mut best = f64::NEG_INFINITY;
    match spec.family() {
        KernelFamily::GapSum => {
            let t = GapTables::new(spec, &sorted);
            gap_enumerate(&t, m, &mut best);
        }
        KernelFamily::PairwiseSum => {
            let g = spec.generator().unwrap();
            let sign = if spec.is_negated() { -1.0 } else { 1.0 };
            let mut table = vec![0.0; n * n];
            for i in 0..n {
                for j in i + 1..n {
                    table[i * n + j] = sign * g.eval(sorted[j] - sorted[i]);
                }
            }
            pair_enumerate(&table, n, m, 0, 0, 0.0, &mut idx, &mut best);
        }
        KernelFamily::Custom => {
            let pts: Vec<CirclePoint<f64>> = sorted.iter().map(|&t| CirclePoint::new(t)).collect();
            let mut subset = vec![pts[0]; m];
            loop {
                for (s, &i) in subset.iter_mut().zip(&idx) {
                    *s = pts[i];
                }
                let v = eval_on_points(spec, &subset)?;
                if v > best {
                    best = v;
                }
                if !next_combination(&mut idx, n) {
                    break;
                }
            }
        }
    }
    Ok(best)
}

/// Advance `idx` to the next `k`-subset of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn gap_enumerate(t: &GapTables, m: usize, best: &mut f64) {
    let n = t.n;
    for first in 0..=n - m {
        for second in first + 1..=n - (m - 1) {
            gap_rec(t, m, 2, first, second, t.step(first, second), best);
        }
    }
}

fn gap_rec(t: &GapTables, m: usize, chosen: usize, first: usize, last: usize, partial: f64, best: &mut f64) {
    if chosen == m {
        let v = partial + t.close(first, last);
        if v > *best {
            *best = v;
        }
        return;
    }
    for j in last + 1..=t.n - (m - chosen) {
        gap_rec(t, m, chosen + 1, first, j, partial + t.step(last, j), best);
    }
}

#[allow(clippy::too_many_arguments)]
fn pair_enumerate(
    table: &[f64],
    n: usize,
    m: usize,
    depth: usize,
    start: usize,
    partial: f64,
    idx: &mut [usize],
    best: &mut f64,
) {
    if depth == m {
        if partial > *best {
            *best = partial;
        }
        return;
    }
    for j in start..=n - (m - depth) {
        let mut s = partial;
        for &i in &idx[..depth] {
            s += table[i * n + j];
        }
        idx[depth] = j;
        pair_enumerate(table, n, m, depth + 1, j + 1, s, idx, best);
    }
}

/// `H_n` for gap-sum kernels by dynamic programming over
/// (first point, count, last point).
///
/// Partial sums are formed in the same order as in [`umax_bruteforce`], and
/// rounding is monotone, so both return the identical float.
pub fn umax_gapsum_dp(points: &[CirclePoint<f64>], spec: &KernelSpec) -> Result<f64> {
    if spec.family() != KernelFamily::GapSum {
        return Err(Error::Family { expected: "gap-sum" });
    }
    check_sample(points, spec)?;
    let m = spec.degree();
    let sorted = sorted_angles(points);
    let n = sorted.len();
    let t = GapTables::new(spec, &sorted);
    let mut best = f64::NEG_INFINITY;
    let mut prev = vec![f64::NEG_INFINITY; n];
    let mut cur = vec![f64::NEG_INFINITY; n];
    for a in 0..=n - m {
        // c = 2: second point j
        for j in a + 1..=n - (m - 1) {
            prev[j] = t.step(a, j);
        }
        let (mut lo, mut hi) = (a + 1, n - (m - 1));
        for c in 3..=m {
            let (nlo, nhi) = (lo + 1, n - (m - c) - 1);
            for j in nlo..=nhi {
                let mut v = f64::NEG_INFINITY;
                for k in lo..=hi.min(j - 1) {
                    let s = prev[k] + t.step(k, j);
                    if s > v {
                        v = s;
                    }
                }
                cur[j] = v;
            }
            std::mem::swap(&mut prev, &mut cur);
            lo = nlo;
            hi = nhi;
        }
        for j in lo..=hi {
            let v = prev[j] + t.close(a, j);
            if v > best {
                best = v;
            }
        }
    }
    Ok(best)
}

/// `H_n` with the requested evaluator.
pub fn umax(points: &[CirclePoint<f64>], spec: &KernelSpec, evaluator: Evaluator) -> Result<f64> {
    match evaluator {
        Evaluator::GapDp => umax_gapsum_dp(points, spec),
        Evaluator::BruteForce => umax_bruteforce(points, spec),
        Evaluator::Auto => {
            let big = binomial(points.len(), spec.degree())? > AUTO_DP_THRESHOLD;
            if spec.family() == KernelFamily::GapSum && big {
                umax_gapsum_dp(points, spec)
            } else {
                umax_bruteforce(points, spec)
            }
        }
    }
}

/// Draw `n` points from a sampler table.
pub fn draw_sample<R: rand::Rng + ?Sized>(table: &DensityTable, n: usize, rng: &mut R) -> Vec<CirclePoint<f64>> {
    (0..n).map(|_| CirclePoint::new(table.sample(rng))).collect()
}

/// Simulate `replicates` values of the rescaled statistic and compare their
/// empirical law with `law`.
pub fn run_replicates(cfg: &SimulationConfig, law: &LimitLaw, extremal_value: f64) -> Result<SimulationResult> {
    cfg.validate()?;
    if law.m != cfg.kernel.degree() || law.mode != cfg.mode {
        return Err(Error::InvalidParameter(
            "limit law does not match the simulated kernel".into(),
        ));
    }
    let start = Instant::now();
    let spec = cfg.effective_kernel();
    let evaluator = cfg.resolved_evaluator();
    let table = cfg.density.table();
    let sign = match cfg.mode {
        Mode::UMax => 1.0,
        Mode::UMin => -1.0,
    };
    let pairs: Vec<(f64, f64)> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(cfg.master_seed, j);
            let sample = draw_sample(&table, cfg.n, &mut rng);
            let h = sign * umax(&sample, &spec, evaluator)?;
            Ok((h, rescale(h, extremal_value, cfg.n, law)?))
        })
        .collect::<Result<_>>()?;
    let (h, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let ecdf = EmpiricalCDF::new(t);
    let ks_distance = ecdf.ks_distance(|x| law.cdf(x.max(0.0)).unwrap_or(0.0));
    Ok(SimulationResult {
        config: SimulationEcho {
            m: cfg.kernel.degree(),
            n: cfg.n,
            replicates: cfg.replicates,
            master_seed: cfg.master_seed,
            mode: cfg.mode,
            evaluator: cfg.evaluator,
        },
        evaluator_used: evaluator,
        extremal_value,
        coefficient: law.coefficient,
        scaling_exponent: law.scaling_exponent,
        ecdf,
        ks_distance,
        h_summary: StatSummary::of(&h),
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Monte Carlo estimate of a probability with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub p_hat: f64,
    pub std_err: f64,
    pub hits: u64,
    pub samples: u64,
}

impl TailEstimate {
    pub fn from_counts(hits: u64, samples: u64) -> Self {
        let p = hits as f64 / samples as f64;
        Self {
            p_hat: p,
            std_err: (p * (1.0 - p) / samples as f64).sqrt(),
            hits,
            samples,
        }
    }
}

/// `P{f(ξ_1, …, ξ_m) > z}` by plain Monte Carlo over `mc_samples` draws.
pub fn tail_probability(
    spec: &KernelSpec,
    density: &DensitySpec,
    z: f64,
    mc_samples: u64,
    seed: u64,
) -> Result<TailEstimate> {
    if mc_samples < MIN_TAIL_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "mc_samples must be at least {MIN_TAIL_SAMPLES}, got {mc_samples}"
        )));
    }
    density.validate()?;
    let table = DensityTable::new(density, SAMPLER_TABLE);
    let m = spec.degree();
    let [hits] = count_events(seed, mc_samples, |rng| {
        let pts = draw_sample(&table, m, rng);
        [eval_on_points(spec, &pts).map_or(false, |v| v > z)]
    });
    Ok(TailEstimate::from_counts(hits, mc_samples))
}
