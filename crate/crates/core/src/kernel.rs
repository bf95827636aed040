//! Points on the unit circle, central angles, and rotation-invariant kernels.
//!
//! A kernel of degree `m` is evaluated through the `m - 1` central angles
//! measured counterclockwise from the first point. Two structured families are
//! built in:
//!
//! * gap-sum: `h(β) = Σ g(β_i − β_{i−1})` over the sorted angles with
//!   `β_0 = 0` and `β_m = 2π` (sides of the inscribed polygon);
//! * pairwise-sum: `h(β) = Σ_{i<j} g(|β_j − β_i|)` with `β_0 = 0`
//!   (sides and diagonals), which needs an even generator `g(x) = g(2π − x)`.
//!
//! Anything else can be supplied as a custom closure over point angles; it has
//! to pass a rotation/permutation probe before it is accepted.

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{reduce_angle, Real};

/// Number of random configurations used by the custom-kernel invariance probe.
pub const INVARIANCE_PROBES: usize = 100;
/// Relative tolerance of the invariance probe.
pub const INVARIANCE_TOL: f64 = 1e-10;
/// Grid size of the `g(x) = g(2π − x)` probe for pairwise generators.
pub const SYMMETRY_PROBE_POINTS: usize = 1024;
/// Step of the central difference used for tabulated generators.
pub const TABULATED_FD_STEP: f64 = 1e-5;

/// A point on the unit circle, stored as an angle in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct CirclePoint<T> {
    theta: T,
}

impl<T: Real> CirclePoint<T> {
    pub fn new(theta: T) -> Self {
        Self {
            theta: reduce_angle(theta),
        }
    }

    #[inline]
    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn rotated(&self, by: T) -> Self {
        Self::new(self.theta + by)
    }
}

/// Central angles `β = (β_1, …, β_{m−1})`, each reduced to `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleTuple<T>(Vec<T>);

impl<T: Real> AngleTuple<T> {
    pub fn new(beta: Vec<T>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::Degree(beta.len() + 1));
        }
        Ok(Self(beta.into_iter().map(reduce_angle).collect()))
    }

    /// Ordered representative of the regular `m`-gon, `(2π/m, 4π/m, …)`.
    pub fn regular_polygon(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Degree(m));
        }
        let mm = T::from_usize(m).unwrap();
        let step = T::two_pi() / mm;
        Ok(Self(
            (1..m).map(|i| step * T::from_usize(i).unwrap()).collect(),
        ))
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Kernel degree this tuple belongs to.
    #[inline]
    pub fn degree(&self) -> usize {
        self.0.len() + 1
    }

    pub fn sorted(&self) -> Self {
        let mut v = self.0.clone();
        v.sort_by(|a, b| a.partial_cmp(b).expect("angles are not NaN"));
        Self(v)
    }

    /// Points `(0, β_1, …, β_{m−1})` realising these central angles.
    pub fn to_points(&self) -> Vec<CirclePoint<T>> {
        std::iter::once(T::zero())
            .chain(self.0.iter().copied())
            .map(CirclePoint::new)
            .collect()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

/// Central angles of `points` relative to the first point.
pub fn central_angles<T: Real>(points: &[CirclePoint<T>]) -> Result<AngleTuple<T>> {
    if points.len() < 2 {
        return Err(Error::Degree(points.len()));
    }
    let base = points[0].theta();
    AngleTuple::new(points[1..].iter().map(|p| p.theta() - base).collect())
}

/// Cubic-spline generator sampled on the uniform grid `x_k = 2πk/N`,
/// `k = 0..=N` (both endpoints included).
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TabulatedValues", into = "TabulatedValues")]
pub struct TabulatedG {
    values: Vec<f64>,
    // natural-spline second derivatives at the knots
    m2: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TabulatedValues {
    values: Vec<f64>,
}

impl TryFrom<TabulatedValues> for TabulatedG {
    type Error = Error;
    fn try_from(t: TabulatedValues) -> Result<Self> {
        TabulatedG::new(t.values)
    }
}

impl From<TabulatedG> for TabulatedValues {
    fn from(t: TabulatedG) -> Self {
        TabulatedValues { values: t.values }
    }
}

impl fmt::Debug for TabulatedG {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TabulatedG")
            .field("knots", &self.values.len())
            .finish()
    }
}

impl TabulatedG {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 4 {
            return Err(Error::InvalidParameter(
                "tabulated generator needs at least 4 knots".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "tabulated generator values must be finite".into(),
            ));
        }
        let m2 = natural_spline_curvature(&values, Self::spacing(values.len()));
        Ok(Self { values, m2 })
    }

    /// Sample `f` on the knot grid.
    pub fn from_fn(knots: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = Self::spacing(knots);
        Self::new((0..knots).map(|k| f(h * k as f64)).collect())
    }

    fn spacing(knots: usize) -> f64 {
        std::f64::consts::TAU / (knots - 1) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len() - 1;
        let h = Self::spacing(self.values.len());
        let x = x.clamp(0.0, std::f64::consts::TAU);
        let k = ((x / h).floor() as usize).min(n - 1);
        let t = x - h * k as f64;
        let u = h - t;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (c0, c1) = (self.m2[k], self.m2[k + 1]);
        (c0 * u * u * u + c1 * t * t * t) / (6.0 * h)
            + (y0 / h - c0 * h / 6.0) * u
            + (y1 / h - c1 * h / 6.0) * t
    }
}

// Thomas algorithm on the (n-1)x(n-1) system of the natural spline.
fn natural_spline_curvature(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len() - 1;
    let mut m2 = vec![0.0; n + 1];
    let inner = n - 1;
    let mut diag = vec![4.0; inner];
    let mut rhs: Vec<f64> = (1..n)
        .map(|i| 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h))
        .collect();
    for i in 1..inner {
        let w = 1.0 / diag[i - 1];
        diag[i] -= w;
        rhs[i] -= w * rhs[i - 1];
    }
    m2[inner] = rhs[inner - 1] / diag[inner - 1];
    for i in (0..inner - 1).rev() {
        m2[i + 1] = (rhs[i] - m2[i + 2]) / diag[i];
    }
    m2
}

/// Generator `g` of a gap-sum or pairwise-sum kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GFunction {
    /// `2 sin(x/2)`: chord length (perimeter, pairwise distance).
    SinHalf,
    /// `½ sin x`: signed triangle area (polygon area).
    HalfSin,
    /// `1/cos(x/2)` on `[0, π)`, `+∞` beyond (circumscribed polygon).
    SecHalf,
    /// `(2 sin(x/2))^y`: generalized perimeter of order `y`.
    PowSin { y: f64 },
    /// `1/(2 sin(x/2))`: inverse chord length.
    CscHalf,
    /// `r(2 sin(x/2))` with `r(s) = e^{−as} s^b (ln(s/2))^c`.
    AlexanderStolarsky { a: f64, b: f64, c: u32 },
    Tabulated(TabulatedG),
}

impl GFunction {
    pub fn name(&self) -> &'static str {
        match self {
            GFunction::SinHalf => "sin-half",
            GFunction::HalfSin => "half-sin",
            GFunction::SecHalf => "sec-half",
            GFunction::PowSin { .. } => "pow-sin",
            GFunction::CscHalf => "csc-half",
            GFunction::AlexanderStolarsky { .. } => "alexander-stolarsky",
            GFunction::Tabulated(_) => "tabulated",
        }
    }

    pub fn eval<T: Real>(&self, x: T) -> T {
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        match self {
            GFunction::SinHalf => two * (x * half).sin(),
            GFunction::HalfSin => half * x.sin(),
            GFunction::SecHalf => {
                if x >= T::PI() {
                    T::infinity()
                } else {
                    (x * half).cos().recip()
                }
            }
            GFunction::PowSin { y } => (two * (x * half).sin()).abs().powf(T::lit(*y)),
            GFunction::CscHalf => (two * (x * half).sin()).recip(),
            GFunction::AlexanderStolarsky { a, b, c } => {
                let s = (two * (x * half).sin()).abs();
                (-T::lit(*a) * s).exp() * s.powf(T::lit(*b)) * (s * half).ln().powi(*c as i32)
            }
            GFunction::Tabulated(t) => T::lit(t.eval(x.to_f64().unwrap())),
        }
    }

    /// Second derivative `g''(x)`; analytic except for tabulated generators.
    pub fn second_derivative<T: Real>(&self, x: T) -> Result<T> {
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        let tau = T::two_pi();
        let interior = x > T::zero() && x < tau;
        let domain = || Error::Domain(format!("x = {:?} for generator {}", x, self.name()));
        let (sh, ch) = ((x * half).sin(), (x * half).cos());
        let value = match self {
            GFunction::SinHalf => -half * sh,
            GFunction::HalfSin => -half * x.sin(),
            GFunction::SecHalf => {
                if x >= T::PI() || x < T::zero() {
                    return Err(domain());
                }
                (T::one() + sh * sh) / (T::lit(4.0) * ch * ch * ch)
            }
            GFunction::PowSin { y } => {
                if !interior {
                    return Err(domain());
                }
                let y = T::lit(*y);
                let s = two * sh;
                y * (y - T::one()) * s.powf(y - two) * ch * ch - half * y * s.powf(y - T::one()) * sh
            }
            GFunction::CscHalf => {
                if !interior {
                    return Err(domain());
                }
                (two - sh * sh) / (T::lit(8.0) * sh * sh * sh)
            }
            GFunction::AlexanderStolarsky { a, b, c } => {
                if !interior {
                    return Err(domain());
                }
                let s = two * sh;
                let (r1, r2) = alexander_stolarsky_derivatives(T::lit(*a), T::lit(*b), *c, s);
                r2 * ch * ch - half * r1 * sh
            }
            GFunction::Tabulated(t) => {
                let xf = x.to_f64().unwrap();
                let h = TABULATED_FD_STEP;
                if xf - h < 0.0 || xf + h > std::f64::consts::TAU {
                    return Err(domain());
                }
                T::lit((t.eval(xf + h) - 2.0 * t.eval(xf) + t.eval(xf - h)) / (h * h))
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(domain())
        }
    }

    /// First point of the 1024-point probe where `g(x) ≠ g(2π − x)`, if any.
    pub fn symmetry_violation(&self) -> Option<f64> {
        let tau = std::f64::consts::TAU;
        (0..SYMMETRY_PROBE_POINTS)
            .map(|k| tau * (k as f64 + 0.5) / SYMMETRY_PROBE_POINTS as f64)
            .find(|&x| {
                let (l, r) = (self.eval(x), self.eval(tau - x));
                !(l == r || (l - r).abs() <= 1e-12 * l.abs().max(1.0))
            })
    }
}

// r'(s) and r''(s) for r(s) = e^{-as} s^b (ln(s/2))^c.
fn alexander_stolarsky_derivatives<T: Real>(a: T, b: T, c: u32, s: T) -> (T, T) {
    let half = T::lit(0.5);
    let l = (s * half).ln();
    // c * l^(c-1) and c(c-1) l^(c-2) without negative powers when c is small
    let pow = |k: i64| if k < 0 { T::zero() } else { l.powi(k as i32) };
    let ci = c as i64;
    let cf = T::from_u32(c).unwrap();
    let ea = (-a * s).exp();
    let (ea1, ea2) = (-a * ea, a * a * ea);
    let sb = s.powf(b);
    let sb1 = b * s.powf(b - T::one());
    let sb2 = b * (b - T::one()) * s.powf(b - T::lit(2.0));
    let lc = pow(ci);
    let lc1 = if c == 0 { T::zero() } else { cf * pow(ci - 1) / s };
    let lc2 = if c == 0 {
        T::zero()
    } else {
        let c2 = if c >= 2 {
            cf * (cf - T::one()) * pow(ci - 2)
        } else {
            T::zero()
        };
        (c2 - cf * pow(ci - 1)) / (s * s)
    };
    let r1 = ea1 * sb * lc + ea * sb1 * lc + ea * sb * lc1;
    let r2 = ea2 * sb * lc
        + ea * sb2 * lc
        + ea * sb * lc2
        + T::lit(2.0) * (ea1 * sb1 * lc + ea1 * sb * lc1 + ea * sb1 * lc1);
    (r1, r2)
}

/// How a kernel combines its generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    GapSum,
    PairwiseSum,
    Custom,
}

/// Custom kernel evaluated directly on the `m` point angles.
pub type CustomKernel = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A rotation-invariant symmetric kernel of degree `m`.
///
/// `negated` flips the sign of every evaluation; U-min problems are solved as
/// U-max problems of the negated kernel.
#[derive(Clone)]
pub struct KernelSpec {
    family: KernelFamily,
    g: Option<GFunction>,
    m: usize,
    custom: Option<CustomKernel>,
    negated: bool,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("family", &self.family)
            .field("g", &self.g)
            .field("m", &self.m)
            .field("negated", &self.negated)
            .finish()
    }
}

impl KernelSpec {
    pub fn gap_sum(g: GFunction, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Degree(m));
        }
        Ok(Self {
            family: KernelFamily::GapSum,
            g: Some(g),
            m,
            custom: None,
            negated: false,
        })
    }

    pub fn pairwise_sum(g: GFunction, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Degree(m));
        }
        if let Some(x) = g.symmetry_violation() {
            return Err(Error::AsymmetricGenerator { x });
        }
        Ok(Self {
            family: KernelFamily::PairwiseSum,
            g: Some(g),
            m,
            custom: None,
            negated: false,
        })
    }

    /// Wrap a closure over `m` point angles. The closure must be invariant
    /// under common rotations and permutations of its arguments; this is
    /// probed on [`INVARIANCE_PROBES`] random configurations.
    pub fn custom(m: usize, f: CustomKernel) -> Result<Self> {
        if m < 2 {
            return Err(Error::Degree(m));
        }
        let tau = std::f64::consts::TAU;
        let mut rng = ChaCha8Rng::seed_from_u64(0x0c1c_1e5e_ed00_0001);
        let close = |a: f64, b: f64| a == b || (a - b).abs() <= INVARIANCE_TOL * (1.0 + a.abs());
        for probe in 0..INVARIANCE_PROBES {
            let pts: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * tau).collect();
            let base = f(&pts);
            let shift = rng.gen::<f64>() * tau;
            let rotated: Vec<f64> = pts.iter().map(|t| reduce_angle(t + shift)).collect();
            let mut permuted = pts.clone();
            permuted.shuffle(&mut rng);
            let (r, p) = (f(&rotated), f(&permuted));
            if !close(base, r) {
                return Err(Error::NotInvariant(format!(
                    "rotation probe {probe}: {base} vs {r}"
                )));
            }
            if !close(base, p) {
                return Err(Error::NotInvariant(format!(
                    "permutation probe {probe}: {base} vs {p}"
                )));
            }
        }
        Ok(Self {
            family: KernelFamily::Custom,
            g: None,
            m,
            custom: Some(f),
            negated: false,
        })
    }

    /// Same kernel with the sign flipped.
    pub fn negated(&self) -> Self {
        Self {
            negated: !self.negated,
            ..self.clone()
        }
    }

    #[inline]
    pub fn is_negated(&self) -> bool {
        self.negated
    }

    #[inline]
    pub fn family(&self) -> KernelFamily {
        self.family
    }

    #[inline]
    pub fn generator(&self) -> Option<&GFunction> {
        self.g.as_ref()
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.m
    }

    /// Evaluate on raw central angles (length `m − 1`, not checked).
    pub fn eval_angles<T: Real>(&self, beta: &[T]) -> T {
        let value = match self.family {
            KernelFamily::GapSum => {
                let g = self.g.as_ref().unwrap();
                let mut sorted: Vec<T> = beta.iter().map(|&b| reduce_angle(b)).collect();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut prev = T::zero();
                let mut sum = T::zero();
                for &b in &sorted {
                    sum = sum + g.eval(b - prev);
                    prev = b;
                }
                sum + g.eval(T::two_pi() - prev)
            }
            KernelFamily::PairwiseSum => {
                let g = self.g.as_ref().unwrap();
                let mut sum = T::zero();
                for j in 0..beta.len() {
                    let bj = reduce_angle(beta[j]);
                    sum = sum + g.eval(bj);
                    for &bi in &beta[..j] {
                        sum = sum + g.eval((bj - reduce_angle(bi)).abs());
                    }
                }
                sum
            }
            KernelFamily::Custom => {
                let f = self.custom.as_ref().unwrap();
                let pts: Vec<f64> = std::iter::once(0.0)
                    .chain(beta.iter().map(|b| b.to_f64().unwrap()))
                    .collect();
                T::lit(f(&pts))
            }
        };
        if self.negated {
            -value
        } else {
            value
        }
    }
}

/// `h(β)` for the kernel; `+∞` when the generator hits its infinite branch.
pub fn eval_kernel<T: Real>(spec: &KernelSpec, beta: &AngleTuple<T>) -> Result<T> {
    if beta.len() + 1 != spec.m {
        return Err(Error::AngleCount {
            expected: spec.m - 1,
            got: beta.len(),
        });
    }
    Ok(spec.eval_angles(beta.as_slice()))
}

/// `f(U_1, …, U_m) = h(central_angles(U))`.
pub fn eval_on_points<T: Real>(spec: &KernelSpec, points: &[CirclePoint<T>]) -> Result<T> {
    if points.len() != spec.m {
        return Err(Error::AngleCount {
            expected: spec.m - 1,
            got: points.len().saturating_sub(1),
        });
    }
    eval_kernel(spec, &central_angles(points)?)
}

/// `g''(x)` for the generator.
pub fn g_second_derivative<T: Real>(g: &GFunction, x: T) -> Result<T> {
    g.second_derivative(x)
}
