//! The Weibull-type limit law of the rescaled U-max/U-min statistic.
//!
//! With `T_n = n^{2m/(m−1)} (M − H_n)` (or `(H_n − μ)` for U-min),
//! `P{T_n ≤ t} → 1 − exp(−c t^{(m−1)/2})`. The coefficient is stored in the
//! ordered-maximizer form `c = K_ordered / m`; the all-maximizer constant
//! `K_total = (m−1)! K_ordered` gives the same law as `K_total / m!`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::density::{product_integral, DensitySpec, B3_THRESHOLD};
use crate::error::{Error, Result};
use crate::extremum::{factorial, MaxAnalysis};
use crate::kernel::{AngleTuple, GFunction};

/// Relative slack allowed for `M − H_n` below zero.
pub const RESCALE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    UMax,
    UMin,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::UMax => "u-max",
            Mode::UMin => "u-min",
        }
    }
}

/// `F(t) = 1 − exp(−c t^{(m−1)/2})` together with the scaling data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitLaw {
    pub m: usize,
    pub mode: Mode,
    /// `2m/(m−1)`.
    pub scaling_exponent: f64,
    /// `(m−1)/2`.
    pub shape_exponent: f64,
    /// `c = K_ordered / m`.
    pub coefficient: f64,
    /// Constant summed over ordered maximizers.
    pub k_ordered: f64,
    /// Constant summed over all maximal points, `(m−1)! K_ordered`.
    pub k_total: f64,
    /// `M` for U-max, `μ` for U-min.
    pub extremal_value: f64,
}

impl LimitLaw {
    pub fn from_constant(m: usize, mode: Mode, k_ordered: f64, extremal_value: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::Degree(m));
        }
        if !(k_ordered.is_finite() && k_ordered > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "limit constant must be positive and finite, got {k_ordered}"
            )));
        }
        let mf = m as f64;
        Ok(Self {
            m,
            mode,
            scaling_exponent: 2.0 * mf / (mf - 1.0),
            shape_exponent: (mf - 1.0) / 2.0,
            coefficient: k_ordered / mf,
            k_ordered,
            k_total: factorial(m - 1) as f64 * k_ordered,
            extremal_value,
        })
    }

    /// Law for an analysis: U-min when the analysed kernel was negated.
    pub fn from_analysis(analysis: &MaxAnalysis, p: &DensitySpec) -> Result<Self> {
        let k = limit_constant_general(analysis, p)?;
        let mode = if analysis.negated { Mode::UMin } else { Mode::UMax };
        Self::from_constant(analysis.m, mode, k, analysis.extremal_value())
    }

    /// `K_total / m!`, the coefficient in the all-maximizer form.
    pub fn coefficient_from_total(&self) -> f64 {
        self.k_total / factorial(self.m) as f64
    }

    /// Poisson intensity `λ_t = c t^{(m−1)/2}`.
    pub fn intensity(&self, t: f64) -> f64 {
        self.coefficient * t.powf(self.shape_exponent)
    }

    pub fn cdf(&self, t: f64) -> Result<f64> {
        limit_cdf(self, t)
    }
}

/// `Γ((m+1)/2)`.
pub fn gamma_half(m: usize) -> f64 {
    gamma((m as f64 + 1.0) / 2.0)
}

/// `K = (2π)^{(m−1)/2} / Γ((m+1)/2) · Σ_i I_i / √det(−G_i)` over the ordered
/// maximizers, `I_i = ∫ p(x) Π_l p(x + W_i^l) dx`.
pub fn limit_constant_general(analysis: &MaxAnalysis, p: &DensitySpec) -> Result<f64> {
    let m = analysis.m;
    if m < 2 {
        return Err(Error::Degree(m));
    }
    if analysis.maximizers.is_empty() {
        return Err(Error::InvalidParameter("analysis has no maximizers".into()));
    }
    let mut sum = 0.0;
    let mut any_mass = false;
    for w in &analysis.maximizers {
        if !(w.det_neg_hessian.is_finite() && w.det_neg_hessian > 0.0) {
            return Err(Error::DegenerateHessian(format!(
                "det(-G) = {} at maximizer {:?}",
                w.det_neg_hessian, w.angles
            )));
        }
        let integral = product_integral(p, &AngleTuple::new(w.angles.clone())?);
        if integral >= B3_THRESHOLD {
            any_mass = true;
        }
        sum += integral / w.det_neg_hessian.sqrt();
    }
    if !any_mass {
        return Err(Error::B3Violation);
    }
    let half = (m as f64 - 1.0) / 2.0;
    Ok(std::f64::consts::TAU.powf(half) / gamma_half(m) * sum)
}

/// Closed-form `K` for a gap-sum kernel whose extremum is the regular
/// polygon: `(2π)^{(m−1)/2} I / (|g''(2π/m)|^{(m−1)/2} Γ((m+1)/2) √m)`.
///
/// U-max needs `g''(2π/m) < 0`, U-min needs `g''(2π/m) > 0`.
pub fn limit_constant_gapsum(g: &GFunction, m: usize, p: &DensitySpec, mode: Mode) -> Result<f64> {
    if m < 2 {
        return Err(Error::Degree(m));
    }
    let mf = m as f64;
    let g2: f64 = g.second_derivative(std::f64::consts::TAU / mf)?;
    let ok = match mode {
        Mode::UMax => g2 < 0.0,
        Mode::UMin => g2 > 0.0,
    };
    if !ok {
        return Err(Error::ModeMismatch {
            g2,
            mode: mode.as_str(),
        });
    }
    let integral = product_integral(p, &AngleTuple::regular_polygon(m)?);
    if integral < B3_THRESHOLD {
        return Err(Error::B3Violation);
    }
    let half = (mf - 1.0) / 2.0;
    Ok(std::f64::consts::TAU.powf(half) * integral / (g2.abs().powf(half) * gamma_half(m) * mf.sqrt()))
}

/// `1 − exp(−c t^{(m−1)/2})` for `t ≥ 0`.
pub fn limit_cdf(law: &LimitLaw, t: f64) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::Domain(format!("t = {t} is negative")));
    }
    Ok(-(-law.intensity(t)).exp_m1())
}

/// `n^{2m/(m−1)} (M − H_n)` for U-max, `n^{2m/(m−1)} (H_n − μ)` for U-min.
pub fn rescale(h_n: f64, extremal_value: f64, n: usize, law: &LimitLaw) -> Result<f64> {
    if n < law.m {
        return Err(Error::SampleSize { n, m: law.m });
    }
    let distance = match law.mode {
        Mode::UMax => extremal_value - h_n,
        Mode::UMin => h_n - extremal_value,
    };
    if distance < -RESCALE_SLACK * extremal_value.abs().max(1.0) {
        return Err(Error::Consistency { value: distance });
    }
    Ok((n as f64).powf(law.scaling_exponent) * distance)
}
