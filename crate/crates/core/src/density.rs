//! Densities on the circle: evaluation, validation, inversion sampling and
//! the rotated-product integral `∫ p(x) Π_l p(x + W^l) dx`.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::AngleTuple;
use crate::scalar::reduce_angle;

/// Nodes of the periodic trapezoid rule for product integrals.
pub const PRODUCT_NODES: usize = 8192;
/// Size of the cumulative table used for inversion sampling.
pub const SAMPLER_TABLE: usize = 4096;
/// Product integrals below this violate Condition B3 for that maximizer.
pub const B3_THRESHOLD: f64 = 1e-12;
/// Largest supported von Mises concentration.
pub const MAX_KAPPA: f64 = 20.0;
const NORMALIZATION_TOL: f64 = 1e-8;
const VALIDATION_NODES: usize = 1 << 14;

/// `I₀(κ)` by its power series `Σ (κ²/4)^k / (k!)²`.
pub fn bessel_i0(kappa: f64) -> f64 {
    let q = 0.25 * kappa * kappa;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// A continuous probability density on the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DensitySpec {
    Uniform,
    VonMises {
        mu: f64,
        kappa: f64,
    },
    /// Values on the grid `x_k = 2πk/N`, `k = 0..N`, linearly interpolated
    /// with periodic closure.
    Tabulated {
        values: Vec<f64>,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<DensitySpec>,
    },
}

impl DensitySpec {
    pub fn von_mises(mu: f64, kappa: f64) -> Result<Self> {
        let d = DensitySpec::VonMises { mu, kappa };
        d.validate()?;
        Ok(d)
    }

    /// Tabulated density; values are rescaled so the interpolant integrates
    /// to one.
    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::Density("tabulated density needs at least 3 nodes".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Density("tabulated values must be finite and nonnegative".into()));
        }
        let mass: f64 = values.iter().sum::<f64>() * TAU / values.len() as f64;
        if mass <= 0.0 {
            return Err(Error::Density("tabulated density has zero mass".into()));
        }
        let d = DensitySpec::Tabulated {
            values: values.iter().map(|v| v / mass).collect(),
        };
        d.validate()?;
        Ok(d)
    }

    /// Sample `f` on the uniform grid and normalize.
    pub fn tabulated_from_fn(nodes: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::tabulated((0..nodes).map(|k| f(TAU * k as f64 / nodes as f64)).collect())
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<DensitySpec>) -> Result<Self> {
        let d = DensitySpec::Mixture {
            weights,
            components,
        };
        d.validate()?;
        Ok(d)
    }

    /// Load a tabulated density from CSV with header `angle,density`. The
    /// angles must be the uniform grid `2πk/N`, `k = 0..N`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut angles = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            if rec.len() != 2 {
                return Err(Error::Density(format!(
                    "row {}: expected 2 columns, got {}",
                    line + 2,
                    rec.len()
                )));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Density(format!("row {}: {e}", line + 2)))
            };
            angles.push(parse(&rec[0])?);
            values.push(parse(&rec[1])?);
        }
        let n = angles.len();
        for (k, a) in angles.iter().enumerate() {
            let expected = TAU * k as f64 / n.max(1) as f64;
            if (a - expected).abs() > 1e-9 * (1.0 + expected) {
                return Err(Error::Density(format!(
                    "row {}: angle {a} is not on the uniform grid (expected {expected})",
                    k + 2
                )));
            }
        }
        Self::tabulated(values)
    }

    /// Write a tabulated density in the CSV layout read by [`from_csv`](Self::from_csv).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let values = match self {
            DensitySpec::Tabulated { values } => values,
            _ => return Err(Error::Density("only tabulated densities are written as CSV".into())),
        };
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["angle", "density"]).map_err(io)?;
        let n = values.len();
        for (k, v) in values.iter().enumerate() {
            w.write_record([
                format!("{:.17e}", TAU * k as f64 / n as f64),
                format!("{v:.17e}"),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }

    /// Check parameters, nonnegativity and unit mass.
    pub fn validate(&self) -> Result<()> {
        match self {
            DensitySpec::Uniform => {}
            DensitySpec::VonMises { mu, kappa } => {
                if !mu.is_finite() || !kappa.is_finite() {
                    return Err(Error::Density("von Mises parameters must be finite".into()));
                }
                if *kappa < 0.0 || *kappa > MAX_KAPPA {
                    return Err(Error::Density(format!(
                        "von Mises kappa must lie in [0, {MAX_KAPPA}], got {kappa}"
                    )));
                }
            }
            DensitySpec::Tabulated { values } => {
                if values.len() < 3 || values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::Density(
                        "tabulated density needs >= 3 finite nonnegative values".into(),
                    ));
                }
            }
            DensitySpec::Mixture {
                weights,
                components,
            } => {
                if weights.is_empty() || weights.len() != components.len() {
                    return Err(Error::Density(
                        "mixture needs one weight per component".into(),
                    ));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::Density("mixture weights must be nonnegative".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::Density(format!(
                        "mixture weights sum to {total}, not 1"
                    )));
                }
                for c in components {
                    c.validate()?;
                }
            }
        }
        let mass = self.mass();
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Density(format!("density integrates to {mass}, not 1")));
        }
        Ok(())
    }

    /// `∫₀^{2π} p`. Exact for the piecewise families, periodic trapezoid
    /// (spectrally accurate) for von Mises.
    pub fn mass(&self) -> f64 {
        match self {
            DensitySpec::Uniform => 1.0,
            DensitySpec::VonMises { .. } => {
                let h = TAU / VALIDATION_NODES as f64;
                (0..VALIDATION_NODES).map(|k| self.eval(h * k as f64)).sum::<f64>() * h
            }
            DensitySpec::Tabulated { values } => values.iter().sum::<f64>() * TAU / values.len() as f64,
            DensitySpec::Mixture {
                weights,
                components,
            } => weights.iter().zip(components).map(|(w, c)| w * c.mass()).sum(),
        }
    }

    /// `p(x)` with `x` reduced mod 2π.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            DensitySpec::Uniform => 1.0 / TAU,
            DensitySpec::VonMises { mu, kappa } => {
                (kappa * (x - mu).cos()).exp() / (TAU * bessel_i0(*kappa))
            }
            DensitySpec::Tabulated { values } => {
                let n = values.len();
                let pos = reduce_angle(x) / TAU * n as f64;
                let k = (pos.floor() as usize).min(n - 1);
                let t = pos - k as f64;
                values[k] * (1.0 - t) + values[(k + 1) % n] * t
            }
            DensitySpec::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.eval(x))
                .sum(),
        }
    }

    /// Upper bound `M_p ≥ sup p`.
    pub fn sup_bound(&self) -> f64 {
        match self {
            DensitySpec::Uniform => 1.0 / TAU,
            DensitySpec::VonMises { kappa, .. } => kappa.exp() / (TAU * bessel_i0(*kappa)),
            DensitySpec::Tabulated { values } => values.iter().copied().fold(0.0, f64::max),
            DensitySpec::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.sup_bound())
                .sum(),
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, DensitySpec::Uniform)
            || matches!(self, DensitySpec::VonMises { kappa, .. } if *kappa == 0.0)
    }

    /// Sampling table for this density.
    pub fn table(&self) -> DensityTable {
        DensityTable::new(self, SAMPLER_TABLE)
    }
}

/// `p(x)`.
pub fn density_eval(p: &DensitySpec, x: f64) -> f64 {
    p.eval(x)
}

/// Cumulative table for inversion sampling of a piecewise-linear
/// interpolant of the density.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    uniform: bool,
    values: Vec<f64>,
    cumulative: Vec<f64>,
    sup: f64,
}

impl DensityTable {
    pub fn new(p: &DensitySpec, nodes: usize) -> Self {
        let h = TAU / nodes as f64;
        let values: Vec<f64> = (0..nodes).map(|k| p.eval(h * k as f64)).collect();
        let mut cumulative = Vec::with_capacity(nodes + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for k in 0..nodes {
            acc += 0.5 * h * (values[k] + values[(k + 1) % nodes]);
            cumulative.push(acc);
        }
        // normalize the interpolant exactly
        for c in cumulative.iter_mut() {
            *c /= acc;
        }
        let values = values.into_iter().map(|v| v / acc).collect::<Vec<_>>();
        let sup = p.sup_bound().max(values.iter().copied().fold(0.0, f64::max));
        Self {
            uniform: p.is_uniform(),
            values,
            cumulative,
            sup,
        }
    }

    pub fn nodes(&self) -> usize {
        self.values.len()
    }

    /// `M_p`.
    pub fn sup_bound(&self) -> f64 {
        self.sup
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Inverse CDF at `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        if self.uniform {
            return reduce_angle(u * TAU);
        }
        let n = self.values.len();
        let h = TAU / n as f64;
        // last k with cumulative[k] <= u
        let k = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&u).unwrap())
        {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        };
        let target = u - self.cumulative[k];
        let p0 = self.values[k];
        let p1 = self.values[(k + 1) % n];
        let slope = (p1 - p0) / h;
        // solve p0 t + slope t^2 / 2 = target on [0, h]
        let t = if slope.abs() < 1e-300 {
            if p0 > 0.0 {
                target / p0
            } else {
                0.0
            }
        } else {
            let disc = (p0 * p0 + 2.0 * slope * target).max(0.0);
            2.0 * target / (p0 + disc.sqrt())
        };
        reduce_angle(h * k as f64 + t.clamp(0.0, h))
    }

    /// Density of [`DensityTable::sample`] at `x`: the normalized
    /// piecewise-linear interpolant.
    pub fn pdf(&self, x: f64) -> f64 {
        let n = self.values.len();
        if self.uniform {
            return 1.0 / TAU;
        }
        let h = TAU / n as f64;
        let u = reduce_angle(x) / h;
        let k = (u.floor() as usize).min(n - 1);
        let frac = u - k as f64;
        self.values[k] * (1.0 - frac) + self.values[(k + 1) % n] * frac
    }

    /// One angle drawn from the density.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.gen::<f64>())
    }
}

/// Draw one angle from `table`.
pub fn sample_angle<R: Rng + ?Sized>(table: &DensityTable, rng: &mut R) -> f64 {
    table.sample(rng)
}

/// `∫₀^{2π} p(x) Π_l p(x + W^l) dx` by the periodic trapezoid rule on
/// [`PRODUCT_NODES`] nodes.
pub fn product_integral(p: &DensitySpec, w: &AngleTuple<f64>) -> f64 {
    product_integral_with(p, w.as_slice(), PRODUCT_NODES)
}

pub fn product_integral_with(p: &DensitySpec, w: &[f64], nodes: usize) -> f64 {
    if p.is_uniform() {
        return TAU.powi(-(w.len() as i32));
    }
    let h = TAU / nodes as f64;
    let sum: f64 = (0..nodes)
        .map(|k| {
            let x = h * k as f64;
            w.iter().fold(p.eval(x), |acc, &wl| acc * p.eval(x + wl))
        })
        .sum();
    (sum * h).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn bessel_i0_known_values() {
        assert_eq!(bessel_i0(0.0), 1.0);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-15);
        assert!((bessel_i0(4.0) - 11.301_921_952_136_33).abs() < 1e-12);
        // I0(20) = 4.355828255955353e7
        assert!((bessel_i0(20.0) / 4.355_828_255_955_353e7 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn eval_examples() {
        assert!((density_eval(&DensitySpec::Uniform, 1.234) - 1.0 / TAU).abs() < 1e-16);
        let vm0 = DensitySpec::von_mises(0.0, 0.0).unwrap();
        assert!((vm0.eval(2.0) - 1.0 / TAU).abs() < 1e-16);
        let vm1 = DensitySpec::von_mises(0.0, 1.0).unwrap();
        let tab = DensitySpec::tabulated_from_fn(4096, |x| vm1.eval(x)).unwrap();
        let expected = 1f64.exp() / (TAU * 1.266_065_877_752_008_4);
        assert!((tab.eval(0.0) - expected).abs() < 1e-6);
    }

    #[test]
    fn validation_errors() {
        assert!(DensitySpec::von_mises(0.0, 25.0).is_err());
        assert!(DensitySpec::von_mises(0.0, -1.0).is_err());
        assert!(DensitySpec::tabulated(vec![1.0, -1.0, 1.0]).is_err());
        assert!(DensitySpec::tabulated(vec![0.0; 8]).is_err());
        assert!(DensitySpec::mixture(vec![0.5, 0.4], vec![DensitySpec::Uniform, DensitySpec::Uniform]).is_err());
        assert!(DensitySpec::mixture(vec![0.5], vec![DensitySpec::Uniform, DensitySpec::Uniform]).is_err());
        let mix = DensitySpec::mixture(
            vec![0.25, 0.75],
            vec![DensitySpec::Uniform, DensitySpec::von_mises(1.0, 3.0).unwrap()],
        )
        .unwrap();
        assert!(mix.validate().is_ok());
    }

    #[test]
    fn uniform_sampling_ks() {
        let table = DensitySpec::Uniform.table();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut xs: Vec<f64> = (0..1_000_000).map(|_| sample_angle(&table, &mut rng)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let f = x / TAU;
                ((i + 1) as f64 / n - f).max(f - i as f64 / n)
            })
            .fold(0.0, f64::max);
        assert!(d <= 0.002, "KS distance {d}");
    }

    #[test]
    fn von_mises_circular_mean() {
        let p = DensitySpec::von_mises(PI, 4.0).unwrap();
        let table = p.table();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut s, mut c) = (0.0, 0.0);
        for _ in 0..1_000_000 {
            let x = sample_angle(&table, &mut rng);
            s += x.sin();
            c += x.cos();
        }
        let mean = reduce_angle(s.atan2(c));
        assert!((mean - PI).abs() < 0.01, "{mean}");
    }

    #[test]
    fn draws_are_distinct() {
        let p = DensitySpec::von_mises(0.5, 2.0).unwrap();
        let table = p.table();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut xs: Vec<f64> = (0..10_000).map(|_| table.sample(&mut rng)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn histogram_within_poisson_bands() {
        let p = DensitySpec::mixture(
            vec![0.6, 0.4],
            vec![
                DensitySpec::von_mises(1.0, 2.0).unwrap(),
                DensitySpec::von_mises(4.0, 6.0).unwrap(),
            ],
        )
        .unwrap();
        let table = p.table();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let draws = 1_000_000;
        let bins = 100;
        let mut counts = vec![0usize; bins];
        for _ in 0..draws {
            let x = table.sample(&mut rng);
            counts[((x / TAU * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let h = TAU / bins as f64;
        for (b, &c) in counts.iter().enumerate() {
            // bin mass by Simpson on 64 panels
            let sub = 64;
            let hs = h / sub as f64;
            let mut mass = 0.0;
            for k in 0..sub {
                let a = h * b as f64 + hs * k as f64;
                mass += hs / 6.0 * (p.eval(a) + 4.0 * p.eval(a + hs / 2.0) + p.eval(a + hs));
            }
            let expected = mass * draws as f64;
            assert!(
                (c as f64 - expected).abs() <= 4.0 * expected.sqrt() + 1.0,
                "bin {b}: {c} vs {expected}"
            );
        }
    }

    #[test]
    fn product_integral_examples() {
        let w3 = AngleTuple::new(vec![1.0, 2.5]).unwrap();
        assert!((product_integral(&DensitySpec::Uniform, &w3) - 1.0 / (4.0 * PI * PI)).abs() < 1e-18);
        let w5 = AngleTuple::new(vec![0.1, 0.2, 0.3, 4.0]).unwrap();
        assert!((product_integral(&DensitySpec::Uniform, &w5) - TAU.powi(-4)).abs() < 1e-18);

        // smooth bump on an arc of length pi/2
        let bump = DensitySpec::tabulated_from_fn(8192, |x| {
            if x < PI / 2.0 {
                (PI * x / (PI / 2.0)).sin().powi(4)
            } else {
                0.0
            }
        })
        .unwrap();
        let reg = AngleTuple::regular_polygon(3).unwrap();
        assert!(product_integral(&bump, &reg) < B3_THRESHOLD);
    }

    #[test]
    fn von_mises_regular_triangle_integral_closed_form() {
        // cosines over a regular triangle cancel, so the integrand is constant
        let p = DensitySpec::von_mises(0.3, 1.0).unwrap();
        let reg = AngleTuple::regular_polygon(3).unwrap();
        let expected = TAU / (TAU * bessel_i0(1.0)).powi(3);
        assert!((product_integral(&p, &reg) / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_integral_orbit_and_refinement() {
        let p = DensitySpec::von_mises(0.7, 2.5).unwrap();
        let w = [0.9, 2.2, 4.1];
        let base = product_integral_with(&p, &w, PRODUCT_NODES);
        // re-anchoring the configuration at another vertex shifts x
        let anchored: Vec<f64> = [2.2 - 0.9, 4.1 - 0.9, TAU - 0.9].to_vec();
        let alt = product_integral_with(&p, &anchored, PRODUCT_NODES);
        assert!((alt - base).abs() <= 1e-9 * base);
        let fine = product_integral_with(&p, &w, 2 * PRODUCT_NODES);
        assert!((fine - base).abs() <= 1e-10 * base);
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("umax-density-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("d.csv");
        let p = DensitySpec::tabulated_from_fn(64, |x| 1.0 + 0.5 * x.cos()).unwrap();
        p.write_csv(&path).unwrap();
        let q = DensitySpec::from_csv(&path).unwrap();
        for k in 0..50 {
            let x = 0.13 * k as f64;
            assert!((p.eval(x) - q.eval(x)).abs() < 1e-14);
        }
        std::fs::write(&path, "angle,density\n0.0,1.0\n0.5,1.0\n").unwrap();
        assert!(matches!(DensitySpec::from_csv(&path), Err(Error::Density(_))));
        std::fs::remove_dir_all(&dir).ok();
    }
}
