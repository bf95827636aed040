//! Experiment configuration files.
//!
//! A single TOML (or JSON) document drives every subcommand. Unknown keys are
//! rejected, and [`ExperimentConfig::resolve`] fills in every default so the
//! copy embedded in a report is complete and can be fed back verbatim.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use umax::extremum::{default_grid_n, DEFAULT_REFINE_ITERS};
use umax::{DensitySpec, Evaluator, GFunction, KernelSpec, Mode};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Defaults to the registry entry's natural mode, else `u-max`.
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub bound: Option<BoundConfig>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    GapSum,
    PairwiseSum,
}

/// Either a registry `name`, or an explicit `family` and `generator`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GFunction>,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensityConfig {
    Uniform,
    VonMises { mu: f64, kappa: f64 },
    /// CSV file with an `angle,density` header on a uniform grid.
    Tabulated { path: PathBuf },
    Mixture {
        weights: Vec<f64>,
        components: Vec<DensityConfig>,
    },
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig::Uniform
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Oracle cells per axis; defaults by degree.
    #[serde(default)]
    pub grid_n: Option<usize>,
    #[serde(default = "default_refine_iters")]
    pub refine_iters: usize,
}

fn default_refine_iters() -> usize {
    DEFAULT_REFINE_ITERS
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            grid_n: None,
            refine_iters: DEFAULT_REFINE_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    pub replicates: usize,
    #[serde(default = "default_evaluator")]
    pub evaluator: Evaluator,
}

fn default_evaluator() -> Evaluator {
    Evaluator::Auto
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingName {
    Direct,
    Importance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub n_grid: Vec<usize>,
    pub t_grid: Vec<f64>,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: u64,
    #[serde(default = "default_sampling")]
    pub sampling: SamplingName,
    /// Trials of `H_n` for the empirical `P(H_n ≤ z)` column; off when absent.
    #[serde(default)]
    pub lhs_trials: Option<u64>,
}

fn default_mc_samples() -> u64 {
    200_000
}

fn default_sampling() -> SamplingName {
    SamplingName::Importance
}

/// Registry entry: kernel plus its natural mode.
fn registry(name: &str, m: usize) -> Result<(KernelSpec, Mode), CliError> {
    let (base, args) = match name.find('(') {
        Some(i) if name.ends_with(')') => {
            let inner = &name[i + 1..name.len() - 1];
            let args = inner
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Config(format!("bad argument {s:?} in kernel name {name:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            (&name[..i], args)
        }
        _ => (name, Vec::new()),
    };
    let arity = |k: usize| {
        if args.len() == k {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "kernel {base:?} takes {k} argument(s), got {}",
                args.len()
            )))
        }
    };
    let out = match base {
        "perimeter" => {
            arity(0)?;
            (KernelSpec::gap_sum(GFunction::SinHalf, m)?, Mode::UMax)
        }
        "area" => {
            arity(0)?;
            (KernelSpec::gap_sum(GFunction::HalfSin, m)?, Mode::UMax)
        }
        "circumscribed-distance" => {
            arity(0)?;
            (KernelSpec::gap_sum(GFunction::SecHalf, m)?, Mode::UMin)
        }
        "generalized-perimeter" => {
            arity(1)?;
            (KernelSpec::gap_sum(GFunction::PowSin { y: args[0] }, m)?, Mode::UMax)
        }
        "pairwise-distance" => {
            arity(0)?;
            (KernelSpec::pairwise_sum(GFunction::SinHalf, m)?, Mode::UMax)
        }
        "inverse-distance" => {
            arity(0)?;
            (KernelSpec::pairwise_sum(GFunction::CscHalf, m)?, Mode::UMin)
        }
        "alexander-stolarsky" => {
            arity(3)?;
            let c = args[2];
            if c < 0.0 || c.fract() != 0.0 {
                return Err(CliError::Config(format!("alexander-stolarsky c must be a natural number, got {c}")));
            }
            let g = GFunction::AlexanderStolarsky {
                a: args[0],
                b: args[1],
                c: c as u32,
            };
            let curvature: f64 = g.second_derivative(std::f64::consts::TAU / m.max(1) as f64)?;
            let mode = if curvature < 0.0 { Mode::UMax } else { Mode::UMin };
            (KernelSpec::gap_sum(g, m)?, mode)
        }
        other => return Err(CliError::Config(format!("unknown kernel name {other:?}"))),
    };
    Ok(out)
}

impl KernelConfig {
    /// Kernel and the mode it defaults to.
    pub fn build(&self) -> Result<(KernelSpec, Mode), CliError> {
        match (&self.name, self.family, &self.generator) {
            (Some(name), None, None) => registry(name, self.m),
            (None, Some(family), Some(g)) => {
                let spec = match family {
                    FamilyName::GapSum => KernelSpec::gap_sum(g.clone(), self.m)?,
                    FamilyName::PairwiseSum => KernelSpec::pairwise_sum(g.clone(), self.m)?,
                };
                Ok((spec, Mode::UMax))
            }
            _ => Err(CliError::Config(
                "kernel needs either `name`, or both `family` and `generator`".into(),
            )),
        }
    }
}

impl DensityConfig {
    /// Density; relative table paths are taken from `base`.
    pub fn build(&self, base: &Path) -> Result<DensitySpec, CliError> {
        let spec = match self {
            DensityConfig::Uniform => DensitySpec::Uniform,
            DensityConfig::VonMises { mu, kappa } => DensitySpec::von_mises(*mu, *kappa)?,
            DensityConfig::Tabulated { path } => DensitySpec::from_csv(base.join(path))?,
            DensityConfig::Mixture { weights, components } => {
                let parts = components
                    .iter()
                    .map(|c| c.build(base))
                    .collect::<Result<Vec<_>, _>>()?;
                DensitySpec::mixture(weights.clone(), parts)?
            }
        };
        Ok(spec)
    }
}

impl DensityConfig {
    fn anchor(&mut self, base: &Path) {
        match self {
            DensityConfig::Tabulated { path } => *path = base.join(&*path),
            DensityConfig::Mixture { components, .. } => components.iter_mut().for_each(|c| c.anchor(base)),
            _ => {}
        }
    }
}

impl ExperimentConfig {
    /// Parse TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Materialize defaults, anchor table paths at `base` and check
    /// cross-field constraints.
    pub fn resolve(mut self, base: &Path) -> Result<Self, CliError> {
        let (_, natural) = self.kernel.build()?;
        self.density.anchor(base);
        self.mode.get_or_insert(natural);
        let m = self.kernel.m;
        self.analysis.grid_n.get_or_insert(default_grid_n(m));
        if let Some(sim) = &self.simulate {
            if sim.replicates == 0 {
                return Err(CliError::Config("simulate.replicates must be at least 1".into()));
            }
            if sim.n < m {
                return Err(CliError::Config(format!("simulate.n = {} is below m = {m}", sim.n)));
            }
        }
        if let Some(b) = &self.bound {
            if b.n_grid.is_empty() || b.t_grid.is_empty() {
                return Err(CliError::Config("bound.n_grid and bound.t_grid must be nonempty".into()));
            }
            if let Some(&n) = b.n_grid.iter().find(|&&n| n < m) {
                return Err(CliError::Config(format!("bound.n_grid entry {n} is below m = {m}")));
            }
            if let Some(t) = b.t_grid.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
                return Err(CliError::Config(format!("bound.t_grid entry {t} must be finite and nonnegative")));
            }
        }
        Ok(self)
    }

    pub fn mode(&self) -> Mode {
        self.mode.unwrap_or(Mode::UMax)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names() {
        let (k, mode) = registry("inverse-distance", 4).unwrap();
        assert_eq!(mode, Mode::UMin);
        assert_eq!(k.generator(), Some(&GFunction::CscHalf));
        let (k, _) = registry("generalized-perimeter(1.5)", 6).unwrap();
        assert_eq!(k.generator(), Some(&GFunction::PowSin { y: 1.5 }));
        assert!(registry("generalized-perimeter", 6).is_err());
        assert!(registry("hexagon", 6).is_err());
        assert!(registry("alexander-stolarsky(1, 0, 0.5)", 3).is_err());
    }

    #[test]
    fn alexander_stolarsky_mode_follows_curvature() {
        // a = 0, 0 < b <= 1, c = 0: r(s) = s^b concave increasing
        let (_, mode) = registry("alexander-stolarsky(0, 0.5, 0)", 4).unwrap();
        assert_eq!(mode, Mode::UMax);
        // a >= 0, b <= 0, c = 0: convex decreasing
        let (_, mode) = registry("alexander-stolarsky(0, -1, 0)", 4).unwrap();
        assert_eq!(mode, Mode::UMin);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = "[kernel]\nname = \"perimeter\"\nm = 3\ncolour = 1\n";
        assert!(matches!(ExperimentConfig::parse(bad), Err(CliError::Config(_))));
        let bad_top = "seed = 3\n[kernel]\nname = \"perimeter\"\nm = 3\n";
        assert!(ExperimentConfig::parse(bad_top).is_err());
        let bad_density = "[kernel]\nname = \"perimeter\"\nm = 3\n[density]\nfamily = \"von-mises\"\nmu = 0.0\nkappa = 1.0\nsigma = 2.0\n";
        assert!(ExperimentConfig::parse(bad_density).is_err());
    }

    #[test]
    fn defaults_are_materialized() {
        let cfg = ExperimentConfig::parse("[kernel]\nname = \"circumscribed-distance\"\nm = 3\n")
            .unwrap()
            .resolve(Path::new("."))
            .unwrap();
        assert_eq!(cfg.mode, Some(Mode::UMin));
        assert_eq!(cfg.analysis.grid_n, Some(120));
        assert_eq!(cfg.master_seed, DEFAULT_SEED);
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn zero_replicates_is_a_config_error() {
        let text = "[kernel]\nname = \"perimeter\"\nm = 3\n[simulate]\nn = 10\nreplicates = 0\n";
        let err = ExperimentConfig::parse(text).unwrap().resolve(Path::new(".")).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn explicit_family_and_json() {
        let text = r#"{"kernel": {"family": "pairwise-sum", "generator": {"kind": "sin-half"}, "m": 4},
                      "density": {"family": "von-mises", "mu": 0.0, "kappa": 1.0}}"#;
        let cfg = ExperimentConfig::parse(text).unwrap().resolve(Path::new(".")).unwrap();
        assert_eq!(cfg.mode(), Mode::UMax);
        assert!(cfg.density.build(Path::new(".")).is_ok());
    }
}
