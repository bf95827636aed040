//! The analyze, simulate and bound pipelines.

use std::path::Path;

use serde::Serialize;
use umax::extremum::{find_max_oracle, regular_polygon_analysis, validate_conditions};
use umax::poisson::{grid_seed, probe_cdf, silverman_brown_check, SilvermanBrownRow};
use umax::simulate::{run_replicates, SimulationConfig, SimulationResult};
use umax::{
    AnalysisSource, DensitySpec, Error, KernelFamily, KernelSpec, LimitLaw, MaxAnalysis, Mode,
    ValidationReport,
};

use crate::config::{ExperimentConfig, SamplingName};
use crate::output::{fmt_float, write_csv, write_json};
use crate::CliError;

/// Sup-norm distance below which the oracle maximizer is taken to be the
/// regular polygon.
pub const POLYGON_MATCH_TOL: f64 = 1e-5;
/// Relative agreement required between oracle and closed-form maxima.
pub const VALUE_MATCH_TOL: f64 = 1e-8;

/// Everything derived from the kernel and density before any sampling.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub kernel: KernelSpec,
    /// Kernel whose maximum is analysed: negated for U-min.
    pub effective: KernelSpec,
    pub density: DensitySpec,
    pub mode: Mode,
    pub oracle: MaxAnalysis,
    pub analytic: Option<MaxAnalysis>,
    pub validation: ValidationReport,
    /// Law from the analytic Hessian when available, else from the oracle.
    pub law: LimitLaw,
    /// Law from the oracle's finite-difference Hessians.
    pub law_fd: LimitLaw,
}

impl Pipeline {
    /// Analysis the limit law was taken from.
    pub fn primary(&self) -> &MaxAnalysis {
        self.analytic.as_ref().unwrap_or(&self.oracle)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MaximizerRow {
    pub angles: Vec<f64>,
    pub value: f64,
    /// `det(−G)` of the analysed kernel: `det(G)` of the original for U-min.
    pub hessian_det_fd: f64,
    pub hessian_det_analytic: Option<f64>,
    pub relative_gap: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LawSummary {
    pub k_ordered: f64,
    pub k_total: f64,
    /// `c = K_ordered / m`.
    pub coefficient: f64,
    /// `K_total / m!`, the same number in the all-maximizer form.
    pub coefficient_total_form: f64,
    pub scaling_exponent: f64,
    pub shape_exponent: f64,
}

impl From<&LimitLaw> for LawSummary {
    fn from(l: &LimitLaw) -> Self {
        Self {
            k_ordered: l.k_ordered,
            k_total: l.k_total,
            coefficient: l.coefficient,
            coefficient_total_form: l.coefficient_from_total(),
            scaling_exponent: l.scaling_exponent,
            shape_exponent: l.shape_exponent,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub config: ExperimentConfig,
    pub m: usize,
    pub mode: Mode,
    /// `M` for U-max, `μ` for U-min.
    pub extremal_value: f64,
    pub source: AnalysisSource,
    pub ordered_count: usize,
    pub point_count: u64,
    pub maximizers: Vec<MaximizerRow>,
    pub validation: ValidationReport,
    pub limit: LawSummary,
    pub limit_fd: LawSummary,
}

fn matches_polygon(oracle: &MaxAnalysis, poly: &MaxAnalysis) -> bool {
    let target = &poly.maximizers[0];
    let scale = poly.max_value.abs().max(1.0);
    oracle.maximizers.len() == 1
        && (oracle.max_value - poly.max_value).abs() <= VALUE_MATCH_TOL * scale
        && oracle.maximizers.iter().all(|w| {
            w.angles
                .iter()
                .zip(&target.angles)
                .all(|(a, b)| (a - b).abs() <= POLYGON_MATCH_TOL)
        })
}

/// Locate the maximizers, check the conditions and compute the limit law.
pub fn build_pipeline(cfg: &ExperimentConfig, base: &Path) -> Result<Pipeline, CliError> {
    let (kernel, _) = cfg.kernel.build()?;
    let density = cfg.density.build(base)?;
    let mode = cfg.mode();
    let effective = match mode {
        Mode::UMax => kernel.clone(),
        Mode::UMin => kernel.negated(),
    };
    let grid_n = cfg.analysis.grid_n.expect("resolved config");
    let oracle = find_max_oracle(&effective, grid_n, cfg.analysis.refine_iters)?;
    let analytic = match effective.family() {
        KernelFamily::Custom => None,
        _ => regular_polygon_analysis(&effective)
            .ok()
            .filter(|poly| matches_polygon(&oracle, poly)),
    };
    let primary = analytic.as_ref().unwrap_or(&oracle);
    let validation = validate_conditions(&effective, primary);
    if !validation.interior_maximizers {
        let w = &primary.maximizers[0];
        return Err(Error::BoundaryMaximum {
            gap: validation.min_gap,
            maximizer: w.angles.clone(),
            value: w.value,
        }
        .into());
    }
    if !validation.nondegenerate_hessian || !validation.negative_definite {
        return Err(Error::DegenerateHessian(format!(
            "Hessian at the maximizer is not negative definite (nondegenerate: {}, negative definite: {})",
            validation.nondegenerate_hessian, validation.negative_definite
        ))
        .into());
    }
    let law = LimitLaw::from_analysis(primary, &density)?;
    let law_fd = LimitLaw::from_analysis(&oracle, &density)?;
    Ok(Pipeline {
        kernel,
        effective,
        density,
        mode,
        oracle,
        analytic,
        validation,
        law,
        law_fd,
    })
}

pub fn analysis_report(cfg: &ExperimentConfig, p: &Pipeline) -> AnalysisReport {
    let analytic_det = p.analytic.as_ref().map(|a| a.maximizers[0].det_neg_hessian);
    let maximizers = p
        .oracle
        .maximizers
        .iter()
        .map(|w| MaximizerRow {
            angles: w.angles.clone(),
            value: w.value,
            hessian_det_fd: w.det_neg_hessian,
            hessian_det_analytic: analytic_det,
            relative_gap: analytic_det.map(|a| (w.det_neg_hessian - a).abs() / a.abs()),
        })
        .collect();
    let primary = p.primary();
    AnalysisReport {
        config: cfg.clone(),
        m: p.kernel.degree(),
        mode: p.mode,
        extremal_value: primary.extremal_value(),
        source: primary.source,
        ordered_count: primary.ordered_count(),
        point_count: primary.point_count,
        maximizers,
        validation: p.validation.clone(),
        limit: (&p.law).into(),
        limit_fd: (&p.law_fd).into(),
    }
}

pub fn cmd_analyze(cfg: &ExperimentConfig, base: &Path, out: &Path) -> Result<AnalysisReport, CliError> {
    let p = build_pipeline(cfg, base)?;
    let report = analysis_report(cfg, &p);
    write_json(&out.join("analysis.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub extremal_value: f64,
    pub coefficient: f64,
    pub k_total: f64,
    pub ks_distance: f64,
    pub result: SimulationResult,
}

pub fn cmd_simulate(cfg: &ExperimentConfig, base: &Path, out: &Path) -> Result<SimulationReport, CliError> {
    let sim = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [simulate] section".into()))?;
    let p = build_pipeline(cfg, base)?;
    let extremal = p.primary().extremal_value();
    let sc = SimulationConfig {
        kernel: p.kernel.clone(),
        density: p.density.clone(),
        n: sim.n,
        replicates: sim.replicates,
        master_seed: cfg.master_seed,
        mode: p.mode,
        evaluator: sim.evaluator,
    };
    let result = run_replicates(&sc, &p.law, extremal)?;
    let total = result.ecdf.len() as f64;
    let rows: Vec<Vec<String>> = result
        .ecdf
        .values()
        .iter()
        .enumerate()
        .map(|(i, &t)| vec![fmt_float(t), fmt_float((i + 1) as f64 / total)])
        .collect();
    write_csv(&out.join("ecdf.csv"), &["t".into(), "ecdf".into()], &rows)?;
    let report = SimulationReport {
        config: cfg.clone(),
        master_seed: cfg.master_seed,
        extremal_value: extremal,
        coefficient: p.law.coefficient,
        k_total: p.law.k_total,
        ks_distance: result.ks_distance,
        result,
    };
    write_json(&out.join("simulation.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    /// Level on the scale of the original kernel.
    pub level: f64,
    #[serde(flatten)]
    pub diagnostics: SilvermanBrownRow,
    pub lhs_p_le_z: Option<f64>,
    pub lhs_std_err: Option<f64>,
    /// `|P̂(H_n ≤ z) − e^{−λ̂}|`.
    pub lhs_abs_diff: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundSummary {
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub extremal_value: f64,
    pub coefficient: f64,
    pub sampling: String,
    pub rows: Vec<BoundRow>,
}

pub fn cmd_bound(cfg: &ExperimentConfig, base: &Path, out: &Path) -> Result<BoundSummary, CliError> {
    let b = cfg
        .bound
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [bound] section".into()))?;
    let p = build_pipeline(cfg, base)?;
    let primary = p.primary();
    let m = p.kernel.degree();
    let sign = match p.mode {
        Mode::UMax => 1.0,
        Mode::UMin => -1.0,
    };
    let mut rows = Vec::new();
    for (k, &t) in b.t_grid.iter().enumerate() {
        let seed = grid_seed(cfg.master_seed, k);
        let analysis = match b.sampling {
            SamplingName::Importance => Some(primary),
            SamplingName::Direct => None,
        };
        let diag = silverman_brown_check(
            &p.effective,
            &p.density,
            &p.law,
            primary.max_value,
            t,
            &b.n_grid,
            b.mc_samples,
            seed,
            analysis,
        )?;
        for (j, d) in diag.into_iter().enumerate() {
            let (lhs, se, diff) = match b.lhs_trials {
                Some(trials) => {
                    let (q, se) = probe_cdf(&p.effective, &p.density, d.n, d.z, trials, grid_seed(seed, j + b.n_grid.len()))?;
                    (Some(q), Some(se), Some((q - (-d.lambda_hat).exp()).abs()))
                }
                None => (None, None, None),
            };
            rows.push(BoundRow {
                level: sign * d.z,
                diagnostics: d,
                lhs_p_le_z: lhs,
                lhs_std_err: se,
                lhs_abs_diff: diff,
            });
        }
    }
    let mut header: Vec<String> = [
        "t", "n", "z", "level", "p_hat", "p_std_err", "lambda_hat", "lambda_std_err", "lambda_limit", "rhs",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..m).map(|r| format!("tau_r{r}")));
    header.extend((1..m).map(|r| format!("sb_r{r}")));
    header.extend(["lhs_p_le_z", "lhs_std_err", "lhs_abs_diff"].map(String::from));
    let opt = |x: Option<f64>| x.map(fmt_float).unwrap_or_default();
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let d = &r.diagnostics;
            let mut row = vec![
                fmt_float(d.t),
                d.n.to_string(),
                fmt_float(d.z),
                fmt_float(r.level),
                fmt_float(d.p_hat),
                fmt_float(d.p_std_err),
                fmt_float(d.lambda_hat),
                fmt_float(d.lambda_std_err),
                fmt_float(d.lambda_limit),
                fmt_float(d.rhs),
            ];
            row.extend(d.tau_hat.iter().map(|&t| opt(t)));
            row.extend(d.sb_terms.iter().map(|&s| fmt_float(s)));
            row.extend([opt(r.lhs_p_le_z), opt(r.lhs_std_err), opt(r.lhs_abs_diff)]);
            row
        })
        .collect();
    write_csv(&out.join("bound.csv"), &header, &csv_rows)?;
    let summary = BoundSummary {
        config: cfg.clone(),
        master_seed: cfg.master_seed,
        extremal_value: primary.extremal_value(),
        coefficient: p.law.coefficient,
        sampling: match b.sampling {
            SamplingName::Importance => "importance",
            SamplingName::Direct => "direct",
        }
        .to_string(),
        rows,
    };
    write_json(&out.join("bound.json"), &summary)?;
    Ok(summary)
}
