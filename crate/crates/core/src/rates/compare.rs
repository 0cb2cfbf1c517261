use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_asymptotics, phi_radii, rates_from_data, AsymptoticFit, Family, RatePlan, RateResult, RateTable};
use crate::error::{Error, Result};
use crate::grid;
use crate::lyapunov::{eta, eta_window_psi_raw, sigma_robustness, ConditionCheck, DriftConfig, LyapunovData, PsiTable};
use crate::model::{ConvolutionModel, SourceMeasure};

/// Pairwise ratios of several α tables on a common s-grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub labels: Vec<String>,
    pub s_grid: Vec<f64>,
    /// `α` with constant 1, one row per label.
    pub alphas: Vec<Vec<f64>>,
    /// `(i, j, max_s α_i/α_j ÷ min_s α_i/α_j)` for every pair `i < j`.
    pub spreads: Vec<(usize, usize, f64)>,
    pub max_spread: f64,
    /// Spread bound used for the verdict.
    pub factor: f64,
    pub bounded: bool,
}

impl RatioReport {
    pub fn new(labels: Vec<String>, s_grid: Vec<f64>, alphas: Vec<Vec<f64>>, factor: f64) -> Self {
        let mut spreads = Vec::new();
        for i in 0..alphas.len() {
            for j in i + 1..alphas.len() {
                let (lo, hi) = alphas[i]
                    .iter()
                    .zip(&alphas[j])
                    .map(|(a, b)| a / b)
                    .fold((f64::INFINITY, 0.0f64), |(lo, hi), q| (lo.min(q), hi.max(q)));
                spreads.push((i, j, hi / lo));
            }
        }
        let max_spread = spreads.iter().map(|s| s.2).fold(1.0, f64::max);
        Self {
            labels,
            s_grid,
            alphas,
            spreads,
            max_spread,
            factor,
            bounded: max_spread < factor,
        }
    }
}

fn ratio_report(results: &[RateResult], labels: Vec<String>, factor: f64) -> RatioReport {
    let s_grid = results[0].inverse.grid.clone();
    let alphas = results.iter().map(|r| r.inverse.values.clone()).collect();
    RatioReport::new(labels, s_grid, alphas, factor)
}

fn case_a_data(model: &ConvolutionModel, cfg: &DriftConfig, plan: &RatePlan) -> Result<LyapunovData> {
    if !cfg.case.uses_sigma() {
        return Err(Error::InvalidInput("σ comparisons need a case (a) construction".into()));
    }
    LyapunovData::compute(model, cfg, &phi_radii(model, cfg, plan)?)
}

/// α for each σ from one ψ table; the verdict is `max spread < factor`.
pub fn compare_sigma(
    model: &ConvolutionModel,
    cfg: &DriftConfig,
    sigmas: &[f64],
    plan: &RatePlan,
    factor: f64,
) -> Result<RatioReport> {
    if sigmas.is_empty() {
        return Err(Error::InvalidInput("no σ values given".into()));
    }
    let base = case_a_data(model, cfg, plan)?;
    let results = sigmas
        .par_iter()
        .map(|s| rates_from_data(model, base.with_sigma(model, *s)?, plan))
        .collect::<Result<Vec<_>>>()?;
    let labels = sigmas.iter().map(|s| format!("sigma={s}")).collect();
    Ok(ratio_report(&results, labels, factor))
}

/// α from ψ against α from `scale · ψ` at the same σ.
pub fn compare_psi_perturbation(
    model: &ConvolutionModel,
    cfg: &DriftConfig,
    scale: f64,
    plan: &RatePlan,
    factor: f64,
) -> Result<RatioReport> {
    let base = case_a_data(model, cfg, plan)?;
    let psi: &PsiTable = base.psi.as_ref().expect("case (a) data carries ψ");
    let perturbed = LyapunovData::from_psi(model, cfg, psi.scaled(scale))?;
    let results = [base, perturbed]
        .into_par_iter()
        .map(|d| rates_from_data(model, d, plan))
        .collect::<Result<Vec<_>>>()?;
    Ok(ratio_report(
        &results,
        vec!["psi".into(), format!("{scale}*psi")],
        factor,
    ))
}

/// Comparison of α for μ alone and for μ∗ν (compact ν, windowed η).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `(r, inf_{|s−r|≤R} η(s) / η_μ(r))` on the large-r grid.
    pub eta_ratios: Vec<(f64, f64)>,
    /// Minimum of the ratios over the last decade.
    pub eta0: f64,
    pub sigma0: f64,
    pub sigma: f64,
    /// `σ₀ / (η₀(1+σ₀) − σ₀)`.
    pub sigma_bound: f64,
    pub sigma_admissible: bool,
    /// σ-robustness of ψ_μ with σ₀.
    pub robustness: ConditionCheck,
    pub ratio: RatioReport,
    pub fit_mu: Option<AsymptoticFit>,
    pub fit_conv: Option<AsymptoticFit>,
}

/// Compares α for `μ` and `μ∗ν` under the compact-ν case (a) construction
/// with the same σ and `R₀`.
pub fn compare_stability(
    conv: &ConvolutionModel,
    cfg: &DriftConfig,
    sigma0: f64,
    plan: &RatePlan,
    factor: f64,
) -> Result<StabilityReport> {
    if cfg.case != crate::lyapunov::DriftCase::CorA {
        return Err(Error::InvalidInput(
            "stability comparison uses the compact case (a) construction".into(),
        ));
    }
    cfg.validate(conv)?;
    let mu = ConvolutionModel::new(
        conv.potential().clone(),
        SourceMeasure::point_mass(conv.dim()),
        *conv.quadrature(),
    )?;
    let start = cfg.start(conv);
    let radii = grid::log_grid(100.0 * start, 1e4 * start, 20);
    let eta_ratios: Vec<(f64, f64)> = radii
        .par_iter()
        .map(|r| (*r, r * eta_window_psi_raw(conv, *r, cfg) / eta(&mu, *r, cfg)))
        .collect();
    let last_decade = 1e3 * start;
    let eta0 = eta_ratios
        .iter()
        .filter(|(r, _)| *r >= last_decade * (1.0 - 1e-12))
        .map(|e| e.1)
        .fold(f64::INFINITY, f64::min);
    let bound = sigma0 / (1.0 + sigma0);
    if !(eta0 > bound) {
        return Err(Error::HypothesisFailed { eta0, bound });
    }
    let sigma_bound = sigma0 / (eta0 * (1.0 + sigma0) - sigma0);

    let mu_data = case_a_data(&mu, cfg, plan)?;
    let robustness = sigma_robustness(mu_data.psi.as_ref().unwrap(), sigma0, mu.dim());
    let conv_data = case_a_data(conv, cfg, plan)?;
    let results = [(&mu, mu_data), (conv, conv_data)]
        .into_par_iter()
        .map(|(m, d)| rates_from_data(m, d, plan))
        .collect::<Result<Vec<_>>>()?;
    let fit = |r: &RateResult| {
        fit_asymptotics(&r.inverse, &Family::ALL, (plan.s_min, plan.s_max))
            .ok()
            .map(|f| f.best)
    };
    Ok(StabilityReport {
        eta_ratios,
        eta0,
        sigma0,
        sigma: cfg.sigma,
        sigma_bound,
        sigma_admissible: cfg.sigma > sigma_bound,
        robustness,
        fit_mu: fit(&results[0]),
        fit_conv: fit(&results[1]),
        ratio: ratio_report(&results, vec!["mu".into(), "mu*nu".into()], factor),
    })
}

/// Two-sided density comparison `c₁ p_b ≤ p_a ≤ c₂ p_b` measured on `points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityBounds {
    pub c1: f64,
    pub c2: f64,
}

impl DensityBounds {
    /// `α(s) = (c₂/c₁) α̃(s/c₂)` on `s_grid`.
    pub fn transfer(&self, alpha_tilde: &RateTable, s_grid: &[f64]) -> Result<RateTable> {
        let k = self.c2 / self.c1;
        let values = s_grid.iter().map(|s| k * alpha_tilde.value_at(s / self.c2)).collect();
        RateTable::new(
            s_grid.to_vec(),
            values,
            alpha_tilde.monotonicity,
            alpha_tilde.extrapolation,
        )
    }
}

/// Default comparison points on the line: step ¼ on `[−50, 50]` and 20 per
/// decade out to `10⁴` on both sides.
pub fn comparison_points() -> Vec<f64> {
    let mut pts: Vec<f64> = (-200..=200).map(|i| 0.25 * i as f64).collect();
    for r in grid::log_grid(50.0, 1e4, 20).into_iter().skip(1) {
        pts.push(r);
        pts.push(-r);
    }
    pts
}

/// Extremes of `p_a / p_b` over one-dimensional `points`, in log space.
pub fn density_bounds(a: &ConvolutionModel, b: &ConvolutionModel, points: &[f64]) -> Result<DensityBounds> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::UnsupportedDimension {
            dimension: a.dim().max(b.dim()),
            reason: "density comparison is tabulated on the line".into(),
        });
    }
    let logs = points
        .par_iter()
        .map(|x| Ok(a.log_p_nu(&[*x])? - b.log_p_nu(&[*x])?))
        .collect::<Result<Vec<f64>>>()?;
    let (lo, hi) = logs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    Ok(DensityBounds {
        c1: lo.exp(),
        c2: hi.exp(),
    })
}
