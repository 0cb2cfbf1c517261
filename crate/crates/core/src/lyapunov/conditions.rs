use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{case_b_raw, eta, eta_window_psi_raw, psi_case_a_raw, radial_curvature, DriftCase, DriftConfig, PsiTable};
use crate::grid;
use crate::model::ConvolutionModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub passed: bool,
    /// Measured infimum of the left-hand side over the checked radii.
    pub infimum: f64,
    /// Radius at which the infimum was attained.
    pub at_radius: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionsReport {
    pub case: DriftCase,
    pub r0: f64,
    pub start: f64,
    pub checks: Vec<ConditionCheck>,
    pub all_passed: bool,
}

impl ConditionsReport {
    pub fn failed(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn infimum(radii: &[f64], vals: &[f64]) -> (f64, f64) {
    radii
        .iter()
        .zip(vals)
        .fold((f64::INFINITY, f64::NAN), |(m, r), (s, v)| {
            if *v < m || v.is_nan() {
                (*v, *s)
            } else {
                (m, r)
            }
        })
}

fn positivity(name: &str, radii: &[f64], vals: &[f64], detail: &str) -> ConditionCheck {
    let (inf, at) = infimum(radii, vals);
    ConditionCheck {
        name: name.into(),
        passed: inf > 0.0,
        infimum: inf,
        at_radius: at,
        detail: detail.into(),
    }
}

/// `σ₀/(1+σ₀) − ψ'(t)/ψ(t)² + (1−d)/(t ψ(t))` at every table radius, with
/// ψ' from centered differences.
pub fn sigma_robustness_margin(psi: &PsiTable, sigma0: f64, dim: usize) -> Vec<f64> {
    let (g, v) = (&psi.grid, &psi.values);
    let n = g.len();
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let dpsi = (v[b] - v[a]) / (g[b] - g[a]);
            sigma0 / (1.0 + sigma0) - dpsi / (v[i] * v[i]) + (1.0 - dim as f64) / (g[i] * v[i])
        })
        .collect()
}

/// The σ-robustness condition judged on the outer half (in log scale) of
/// the ψ table; `M` is reported as the first radius beyond which the margin
/// stays positive.
pub fn sigma_robustness(psi: &PsiTable, sigma0: f64, dim: usize) -> ConditionCheck {
    let margin = sigma_robustness_margin(psi, sigma0, dim);
    let (lo, hi) = (psi.grid[0], *psi.grid.last().unwrap());
    let mid = (lo * hi).sqrt();
    let k = psi.grid.partition_point(|s| *s < mid);
    let (inf, at) = infimum(&psi.grid[k..], &margin[k..]);
    let m = match margin.iter().rposition(|v| !(*v > 0.0)) {
        None => lo,
        Some(i) if i + 1 < margin.len() => psi.grid[i + 1],
        Some(_) => f64::INFINITY,
    };
    ConditionCheck {
        name: "sigma_robustness".into(),
        passed: inf > 0.0,
        infimum: inf,
        at_radius: at,
        detail: format!("sigma0 = {sigma0}, margin positive beyond M = {m:.6e}"),
    }
}

/// Evaluates each hypothesis of the configured case on `radii` (which
/// should start at or below `R₀`) and reports the measured infima.
pub fn check_conditions_on(model: &ConvolutionModel, cfg: &DriftConfig, radii: &[f64]) -> ConditionsReport {
    let r = model.source().support_radius();
    let start = cfg.start(model);
    let mut checks = Vec::new();
    if cfg.case.is_compact() {
        checks.push(ConditionCheck {
            name: "drift_radius_exceeds_support".into(),
            passed: r.is_finite() && cfg.r0 > r,
            infimum: cfg.r0 - r,
            at_radius: cfg.r0,
            detail: format!("R0 = {}, R = {r}", cfg.r0),
        });
    }
    let beyond = |from: f64| -> Vec<f64> {
        let mut v: Vec<f64> = radii.iter().copied().filter(|s| *s >= from).collect();
        if v.first().is_none_or(|s| *s > from) {
            v.insert(0, from);
        }
        v
    };
    let eval = |pts: &[f64], f: &(dyn Fn(f64) -> f64 + Sync)| -> Vec<f64> { pts.par_iter().map(|s| f(*s)).collect() };
    match cfg.case {
        DriftCase::A => {
            let pts = beyond(cfg.r0);
            let vals = eval(&pts, &|s| psi_case_a_raw(model, s, cfg).unwrap_or(f64::NAN));
            checks.push(positivity(
                "radial_drift_positive",
                &pts,
                &vals,
                "psi(s) > 0 for s >= R0",
            ));
            if let Ok(t) = PsiTable::new(pts, vals) {
                if t.values.iter().all(|v| *v > 0.0) {
                    checks.push(sigma_robustness(&t, cfg.sigma, model.dim()));
                }
            }
        }
        DriftCase::CorA => {
            let pts = beyond(cfg.r0);
            let vals = eval(&pts, &|s| eta(model, s, cfg));
            checks.push(positivity("eta_positive", &pts, &vals, "eta(s) > 0 for s >= R0"));
            if r.is_finite() {
                let pts = beyond(start);
                let vals = eval(&pts, &|s| eta_window_psi_raw(model, s, cfg));
                checks.push(positivity(
                    "window_drift_positive",
                    &pts,
                    &vals,
                    "windowed psi(r) > 0 for r >= R0 + R",
                ));
                if let Ok(t) = PsiTable::new(pts, vals) {
                    if t.values.iter().all(|v| *v > 0.0) {
                        checks.push(sigma_robustness(&t, cfg.sigma, model.dim()));
                    }
                }
            }
        }
        DriftCase::B => {
            let pts = beyond(cfg.r0);
            let vals = eval(&pts, &|s| case_b_raw(model, s, cfg).unwrap_or(f64::NAN));
            checks.push(positivity(
                "curvature_drift_positive",
                &pts,
                &vals,
                "tilted curvature integrand > 0 for |x| >= R0",
            ));
        }
        DriftCase::CorB => {
            let pts = beyond(cfg.r0);
            let vals = eval(&pts, &|s| radial_curvature(model, s, cfg.delta));
            checks.push(positivity(
                "curvature_drift_positive",
                &pts,
                &vals,
                "delta |grad V|^2 - Laplacian V > 0 for |x| >= R0",
            ));
        }
    }
    let all_passed = checks.iter().all(|c| c.passed);
    ConditionsReport {
        case: cfg.case,
        r0: cfg.r0,
        start,
        checks,
        all_passed,
    }
}

/// [`check_conditions_on`] over 100 points per decade on `[R₀, 10⁴ R₀]`.
pub fn check_conditions(model: &ConvolutionModel, cfg: &DriftConfig) -> ConditionsReport {
    let radii = grid::log_grid(cfg.r0, 1e4 * cfg.r0.max(cfg.start(model)), 100);
    check_conditions_on(model, cfg, &radii)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(f: impl Fn(f64) -> f64) -> PsiTable {
        PsiTable::from_fn(&grid::log_grid(1.0, 1e5, 50), f).unwrap()
    }

    #[test]
    fn power_psi_passes() {
        for p in [0.3, 1.0, 1.7] {
            let c = sigma_robustness(&table(|t| 2.0 * t.powf(p - 1.0)), 1.0, 1);
            assert!(c.passed, "p = {p}: {c:?}");
        }
    }

    #[test]
    fn inverse_psi_threshold() {
        // c/t in d = 5 with large σ₀: passes for c > d − 2, fails for c < d − 2
        let ok = sigma_robustness(&table(|t| 3.5 / t), 10.0, 5);
        assert!(ok.passed, "{ok:?}");
        let bad = sigma_robustness(&table(|t| 1.0 / t), 1.0, 5);
        assert!(!bad.passed && bad.infimum < 0.0);
    }
}
