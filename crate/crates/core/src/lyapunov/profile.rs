use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{case_b_raw, cor_b_raw, DriftCase, DriftConfig, PSigmaTable, PsiTable};
use crate::error::{Error, Result};
use crate::grid;
use crate::model::ConvolutionModel;

/// A positive radial Lyapunov rate tabulated from the drift start outwards,
/// constant below the start and log-log interpolated on the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiProfile {
    pub case: DriftCase,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl PhiProfile {
    pub fn new(case: DriftCase, grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("φ table needs ≥ 2 increasing radii".into()));
        }
        if let Some(i) = values.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::DriftConditionFailed {
                condition: "lyapunov_rate_positive".into(),
                radius: grid[i],
                value: values[i],
            });
        }
        Ok(Self { case, grid, values })
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// φ at radius `s`; beyond the table end the last segment's power law is
    /// continued.
    pub fn at(&self, s: f64) -> f64 {
        if s <= self.grid[0] {
            return self.values[0];
        }
        grid::loglog_interp(&self.grid, &self.values, s)
    }

    /// `k φ`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            case: self.case,
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }
}

/// `φ = ψ / ((1 + σ) p_σ)` on the ψ grid.
pub fn phi_from_psi(case: DriftCase, psi: &PsiTable, p: &PSigmaTable) -> Result<PhiProfile> {
    let values = psi
        .values
        .iter()
        .zip(&p.values)
        .map(|(a, b)| a / ((1.0 + p.sigma) * b))
        .collect();
    PhiProfile::new(case, psi.grid.clone(), values)
}

fn check_start(model: &ConvolutionModel, cfg: &DriftConfig, radii: &[f64]) -> Result<()> {
    let start = cfg.start(model);
    match radii.first() {
        Some(r) if (r - start).abs() <= 1e-12 * start => Ok(()),
        _ => Err(Error::InvalidInput(format!(
            "φ grid must begin at the drift start {start}"
        ))),
    }
}

/// φ for the case (a) constructions on `radii` (which must begin at the
/// drift start).
pub fn phi_case_a(model: &ConvolutionModel, cfg: &DriftConfig, radii: &[f64]) -> Result<PhiProfile> {
    cfg.validate(model)?;
    check_start(model, cfg, radii)?;
    let psi = PsiTable::build(model, cfg, radii)?;
    let p = PSigmaTable::new(&psi, cfg.sigma, model.dim());
    phi_from_psi(cfg.case, &psi, &p)
}

/// φ for the case (b) constructions: `(1−δ)` times the tilted curvature
/// integrand (general ν) or its infimum over `B_R(x)` (compact ν).
pub fn phi_case_b(model: &ConvolutionModel, cfg: &DriftConfig, radii: &[f64]) -> Result<PhiProfile> {
    cfg.validate(model)?;
    check_start(model, cfg, radii)?;
    let raw = radii
        .par_iter()
        .map(|s| match cfg.case {
            DriftCase::B => case_b_raw(model, *s, cfg),
            DriftCase::CorB => Ok(cor_b_raw(model, *s, cfg)),
            _ => Err(Error::InvalidInput("case (b) φ requested for a case (a) config".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(i) = raw.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::DriftConditionFailed {
            condition: "curvature_drift_positive".into(),
            radius: radii[i],
            value: raw[i],
        });
    }
    let values = raw.into_iter().map(|v| (1.0 - cfg.delta) * v).collect();
    PhiProfile::new(cfg.case, radii.to_vec(), values)
}

/// φ for any case.
pub fn phi_for(model: &ConvolutionModel, cfg: &DriftConfig, radii: &[f64]) -> Result<PhiProfile> {
    if cfg.case.uses_sigma() {
        phi_case_a(model, cfg, radii)
    } else {
        phi_case_b(model, cfg, radii)
    }
}
