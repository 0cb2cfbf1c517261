use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::profile::phi_for;
use super::{
    case_b_raw, cor_b_raw, eta_window_psi_raw, psi_case_a_raw, sphere_directions, DriftCase, DriftConfig, PSigmaTable,
    PhiProfile, PsiTable,
};
use crate::error::{Error, Result};
use crate::grid;
use crate::model::ConvolutionModel;

pub const DRIFT_ABS_TOL: f64 = 1e-8;
pub const DRIFT_REL_TOL: f64 = 1e-6;
const BALL_POINTS: usize = 200;
const MAX_VIOLATION_FRACTION: f64 = 0.01;

/// Drift data for one configuration: ψ and p_σ (case (a) constructions
/// only) and the resulting φ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovData {
    pub config: DriftConfig,
    pub start: f64,
    pub psi: Option<PsiTable>,
    pub p_sigma: Option<PSigmaTable>,
    pub phi: PhiProfile,
}

impl LyapunovData {
    /// Computes φ (and ψ, p_σ where they apply) on `radii`, which must
    /// begin at the drift start.
    pub fn compute(model: &ConvolutionModel, cfg: &DriftConfig, radii: &[f64]) -> Result<Self> {
        let start = cfg.start(model);
        if cfg.case.uses_sigma() {
            cfg.validate(model)?;
            if (radii[0] - start).abs() > 1e-12 * start {
                return Err(Error::InvalidInput(format!(
                    "φ grid must begin at the drift start {start}"
                )));
            }
            let psi = PsiTable::build(model, cfg, radii)?;
            Self::from_psi(model, cfg, psi)
        } else {
            Ok(Self {
                config: *cfg,
                start,
                psi: None,
                p_sigma: None,
                phi: phi_for(model, cfg, radii)?,
            })
        }
    }

    /// Case (a) data from a given ψ table (for instance a perturbed ψ).
    pub fn from_psi(model: &ConvolutionModel, cfg: &DriftConfig, psi: PsiTable) -> Result<Self> {
        if !cfg.case.uses_sigma() {
            return Err(Error::InvalidInput(
                "a ψ table only defines φ for the case (a) constructions".into(),
            ));
        }
        let p = PSigmaTable::new(&psi, cfg.sigma, model.dim());
        let phi = super::phi_from_psi(cfg.case, &psi, &p)?;
        Ok(Self {
            config: *cfg,
            start: psi.grid[0],
            psi: Some(psi),
            p_sigma: Some(p),
            phi,
        })
    }

    /// The same ψ with a different σ.
    pub fn with_sigma(&self, model: &ConvolutionModel, sigma: f64) -> Result<Self> {
        let psi = self
            .psi
            .clone()
            .ok_or_else(|| Error::InvalidInput("σ only enters the case (a) constructions".into()))?;
        Self::from_psi(model, &self.config.with_sigma(sigma), psi)
    }
}

/// Numerical record of a verified Lyapunov inequality
/// `LW/W ≤ −φ + b 1_{B_{r₀}}` with `r₀` the drift start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftCertificate {
    pub config: DriftConfig,
    pub start: f64,
    /// Local drift bound: max of `(LW/W + φ)₊` over the ball grid.
    pub b: f64,
    /// `4r₀²/π² exp(sup V_ν − inf V_ν)` over the ball grid.
    pub lambda_inv_bound: f64,
    /// `b · lambda_inv_bound + 1`.
    pub c0: f64,
    pub violation_fraction: f64,
    /// Largest `LW/W + φ − tol` seen outside the ball.
    pub max_excess: f64,
    pub checked_points: usize,
    pub ball_points: usize,
    pub valid: bool,
    pub phi_at_start: f64,
}

struct CheckPoint {
    excess: f64,
    tol: f64,
}

fn scaled(dir: &[f64], s: f64) -> Vec<f64> {
    dir.iter().map(|u| u * s).collect()
}

/// `ψ(r)` evaluated directly (not interpolated).
fn psi_exact(model: &ConvolutionModel, cfg: &DriftConfig, r: f64) -> Result<f64> {
    Ok(match cfg.case {
        DriftCase::A => psi_case_a_raw(model, r, cfg)?,
        DriftCase::CorA => eta_window_psi_raw(model, r, cfg),
        _ => unreachable!(),
    })
}

/// `φ(r)` evaluated directly for the case (b) constructions.
fn phi_b_exact(model: &ConvolutionModel, cfg: &DriftConfig, r: f64) -> Result<f64> {
    Ok((1.0 - cfg.delta)
        * match cfg.case {
            DriftCase::B => case_b_raw(model, r, cfg)?,
            DriftCase::CorB => cor_b_raw(model, r, cfg),
            _ => unreachable!(),
        })
}

/// `LW/W = −(1−δ)(δ|∇V_ν|² − ΔV_ν)` for `W = e^{(1−δ)V_ν}`.
fn lw_case_b(model: &ConvolutionModel, delta: f64, x: &[f64]) -> Result<f64> {
    let g = model.grad_v_nu(x)?;
    let g2: f64 = g.iter().map(|v| v * v).sum();
    let lap = model.laplacian_v_nu(x)?;
    Ok(-(1.0 - delta) * (delta * g2 - lap))
}

/// Evaluates the Lyapunov inequality for the explicit `W` of the configured
/// case on `radii` (outside the ball) and on a ball grid, without failing on
/// violations.
pub fn drift_report(model: &ConvolutionModel, data: &LyapunovData, radii: &[f64]) -> Result<DriftCertificate> {
    drift_report_with(model, data, radii, BALL_POINTS)
}

pub fn drift_report_with(
    model: &ConvolutionModel,
    data: &LyapunovData,
    radii: &[f64],
    ball_points: usize,
) -> Result<DriftCertificate> {
    let cfg = &data.config;
    let d = model.dim();
    let start = data.start;
    let k = cfg.sigma / (cfg.sigma + 1.0);
    let check_dirs = sphere_directions(d, cfg.sphere_samples, 0.5);

    if cfg.case.uses_sigma() {
        let p = data.p_sigma.as_ref().expect("case (a) data carries p_σ");
        if radii.iter().any(|r| *r > p.grid[p.grid.len() - 1] * (1.0 + 1e-12)) {
            return Err(Error::InvalidInput("certificate radii exceed the p_σ table".into()));
        }
    }

    // outside the ball
    let outside: Vec<CheckPoint> = radii
        .par_iter()
        .map(|&r| -> Result<Vec<CheckPoint>> {
            if r < start * (1.0 - 1e-12) {
                return Err(Error::InvalidInput(format!(
                    "certificate radius {r} is inside the drift ball"
                )));
            }
            let mut out = Vec::with_capacity(check_dirs.len());
            if cfg.case.uses_sigma() {
                let psi = psi_exact(model, cfg, r)?;
                let p = data.p_sigma.as_ref().unwrap().at(r);
                let phi = psi / ((1.0 + cfg.sigma) * p);
                for u in &check_dirs {
                    let g = model.radial_drift(&scaled(u, r))?;
                    let lw = (k * psi - g) / p;
                    out.push(CheckPoint {
                        excess: lw + phi,
                        tol: DRIFT_ABS_TOL + DRIFT_REL_TOL * phi,
                    });
                }
            } else {
                let phi = phi_b_exact(model, cfg, r)?;
                for u in &check_dirs {
                    let lw = lw_case_b(model, cfg.delta, &scaled(u, r))?;
                    out.push(CheckPoint {
                        excess: lw + phi,
                        tol: DRIFT_ABS_TOL + DRIFT_REL_TOL * phi,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let violations = outside.iter().filter(|c| c.excess > c.tol).count();
    let max_excess = outside
        .iter()
        .map(|c| c.excess - c.tol)
        .fold(f64::NEG_INFINITY, f64::max);
    let violation_fraction = if outside.is_empty() {
        0.0
    } else {
        violations as f64 / outside.len() as f64
    };

    // inside the ball: W = exp(h(|x|)) with an even quartic h matched to
    // W_σ in C² at the start radius (case (a)), or W = e^{(1−δ)V_ν} (case (b))
    let phi0 = data.phi.values[0];
    let quartic = if cfg.case.uses_sigma() {
        let rr = start;
        let psi0 = psi_exact(model, cfg, rr)?;
        let h1 = rr.powf(1.0 - d as f64);
        let h2 = h1 * ((1.0 - d as f64) / rr + k * psi0) - h1 * h1;
        let a2 = (h2 - h1 / rr) / (8.0 * rr * rr);
        let a1 = (h1 - 4.0 * a2 * rr.powi(3)) / (2.0 * rr);
        Some((a1, a2))
    } else {
        None
    };
    let ball_dirs = sphere_directions(d, cfg.sphere_samples, 0.0);
    let ball_radii: Vec<f64> = (0..ball_points)
        .map(|j| start * (j as f64 + 0.5) / ball_points as f64)
        .collect();
    let ball: Vec<(f64, f64)> = ball_radii
        .par_iter()
        .map(|&r| -> Result<Vec<(f64, f64)>> {
            let mut out = Vec::new();
            for u in &ball_dirs {
                let x = scaled(u, r);
                let (v, grad) = model.v_nu_and_grad(&x)?;
                let lw = match quartic {
                    Some((a1, a2)) => {
                        let h1 = 2.0 * a1 * r + 4.0 * a2 * r.powi(3);
                        let h2 = 2.0 * a1 + 12.0 * a2 * r * r;
                        let g: f64 = grad.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / r;
                        h2 + (d as f64 - 1.0) * h1 / r + h1 * h1 - h1 * g
                    }
                    None => lw_case_b(model, cfg.delta, &x)?,
                };
                out.push((v, lw + phi0));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let v_origin = model.v_nu(&vec![0.0; d])?;
    let (vmin, vmax) = ball
        .iter()
        .map(|(v, _)| *v)
        .fold((v_origin, v_origin), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let b = ball.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let lambda_inv_bound = 4.0 * start * start / (std::f64::consts::PI.powi(2)) * (vmax - vmin).exp();
    let c0 = b * lambda_inv_bound + 1.0;
    Ok(DriftCertificate {
        config: *cfg,
        start,
        b,
        lambda_inv_bound,
        c0,
        violation_fraction,
        max_excess,
        checked_points: outside.len(),
        ball_points: ball.len(),
        valid: violation_fraction <= MAX_VIOLATION_FRACTION,
        phi_at_start: phi0,
    })
}

/// [`drift_report`] that fails with `InvalidCertificate` when more than 1%
/// of the sampled points violate the inequality.
pub fn drift_check(model: &ConvolutionModel, data: &LyapunovData, radii: &[f64]) -> Result<DriftCertificate> {
    let cert = drift_report(model, data, radii)?;
    if !cert.valid {
        return Err(Error::InvalidCertificate {
            violation_fraction: cert.violation_fraction,
        });
    }
    Ok(cert)
}

/// 200 log-spaced radii on `[start, 10·start]`.
pub fn default_certificate_radii(start: f64) -> Vec<f64> {
    grid::log_space(start, 10.0 * start, 200)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Potential, Profile, SourceMeasure};
    use crate::quad::QuadratureSpec;

    fn gaussian() -> ConvolutionModel {
        ConvolutionModel::new(
            Potential::new(Profile::Quadratic { a: 1.0 }, 1).unwrap(),
            SourceMeasure::point_mass(1),
            QuadratureSpec::default(),
        )
        .unwrap()
    }

    #[test]
    fn gaussian_case_a_exact() {
        let m = gaussian();
        let cfg = DriftConfig::new(DriftCase::A, 1.0, 1).with_sigma(1.0);
        let data = LyapunovData::compute(&m, &cfg, &grid::log_grid(1.0, 20.0, 200)).unwrap();
        let cert = drift_check(&m, &data, &default_certificate_radii(1.0)).unwrap();
        assert_eq!(cert.violation_fraction, 0.0);
        assert_eq!(cert.c0, cert.b * cert.lambda_inv_bound + 1.0);
        assert!(cert.b.is_finite());
    }

    #[test]
    fn gaussian_case_b_holds() {
        let m = gaussian();
        let cfg = DriftConfig::new(DriftCase::B, 1.0, 1).with_delta(0.75);
        let data = LyapunovData::compute(&m, &cfg, &grid::log_grid(1.0, 20.0, 50)).unwrap();
        let cert = drift_check(&m, &data, &default_certificate_radii(1.0)).unwrap();
        assert_eq!(cert.violation_fraction, 0.0);
    }

    #[test]
    fn b_stable_under_ball_refinement() {
        let m = gaussian();
        let cfg = DriftConfig::new(DriftCase::A, 1.0, 1);
        let data = LyapunovData::compute(&m, &cfg, &grid::log_grid(1.0, 20.0, 200)).unwrap();
        let radii = default_certificate_radii(1.0);
        let b1 = drift_report_with(&m, &data, &radii, 200).unwrap().b;
        let b2 = drift_report_with(&m, &data, &radii, 400).unwrap().b;
        assert!(b1 > 0.0);
        assert!((b1 - b2).abs() / b2 < 0.01, "{b1} vs {b2}");
    }
}
