//! Drift data for the convolution: the radial drift ψ, the windowed η for
//! compactly supported ν, the correction factor p_σ, the Lyapunov rate φ,
//! and a numerical certificate for the Lyapunov inequality.

pub mod conditions;
pub mod drift;
pub mod profile;
pub mod psigma;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid;
use crate::model::ConvolutionModel;

pub use conditions::{
    check_conditions, check_conditions_on, sigma_robustness, sigma_robustness_margin, ConditionCheck, ConditionsReport,
};
pub use drift::{
    default_certificate_radii, drift_check, drift_report, drift_report_with, DriftCertificate, LyapunovData,
};
pub use profile::{phi_case_a, phi_case_b, phi_for, phi_from_psi, PhiProfile};
pub use psigma::{p_sigma, PSigmaTable, PsiTable};

/// Which construction of the Lyapunov function is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftCase {
    /// Radial drift ψ with `W = W_σ(|x|)`.
    A,
    /// `W = e^{(1-δ)V_ν}` with the tilted curvature integrand.
    B,
    /// Compact ν: ψ from the windowed η.
    CorA,
    /// Compact ν: φ from the ball infimum of the curvature of `V`.
    CorB,
}

impl DriftCase {
    pub fn is_compact(self) -> bool {
        matches!(self, DriftCase::CorA | DriftCase::CorB)
    }

    pub fn uses_sigma(self) -> bool {
        matches!(self, DriftCase::A | DriftCase::CorA)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub case: DriftCase,
    /// Drift radius `R₀`.
    pub r0: f64,
    pub sigma: f64,
    pub delta: f64,
    /// Directions used for infima over spheres (ignored in d = 1).
    pub sphere_samples: usize,
    /// Points used for infima over `[r − R, r + R]`.
    pub window_samples: usize,
}

impl DriftConfig {
    pub fn new(case: DriftCase, r0: f64, dim: usize) -> Self {
        Self {
            case,
            r0,
            sigma: 1.0,
            delta: 0.75,
            sphere_samples: default_sphere_samples(dim),
            window_samples: 64,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn validate(&self, model: &ConvolutionModel) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.r0 > 0.0) {
            return bad(format!("drift radius must be positive, got {}", self.r0));
        }
        if self.case.uses_sigma() && !(self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !self.case.uses_sigma() && !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.window_samples < 2 || self.sphere_samples < 1 {
            return bad("window_samples must be ≥ 2 and sphere_samples ≥ 1".into());
        }
        let r = model.source().support_radius();
        if self.case.is_compact() {
            if !r.is_finite() {
                return bad("the compact-support cases need ν with bounded support".into());
            }
            if self.r0 <= r {
                return bad(format!("drift radius {} must exceed the support radius {r}", self.r0));
            }
        }
        Ok(())
    }

    /// Radius from which φ is defined: `R₀`, or `R₀ + R` for compact ν.
    pub fn start(&self, model: &ConvolutionModel) -> f64 {
        if self.case.is_compact() {
            self.r0 + model.source().support_radius()
        } else {
            self.r0
        }
    }
}

pub fn default_sphere_samples(dim: usize) -> usize {
    match dim {
        1 => 2,
        2 => 64,
        _ => 512,
    }
}

/// Deterministic unit directions: `{±1}` in d = 1, equally spaced angles
/// in d = 2, a Fibonacci lattice in d = 3, seeded Gaussian draws beyond.
/// `offset ∈ [0, 1)` rotates the set, giving an independent check set.
pub fn sphere_directions(dim: usize, n: usize, offset: f64) -> Vec<Vec<f64>> {
    use std::f64::consts::PI;
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n)
            .map(|j| {
                let th = 2.0 * PI * (j as f64 + offset) / n as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|j| {
                    let z = 1.0 - 2.0 * (j as f64 + 0.5) / n as f64;
                    let rho = (1.0 - z * z).sqrt();
                    let th = golden * j as f64 + 2.0 * PI * offset;
                    vec![rho * th.cos(), rho * th.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed ^ (offset * 1e6) as u64);
            (0..n)
                .map(|_| {
                    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x / s).collect()
                })
                .collect()
        }
    }
}

fn scaled(dir: &[f64], s: f64) -> Vec<f64> {
    dir.iter().map(|u| u * s).collect()
}

/// ψ(s) without the positivity check: the infimum over the sphere `|x| = s`
/// of `⟨∇V_ν(x), x⟩ / |x|`.
pub fn psi_case_a_raw(model: &ConvolutionModel, s: f64, cfg: &DriftConfig) -> Result<f64> {
    let dirs = sphere_directions(model.dim(), cfg.sphere_samples, 0.0);
    let mut best = f64::INFINITY;
    for u in &dirs {
        best = best.min(model.radial_drift(&scaled(u, s))?);
    }
    Ok(best)
}

/// ψ(s) for case (a); fails when it is not positive at `s ≥ R₀`.
pub fn psi_case_a(model: &ConvolutionModel, s: f64, cfg: &DriftConfig) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidInput(format!("ψ needs s > 0, got {s}")));
    }
    let v = psi_case_a_raw(model, s, cfg)?;
    if v <= 0.0 && s >= cfg.r0 {
        return Err(Error::DriftConditionFailed {
            condition: "radial_drift_positive".into(),
            radius: s,
            value: v,
        });
    }
    Ok(v)
}

/// `η(s) = inf_{|x|=s} (⟨∇V(x), x⟩ − R|∇V(x)|)` with `R` the support radius of ν.
pub fn eta(model: &ConvolutionModel, s: f64, cfg: &DriftConfig) -> f64 {
    let r = model.source().support_radius();
    let pot = model.potential();
    let d = model.dim();
    let mut g = vec![0.0; d];
    sphere_directions(d, cfg.sphere_samples, 0.0)
        .iter()
        .map(|u| {
            let x = scaled(u, s);
            pot.gradient(&x, &mut g);
            let dot: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
            let n = g.iter().map(|a| a * a).sum::<f64>().sqrt();
            dot - r * n
        })
        .fold(f64::INFINITY, f64::min)
}

fn window(r: f64, half: f64, n: usize) -> impl Iterator<Item = f64> {
    let lo = (r - half).max(0.0);
    let hi = r + half;
    (0..n).map(move |j| {
        if n == 1 {
            r
        } else {
            lo + (hi - lo) * j as f64 / (n - 1) as f64
        }
    })
}

/// `(1/r) inf_{r−R ≤ s ≤ r+R} η(s)` without the positivity check.
pub fn eta_window_psi_raw(model: &ConvolutionModel, r: f64, cfg: &DriftConfig) -> f64 {
    let half = model.source().support_radius();
    let n = if half > 0.0 { cfg.window_samples } else { 1 };
    window(r, half, n)
        .map(|s| eta(model, s, cfg))
        .fold(f64::INFINITY, f64::min)
        / r
}

/// ψ for compactly supported ν from the windowed η; fails when it is not
/// positive at `r ≥ R₀ + R`.
pub fn eta_window_psi(model: &ConvolutionModel, r: f64, cfg: &DriftConfig) -> Result<f64> {
    let half = model.source().support_radius();
    if !half.is_finite() {
        return Err(Error::InvalidInput("windowed η needs ν with bounded support".into()));
    }
    if !(r - half > 0.0) {
        return Err(Error::InvalidInput(format!(
            "windowed η needs r > R, got r = {r}, R = {half}"
        )));
    }
    let v = eta_window_psi_raw(model, r, cfg);
    if v <= 0.0 && r >= cfg.r0 + half {
        return Err(Error::DriftConditionFailed {
            condition: "window_drift_positive".into(),
            radius: r,
            value: v,
        });
    }
    Ok(v)
}

/// `δ v'(t)² − v''(t) − (d−1) v'(t)/t`, the curvature integrand of `V` at radius `t`.
pub fn radial_curvature(model: &ConvolutionModel, t: f64, delta: f64) -> f64 {
    let pot = model.potential();
    let g = pot.radial_d1(t);
    delta * g * g - pot.radial_laplacian(t)
}

/// The case-(b) integrand minimised over the sphere `|x| = s`.
pub fn case_b_raw(model: &ConvolutionModel, s: f64, cfg: &DriftConfig) -> Result<f64> {
    let mut best = f64::INFINITY;
    for u in &sphere_directions(model.dim(), cfg.sphere_samples, 0.0) {
        best = best.min(model.case_b_integrand(&scaled(u, s), cfg.delta)?);
    }
    Ok(best)
}

/// Curvature integrand minimised over `|u| ∈ [s − R, s + R]`.
pub fn cor_b_raw(model: &ConvolutionModel, s: f64, cfg: &DriftConfig) -> f64 {
    let half = model.source().support_radius();
    let n = if half > 0.0 { cfg.window_samples } else { 1 };
    window(s, half, n)
        .filter(|t| *t > 0.0)
        .map(|t| radial_curvature(model, t, cfg.delta))
        .fold(f64::INFINITY, f64::min)
}

/// The quantity whose eventual positivity defines `R₀` for each case.
pub fn drift_indicator(model: &ConvolutionModel, s: f64, cfg: &DriftConfig) -> Result<f64> {
    Ok(match cfg.case {
        DriftCase::A => psi_case_a_raw(model, s, cfg)?,
        DriftCase::B => case_b_raw(model, s, cfg)?,
        DriftCase::CorA => eta(model, s, cfg),
        DriftCase::CorB => radial_curvature(model, s, cfg.delta),
    })
}

/// Auto-selected drift radius: 1.25 times the smallest scanned radius
/// beyond which the case's drift indicator stays positive. The scan covers
/// `[s_min, 10³ s_min]` and then doubles its horizon ten times.
pub fn select_r0(model: &ConvolutionModel, cfg: &DriftConfig) -> Result<f64> {
    let r = model.source().support_radius();
    let rough_origin = !model.potential().smooth_at_origin();
    let s_min = if cfg.case.is_compact() || (rough_origin && r.is_finite()) {
        (r * (1.0 + 1e-3)).max(0.5)
    } else {
        0.5
    };
    let mut pts = grid::log_grid(s_min, 1e3 * s_min, 100);
    let mut h = 1e3 * s_min;
    for _ in 0..10 {
        pts.extend(grid::log_space(h, 2.0 * h, 8).into_iter().skip(1));
        h *= 2.0;
    }
    let vals: Vec<f64> = pts
        .par_iter()
        .map(|s| drift_indicator(model, *s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let last_bad = vals.iter().rposition(|v| !(*v > 0.0));
    let first_good = match last_bad {
        None => s_min,
        Some(i) if i + 1 < pts.len() => pts[i + 1],
        Some(i) => {
            return Err(Error::DriftConditionFailed {
                condition: "drift_radius_scan".into(),
                radius: pts[i],
                value: vals[i],
            })
        }
    };
    let mut r0 = 1.25 * first_good;
    if cfg.case.is_compact() && r0 <= r {
        r0 = 1.25 * r;
    }
    Ok(r0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Potential, Profile, SourceMeasure, SourceSpec};
    use crate::quad::QuadratureSpec;
    use approx::assert_relative_eq;

    fn model(profile: Profile, source: SourceSpec) -> ConvolutionModel {
        ConvolutionModel::new(
            Potential::new(profile, 1).unwrap(),
            SourceMeasure::new(source, 1).unwrap(),
            QuadratureSpec::default(),
        )
        .unwrap()
    }

    #[test]
    fn psi_point_mass_power() {
        let m = model(Profile::Power { p: 1.5 }, SourceSpec::PointMass { at: None });
        let cfg = DriftConfig::new(DriftCase::A, 1.0, 1);
        for s in [0.5, 2.0, 30.0] {
            assert_relative_eq!(psi_case_a(&m, s, &cfg).unwrap(), 1.5 * s.sqrt(), max_relative = 1e-13);
        }
    }

    #[test]
    fn psi_two_atoms_brute_force() {
        let m = model(
            Profile::Quadratic { a: 1.0 },
            SourceSpec::Atoms {
                points: vec![vec![-1.0], vec![1.0]],
                weights: vec![0.5, 0.5],
            },
        );
        let cfg = DriftConfig::new(DriftCase::A, 1.0, 1);
        // g(x) = Σ w_i e^{-(x-z_i)²} 2(x-z_i) sgn(x) / Σ w_i e^{-(x-z_i)²}
        let g = |x: f64| {
            let (mut num, mut den) = (0.0, 0.0);
            for z in [-1.0f64, 1.0] {
                let e = (-(x - z) * (x - z)).exp();
                num += e * 2.0 * (x - z) * x.signum();
                den += e;
            }
            num / den
        };
        assert_relative_eq!(
            psi_case_a(&m, 3.0, &cfg).unwrap(),
            g(3.0).min(g(-3.0)),
            max_relative = 1e-13
        );
    }

    #[test]
    fn eta_closed_form() {
        let m = model(Profile::Power { p: 0.5 }, SourceSpec::Uniform { a: -1.0, b: 1.0 });
        let cfg = DriftConfig::new(DriftCase::CorA, 2.0, 1);
        assert_relative_eq!(eta(&m, 4.0, &cfg), 0.75, max_relative = 1e-14);
    }

    #[test]
    fn window_collapses_for_point_mass() {
        let m = model(Profile::LogTail { coef: 3.0 }, SourceSpec::PointMass { at: None });
        let cfg = DriftConfig::new(DriftCase::CorA, 1.0, 1);
        for r in [2.0, 10.0] {
            let a = eta_window_psi(&m, r, &cfg).unwrap();
            let b = psi_case_a(&m, r, &DriftConfig::new(DriftCase::A, 1.0, 1)).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
    }

    #[test]
    fn fibonacci_directions_are_unit_and_balanced() {
        let dirs = sphere_directions(3, 512, 0.0);
        let mut mean = [0.0; 3];
        for d in &dirs {
            assert_relative_eq!(d.iter().map(|x| x * x).sum::<f64>(), 1.0, max_relative = 1e-14);
            for i in 0..3 {
                mean[i] += d[i] / 512.0;
            }
        }
        assert!(mean.iter().all(|m| m.abs() < 1e-2));
    }

    #[test]
    fn auto_r0_exceeds_support() {
        let m = model(Profile::Power { p: 0.6 }, SourceSpec::Uniform { a: -1.0, b: 1.0 });
        let cfg = DriftConfig::new(DriftCase::CorA, 1.0, 1);
        let r0 = select_r0(&m, &cfg).unwrap();
        assert!(r0 > 1.0 && r0 < 2.0, "{r0}");
    }
}
