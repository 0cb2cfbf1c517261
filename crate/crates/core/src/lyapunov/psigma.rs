use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{eta_window_psi, psi_case_a, DriftCase, DriftConfig};
use crate::error::{Error, Result};
use crate::grid;
use crate::model::ConvolutionModel;

/// ψ tabulated on an increasing radius grid starting at the drift start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiTable {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl PsiTable {
    /// Evaluates ψ for case (a) or the windowed ψ for the compact case (a)
    /// at every grid radius.
    pub fn build(model: &ConvolutionModel, cfg: &DriftConfig, radii: &[f64]) -> Result<Self> {
        let values = radii
            .par_iter()
            .map(|s| match cfg.case {
                DriftCase::A => psi_case_a(model, *s, cfg),
                DriftCase::CorA => eta_window_psi(model, *s, cfg),
                _ => Err(Error::InvalidInput(
                    "ψ is only defined for the case (a) constructions".into(),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(radii.to_vec(), values)
    }

    pub fn from_fn(radii: &[f64], psi: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(radii.to_vec(), radii.iter().map(|s| psi(*s)).collect())
    }

    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() || grid.windows(2).any(|w| !(w[1] > w[0])) || grid[0] <= 0.0 {
            return Err(Error::InvalidInput(
                "ψ table needs ≥ 2 increasing positive radii".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("ψ is not finite at s = {}", grid[i])));
        }
        Ok(Self { grid, values })
    }

    /// Multiplies every value by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }

    pub fn at(&self, s: f64) -> f64 {
        grid::lin_interp(&self.grid, &self.values, s)
    }

    /// `∫_{s_0}^{s_i} ψ` by the trapezoid rule in `s`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for i in 1..self.grid.len() {
            out[i] = out[i - 1] + 0.5 * (self.values[i] + self.values[i - 1]) * (self.grid[i] - self.grid[i - 1]);
        }
        out
    }
}

/// `p_σ` on the ψ grid. `values[0] = R₀^{d-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PSigmaTable {
    pub sigma: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl PSigmaTable {
    /// With `L(s) = (1−d) ln s + kΨ(s)`, `k = σ/(σ+1)`, the table satisfies
    /// `p(s_{i+1}) = p(s_i) e^{L_i − L_{i+1}} + e^{−L_{i+1}} ∫_{s_i}^{s_{i+1}} e^{L}`,
    /// with `L` linear in `ln s` on each segment so the integral is exact.
    /// Every term decreases in `k`, which keeps the table monotone in σ.
    pub fn new(psi: &PsiTable, sigma: f64, dim: usize) -> Self {
        let k = sigma / (sigma + 1.0);
        let cum = psi.cumulative();
        let d1 = 1.0 - dim as f64;
        let ell: Vec<f64> = psi.grid.iter().zip(&cum).map(|(s, c)| d1 * s.ln() + k * c).collect();
        let mut values = vec![0.0; psi.grid.len()];
        values[0] = psi.grid[0].powi(dim as i32 - 1);
        for i in 0..psi.grid.len() - 1 {
            let (t0, t1) = (psi.grid[i].ln(), psi.grid[i + 1].ln());
            let drop = ell[i] - ell[i + 1];
            let a = drop + t0;
            let b = t1;
            let dt = t1 - t0;
            let seg = if (b - a).abs() < 1e-12 {
                a.exp() * dt
            } else if b > a {
                // factor out the larger exponent so steep ψ does not overflow
                b.exp() * dt * -(a - b).exp_m1() / (b - a)
            } else {
                a.exp() * dt * (b - a).exp_m1() / (b - a)
            };
            values[i + 1] = values[i] * drop.exp() + seg;
        }
        Self {
            sigma,
            grid: psi.grid.clone(),
            values,
        }
    }

    /// `p_σ(r)` by log-log interpolation on the table.
    pub fn at(&self, r: f64) -> f64 {
        grid::loglog_interp(&self.grid, &self.values, r)
    }
}

/// `p_σ(r)` for a ψ given as a function on `[R₀, r]`, on a fine log grid.
pub fn p_sigma(psi: &dyn Fn(f64) -> f64, r: f64, cfg: &DriftConfig, dim: usize) -> Result<f64> {
    if r < cfg.r0 {
        return Err(Error::InvalidInput(format!("p_σ needs r ≥ R₀ = {}, got {r}", cfg.r0)));
    }
    if r == cfg.r0 {
        return Ok(cfg.r0.powi(dim as i32 - 1));
    }
    let n = (((r / cfg.r0).log10() * 4000.0).ceil() as usize).max(400);
    let radii = grid::log_space(cfg.r0, r, n);
    let table = PsiTable::from_fn(&radii, psi)?;
    let p = PSigmaTable::new(&table, cfg.sigma, dim);
    Ok(*p.values.last().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_psi_closed_form() {
        let (c0, sigma, r0) = (0.7, 1.0, 1.0);
        let cfg = DriftConfig::new(DriftCase::A, r0, 1).with_sigma(sigma);
        let k = sigma / (sigma + 1.0);
        for r in [1.5, 4.0, 20.0] {
            let e = (-k * c0 * (r - r0)).exp();
            let expect = (1.0 - e) / (k * c0) + e;
            let got = p_sigma(&|_| c0, r, &cfg, 1).unwrap();
            assert_relative_eq!(got, expect, max_relative = 1e-6);
        }
    }

    #[test]
    fn start_value_exact() {
        for d in 1..=4 {
            let radii = grid::log_space(2.5, 50.0, 30);
            let t = PsiTable::from_fn(&radii, |s| 3.0 / s).unwrap();
            let p = PSigmaTable::new(&t, 1.0, d);
            assert_eq!(p.values[0], 2.5f64.powi(d as i32 - 1));
        }
    }

    #[test]
    fn inverse_psi_gives_linear_growth() {
        // ψ = c/u in d = 1: p_σ(r) ~ r / (1 + kc)
        let cfg = DriftConfig::new(DriftCase::A, 1.0, 1);
        let ratios: Vec<f64> = [1e2, 1e3, 1e4]
            .iter()
            .map(|r| p_sigma(&|u| 2.0 / u, *r, &cfg, 1).unwrap() / r)
            .collect();
        let (lo, hi) = ratios
            .iter()
            .fold((f64::MAX, 0.0f64), |(a, b), x| (a.min(*x), b.max(*x)));
        assert!(hi / lo < 1.1, "{ratios:?}");
        assert_relative_eq!(ratios[2], 0.5, max_relative = 1e-3);
    }
}
