use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::table::{Extrapolation, Monotonicity, RateTable};
use crate::error::{Error, Result};
use crate::lyapunov::PhiProfile;
use crate::model::{ConvolutionModel, Which};

/// `φ_φ(r) = sup{s > 0 : inf_{|x| ≤ s} φ ≥ 1/r}` for a tabulated radial φ
/// (constant below the table start).
#[derive(Debug, Clone)]
pub struct VarphiPhi<'a> {
    phi: &'a PhiProfile,
    /// Running minimum of φ over `[0, grid[i]]`.
    mins: Vec<f64>,
}

impl<'a> VarphiPhi<'a> {
    pub fn new(phi: &'a PhiProfile) -> Self {
        let mut mins = phi.values.clone();
        for i in 1..mins.len() {
            mins[i] = mins[i].min(mins[i - 1]);
        }
        Self { phi, mins }
    }

    /// Running minimum at the table end.
    pub fn terminal_min(&self) -> f64 {
        *self.mins.last().unwrap()
    }

    /// Largest `r` for which `φ_φ(r)` stays inside the table.
    pub fn saturation(&self) -> f64 {
        1.0 / self.terminal_min()
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::InvalidInput(format!("φ_φ needs r > 0, got {r}")));
        }
        let level = 1.0 / r;
        if level > self.mins[0] {
            return Ok(0.0);
        }
        if level <= self.terminal_min() {
            return Err(Error::SaturatedAtGridEnd {
                what: "varphi_phi".into(),
                detail: format!(
                    "1/r = {level:e} is at or below the running minimum {:e} at S_max = {:e}",
                    self.terminal_min(),
                    self.phi.end()
                ),
            });
        }
        // mins[i] ≥ level > mins[i+1], so φ crosses the level inside
        // segment i, where the log-log interpolant is monotone
        let i = self.mins.partition_point(|m| *m >= level) - 1;
        let (mut lo, mut hi) = (self.phi.grid[i].ln(), self.phi.grid[i + 1].ln());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.phi.at(mid.exp()) >= level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo.exp())
    }

    /// `φ_φ` on `r_grid` as a nondecreasing table.
    pub fn table(&self, r_grid: &[f64]) -> Result<RateTable> {
        let values = r_grid.iter().map(|r| self.eval(*r)).collect::<Result<Vec<_>>>()?;
        RateTable::new(
            r_grid.to_vec(),
            values,
            Monotonicity::Nondecreasing,
            Extrapolation::Clamp,
        )
    }
}

/// `φ_φ(r)` for a single `r`.
pub fn varphi_phi(phi: &PhiProfile, r: f64) -> Result<f64> {
    VarphiPhi::new(phi).eval(r)
}

/// How `β_φ` turns `φ_φ(r)` into a tail probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSpec {
    /// `Some(R₀ + R)` for compactly supported ν: only μ contributes and the
    /// threshold is at least `R₀ + R`.
    pub compact_start: Option<f64>,
    /// Use `½ φ_φ(r)` as the threshold (default) rather than `φ_φ(r)`.
    pub half: bool,
}

impl BetaSpec {
    pub fn general() -> Self {
        Self {
            compact_start: None,
            half: true,
        }
    }

    pub fn compact(start: f64) -> Self {
        Self {
            compact_start: Some(start),
            half: true,
        }
    }

    pub fn threshold(&self, varphi: f64) -> f64 {
        if self.half {
            0.5 * varphi
        } else {
            varphi
        }
    }

    /// `β` as a function of `φ_φ(r)`.
    pub fn beta_at(&self, model: &ConvolutionModel, varphi: f64) -> Result<f64> {
        let t = self.threshold(varphi);
        match self.compact_start {
            Some(start) => model.measure_tail(Which::Mu, t.max(start)),
            None => Ok(model.measure_tail(Which::Mu, t)? + model.measure_tail(Which::Nu, t)?),
        }
    }
}

/// `β_φ(r)` for a single `r`.
pub fn beta_phi(model: &ConvolutionModel, phi: &PhiProfile, r: f64, spec: &BetaSpec) -> Result<f64> {
    spec.beta_at(model, varphi_phi(phi, r)?)
}

/// `β_φ` on the abscissae of a `φ_φ` table. Independent tail quadratures
/// can disagree in the last digits, so the running minimum is taken to keep
/// the table exactly nonincreasing.
pub fn beta_table(model: &ConvolutionModel, varphi: &RateTable, spec: &BetaSpec) -> Result<RateTable> {
    let mut values = varphi
        .values
        .par_iter()
        .map(|v| spec.beta_at(model, *v))
        .collect::<Result<Vec<_>>>()?;
    for i in 1..values.len() {
        values[i] = values[i].min(values[i - 1]);
    }
    RateTable::new(
        varphi.grid.clone(),
        values,
        Monotonicity::Nonincreasing,
        Extrapolation::PowerLaw,
    )
}

/// `α(s) = c0 · inf{r : β(r) ≤ s}` on `s_grid`.
pub fn alpha_from_beta(beta: &RateTable, c0: f64, s_grid: &[f64]) -> Result<RateTable> {
    if !(c0 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "the constant in α must be positive, got {c0}"
        )));
    }
    let values = s_grid
        .iter()
        .map(|s| beta.generalized_inverse(*s).map(|r| c0 * r))
        .collect::<Result<Vec<_>>>()?;
    RateTable::new(
        s_grid.to_vec(),
        values,
        Monotonicity::Nonincreasing,
        Extrapolation::PowerLaw,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid;
    use crate::lyapunov::DriftCase;
    use approx::assert_relative_eq;

    fn profile(f: impl Fn(f64) -> f64, lo: f64, hi: f64, per_decade: usize) -> PhiProfile {
        let g = grid::log_grid(lo, hi, per_decade);
        let v = g.iter().map(|s| f(*s)).collect();
        PhiProfile::new(DriftCase::A, g, v).unwrap()
    }

    #[test]
    fn inverse_square_closed_form() {
        let c = 3.0;
        let phi = profile(|s| c / (s * s), 1.0, 1e6, 50);
        let vp = VarphiPhi::new(&phi);
        for r in [1.0, 10.0, 1e5, 1e9] {
            assert_relative_eq!(vp.eval(r).unwrap(), (c * r).sqrt(), max_relative = 1e-12);
        }
        assert_eq!(vp.eval(0.1).unwrap(), 0.0);
        assert!(vp.eval(1e13).is_err());
    }

    #[test]
    fn power_closed_form() {
        let (c, p) = (0.8, 0.6);
        let phi = profile(|s| c * s.powf(2.0 * (p - 1.0)), 2.0, 1e5, 7);
        let vp = VarphiPhi::new(&phi);
        for r in [5.0, 50.0, 1e3, 1e4] {
            let expect = (c * r).powf(1.0 / (2.0 * (1.0 - p)));
            assert_relative_eq!(vp.eval(r).unwrap(), expect, max_relative = 1e-8);
        }
    }

    #[test]
    fn scale_equivariance() {
        let phi = profile(|s| 2.0 / (1.0 + s).powi(2), 1.0, 1e4, 40);
        let k = 7.5;
        let a = VarphiPhi::new(&phi);
        let scaled = phi.scaled(k);
        let b = VarphiPhi::new(&scaled);
        for r in grid::log_space(1.0, 1e6, 30) {
            assert_relative_eq!(b.eval(r).unwrap(), a.eval(k * r).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn constant_beta_inverse() {
        let beta = RateTable::new(
            vec![2.0, 4.0, 8.0],
            vec![0.3; 3],
            Monotonicity::Nonincreasing,
            Extrapolation::Clamp,
        )
        .unwrap();
        let alpha = alpha_from_beta(&beta, 5.0, &[0.3, 0.5, 0.9]).unwrap();
        assert!(alpha.values.iter().all(|a| *a == 10.0));
    }

    #[test]
    fn power_beta_inverse() {
        let (c, p, c0) = (2.0, 2.0, 3.0);
        let r = grid::log_grid(1.0, 1e8, 20);
        let b = r.iter().map(|r| c * r.powf(-p / 2.0)).collect();
        let beta = RateTable::new(r, b, Monotonicity::Nonincreasing, Extrapolation::PowerLaw).unwrap();
        let s = grid::log_grid(1e-6, 1e-2, 10);
        let alpha = alpha_from_beta(&beta, c0, &s).unwrap();
        for (s, a) in s.iter().zip(&alpha.values) {
            assert_relative_eq!(*a, c0 * (c / s).powf(2.0 / p), max_relative = 1e-10);
        }
    }
}
