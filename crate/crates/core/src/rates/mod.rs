//! From a Lyapunov rate φ to the weak Poincaré rate α: `φ_φ`, `β_φ`, the
//! monotone inverse, asymptotic fits, and the σ/stability comparisons.

pub mod compare;
pub mod fit;
pub mod table;
pub mod varphi;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid;
use crate::lyapunov::{DriftConfig, LyapunovData};
use crate::model::{ConvolutionModel, Which};

pub use compare::{
    compare_psi_perturbation, compare_sigma, compare_stability, comparison_points, density_bounds, DensityBounds,
    RatioReport, StabilityReport,
};
pub use fit::{fit_asymptotics, fit_family, linear_fit, AsymptoticFit, Family, FitReport, LinearFit};
pub use table::{Extrapolation, Monotonicity, RateTable};
pub use varphi::{alpha_from_beta, beta_phi, beta_table, varphi_phi, BetaSpec, VarphiPhi};

/// Grids and windows for one rate computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatePlan {
    /// Smallest `s` at which α is evaluated.
    pub s_min: f64,
    /// Largest `s` at which α is evaluated.
    pub s_max: f64,
    /// Points per decade of the `r` and `s` grids.
    pub per_decade: usize,
    /// Points per decade of the radial φ table.
    pub phi_per_decade: usize,
    /// Threshold `½ φ_φ(r)` in `β_φ`; `false` uses `φ_φ(r)`.
    pub half_factor: bool,
}

impl Default for RatePlan {
    fn default() -> Self {
        Self {
            s_min: 1e-6,
            s_max: 1e-2,
            per_decade: 200,
            phi_per_decade: 400,
            half_factor: true,
        }
    }
}

impl RatePlan {
    pub fn window(s_min: f64, s_max: f64) -> Self {
        Self {
            s_min,
            s_max,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_min > 0.0 && self.s_max > self.s_min && self.s_max < 1.0) {
            return Err(Error::InvalidInput(format!(
                "s window must satisfy 0 < s_min < s_max < 1, got [{}, {}]",
                self.s_min, self.s_max
            )));
        }
        if self.per_decade < 2 || self.phi_per_decade < 2 {
            return Err(Error::InvalidInput("grids need ≥ 2 points per decade".into()));
        }
        Ok(())
    }

    pub fn s_grid(&self) -> Vec<f64> {
        grid::log_grid(self.s_min, self.s_max, self.per_decade)
    }

    pub fn beta_spec(&self, model: &ConvolutionModel, cfg: &DriftConfig) -> BetaSpec {
        BetaSpec {
            compact_start: cfg.case.is_compact().then(|| cfg.start(model)),
            half: self.half_factor,
        }
    }
}

/// Everything computed on the way from φ to α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub plan: RatePlan,
    /// Outer radius `S_max` of the φ table.
    pub spatial_extent: f64,
    pub data: LyapunovData,
    pub beta_spec: BetaSpec,
    /// `r ↦ φ_φ(r)`.
    pub varphi: RateTable,
    /// `r ↦ β_φ(r)`.
    pub beta: RateTable,
    /// `s ↦ inf{r : β_φ(r) ≤ s}`, i.e. α with constant 1.
    pub inverse: RateTable,
}

impl RateResult {
    /// `α = c · β_φ^{-1}` on the s-grid.
    pub fn alpha(&self, c: f64) -> RateTable {
        self.inverse.scaled(c)
    }
}

/// Smallest `S = 2^k · start` with `β`'s tail at `½S` below `s_min / 4`.
pub fn spatial_extent(model: &ConvolutionModel, spec: &BetaSpec, start: f64, s_min: f64) -> Result<f64> {
    let tail = |t: f64| -> Result<f64> {
        let mu = model.measure_tail(Which::Mu, t)?;
        Ok(match spec.compact_start {
            Some(_) => mu,
            None => mu + model.measure_tail(Which::Nu, t)?,
        })
    };
    let mut s = 2.0 * start;
    for _ in 0..1000 {
        if tail(spec.threshold(s))? <= 0.25 * s_min {
            return Ok(s);
        }
        s *= 2.0;
    }
    Err(Error::SaturatedAtGridEnd {
        what: "spatial extent".into(),
        detail: format!("tails stay above {:e} up to radius {s:e}", 0.25 * s_min),
    })
}

/// `φ_φ`, `β_φ` and `β_φ^{-1}` from precomputed drift data whose φ table
/// covers the needed radii.
pub fn rates_from_data(model: &ConvolutionModel, data: LyapunovData, plan: &RatePlan) -> Result<RateResult> {
    plan.validate()?;
    let spec = plan.beta_spec(model, &data.config);
    let vp = VarphiPhi::new(&data.phi);
    let r_min = 0.5 / data.phi.values[0];
    let r_max = vp.saturation() * (1.0 - 1e-9);
    if !(r_max > r_min) {
        return Err(Error::SaturatedAtGridEnd {
            what: "varphi_phi".into(),
            detail: "φ never drops below φ(start); the rate function is bounded".into(),
        });
    }
    let r_grid = grid::log_grid(r_min, r_max, plan.per_decade);
    let varphi = vp.table(&r_grid)?;
    let beta = beta_table(model, &varphi, &spec)?;
    let inverse = alpha_from_beta(&beta, 1.0, &plan.s_grid()).map_err(|e| match e {
        Error::SaturatedAtGridEnd { detail, .. } => Error::SaturatedAtGridEnd {
            what: "beta_phi".into(),
            detail: format!("{detail}; φ flattens before the tails reach s_min"),
        },
        e => e,
    })?;
    Ok(RateResult {
        plan: *plan,
        spatial_extent: data.phi.end(),
        data,
        beta_spec: spec,
        varphi,
        beta,
        inverse,
    })
}

/// The φ radii for a plan: log-spaced from the drift start to the spatial
/// extent.
pub fn phi_radii(model: &ConvolutionModel, cfg: &DriftConfig, plan: &RatePlan) -> Result<Vec<f64>> {
    let start = cfg.start(model);
    let extent = spatial_extent(model, &plan.beta_spec(model, cfg), start, plan.s_min)?;
    Ok(grid::log_grid(start, extent, plan.phi_per_decade))
}

/// The full rate pipeline for one drift configuration.
pub fn compute_rates(model: &ConvolutionModel, cfg: &DriftConfig, plan: &RatePlan) -> Result<RateResult> {
    plan.validate()?;
    let radii = phi_radii(model, cfg, plan)?;
    let data = LyapunovData::compute(model, cfg, &radii)?;
    rates_from_data(model, data, plan)
}
