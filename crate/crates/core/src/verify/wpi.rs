use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::{sample_convolution, SampleBatch};
use super::testfn::{Role, TestFunction};
use crate::error::{Error, Result};
use crate::rates::RateTable;

/// Normal quantile of a two-sided 95% interval.
pub const Z95: f64 = 1.96;
/// Holdout slacks above `WPI_Z` confidence half-widths count as violations.
pub const WPI_Z: f64 = 2.0;

/// Monte Carlo moments of one test function under μ∗ν.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionStats {
    pub id: String,
    pub role: Role,
    pub osc: f64,
    pub mean: f64,
    /// `mean((f − m)²)`.
    pub variance: f64,
    pub variance_ci: f64,
    /// `mean(|∇f|²)`.
    pub energy: f64,
    pub energy_ci: f64,
    /// Per-sample variances and covariance of `A = (f − m)²` and `B = |∇f|²`.
    var_a: f64,
    var_b: f64,
    cov_ab: f64,
}

impl FunctionStats {
    fn compute(f: &TestFunction, batch: &SampleBatch) -> Self {
        let n = batch.size as f64;
        let mean = batch.iter().map(|x| f.value(x)).sum::<f64>() / n;
        let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for x in batch.iter() {
            let a = (f.value(x) - mean).powi(2);
            let b = f.grad_sq(x);
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
        let (ma, mb) = (sa / n, sb / n);
        let var_a = (saa / n - ma * ma).max(0.0);
        let var_b = (sbb / n - mb * mb).max(0.0);
        Self {
            id: f.id.clone(),
            role: f.role,
            osc: f.osc_bound,
            mean,
            variance: ma,
            variance_ci: Z95 * (var_a / n).sqrt(),
            energy: mb,
            energy_ci: Z95 * (var_b / n).sqrt(),
            var_a,
            var_b,
            cov_ab: sab / n - ma * mb,
        }
    }

    /// `(Var − k·E − r·Osc², CI half-width)` with `k = c·α̃(r)`.
    pub fn slack(&self, k: f64, r: f64, n: usize) -> (f64, f64) {
        let slack = self.variance - k * self.energy - r * self.osc * self.osc;
        let v = (self.var_a + k * k * self.var_b - 2.0 * k * self.cov_ab).max(0.0);
        (slack, Z95 * (v / n as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackRow {
    pub id: String,
    pub r: f64,
    pub alpha: f64,
    pub slack: f64,
    pub ci_halfwidth: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WpiReport {
    pub seed: u64,
    pub n: usize,
    /// Calibrated constant in front of the unit-constant α table.
    pub c: f64,
    /// Calibration `(id, r)` pair that fixed `c`.
    pub binding: Option<(String, f64)>,
    pub r_grid: Vec<f64>,
    pub functions: Vec<FunctionStats>,
    /// One row per holdout function and grid `r`.
    pub holdout: Vec<SlackRow>,
    pub holdout_violations: usize,
    /// Functions whose variance exceeds `¼Osc²` by more than the CI.
    pub variance_sanity_failures: Vec<String>,
}

/// Monte Carlo check of `Var(f) ≤ c·α̃(r)·E(f) + r·Osc²(f)` with `c`
/// calibrated on the calibration functions and tested on the holdout ones.
pub fn empirical_wpi(
    model: &crate::model::ConvolutionModel,
    alpha: &RateTable,
    corpus: &[TestFunction],
    r_grid: &[f64],
    seed: u64,
    n: usize,
) -> Result<WpiReport> {
    let batch = sample_convolution(model, seed, n)?;
    wpi_from_samples(&batch, alpha, corpus, r_grid)
}

/// [`empirical_wpi`] on a precomputed batch.
pub fn wpi_from_samples(
    batch: &SampleBatch,
    alpha: &RateTable,
    corpus: &[TestFunction],
    r_grid: &[f64],
) -> Result<WpiReport> {
    if !corpus.iter().any(|f| f.role == Role::Calibration) || !corpus.iter().any(|f| f.role == Role::Holdout) {
        return Err(Error::InvalidInput(
            "corpus needs both calibration and holdout functions".into(),
        ));
    }
    if r_grid.is_empty() {
        return Err(Error::InvalidInput("empty r grid".into()));
    }
    let n = batch.size;
    let functions: Vec<FunctionStats> = corpus.par_iter().map(|f| FunctionStats::compute(f, batch)).collect();
    let alphas: Vec<f64> = r_grid.iter().map(|r| alpha.value_at(*r)).collect();

    let mut c = 0.0f64;
    let mut binding = None;
    for fs in functions.iter().filter(|f| f.role == Role::Calibration) {
        for (r, a) in r_grid.iter().zip(&alphas) {
            let excess = fs.variance - r * fs.osc * fs.osc;
            let ae = a * fs.energy;
            if ae > 0.0 {
                if excess / ae > c {
                    c = excess / ae;
                    binding = Some((fs.id.clone(), *r));
                }
            } else if excess > WPI_Z * fs.slack(0.0, *r, n).1 {
                return Err(Error::CalibrationFailed(format!(
                    "{} has no Dirichlet energy but Var − r·Osc² = {excess:e} at r = {r:e}",
                    fs.id
                )));
            }
        }
    }

    let mut holdout = Vec::new();
    for fs in functions.iter().filter(|f| f.role == Role::Holdout) {
        for (r, a) in r_grid.iter().zip(&alphas) {
            let (slack, ci) = fs.slack(c * a, *r, n);
            holdout.push(SlackRow {
                id: fs.id.clone(),
                r: *r,
                alpha: *a,
                slack,
                ci_halfwidth: ci,
                violated: slack > WPI_Z * ci,
            });
        }
    }
    let variance_sanity_failures = functions
        .iter()
        .filter(|f| f.variance > 0.25 * f.osc * f.osc + f.variance_ci)
        .map(|f| f.id.clone())
        .collect();
    Ok(WpiReport {
        seed: batch.seed,
        n,
        c,
        binding,
        r_grid: r_grid.to_vec(),
        holdout_violations: holdout.iter().filter(|h| h.violated).count(),
        functions,
        holdout,
        variance_sanity_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConvolutionModel, Potential, Profile, SourceMeasure};
    use crate::quad::QuadratureSpec;
    use crate::rates::{Extrapolation, Monotonicity};
    use crate::verify::testfn::Shape;

    fn gaussian() -> ConvolutionModel {
        ConvolutionModel::new(
            Potential::new(Profile::Quadratic { a: 1.0 }, 1).unwrap(),
            SourceMeasure::point_mass(1),
            QuadratureSpec::default(),
        )
        .unwrap()
    }

    #[test]
    fn gaussian_poincare_holds_with_constant_alpha() {
        // e^{-x²} satisfies a Poincaré inequality with constant ½, so α ≡ 1
        // calibrates to c ≤ ½ and holdouts pass
        let alpha = RateTable::new(
            vec![1e-4, 0.25],
            vec![1.0, 1.0],
            Monotonicity::Nonincreasing,
            Extrapolation::Clamp,
        )
        .unwrap();
        let corpus = vec![
            TestFunction::new("ramp", Shape::Ramp { a: 0.0, w: 1.0 }, Role::Calibration),
            TestFunction::new("bump", Shape::Bump { a: 0.5, w: 0.7 }, Role::Calibration),
            TestFunction::new("flat", Shape::Constant { c: 3.0 }, Role::Holdout),
            TestFunction::new("window", Shape::Window { a: 0.2, h: 1.0, w: 0.5 }, Role::Holdout),
        ];
        let r = [1e-4, 1e-3, 1e-2, 0.1, 0.25];
        let rep = empirical_wpi(&gaussian(), &alpha, &corpus, &r, 5, 200_000).unwrap();
        assert!(rep.c > 0.0 && rep.c <= 0.5 + 0.02, "c = {}", rep.c);
        assert_eq!(rep.holdout_violations, 0);
        let flat = rep.functions.iter().find(|f| f.id == "flat").unwrap();
        assert_eq!((flat.variance, flat.energy), (0.0, 0.0));
        assert!(rep.variance_sanity_failures.is_empty());
    }

    #[test]
    fn energyless_calibration_fails() {
        let alpha = RateTable::new(
            vec![1e-4, 0.25],
            vec![0.0, 0.0],
            Monotonicity::Nonincreasing,
            Extrapolation::Clamp,
        )
        .unwrap();
        let corpus = vec![
            TestFunction::new("ramp", Shape::Ramp { a: 0.0, w: 1.0 }, Role::Calibration),
            TestFunction::new("bump", Shape::Bump { a: 0.0, w: 1.0 }, Role::Holdout),
        ];
        let err = empirical_wpi(&gaussian(), &alpha, &corpus, &[1e-4], 1, 10_000).unwrap_err();
        assert!(matches!(err, Error::CalibrationFailed(_)));
    }
}
