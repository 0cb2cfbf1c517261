use serde::{Deserialize, Serialize};

use super::table::RateTable;
use crate::error::{Error, Result};

pub const CONCLUSIVE_R_SQUARED: f64 = 0.95;
const MIN_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `α(s) = C s^{−e}`.
    Power,
    /// `α(s) = C [1 + ln(1 + 1/s)]^{e}`.
    PolyLog,
    /// `α(s) = exp(C s^{−e})`.
    StretchedExp,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Power, Family::PolyLog, Family::StretchedExp];

    pub fn name(self) -> &'static str {
        match self {
            Family::Power => "power",
            Family::PolyLog => "poly_log",
            Family::StretchedExp => "stretched_exp",
        }
    }

    /// Regression coordinates `(x, y)` for one table row, `None` where the
    /// transform is undefined.
    fn coordinates(self, s: f64, alpha: f64) -> Option<(f64, f64)> {
        let inv = 1.0 / s;
        let pt = match self {
            Family::Power => (inv.ln(), alpha.ln()),
            Family::PolyLog => ((1.0 + inv.ln_1p()).ln(), alpha.ln()),
            Family::StretchedExp => (inv.ln(), alpha.ln().ln()),
        };
        (pt.0.is_finite() && pt.1.is_finite()).then_some(pt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares `y ≈ slope · x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return Err(Error::InvalidInput("linear fit needs ≥ 2 paired points".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidInput("linear fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFit {
    pub family: Family,
    pub exponent: f64,
    pub scale: f64,
    pub r_squared: f64,
    /// `(s_min, s_max)` of the rows used.
    pub fit_window: (f64, f64),
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub best: AsymptoticFit,
    pub candidates: Vec<AsymptoticFit>,
}

/// Fits one family to the rows of `alpha` inside `window`.
pub fn fit_family(alpha: &RateTable, family: Family, window: (f64, f64)) -> Result<AsymptoticFit> {
    let (s, a) = alpha.window(window.0, window.1);
    let (x, y): (Vec<f64>, Vec<f64>) = s.iter().zip(&a).filter_map(|(s, a)| family.coordinates(*s, *a)).unzip();
    if x.len() < MIN_POINTS || x.len() < s.len() {
        return Err(Error::InvalidInput(format!(
            "{} fit needs ≥ {MIN_POINTS} valid rows in [{:e}, {:e}], got {} of {}",
            family.name(),
            window.0,
            window.1,
            x.len(),
            s.len()
        )));
    }
    let lf = linear_fit(&x, &y)?;
    Ok(AsymptoticFit {
        family,
        exponent: lf.slope,
        scale: lf.intercept.exp(),
        r_squared: lf.r_squared,
        fit_window: (s[0], s[s.len() - 1]),
        points: lf.points,
    })
}

/// Fits every family in `families` and returns the one with the largest r².
/// Families whose transform is undefined on the window (`α ≤ 1` for the
/// stretched exponential) are skipped.
pub fn fit_asymptotics(alpha: &RateTable, families: &[Family], window: (f64, f64)) -> Result<FitReport> {
    let candidates: Vec<AsymptoticFit> = families
        .iter()
        .filter_map(|f| fit_family(alpha, *f, window).ok())
        .collect();
    let best = candidates
        .iter()
        .max_by(|a, b| a.r_squared.total_cmp(&b.r_squared))
        .cloned()
        .ok_or_else(|| Error::InvalidInput(format!("no family could be fitted on [{:e}, {:e}]", window.0, window.1)))?;
    if best.r_squared < CONCLUSIVE_R_SQUARED {
        return Err(Error::InconclusiveFit {
            best_family: best.family.name().into(),
            best_r_squared: best.r_squared,
        });
    }
    Ok(FitReport { best, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid;
    use crate::rates::table::{Extrapolation, Monotonicity};

    fn table(f: impl Fn(f64) -> f64) -> RateTable {
        let s = grid::log_grid(1e-6, 1e-2, 50);
        let a = s.iter().map(|s| f(*s)).collect();
        RateTable::new(s, a, Monotonicity::Nonincreasing, Extrapolation::PowerLaw).unwrap()
    }

    #[test]
    fn exact_power() {
        let r = fit_asymptotics(&table(|s| 7.0 * s.powi(-3)), &Family::ALL, (1e-6, 1e-2)).unwrap();
        assert_eq!(r.best.family, Family::Power);
        assert!((r.best.exponent - 3.0).abs() < 1e-6);
        assert!((r.best.scale - 7.0).abs() < 1e-6);
        assert!(r.best.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn exact_poly_log() {
        let t = table(|s| 2.0 * (1.0 + (1.0 / s).ln_1p()).powf(4.0 / 3.0));
        let r = fit_asymptotics(&t, &Family::ALL, (1e-6, 1e-2)).unwrap();
        assert_eq!(r.best.family, Family::PolyLog);
        assert!((r.best.exponent - 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn exact_stretched_exp() {
        let t = table(|s| (0.01 * s.powf(-0.5)).exp());
        let r = fit_family(&t, Family::StretchedExp, (1e-6, 1e-2)).unwrap();
        assert!((r.exponent - 0.5).abs() < 1e-9);
    }

    #[test]
    fn step_is_inconclusive() {
        let t = table(|s| if s < 1e-4 { 10.0 } else { 1.5 });
        let err = fit_asymptotics(&t, &[Family::Power, Family::PolyLog], (1e-6, 1e-2)).unwrap_err();
        assert!(matches!(err, Error::InconclusiveFit { .. }), "{err:?}");
    }
}
