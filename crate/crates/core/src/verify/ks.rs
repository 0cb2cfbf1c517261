use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid;
use crate::model::{ConvolutionModel, SourceSpec};
use crate::quad;

/// 1% critical value of the one-sample KS statistic (large-n asymptotic).
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// `sup_x |F_n(x) − F(x)|` for sorted samples.
pub fn ks_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// CDF of μ∗ν on the line, from cumulative quadrature of the convolution
/// density `p_ν` on `[−T, T]` (cubic Hermite between knots) and from
/// `E_ν[F_μ(x − Z)]` outside.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvolutionCdf {
    knots: Vec<f64>,
    cdf: Vec<f64>,
    density: Vec<f64>,
    /// `(z, weight)` nodes of ν for the far-field formula.
    nu_nodes: Vec<(f64, f64)>,
    /// `(ln t, ln μ(|x| ≥ t))` on a log grid.
    mu_tails: (Vec<f64>, Vec<f64>),
}

fn nu_nodes(model: &ConvolutionModel) -> Result<Vec<(f64, f64)>> {
    let src = model.source();
    Ok(match src.spec() {
        SourceSpec::PointMass { at } => vec![(at.as_ref().map_or(0.0, |a| a[0]), 1.0)],
        SourceSpec::Atoms { points, weights } => {
            let total: f64 = weights.iter().sum();
            points.iter().zip(weights).map(|(p, w)| (p[0], w / total)).collect()
        }
        SourceSpec::Lattice { .. } => {
            let l = src.lattice().unwrap();
            let n = l.truncation() as i64;
            (-n..=n).map(|i| (i as f64, l.weight(i as f64))).collect()
        }
        SourceSpec::Uniform { .. } | SourceSpec::PowerTail { .. } => {
            let d = src.density().unwrap();
            let (a, b) = d.support();
            let (lo, hi) = (a.max(-1e6), b.min(1e6));
            let (x, w) = quad::gauss_legendre(32);
            let edges: Vec<f64> = if lo.is_finite() && hi - lo <= 2.0 {
                (0..=64).map(|i| lo + (hi - lo) * i as f64 / 64.0).collect()
            } else {
                let mut e: Vec<f64> = grid::log_grid(1e-3, hi, 40).iter().rev().map(|v| -v).collect();
                e.push(0.0);
                e.extend(grid::log_grid(1e-3, hi, 40));
                e
            };
            let mut nodes = Vec::new();
            for s in edges.windows(2) {
                let (m, h) = (0.5 * (s[0] + s[1]), 0.5 * (s[1] - s[0]));
                for (xi, wi) in x.iter().zip(&w) {
                    let z = m + h * xi;
                    nodes.push((z, h * wi * d.density(z)));
                }
            }
            nodes
        }
    })
}

impl ConvolutionCdf {
    pub fn new(model: &ConvolutionModel) -> Result<Self> {
        if model.dim() != 1 {
            return Err(Error::UnsupportedDimension {
                dimension: model.dim(),
                reason: "the quadrature CDF is one-dimensional".into(),
            });
        }
        let r = model.source().support_radius();
        let span = if r.is_finite() { r } else { 0.0 };
        let t = (1e3 + span).min(model.truncation_radius()).max(1.0 + span);
        let mut knots: Vec<f64> = Vec::new();
        let inner = (50.0 + span).min(0.5 * t);
        let steps = (2.0 * inner / 0.02).ceil() as usize;
        knots.extend((0..=steps).map(|i| -inner + 2.0 * inner * i as f64 / steps as f64));
        let outer = grid::log_grid(inner, t, 100);
        knots.extend(outer.iter().skip(1).map(|v| -v));
        knots.extend(outer.iter().skip(1));
        knots.sort_by(f64::total_cmp);
        knots.dedup();

        let pot = model.potential();
        let tail_grid: Vec<f64> = grid::log_grid(1e-6, 1e300, 20).iter().map(|s| s.ln()).collect();
        let tail_vals: Vec<f64> = tail_grid.par_iter().map(|l| pot.log_tail(l.exp())).collect();
        let mut out = Self {
            knots: Vec::new(),
            cdf: Vec::new(),
            density: Vec::new(),
            nu_nodes: nu_nodes(model)?,
            mu_tails: (tail_grid, tail_vals),
        };

        let density: Vec<f64> = knots
            .par_iter()
            .map(|x| model.p_nu(&[*x]))
            .collect::<Result<Vec<_>>>()?;
        let pieces: Vec<f64> = knots
            .par_windows(2)
            .map(|w| quad::integrate(|x| model.p_nu(&[x]).unwrap_or(0.0), w[0], w[1], 1e-12).value)
            .collect();
        let mut cdf = vec![out.far_field(knots[0])];
        for p in pieces {
            cdf.push(cdf.last().unwrap() + p);
        }
        out.knots = knots;
        out.cdf = cdf;
        out.density = density;
        Ok(out)
    }

    /// `μ(|x| ≥ t)` by interpolating the log-tail table.
    fn mu_tail(&self, t: f64) -> f64 {
        if t <= 1e-6 {
            return 1.0;
        }
        grid::lin_interp(&self.mu_tails.0, &self.mu_tails.1, t.ln())
            .min(0.0)
            .exp()
    }

    /// `E_ν[F_μ(x − Z)]` with `F_μ(y) = ½ μ(|x| ≥ −y)` for `y < 0`.
    fn far_field(&self, x: f64) -> f64 {
        self.nu_nodes
            .iter()
            .map(|(z, w)| {
                let y = x - z;
                w * if y < 0.0 {
                    0.5 * self.mu_tail(-y)
                } else {
                    1.0 - 0.5 * self.mu_tail(y)
                }
            })
            .sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x <= k[0] || x >= k[k.len() - 1] {
            return self.far_field(x);
        }
        let i = grid::segment(k, x);
        let h = k[i + 1] - k[i];
        let t = (x - k[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.cdf[i]
            + (t3 - 2.0 * t2 + t) * h * self.density[i]
            + (-2.0 * t3 + 3.0 * t2) * self.cdf[i + 1]
            + (t3 - t2) * h * self.density[i + 1]
    }

    /// Total mass seen by the cumulative quadrature (≈ 1).
    pub fn total(&self) -> f64 {
        self.cdf[self.cdf.len() - 1] + (1.0 - self.far_field(self.knots[self.knots.len() - 1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub n: usize,
    pub distance: f64,
    pub critical_1pct: f64,
    pub passed: bool,
}

/// KS comparison of one-dimensional samples with the quadrature CDF.
pub fn ks_against_model(model: &ConvolutionModel, samples: &[f64]) -> Result<KsReport> {
    let cdf = ConvolutionCdf::new(model)?;
    let mut s = samples.to_vec();
    s.par_sort_unstable_by(f64::total_cmp);
    let distance = ks_distance(&s, |x| cdf.cdf(x));
    let critical_1pct = ks_critical_1pct(s.len());
    Ok(KsReport {
        n: s.len(),
        distance,
        critical_1pct,
        passed: distance < critical_1pct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Potential, Profile, SourceMeasure};
    use crate::quad::QuadratureSpec;

    #[test]
    fn gaussian_cdf_matches_erf_free_oracle() {
        // e^{-x²} convolved with δ_0 has CDF ½(1 + erf x); check against a
        // direct quadrature of the Gaussian density instead of erf
        let m = ConvolutionModel::new(
            Potential::new(Profile::Quadratic { a: 1.0 }, 1).unwrap(),
            SourceMeasure::point_mass(1),
            QuadratureSpec::default(),
        )
        .unwrap();
        let c = ConvolutionCdf::new(&m).unwrap();
        for x in [-3.0f64, -0.7, 0.0, 0.25, 1.9] {
            let half = quad::integrate(|u| (-u * u).exp() / std::f64::consts::PI.sqrt(), 0.0, x.abs(), 1e-13).value;
            let direct = 0.5 + half.copysign(x);
            assert!((c.cdf(x) - direct).abs() < 1e-9, "{x}: {} vs {direct}", c.cdf(x));
        }
        assert!((c.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ks_distance_of_exact_quantiles_is_small() {
        let n = 1000;
        let s: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!((ks_distance(&s, |x| x.clamp(0.0, 1.0)) - 0.5 / n as f64).abs() < 1e-12);
    }
}
