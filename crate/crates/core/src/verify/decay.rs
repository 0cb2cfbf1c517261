use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::{sample_convolution, task_rng, SampleBatch, SampleMethod};
use super::testfn::TestFunction;
use super::wpi::Z95;
use crate::error::{Error, Result};
use crate::model::ConvolutionModel;

/// Half-width of the uniform part of the drift table.
const TABLE_BULK: f64 = 50.0;
const TABLE_STEP: f64 = 1e-3;
/// Log-spaced table points per decade beyond the bulk.
const TABLE_PER_DECADE: f64 = 2000.0;
/// The log-spaced table stops here; farther points use direct quadrature.
const TABLE_MAX: f64 = 1e8;
/// Radius of the quartic patch used when `V` has a kink at the origin and
/// ν is a point mass.
const PATCH_EPS: f64 = 0.1;
/// Stream offset separating path noise from the initial draws.
const PATH_STREAM: u64 = 1 << 32;
/// Burn-in time of the Langevin sampler.
const LANGEVIN_BURN_IN: f64 = 20.0;
const LANGEVIN_DT: f64 = 1e-3;

/// `∇V_ν` on the line: uniform table on the bulk, log-spaced tables on
/// both tails, direct evaluation beyond.
#[derive(Debug, Clone)]
pub struct DriftTable {
    model: ConvolutionModel,
    bulk: Vec<f64>,
    tail_pos: Vec<f64>,
    tail_neg: Vec<f64>,
    tail_end: f64,
    /// `|x|` beyond which a path counts as exploded.
    pub limit: f64,
}

fn interp(t: &[f64], u: f64) -> f64 {
    let i = (u.floor() as usize).min(t.len() - 2);
    let w = u - i as f64;
    t[i] + w * (t[i + 1] - t[i])
}

impl DriftTable {
    pub fn new(model: &ConvolutionModel) -> Result<Self> {
        if model.dim() != 1 {
            return Err(Error::UnsupportedDimension {
                dimension: model.dim(),
                reason: "path simulation uses a tabulated one-dimensional drift".into(),
            });
        }
        let model = if !model.potential().smooth_at_origin() && model.source().point_mass_location().is_some() {
            model.with_potential(model.potential().patched(PATCH_EPS)?)?
        } else {
            model.clone()
        };
        let limit = 10.0 * TABLE_BULK.max(model.truncation_radius());
        let tail_end = limit.clamp(10.0 * TABLE_BULK, TABLE_MAX);
        let g = |x: f64| model.grad_v_nu(&[x]).map(|v| v[0]);
        let steps = (2.0 * TABLE_BULK / TABLE_STEP).round() as usize;
        let bulk = (0..=steps)
            .into_par_iter()
            .map(|i| g(-TABLE_BULK + i as f64 * TABLE_STEP))
            .collect::<Result<Vec<_>>>()?;
        let m = ((tail_end / TABLE_BULK).log10() * TABLE_PER_DECADE).ceil() as usize;
        let radius = |k: usize| TABLE_BULK * 10f64.powf(k as f64 / TABLE_PER_DECADE);
        let tail_pos = (0..=m)
            .into_par_iter()
            .map(|k| g(radius(k)))
            .collect::<Result<Vec<_>>>()?;
        let tail_neg = (0..=m)
            .into_par_iter()
            .map(|k| g(-radius(k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tail_end: radius(m),
            model,
            bulk,
            tail_pos,
            tail_neg,
            limit,
        })
    }

    /// The model whose drift is tabulated (patched when needed).
    pub fn model(&self) -> &ConvolutionModel {
        &self.model
    }

    pub fn grad(&self, x: f64) -> f64 {
        let a = x.abs();
        if a < TABLE_BULK {
            return interp(&self.bulk, (x + TABLE_BULK) / TABLE_STEP);
        }
        if a < self.tail_end {
            let u = (a / TABLE_BULK).log10() * TABLE_PER_DECADE;
            return interp(if x > 0.0 { &self.tail_pos } else { &self.tail_neg }, u);
        }
        self.model.grad_v_nu(&[x]).map_or(0.0, |v| v[0])
    }

    /// One Euler–Maruyama step of `dX = −∇V_ν dt + √2 dW`.
    #[inline]
    fn step<R: Rng>(&self, x: f64, dt: f64, rng: &mut R) -> Result<f64> {
        let xi: f64 = rng.sample(StandardNormal);
        let y = x - self.grad(x) * dt + (2.0 * dt).sqrt() * xi;
        if y.abs() > self.limit || !y.is_finite() {
            return Err(Error::StepSizeTooLarge { limit: self.limit });
        }
        Ok(y)
    }
}

/// Settings of one nested-paths decay run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayPlan {
    /// Recording times, strictly increasing and non-negative.
    pub t_grid: Vec<f64>,
    /// Number of starting points drawn from μ∗ν.
    pub n_paths: usize,
    /// Inner paths per starting point.
    pub inner: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for DecayPlan {
    fn default() -> Self {
        Self {
            t_grid: (0..=20).map(|k| 0.5 * k as f64).collect(),
            n_paths: 256,
            inner: 256,
            dt: 1e-3,
            seed: 17,
        }
    }
}

impl DecayPlan {
    pub fn validate(&self) -> Result<()> {
        if self.t_grid.is_empty() || self.t_grid[0] < 0.0 || self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "decay times must be non-negative and strictly increasing".into(),
            ));
        }
        if self.n_paths < 2 || self.inner < 2 || !(self.dt > 0.0) {
            return Err(Error::InvalidInput(
                "decay needs ≥ 2 starts, ≥ 2 inner paths and dt > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Estimates of `‖P_t f − (μ∗ν)(f)‖²` over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTrace {
    pub function: String,
    pub times: Vec<f64>,
    pub variance_estimates: Vec<f64>,
    pub confidence_halfwidths: Vec<f64>,
}

impl DecayTrace {
    /// Largest `v_{k+1} − v_k` in units of the combined half-width.
    pub fn worst_increase(&self) -> f64 {
        let (v, c) = (&self.variance_estimates, &self.confidence_halfwidths);
        (1..v.len())
            .map(|k| {
                let ci = c[k - 1].hypot(c[k]);
                if ci > 0.0 {
                    (v[k] - v[k - 1]) / ci
                } else if v[k] > v[k - 1] {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Consecutive increases stay within `z` combined half-widths.
    pub fn is_nonincreasing(&self, z: f64) -> bool {
        self.worst_increase() <= z
    }

    /// `v(T) / v(0)`.
    pub fn final_ratio(&self) -> f64 {
        self.variance_estimates[self.variance_estimates.len() - 1] / self.variance_estimates[0]
    }

    /// CSV with columns `t, variance, ci_halfwidth`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["t", "variance", "ci_halfwidth"]).map_err(io)?;
        for ((t, v), c) in self
            .times
            .iter()
            .zip(&self.variance_estimates)
            .zip(&self.confidence_halfwidths)
        {
            w.write_record([format!("{t:.17e}"), format!("{v:.17e}"), format!("{c:.17e}")])
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Nested-paths estimate of `Var_{μ∗ν}(P_t f)`: for each start `X₀ ~ μ∗ν`
/// the inner paths give `ĝ = mean f(X_t)` and its sample variance `s²`;
/// the between-start variance of `ĝ` minus `mean(s²)/M` is unbiased.
pub fn semigroup_decay(model: &ConvolutionModel, f: &TestFunction, plan: &DecayPlan) -> Result<DecayTrace> {
    plan.validate()?;
    let table = DriftTable::new(model)?;
    let starts = sample_convolution(table.model(), plan.seed, plan.n_paths)?;
    decay_with(&table, &starts, f, plan)
}

/// [`semigroup_decay`] with a prebuilt drift table and starting points.
pub fn decay_with(table: &DriftTable, starts: &SampleBatch, f: &TestFunction, plan: &DecayPlan) -> Result<DecayTrace> {
    plan.validate()?;
    let marks: Vec<usize> = plan.t_grid.iter().map(|t| (t / plan.dt).round() as usize).collect();
    let m = plan.inner as f64;
    // per start: (ĝ, s²) at each recorded time
    let per_start = (0..plan.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(plan.seed, PATH_STREAM + i as u64);
            let mut xs = vec![starts.point(i)[0]; plan.inner];
            let mut out = Vec::with_capacity(marks.len());
            let mut step = 0;
            for &mark in &marks {
                for x in xs.iter_mut() {
                    for _ in step..mark {
                        *x = table.step(*x, plan.dt, &mut rng)?;
                    }
                }
                step = mark;
                let vals: Vec<f64> = xs.iter().map(|x| f.value(&[*x])).collect();
                let mean = vals.iter().sum::<f64>() / m;
                let s2 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
                out.push((mean, s2));
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<(f64, f64)>>>>()?;

    let n = plan.n_paths as f64;
    let mut variance_estimates = Vec::with_capacity(marks.len());
    let mut confidence_halfwidths = Vec::with_capacity(marks.len());
    for k in 0..marks.len() {
        let gbar = per_start.iter().map(|p| p[k].0).sum::<f64>() / n;
        let q: Vec<f64> = per_start
            .iter()
            .map(|p| (p[k].0 - gbar).powi(2) * n / (n - 1.0) - p[k].1 / m)
            .collect();
        let mean = q.iter().sum::<f64>() / n;
        let var = q.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        variance_estimates.push(mean);
        confidence_halfwidths.push(Z95 * (var / n).sqrt());
    }
    Ok(DecayTrace {
        function: f.id.clone(),
        times: plan.t_grid.clone(),
        variance_estimates,
        confidence_halfwidths,
    })
}

/// Approximate draws from μ∗ν by running the Langevin diffusion from draws
/// of ν for a fixed burn-in time (d = 1).
pub fn langevin_samples(model: &ConvolutionModel, seed: u64, n: usize) -> Result<SampleBatch> {
    let table = DriftTable::new(model)?;
    let steps = (LANGEVIN_BURN_IN / LANGEVIN_DT).round() as usize;
    let points = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, i as u64);
            let mut z = [0.0];
            table.model().source().sample_into(&mut rng, &mut z);
            let mut x = z[0];
            for _ in 0..steps {
                x = table.step(x, LANGEVIN_DT, &mut rng)?;
            }
            Ok(x)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SampleBatch {
        seed,
        size: n,
        dim: 1,
        method: SampleMethod::PatchedLangevin,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Potential, Profile, SourceMeasure};
    use crate::quad::QuadratureSpec;
    use crate::verify::testfn::{Role, Shape};

    fn gaussian() -> ConvolutionModel {
        ConvolutionModel::new(
            Potential::new(Profile::Quadratic { a: 1.0 }, 1).unwrap(),
            SourceMeasure::point_mass(1),
            QuadratureSpec::default(),
        )
        .unwrap()
    }

    fn short_plan() -> DecayPlan {
        DecayPlan {
            t_grid: vec![0.0, 0.5, 1.0, 2.0],
            n_paths: 64,
            inner: 32,
            dt: 1e-3,
            seed: 9,
        }
    }

    #[test]
    fn table_matches_direct_drift() {
        let m = gaussian();
        let t = DriftTable::new(&m).unwrap();
        for x in [-49.9, -3.21, 0.0, 0.4567, 12.0, 75.0, 1e3] {
            assert!((t.grad(x) - 2.0 * x).abs() < 1e-6 * x.abs().max(1.0), "{x}");
        }
    }

    #[test]
    fn constant_function_has_no_variance() {
        let f = TestFunction::new("flat", Shape::Constant { c: 1.0 }, Role::Holdout);
        let tr = semigroup_decay(&gaussian(), &f, &short_plan()).unwrap();
        assert!(tr.variance_estimates.iter().all(|v| *v == 0.0));
        assert!(tr.confidence_halfwidths.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn ornstein_uhlenbeck_linear_decay() {
        // for V = x², P_t x = x e^{-2t}, so Var(P_t x) = ½ e^{-4t}; tanh with a
        // wide window is nearly linear on the bulk
        let f = TestFunction::new("ramp", Shape::Ramp { a: 0.0, w: 20.0 }, Role::Holdout);
        let plan = DecayPlan {
            n_paths: 400,
            ..short_plan()
        };
        let tr = semigroup_decay(&gaussian(), &f, &plan).unwrap();
        let v0 = tr.variance_estimates[0];
        for (t, (v, c)) in tr
            .times
            .iter()
            .zip(tr.variance_estimates.iter().zip(&tr.confidence_halfwidths))
        {
            let exact = v0 * (-4.0 * t).exp();
            assert!((v - exact).abs() < 2.0 * c + 0.05 * v0, "t = {t}: {v} vs {exact} ± {c}");
        }
        assert!(tr.is_nonincreasing(2.0));
    }

    #[test]
    fn reproducible() {
        let f = TestFunction::new("ramp", Shape::Ramp { a: 0.3, w: 1.0 }, Role::Holdout);
        let a = semigroup_decay(&gaussian(), &f, &short_plan()).unwrap();
        let b = semigroup_decay(&gaussian(), &f, &short_plan()).unwrap();
        assert_eq!(a, b);
    }
}
