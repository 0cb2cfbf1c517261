use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid;
use crate::model::{ConvolutionModel, Potential};

const CHUNK: usize = 8192;
const MIN_ACCEPTANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMethod {
    InverseCdf,
    Rejection,
    PatchedLangevin,
}

/// Draws from μ∗ν stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub seed: u64,
    pub size: usize,
    pub dim: usize,
    pub method: SampleMethod,
    pub points: Vec<f64>,
}

impl SampleBatch {
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }
}

/// Generator for task `stream` of a seeded computation.
pub(crate) fn task_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Inverse of the radial tail `t ↦ μ(|x| ≥ t)`, tabulated in log space.
#[derive(Debug, Clone)]
pub struct RadialInverse {
    radii: Vec<f64>,
    log_tails: Vec<f64>,
}

impl RadialInverse {
    pub fn new(potential: &Potential) -> Self {
        // out to where the tail drops below 1e-14, or as far as f64 reaches
        let mut hi = 1.0;
        while hi < 1e300 && potential.log_tail(hi) > -14.0 * std::f64::consts::LN_10 {
            hi *= 4.0;
        }
        let mut radii = vec![0.0];
        radii.extend(grid::log_grid(1e-6, hi, 100));
        let log_tails: Vec<f64> = radii.par_iter().map(|t| potential.log_tail(*t)).collect();
        let mut out = Self { radii, log_tails };
        for i in 1..out.log_tails.len() {
            out.log_tails[i] = out.log_tails[i].min(out.log_tails[i - 1]);
        }
        out
    }

    /// Radius `t` with `μ(|x| ≥ t) = u`.
    pub fn radius(&self, u: f64) -> f64 {
        let q = u.ln();
        let lt = &self.log_tails;
        let j = lt.partition_point(|v| *v >= q);
        if j == 0 {
            return 0.0;
        }
        if j >= lt.len() {
            return *self.radii.last().unwrap();
        }
        let (t0, t1) = (self.radii[j - 1], self.radii[j]);
        if lt[j - 1] == lt[j] {
            return t0;
        }
        if t0 == 0.0 {
            // 1 − tail is ∝ t^d near the origin; linear in the tail is enough
            // on the first micro-segment
            let (a, b) = (lt[j - 1].exp(), lt[j].exp());
            return t1 * (a - u) / (a - b);
        }
        let w = (q - lt[j - 1]) / (lt[j] - lt[j - 1]);
        (t0.ln() + w * (t1 / t0).ln()).exp()
    }
}

pub(crate) fn random_direction<R: Rng>(rng: &mut R, out: &mut [f64]) {
    if out.len() == 1 {
        out[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        return;
    }
    loop {
        let mut n2 = 0.0;
        for o in out.iter_mut() {
            *o = StandardNormal.sample(rng);
            n2 += *o * *o;
        }
        if n2 > 1e-300 {
            let n = n2.sqrt();
            out.iter_mut().for_each(|o| *o /= n);
            return;
        }
    }
}

/// Log-logistic radial proposal for rejection sampling of `s^{d-1}e^{-v(s)}`.
#[derive(Debug, Clone)]
struct RadialRejection {
    k: f64,
    scale: f64,
    /// `ln sup f/q`.
    log_m: f64,
}

impl RadialRejection {
    fn log_target(potential: &Potential, s: f64) -> f64 {
        (potential.dim() as f64 - 1.0) * s.ln() - potential.radial(s)
    }

    fn log_proposal(&self, s: f64) -> f64 {
        let z = s / self.scale;
        (self.k / self.scale).ln() + (self.k - 1.0) * z.ln() - 2.0 * (z.powf(self.k)).ln_1p()
    }

    fn new(potential: &Potential, inv: &RadialInverse) -> Result<Self> {
        let d = potential.dim() as f64;
        let scale = inv.radius(0.5).max(1e-3);
        // tail exponent of the target radial density far out
        let (a, b) = (1e3 * scale, 1e4 * scale);
        let slope = (Self::log_target(potential, b) - Self::log_target(potential, a)) / (b / a).ln();
        // target density ~ s^{slope}; the proposal decays like s^{-k-1}
        let k = (0.9 * (-slope - 1.0)).clamp(0.05, d.max(2.0));
        if -slope - 1.0 <= k {
            return Err(Error::SamplerMisconfigured(
                "radial rejection envelope is unbounded: the target tail is heavier than the proposal".into(),
            ));
        }
        let mut r = Self { k, scale, log_m: 0.0 };
        let probe = grid::log_grid(1e-6 * scale, 1e8 * scale, 50);
        let ratios: Vec<f64> = probe
            .iter()
            .map(|s| Self::log_target(potential, *s) - r.log_proposal(*s))
            .collect();
        let (imax, lmax) =
            ratios.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc },
            );
        if imax + 1 == probe.len() {
            return Err(Error::SamplerMisconfigured(
                "radial rejection envelope is unbounded: the target tail is heavier than the proposal".into(),
            ));
        }
        // the normalised target has total mass exp(log_norm) / |S^{d-1}|
        let log_mass = potential.normalization_constant() - crate::model::sphere_area(potential.dim()).ln();
        r.log_m = lmax + 0.05;
        let acceptance = (log_mass - r.log_m).exp();
        if acceptance < MIN_ACCEPTANCE {
            return Err(Error::SamplerMisconfigured(format!(
                "rejection acceptance rate {acceptance:.2e} below {MIN_ACCEPTANCE}"
            )));
        }
        Ok(r)
    }

    fn sample<R: Rng>(&self, potential: &Potential, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random();
            let s = self.scale * (u / (1.0 - u)).powf(1.0 / self.k);
            if !(s > 0.0 && s.is_finite()) {
                continue;
            }
            let log_acc = Self::log_target(potential, s) - self.log_proposal(s) - self.log_m;
            if rng.random::<f64>().ln() < log_acc {
                return s;
            }
        }
    }
}

/// Default method: inverse CDF in d = 1, rejection in d = 2.
pub fn default_method(dim: usize) -> Result<SampleMethod> {
    match dim {
        1 => Ok(SampleMethod::InverseCdf),
        2 => Ok(SampleMethod::Rejection),
        d => Err(Error::UnsupportedDimension {
            dimension: d,
            reason: "Monte Carlo verification covers d ≤ 2".into(),
        }),
    }
}

/// `n` i.i.d. draws of `X + Z`, `X ~ μ`, `Z ~ ν`, with the default method.
pub fn sample_convolution(model: &ConvolutionModel, seed: u64, n: usize) -> Result<SampleBatch> {
    sample_with(model, seed, n, default_method(model.dim())?)
}

/// As [`sample_convolution`] with an explicit method. Draws are generated in
/// fixed-size chunks with one generator stream per chunk, so the batch only
/// depends on `(seed, n, method)`.
pub fn sample_with(model: &ConvolutionModel, seed: u64, n: usize, method: SampleMethod) -> Result<SampleBatch> {
    let d = model.dim();
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    if method == SampleMethod::PatchedLangevin {
        return super::decay::langevin_samples(model, seed, n);
    }
    if d > 2 {
        return Err(Error::UnsupportedDimension {
            dimension: d,
            reason: "Monte Carlo verification covers d ≤ 2".into(),
        });
    }
    let pot = model.potential();
    if !pot.is_radial() {
        return Err(Error::SamplerMisconfigured("samplers need a radial potential".into()));
    }
    let inv = RadialInverse::new(pot);
    let rejection = match method {
        SampleMethod::Rejection => Some(RadialRejection::new(pot, &inv)?),
        _ => None,
    };
    let mut points = vec![0.0; n * d];
    points.par_chunks_mut(CHUNK * d).enumerate().for_each(|(c, chunk)| {
        let mut rng = task_rng(seed, c as u64);
        let mut z = vec![0.0; d];
        for p in chunk.chunks_exact_mut(d) {
            let s = match &rejection {
                Some(rj) => rj.sample(pot, &mut rng),
                None => inv.radius(1.0 - rng.random::<f64>()),
            };
            random_direction(&mut rng, p);
            model.source().sample_into(&mut rng, &mut z);
            for (x, zi) in p.iter_mut().zip(&z) {
                *x = *x * s + zi;
            }
        }
    });
    Ok(SampleBatch {
        seed,
        size: n,
        dim: d,
        method,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Profile, SourceMeasure, SourceSpec};
    use crate::quad::QuadratureSpec;

    fn model(profile: Profile, src: SourceSpec, d: usize) -> ConvolutionModel {
        ConvolutionModel::new(
            Potential::new(profile, d).unwrap(),
            SourceMeasure::new(src, d).unwrap(),
            QuadratureSpec::default(),
        )
        .unwrap()
    }

    #[test]
    fn reproducible() {
        let m = model(
            Profile::LogTail { coef: 3.0 },
            SourceSpec::Uniform { a: -1.0, b: 1.0 },
            1,
        );
        let a = sample_convolution(&m, 5, 20_000).unwrap();
        let b = sample_convolution(&m, 5, 20_000).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.points, sample_convolution(&m, 6, 20_000).unwrap().points);
    }

    #[test]
    fn gaussian_second_moment() {
        // e^{-x²}: E X² = 1/2
        let m = model(Profile::Quadratic { a: 1.0 }, SourceSpec::PointMass { at: None }, 1);
        let b = sample_convolution(&m, 1, 1_000_000).unwrap();
        let x2: Vec<f64> = b.points.iter().map(|x| x * x).collect();
        let mean = x2.iter().sum::<f64>() / x2.len() as f64;
        let var = x2.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x2.len() - 1) as f64;
        let se = (var / x2.len() as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn two_atoms_symmetric() {
        let src = SourceSpec::Atoms {
            points: vec![vec![-1.0], vec![1.0]],
            weights: vec![0.5, 0.5],
        };
        let m = model(Profile::Quadratic { a: 1.0 }, src, 1);
        let b = sample_convolution(&m, 9, 200_000).unwrap();
        let mean = b.points.iter().sum::<f64>() / b.size as f64;
        // Var(X + Z) = 1/2 + 1
        assert!(mean.abs() < 3.0 * (1.5 / b.size as f64).sqrt());
    }

    #[test]
    fn planar_rejection_radius() {
        // e^{-|x|²} in the plane: |X|² ~ Exp(1)
        let m = model(Profile::Quadratic { a: 1.0 }, SourceSpec::PointMass { at: None }, 2);
        let b = sample_convolution(&m, 3, 200_000).unwrap();
        assert_eq!(b.method, SampleMethod::Rejection);
        let r2: f64 = b.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>() / b.size as f64;
        assert!((r2 - 1.0).abs() < 3.0 / (b.size as f64).sqrt(), "{r2}");
    }

    #[test]
    fn heavy_tail_rejection_rejected() {
        // tail density ~ s^{-1.04}: no log-logistic envelope with k ≥ 0.05 works
        let m = model(Profile::LogTail { coef: 2.04 }, SourceSpec::PointMass { at: None }, 2);
        assert!(matches!(
            sample_with(&m, 1, 10, SampleMethod::Rejection),
            Err(Error::SamplerMisconfigured(_))
        ));
    }
}
