use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::{random_direction, task_rng};
use crate::error::{Error, Result};
use crate::model::ConvolutionModel;

/// Richardson-extrapolated central difference with step `h` and `h/2`.
fn richardson(mut f: impl FnMut(f64) -> Result<f64>, h: f64) -> Result<f64> {
    let d1 = (f(h)? - f(-h)?) / (2.0 * h);
    let d2 = (f(0.5 * h)? - f(-0.5 * h)?) / h;
    Ok((4.0 * d2 - d1) / 3.0)
}

/// `∂_i F(x)` for each `i`, differencing along coordinate axes.
fn fd_gradient(f: &dyn Fn(&[f64]) -> Result<f64>, x: &[f64]) -> Result<Vec<f64>> {
    let h = FD_STEP;
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            richardson(
                |e| {
                    y[i] = x[i] + e;
                    let v = f(&y);
                    y[i] = x[i];
                    v
                },
                h,
            )
        })
        .collect()
}

/// Small against the lattice spacing of discrete ν and the curvature scale
/// of `V` at `|x| ≥ 1`.
const FD_STEP: f64 = 1e-2;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn relative(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let scale = norm(b);
    if scale > 0.0 {
        diff / scale
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub max_relative: f64,
    /// Point attaining the maximum.
    pub at: Vec<f64>,
}

impl Discrepancy {
    fn worst(items: impl Iterator<Item = (f64, Vec<f64>)>) -> Self {
        items.fold(
            Self {
                max_relative: 0.0,
                at: Vec::new(),
            },
            |acc, (r, x)| {
                if r > acc.max_relative || acc.at.is_empty() {
                    Self { max_relative: r, at: x }
                } else {
                    acc
                }
            },
        )
    }
}

/// Analytic derivatives against finite differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckReport {
    pub points: usize,
    /// `∇V_ν` against differences of `V_ν = −ln p_ν`.
    pub grad_v_nu: Discrepancy,
    /// `∇V` against differences of `V`.
    pub grad_v: Discrepancy,
    /// `ΔV` against differences of `∇V`.
    pub laplacian_v: Discrepancy,
}

impl CrosscheckReport {
    pub fn max_relative(&self) -> f64 {
        self.grad_v_nu
            .max_relative
            .max(self.grad_v.max_relative)
            .max(self.laplacian_v.max_relative)
    }
}

/// `n` seeded points with `|x|` log-uniform in `[lo, hi]` and uniform
/// direction.
pub fn crosscheck_points(dim: usize, seed: u64, n: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let mut rng = task_rng(seed, 0);
    (0..n)
        .map(|_| {
            let s = lo * (hi / lo).powf(rng.random::<f64>());
            let mut x = vec![0.0; dim];
            random_direction(&mut rng, &mut x);
            x.iter_mut().for_each(|v| *v *= s);
            x
        })
        .collect()
}

/// Maximum relative discrepancy of `∇V_ν`, `∇V` and `ΔV` against
/// Richardson-extrapolated central differences at `points`.
pub fn crosscheck_gradients(model: &ConvolutionModel, points: &[Vec<f64>]) -> Result<CrosscheckReport> {
    if points.iter().any(|p| p.len() != model.dim()) {
        return Err(Error::InvalidInput("crosscheck point of the wrong dimension".into()));
    }
    let pot = model.potential();
    let rows = points
        .par_iter()
        .map(|x| {
            let gn = model.grad_v_nu(x)?;
            let gn_fd = fd_gradient(&|y| model.v_nu(y), x)?;
            let mut g = vec![0.0; x.len()];
            pot.gradient(x, &mut g);
            let g_fd = fd_gradient(&|y| Ok(pot.value(y)), x)?;
            let mut y = x.clone();
            let mut tmp = vec![0.0; x.len()];
            let mut lap_fd = 0.0;
            for i in 0..x.len() {
                lap_fd += richardson(
                    |e| {
                        y[i] = x[i] + e;
                        pot.gradient(&y, &mut tmp);
                        y[i] = x[i];
                        Ok(tmp[i])
                    },
                    FD_STEP,
                )?;
            }
            Ok((
                relative(&gn, &gn_fd),
                relative(&g, &g_fd),
                relative(&[pot.laplacian(x)], &[lap_fd]),
            ))
        })
        .collect::<Result<Vec<(f64, f64, f64)>>>()?;
    let pick = |k: usize| Discrepancy::worst(rows.iter().zip(points).map(|(r, x)| ([r.0, r.1, r.2][k], x.clone())));
    Ok(CrosscheckReport {
        points: points.len(),
        grad_v_nu: pick(0),
        grad_v: pick(1),
        laplacian_v: pick(2),
    })
}
