//! One-dimensional quadrature: adaptive Gauss–Kronrod (7/15) with a global
//! error heap, vector-valued integrands, semi-infinite ranges by the
//! `x = a + (1 - t) / t` map, and fixed Gauss–Legendre panels.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Which rule backs the integrals over continuous source densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadRule {
    /// Adaptive Gauss–Kronrod 7/15; `nodes` caps the number of subintervals.
    AdaptiveKronrod,
    /// Composite Gauss–Legendre with `nodes` points per unit-length panel.
    CompositeLegendre,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rule: QuadRule,
    pub nodes: usize,
    pub tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rule: QuadRule::AdaptiveKronrod,
            nodes: 4000,
            tol: 1e-12,
        }
    }
}

impl QuadratureSpec {
    /// A spec with twice the resolution: twice the node budget and a 100×
    /// tighter tolerance.
    pub fn refined(&self) -> Self {
        Self {
            rule: self.rule,
            nodes: self.nodes * 2,
            tol: (self.tol * 1e-2).max(1e-15),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
    priority: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority)
    }
}

/// Applies the 15-point Kronrod rule on `[a, b]` to a `k`-component integrand.
/// Returns (kronrod value, error estimate, integral of |f|) per component.
fn kronrod_panel<F>(f: &mut F, a: f64, b: f64, k: usize, buf: &mut [f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>)
where
    F: FnMut(f64, &mut [f64]),
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut fv = vec![0.0; 15 * k];
    f(center, buf);
    fv[..k].copy_from_slice(&buf[..k]);
    for j in 0..7 {
        let dx = half * XGK[j];
        f(center - dx, buf);
        fv[(1 + 2 * j) * k..(2 + 2 * j) * k].copy_from_slice(&buf[..k]);
        f(center + dx, buf);
        fv[(2 + 2 * j) * k..(3 + 2 * j) * k].copy_from_slice(&buf[..k]);
    }
    let mut res_k = vec![0.0; k];
    let mut res_g = vec![0.0; k];
    let mut res_abs = vec![0.0; k];
    let mut res_asc = vec![0.0; k];
    for c in 0..k {
        let fc = fv[c];
        let mut rk = WGK[7] * fc;
        let mut rg = WG[3] * fc;
        let mut ra = WGK[7] * fc.abs();
        for j in 0..7 {
            let f1 = fv[(1 + 2 * j) * k + c];
            let f2 = fv[(2 + 2 * j) * k + c];
            rk += WGK[j] * (f1 + f2);
            ra += WGK[j] * (f1.abs() + f2.abs());
            if j % 2 == 1 {
                rg += WG[j / 2] * (f1 + f2);
            }
        }
        let mean = rk * 0.5;
        let mut asc = WGK[7] * (fc - mean).abs();
        for j in 0..7 {
            let f1 = fv[(1 + 2 * j) * k + c];
            let f2 = fv[(2 + 2 * j) * k + c];
            asc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
        }
        res_k[c] = rk * half;
        res_g[c] = rg * half;
        res_abs[c] = ra * half.abs();
        res_asc[c] = asc * half.abs();
    }
    let mut err = vec![0.0; k];
    for c in 0..k {
        let mut e = (res_k[c] - res_g[c]).abs();
        if res_asc[c] != 0.0 && e != 0.0 {
            e = res_asc[c] * (200.0 * e / res_asc[c]).powf(1.5).min(1.0);
        }
        if res_abs[c] > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            e = e.max(50.0 * f64::EPSILON * res_abs[c]);
        }
        err[c] = e;
    }
    (res_k, err, res_abs)
}

/// Adaptive integration of a `k`-component integrand over the union of the
/// consecutive intervals defined by `breaks` (sorted, at least two points).
///
/// Convergence is tested per component against `tol` times the integral of
/// the component's absolute value, so components that cancel (numerators of
/// tilted means) are resolved to the same relative scale as their magnitude.
pub fn integrate_vec<F>(mut f: F, breaks: &[f64], k: usize, tol: f64, max_segments: usize) -> (Vec<f64>, bool)
where
    F: FnMut(f64, &mut [f64]),
{
    let mut buf = vec![0.0; k];
    let mut heap = BinaryHeap::new();
    let mut total = vec![0.0; k];
    let mut total_err = vec![0.0; k];
    let mut total_abs = vec![0.0; k];
    let mut segments = 0usize;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let (v, e, ab) = kronrod_panel(&mut f, a, b, k, &mut buf);
        for c in 0..k {
            total[c] += v[c];
            total_err[c] += e[c];
            total_abs[c] += ab[c];
        }
        heap.push(Segment {
            a,
            b,
            value: v,
            error: e,
            priority: 0.0,
        });
        segments += 1;
    }
    let scale = |abs: &[f64]| -> Vec<f64> { abs.iter().map(|x| (tol * x).max(1e-300)).collect() };
    let mut sc = scale(&total_abs);
    // reprioritise with the normalised error
    let mut items: Vec<Segment> = heap.into_vec();
    for s in items.iter_mut() {
        s.priority = s.error.iter().zip(&sc).map(|(e, t)| e / t).fold(0.0, f64::max);
    }
    let mut heap: BinaryHeap<Segment> = items.into_iter().collect();
    let done = |err: &[f64], sc: &[f64]| err.iter().zip(sc).all(|(e, t)| e <= t);
    let mut converged = done(&total_err, &sc);
    while !converged && segments < max_segments {
        let Some(seg) = heap.pop() else { break };
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) {
            heap.push(seg);
            break;
        }
        let (v1, e1, a1) = kronrod_panel(&mut f, seg.a, mid, k, &mut buf);
        let (v2, e2, a2) = kronrod_panel(&mut f, mid, seg.b, k, &mut buf);
        for c in 0..k {
            total[c] += v1[c] + v2[c] - seg.value[c];
            total_err[c] += e1[c] + e2[c] - seg.error[c];
            total_abs[c] += a1[c] + a2[c];
        }
        sc = scale(&total_abs);
        let p1 = e1.iter().zip(&sc).map(|(e, t)| e / t).fold(0.0, f64::max);
        let p2 = e2.iter().zip(&sc).map(|(e, t)| e / t).fold(0.0, f64::max);
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
            priority: p1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
            priority: p2,
        });
        segments += 1;
        converged = done(&total_err, &sc);
    }
    // recompute the sum from the leaves to shed accumulated rounding
    let mut sum = vec![0.0; k];
    let mut leaves: Vec<Segment> = heap.into_vec();
    leaves.sort_by(|x, y| x.a.total_cmp(&y.a));
    for s in &leaves {
        for (acc, v) in sum.iter_mut().zip(&s.value) {
            *acc += v;
        }
    }
    (sum, converged)
}

/// Scalar adaptive integral over `[a, b]` with relative tolerance `tol`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, tol: f64) -> QuadResult
where
    F: FnMut(f64) -> f64,
{
    let (v, ok) = integrate_vec(|x, out| out[0] = f(x), &[a, b], 1, tol, 2000);
    QuadResult {
        value: v[0],
        error: f64::NAN,
        converged: ok,
    }
}

/// ∫_a^∞ f(x) dx through the map x = a + (1 - t)/t on t ∈ (0, 1].
pub fn integrate_to_infinity<F>(mut f: F, a: f64, tol: f64) -> QuadResult
where
    F: FnMut(f64) -> f64,
{
    integrate(
        |t| {
            let x = a + (1.0 - t) / t;
            let v = f(x);
            if v == 0.0 {
                0.0
            } else {
                v / (t * t)
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// Vector version of [`integrate_to_infinity`].
pub fn integrate_vec_to_infinity<F>(mut f: F, a: f64, k: usize, tol: f64, max_segments: usize) -> (Vec<f64>, bool)
where
    F: FnMut(f64, &mut [f64]),
{
    integrate_vec(
        |t, out| {
            let x = a + (1.0 - t) / t;
            f(x, out);
            let j = 1.0 / (t * t);
            for o in out.iter_mut() {
                if *o != 0.0 {
                    *o *= j;
                }
            }
        },
        &[0.0, 1.0],
        k,
        tol,
        max_segments,
    )
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 1e-13);
        assert_relative_eq!(r.value, 20.0 - 8.0 + 4.0, max_relative = 1e-13);
    }

    #[test]
    fn gaussian_to_infinity() {
        let r = integrate_to_infinity(|x| (-x * x).exp(), 0.0, 1e-12);
        assert_relative_eq!(r.value, std::f64::consts::PI.sqrt() / 2.0, max_relative = 1e-11);
    }

    #[test]
    fn heavy_power_tail() {
        // ∫_1^∞ x^{-3/2} dx = 2
        let r = integrate_to_infinity(|x| x.powf(-1.5), 1.0, 1e-12);
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn legendre_weights_sum_to_two() {
        for n in [1, 2, 5, 16, 41] {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-13);
            // exact for x^{2n-2}
            let m = (2 * n - 2) as i32;
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(m)).sum();
            assert_relative_eq!(s, 2.0 / (m as f64 + 1.0), max_relative = 1e-12);
        }
    }

    #[test]
    fn cancelling_component_resolved_relative_to_magnitude() {
        // ∫_{-1}^{1} x e^{-x^2} + 1e-9 dx = 2e-9
        let (v, ok) = integrate_vec(
            |x, out| {
                out[0] = (-x * x).exp();
                out[1] = x * (-x * x).exp() + 1e-9;
            },
            &[-1.0, 0.3, 1.0],
            2,
            1e-13,
            500,
        );
        assert!(ok);
        assert!((v[1] - 2e-9).abs() < 1e-13);
    }
}
