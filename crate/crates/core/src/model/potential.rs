use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

const QUAD_TOL: f64 = 1e-13;

/// Radial profile `v` of a potential `V(x) = c + v(|x|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `a s²`
    Quadratic { a: f64 },
    /// `s^p`
    Power { p: f64 },
    /// `(1 + s²)^{κ/2}`
    SmoothPower { kappa: f64 },
    /// `coef · log(1 + s)`
    LogTail { coef: f64 },
    /// `a · log(1 + s) + p · log log(e + s)`
    LogLog { a: f64, p: f64 },
    /// `Σ_k coeffs[k] s^k`
    Polynomial { coeffs: Vec<f64> },
}

fn softplus(y: f64) -> f64 {
    if y > 35.0 {
        y + (-y).exp()
    } else {
        y.exp().ln_1p()
    }
}

/// `ln(e + e^y)` without overflow.
fn ln_e_plus_exp(y: f64) -> f64 {
    if y > 1.0 {
        y + (1.0 - y).exp().ln_1p()
    } else {
        1.0 + (y - 1.0).exp().ln_1p()
    }
}

impl Profile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        match self {
            Profile::Quadratic { a } if !(*a > 0.0) => bad("quadratic potential needs a > 0"),
            Profile::Power { p } if !(*p > 0.0) => bad("power potential needs p > 0"),
            Profile::SmoothPower { kappa } if !(*kappa > 0.0) => bad("smooth power potential needs kappa > 0"),
            Profile::LogTail { coef } if !(*coef > 0.0) => bad("log-tail potential needs coef > 0"),
            Profile::LogLog { a, p } if !(*a > 0.0 && *p >= 0.0) => bad("log-log potential needs a > 0, p >= 0"),
            Profile::Polynomial { coeffs } => {
                let top = coeffs.iter().rposition(|c| *c != 0.0);
                match top {
                    Some(k) if k >= 1 && coeffs[k] > 0.0 && coeffs.iter().all(|c| c.is_finite()) => Ok(()),
                    _ => bad("polynomial potential needs a positive leading coefficient of degree >= 1"),
                }
            }
            _ => Ok(()),
        }
    }

    pub fn v(&self, s: f64) -> f64 {
        match self {
            Profile::Quadratic { a } => a * s * s,
            Profile::Power { p } => s.powf(*p),
            Profile::SmoothPower { kappa } => (1.0 + s * s).powf(0.5 * kappa),
            Profile::LogTail { coef } => coef * s.ln_1p(),
            Profile::LogLog { a, p } => a * s.ln_1p() + p * (std::f64::consts::E + s).ln().ln(),
            Profile::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c),
        }
    }

    pub fn dv(&self, s: f64) -> f64 {
        match self {
            Profile::Quadratic { a } => 2.0 * a * s,
            Profile::Power { p } => p * s.powf(p - 1.0),
            Profile::SmoothPower { kappa } => kappa * s * (1.0 + s * s).powf(0.5 * kappa - 1.0),
            Profile::LogTail { coef } => coef / (1.0 + s),
            Profile::LogLog { a, p } => {
                let e = std::f64::consts::E + s;
                a / (1.0 + s) + p / (e * e.ln())
            }
            Profile::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * s + k as f64 * c),
        }
    }

    pub fn d2v(&self, s: f64) -> f64 {
        match self {
            Profile::Quadratic { a } => 2.0 * a,
            Profile::Power { p } => p * (p - 1.0) * s.powf(p - 2.0),
            Profile::SmoothPower { kappa } => {
                let q = 1.0 + s * s;
                kappa * q.powf(0.5 * kappa - 1.0) + kappa * (kappa - 2.0) * s * s * q.powf(0.5 * kappa - 2.0)
            }
            Profile::LogTail { coef } => -coef / ((1.0 + s) * (1.0 + s)),
            Profile::LogLog { a, p } => {
                let e = std::f64::consts::E + s;
                let l = e.ln();
                -a / ((1.0 + s) * (1.0 + s)) - p * (l + 1.0) / (e * e * l * l)
            }
            Profile::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * s + (k * (k - 1)) as f64 * c),
        }
    }

    /// `v(e^y)`, evaluated without forming `e^y` where that would overflow.
    pub fn v_log(&self, y: f64) -> f64 {
        match self {
            Profile::Quadratic { a } => a * (2.0 * y).exp(),
            Profile::Power { p } => (p * y).exp(),
            Profile::SmoothPower { kappa } => (0.5 * kappa * softplus(2.0 * y)).exp(),
            Profile::LogTail { coef } => coef * softplus(y),
            Profile::LogLog { a, p } => a * softplus(y) + p * ln_e_plus_exp(y).ln(),
            Profile::Polynomial { .. } => {
                let s = y.exp();
                if s.is_finite() {
                    self.v(s)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Whether `v(|x|)` is C² at the origin.
    pub fn smooth_at_origin(&self) -> bool {
        match self {
            Profile::Quadratic { .. } | Profile::SmoothPower { .. } => true,
            Profile::Power { p } => *p >= 2.0,
            Profile::LogTail { .. } | Profile::LogLog { .. } => false,
            Profile::Polynomial { coeffs } => coeffs.get(1).copied().unwrap_or(0.0) == 0.0,
        }
    }
}

/// Even quartic `a + b s² + c s⁴` replacing `v` on `s < eps`, C² at `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuarticPatch {
    pub eps: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuarticPatch {
    pub fn matching(profile: &Profile, eps: f64) -> Self {
        let (v, v1, v2) = (profile.v(eps), profile.dv(eps), profile.d2v(eps));
        let c = (v2 - v1 / eps) / (8.0 * eps * eps);
        let b = (v1 - 4.0 * c * eps.powi(3)) / (2.0 * eps);
        let a = v - b * eps * eps - c * eps.powi(4);
        Self { eps, a, b, c }
    }
}

/// Surface area of the unit sphere in ℝ^d.
pub fn sphere_area(d: usize) -> f64 {
    use std::f64::consts::PI;
    // Γ(d/2) by the half-integer recursion
    let mut gamma = if d.is_multiple_of(2) { 1.0 } else { PI.sqrt() };
    let mut h = if d.is_multiple_of(2) { 1.0 } else { 0.5 };
    while h < 0.5 * d as f64 - 1e-9 {
        gamma *= h;
        h += 1.0;
    }
    2.0 * PI.powf(0.5 * d as f64) / gamma
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// A radial confining potential `V(x) = c + v(|x|)` on ℝ^d, normalised so
/// that `e^{-V}` is a probability density.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    profile: Profile,
    dim: usize,
    log_norm: f64,
    patch: Option<QuarticPatch>,
}

impl Potential {
    pub fn new(profile: Profile, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::UnsupportedDimension {
                dimension: 0,
                reason: "dimension must be positive".into(),
            });
        }
        profile.validate()?;
        let mut pot = Self {
            profile,
            dim,
            log_norm: 0.0,
            patch: None,
        };
        pot.log_norm = pot.log_unnormalised_shell(0.0, f64::INFINITY)?;
        Ok(pot)
    }

    /// The same potential with `v` replaced by a C² quartic on `|x| < eps`,
    /// renormalised.
    pub fn patched(&self, eps: f64) -> Result<Self> {
        let mut pot = Self {
            profile: self.profile.clone(),
            dim: self.dim,
            log_norm: 0.0,
            patch: Some(QuarticPatch::matching(&self.profile, eps)),
        };
        pot.log_norm = pot.log_unnormalised_shell(0.0, f64::INFINITY)?;
        Ok(pot)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn patch(&self) -> Option<&QuarticPatch> {
        self.patch.as_ref()
    }

    /// The constant `c` with `∫ e^{-V} dx = 1`.
    pub fn normalization_constant(&self) -> f64 {
        self.log_norm
    }

    pub fn is_radial(&self) -> bool {
        true
    }

    pub fn smooth_at_origin(&self) -> bool {
        self.patch.is_some() || self.profile.smooth_at_origin()
    }

    /// `v(s)`, without the constant.
    pub fn radial(&self, s: f64) -> f64 {
        match &self.patch {
            Some(q) if s < q.eps => q.a + s * s * (q.b + q.c * s * s),
            _ => self.profile.v(s),
        }
    }

    pub fn radial_d1(&self, s: f64) -> f64 {
        match &self.patch {
            Some(q) if s < q.eps => s * (2.0 * q.b + 4.0 * q.c * s * s),
            _ => self.profile.dv(s),
        }
    }

    pub fn radial_d2(&self, s: f64) -> f64 {
        match &self.patch {
            Some(q) if s < q.eps => 2.0 * q.b + 12.0 * q.c * s * s,
            _ => self.profile.d2v(s),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.log_norm + self.radial(norm(x))
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let s = norm(x);
        if s == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let f = self.radial_d1(s) / s;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = f * xi;
        }
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        self.radial_laplacian(norm(x))
    }

    /// `v''(s) + (d-1) v'(s)/s`.
    pub fn radial_laplacian(&self, s: f64) -> f64 {
        let d1 = self.dim as f64 - 1.0;
        if s == 0.0 {
            return self.dim as f64 * self.radial_d2(0.0);
        }
        self.radial_d2(s) + d1 * self.radial_d1(s) / s
    }

    /// `ln ∫_{t0 ≤ |x| ≤ t1} e^{-v(|x|)} dx` (no constant).
    fn log_unnormalised_shell(&self, t0: f64, t1: f64) -> Result<f64> {
        let d = self.dim as f64;
        let mut acc = f64::NEG_INFINITY;
        // s ∈ [t0, min(t1, 1)] directly
        if t0 < 1.0 {
            let hi = t1.min(1.0);
            let mut breaks = vec![t0];
            if let Some(q) = &self.patch {
                if q.eps > t0 && q.eps < hi {
                    breaks.push(q.eps);
                }
            }
            breaks.push(hi);
            let (v, _) = quad::integrate_vec(
                |s, out| out[0] = s.powf(d - 1.0) * (-self.radial(s)).exp(),
                &breaks,
                1,
                QUAD_TOL,
                2000,
            );
            if v[0] > 0.0 {
                acc = v[0].ln();
            }
        }
        if t1 > 1.0 {
            // y = ln s on [max(ln t0, 0), ln t1]
            let y0 = t0.max(1.0).ln();
            let exponent = |y: f64| d * y - self.profile.v_log(y);
            let shift = exponent(y0);
            let part = if t1.is_finite() {
                let y1 = t1.ln();
                let shift = shift.max(exponent(y1));
                let (v, _) = quad::integrate_vec(
                    |y, out| out[0] = (exponent(y) - shift).exp(),
                    &[y0, y1],
                    1,
                    QUAD_TOL,
                    2000,
                );
                shift + v[0].ln()
            } else {
                let r = quad::integrate_to_infinity(|y| (exponent(y) - shift).exp(), y0, QUAD_TOL);
                shift + r.value.ln()
            };
            acc = log_add_exp(acc, part);
        }
        let out = sphere_area(self.dim).ln() + acc;
        if out.is_nan() {
            return Err(Error::InvalidInput("potential is not normalisable".into()));
        }
        Ok(out)
    }

    /// `ln μ(t0 ≤ |x| ≤ t1)`.
    pub fn log_shell_mass(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return f64::NEG_INFINITY;
        }
        self.log_unnormalised_shell(t0, t1)
            .map(|l| l - self.log_norm)
            .unwrap_or(f64::NEG_INFINITY)
    }

    /// `ln μ(|x| ≥ t)`.
    pub fn log_tail(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.log_shell_mass(t, f64::INFINITY).min(0.0)
    }

    /// `μ(|x| ≥ t)`.
    pub fn tail(&self, t: f64) -> f64 {
        self.log_tail(t).exp()
    }

    /// Radius beyond which `e^{-v}` is below `1e-16` of its peak.
    pub fn kernel_radius(&self) -> f64 {
        let v0 = self.radial(0.0);
        let target = v0 + 16.0 * std::f64::consts::LN_10;
        let mut hi = 1.0;
        while self.radial(hi) < target && hi < 1e300 {
            hi *= 2.0;
        }
        hi.min(1e300)
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    match x.len() {
        1 => x[0].abs(),
        2 => x[0].hypot(x[1]),
        _ => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}
