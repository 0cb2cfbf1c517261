use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::potential::{norm, Potential};
use super::source::{Inner, SourceMeasure};
use crate::error::{Error, Result};
use crate::quad::{self, QuadRule, QuadratureSpec};

/// Which factor of the convolution a tail refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Mu,
    Nu,
}

/// Integrand for [`ConvolutionModel::tilted`]: `(z, u, out)`.
pub type TiltedFn<'a> = dyn Fn(&[f64], &[f64], &mut [f64]) + 'a;

/// Result of integrating against the tilted measure ν_x.
#[derive(Debug, Clone, PartialEq)]
pub struct Tilted {
    /// `ln p_ν(x)`.
    pub log_p: f64,
    /// `∫ g_j dν_x` per component.
    pub means: Vec<f64>,
}

/// Relative suppression below which lattice atoms are dropped from a window.
const WINDOW_LOG_MARGIN: f64 = 40.0;
const FD_STEP: f64 = 1e-4;

fn legendre16() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| quad::gauss_legendre(16))
}

/// The convolution μ∗ν of `μ = e^{-V}dx` with a source measure ν.
#[derive(Debug, Clone)]
pub struct ConvolutionModel {
    potential: Potential,
    source: SourceMeasure,
    quadrature: QuadratureSpec,
    truncation_radius: f64,
    /// Offsets from the kernel peak used as quadrature breakpoints.
    kernel_scales: Vec<f64>,
}

impl ConvolutionModel {
    pub fn new(potential: Potential, source: SourceMeasure, quadrature: QuadratureSpec) -> Result<Self> {
        if potential.dim() != source.dim() {
            return Err(Error::InvalidInput(format!(
                "potential has dimension {} but source has dimension {}",
                potential.dim(),
                source.dim()
            )));
        }
        let k = potential.kernel_radius();
        let r = source.support_radius();
        let truncation_radius = if r.is_finite() { k + r } else { 2.0 * k };
        // first e-fold of the kernel, then geometric steps out to its radius
        let v0 = potential.radial(0.0);
        let mut first = 1e-3;
        while potential.radial(first) - v0 < 1.0 && first < k {
            first *= 1.5;
        }
        let mut kernel_scales = vec![];
        let mut l = first;
        while l < k {
            kernel_scales.push(l);
            l *= 8.0;
        }
        kernel_scales.push(k);
        Ok(Self {
            potential,
            source,
            quadrature,
            truncation_radius,
            kernel_scales,
        })
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn source(&self) -> &SourceMeasure {
        &self.source
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quadrature
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    /// Radius outside which `e^{-V}` is below `1e-16` of its peak, widened
    /// by the support of ν.
    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
    }

    /// The same model with a refined quadrature spec.
    pub fn with_quadrature(&self, quadrature: QuadratureSpec) -> Self {
        Self {
            quadrature,
            ..self.clone()
        }
    }

    /// The same model with `V` replaced by `other`.
    pub fn with_potential(&self, potential: Potential) -> Result<Self> {
        Self::new(potential, self.source.clone(), self.quadrature)
    }

    /// Integrates `k` functions against ν_x. `g(z, u, out)` receives the atom
    /// or node `z` and `u = x - z`.
    pub fn tilted(&self, x: &[f64], k: usize, g: &TiltedFn<'_>) -> Result<Tilted> {
        let c = self.potential.normalization_constant();
        let out = match &self.source.inner {
            Inner::Atoms { points, weights, .. } => {
                let terms = points.iter().zip(weights).map(|(z, w)| (z.as_slice(), *w));
                self.atom_sum(x, k, terms, g)?
            }
            Inner::Lattice(l) => {
                let x0 = x[0];
                let k0 = x0.round().clamp(-l.truncation(), l.truncation());
                let near = (x0 - k0).abs();
                let v_near = self.potential.radial(near);
                let budget = WINDOW_LOG_MARGIN + (l.weight(0.0) / l.weight(k0)).ln();
                let mut w = 1.0f64;
                while self.potential.radial(w) - v_near < budget && w < l.truncation() {
                    w *= 2.0;
                }
                let (mut lo, mut hi) = (w / 2.0, w);
                while hi - lo > 1.0 {
                    let mid = (0.5 * (lo + hi)).floor();
                    if self.potential.radial(mid) - v_near >= budget {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let first = (k0 - hi).max(-l.truncation()) as i64;
                let last = (k0 + hi).min(l.truncation()) as i64;
                let pts: Vec<[f64; 1]> = (first..=last).map(|i| [i as f64]).collect();
                let terms = pts.iter().map(|z| (&z[..], l.weight(z[0])));
                self.atom_sum(x, k, terms, g)?
            }
            Inner::Density(dens) => self.density_integral(x[0], dens, k, g)?,
        };
        let (log_sum, means) = out;
        let log_p = log_sum - c;
        if !log_p.is_finite() {
            return Err(Error::NumericUnderflow { radius: norm(x) });
        }
        Ok(Tilted { log_p, means })
    }

    /// Returns `(ln Σ w_i e^{-v(|x - z_i|)}, means)`.
    fn atom_sum<'a, I>(&self, x: &[f64], k: usize, terms: I, g: &TiltedFn<'_>) -> Result<(f64, Vec<f64>)>
    where
        I: Iterator<Item = (&'a [f64], f64)> + Clone,
    {
        let d = x.len();
        let mut u = vec![0.0; d];
        let mut lw = Vec::new();
        for (z, w) in terms.clone() {
            for j in 0..d {
                u[j] = x[j] - z[j];
            }
            lw.push(w.ln() - self.potential.radial(norm(&u)));
        }
        let m = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::NumericUnderflow { radius: norm(x) });
        }
        let mut total = 0.0;
        let mut acc = vec![0.0; k];
        let mut buf = vec![0.0; k];
        for ((z, _), l) in terms.zip(&lw) {
            let e = (l - m).exp();
            if e == 0.0 {
                continue;
            }
            for j in 0..d {
                u[j] = x[j] - z[j];
            }
            total += e;
            if k > 0 {
                g(z, &u, &mut buf);
                for j in 0..k {
                    acc[j] += e * buf[j];
                }
            }
        }
        Ok((m + total.ln(), acc.into_iter().map(|a| a / total).collect()))
    }

    fn density_integral(
        &self,
        x: f64,
        dens: &super::source::Density1D,
        k: usize,
        g: &TiltedFn<'_>,
    ) -> Result<(f64, Vec<f64>)> {
        let (a, b) = dens.support();
        let nearest = x.clamp(a, b);
        let shift = self.potential.radial((x - nearest).abs());
        let mut breaks = vec![a, nearest, b];
        breaks.extend(dens.kinks());
        for l in &self.kernel_scales {
            breaks.push(nearest - l);
            breaks.push(nearest + l);
        }
        breaks.retain(|p| *p >= a && *p <= b);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let pot = &self.potential;
        let f = |z: f64, out: &mut [f64]| {
            let u = x - z;
            let w = (-(pot.radial(u.abs()) - shift)).exp() * dens.density(z);
            out[0] = w;
            if w == 0.0 {
                out[1..].iter_mut().for_each(|o| *o = 0.0);
                return;
            }
            if k > 0 {
                g(&[z], &[u], &mut out[1..]);
                for o in out[1..].iter_mut() {
                    *o *= w;
                }
            }
        };
        let sums = self.integrate_line(&breaks, k + 1, f);
        if !(sums[0] > 0.0) {
            return Err(Error::NumericUnderflow { radius: x.abs() });
        }
        let means = sums[1..].iter().map(|s| s / sums[0]).collect();
        Ok((sums[0].ln() - shift, means))
    }

    /// Integrates over the union of consecutive intervals in `breaks`, whose
    /// ends may be infinite. Each interval is mapped onto a unit parameter
    /// interval so one adaptive heap serves the whole line.
    pub(crate) fn integrate_line<F>(&self, breaks: &[f64], k: usize, mut f: F) -> Vec<f64>
    where
        F: FnMut(f64, &mut [f64]),
    {
        #[derive(Clone, Copy)]
        enum Piece {
            Finite(f64, f64),
            Right(f64),
            Left(f64),
        }
        let mut pieces = Vec::new();
        for w in breaks.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if !(hi > lo) {
                continue;
            }
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => pieces.push(Piece::Finite(lo, hi)),
                (true, false) => pieces.push(Piece::Right(lo)),
                (false, true) => pieces.push(Piece::Left(hi)),
                (false, false) => {
                    pieces.push(Piece::Left(0.0));
                    pieces.push(Piece::Right(0.0));
                }
            }
        }
        let n = pieces.len();
        let mut g = |tau: f64, out: &mut [f64]| {
            let j = (tau.floor() as usize).min(n - 1);
            let t = tau - j as f64;
            let (z, jac) = match pieces[j] {
                Piece::Finite(lo, hi) => (lo + (hi - lo) * t, hi - lo),
                Piece::Right(lo) => (lo + (1.0 - t) / t, 1.0 / (t * t)),
                Piece::Left(hi) => (hi - (1.0 - t) / t, 1.0 / (t * t)),
            };
            if !z.is_finite() {
                out.iter_mut().for_each(|o| *o = 0.0);
                return;
            }
            f(z, out);
            for o in out.iter_mut() {
                if *o != 0.0 {
                    *o *= jac;
                }
            }
        };
        let taus: Vec<f64> = (0..=n).map(|j| j as f64).collect();
        match self.quadrature.rule {
            QuadRule::AdaptiveKronrod => quad::integrate_vec(g, &taus, k, self.quadrature.tol, self.quadrature.nodes).0,
            QuadRule::CompositeLegendre => {
                let (xs, ws) = legendre16();
                let panels = self.quadrature.nodes.max(1);
                let h = 1.0 / panels as f64;
                let mut acc = vec![0.0; k];
                let mut buf = vec![0.0; k];
                for j in 0..n {
                    for p in 0..panels {
                        let lo = j as f64 + p as f64 * h;
                        for (xi, wi) in xs.iter().zip(ws) {
                            g(lo + 0.5 * h * (xi + 1.0), &mut buf);
                            for c in 0..k {
                                acc[c] += 0.5 * h * wi * buf[c];
                            }
                        }
                    }
                }
                acc
            }
        }
    }

    pub fn log_p_nu(&self, x: &[f64]) -> Result<f64> {
        Ok(self.tilted(x, 0, &|_, _, _| {})?.log_p)
    }

    /// `p_ν(x) = ∫ e^{-V(x-z)} ν(dz)`.
    pub fn p_nu(&self, x: &[f64]) -> Result<f64> {
        let l = self.log_p_nu(x)?;
        let p = l.exp();
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::NumericUnderflow { radius: norm(x) });
        }
        Ok(p)
    }

    /// `V_ν(x)`, computed in log space.
    pub fn v_nu(&self, x: &[f64]) -> Result<f64> {
        Ok(-self.log_p_nu(x)?)
    }

    /// `(V_ν(x), ∇V_ν(x))` with `∇V_ν(x) = ∫ ∇V(x - z) ν_x(dz)`.
    pub fn v_nu_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let pot = &self.potential;
        let t = self.tilted(x, x.len(), &|_, u, out| pot.gradient(u, out))?;
        Ok((-t.log_p, t.means))
    }

    pub fn grad_v_nu(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.v_nu_and_grad(x)?.1)
    }

    /// `∫ g(z) ν_x(dz)`.
    pub fn tilted_expectation(&self, x: &[f64], g: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
        if let Some(z) = self.source.point_mass_location() {
            self.log_p_nu(x)?;
            return Ok(g(z));
        }
        Ok(self.tilted(x, 1, &|z, _, out| out[0] = g(z))?.means[0])
    }

    /// `⟨∇V_ν(x), x⟩ / |x|`.
    pub fn radial_drift(&self, x: &[f64]) -> Result<f64> {
        let gr = self.grad_v_nu(x)?;
        let s = norm(x);
        Ok(gr.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / s)
    }

    /// `∫ (δ|∇V|² − ΔV)(x − z) ν_x(dz)`.
    pub fn case_b_integrand(&self, x: &[f64], delta: f64) -> Result<f64> {
        let pot = &self.potential;
        let t = self.tilted(x, 1, &|_, u, out| {
            let s = norm(u);
            let g = pot.radial_d1(s);
            out[0] = delta * g * g - pot.radial_laplacian(s);
        })?;
        Ok(t.means[0])
    }

    /// `ΔV_ν(x)` by Richardson-extrapolated central differences of `∇V_ν`.
    pub fn laplacian_v_nu(&self, x: &[f64]) -> Result<f64> {
        let mut y = x.to_vec();
        let mut total = 0.0;
        for i in 0..x.len() {
            let mut diff = |h: f64| -> Result<f64> {
                y[i] = x[i] + h;
                let gp = self.grad_v_nu(&y)?[i];
                y[i] = x[i] - h;
                let gm = self.grad_v_nu(&y)?[i];
                y[i] = x[i];
                Ok((gp - gm) / (2.0 * h))
            };
            let d1 = diff(FD_STEP)?;
            let d2 = diff(0.5 * FD_STEP)?;
            total += (4.0 * d2 - d1) / 3.0;
        }
        Ok(total)
    }

    /// `μ(|x| ≥ t)` or `ν(|z| ≥ t)`.
    pub fn measure_tail(&self, which: Which, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::InvalidInput(format!(
                "tail radius must be non-negative, got {t}"
            )));
        }
        Ok(match which {
            Which::Mu => self.potential.tail(t),
            Which::Nu => self.source.tail(t),
        })
    }

    /// `∫ p_ν dx` over the whole space (d ≤ 2).
    pub fn normalization(&self) -> Result<f64> {
        let mut knots: Vec<f64> = vec![f64::NEG_INFINITY, 0.0, f64::INFINITY];
        match &self.source.inner {
            Inner::Atoms { points, .. } => knots.extend(points.iter().map(|p| p[0])),
            Inner::Density(d) => knots.extend(d.kinks()),
            Inner::Lattice(_) => {}
        }
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let loose = QuadratureSpec {
            tol: 1e-9,
            ..self.quadrature
        };
        let outer = self.with_quadrature(loose);
        match self.dim() {
            1 => {
                let mut err = None;
                let v = outer.integrate_line(&knots, 1, |x, out| {
                    out[0] = match self.p_nu(&[x]) {
                        Ok(p) => p,
                        Err(Error::NumericUnderflow { .. }) => 0.0,
                        Err(e) => {
                            err = Some(e);
                            0.0
                        }
                    }
                });
                err.map_or(Ok(v[0]), Err)
            }
            2 => {
                let mut knots2: Vec<f64> = vec![f64::NEG_INFINITY, 0.0, f64::INFINITY];
                if let Inner::Atoms { points, .. } = &self.source.inner {
                    knots2.extend(points.iter().map(|p| p[1]));
                }
                knots2.sort_by(f64::total_cmp);
                knots2.dedup();
                let v = outer.integrate_line(&knots, 1, |x1, out| {
                    out[0] = outer.integrate_line(&knots2, 1, |x2, o| o[0] = self.p_nu(&[x1, x2]).unwrap_or(0.0))[0];
                });
                Ok(v[0])
            }
            d => Err(Error::UnsupportedDimension {
                dimension: d,
                reason: "normalisation is checked by quadrature only for d ≤ 2".into(),
            }),
        }
    }
}
