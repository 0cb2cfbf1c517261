use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Series truncation target for infinite atom families.
pub const EPS_TAIL: f64 = 1e-12;
const LATTICE_DIRECT_TERMS: usize = 100_000;

/// Serializable description of a perturbing measure ν.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    /// δ at the origin (or at `at`).
    PointMass {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at: Option<Vec<f64>>,
    },
    /// Finitely many weighted atoms.
    Atoms { points: Vec<Vec<f64>>, weights: Vec<f64> },
    /// `γ⁻¹ Σ_{i∈ℤ} δ_i / (1 + |i|^{1+p})` on the real line.
    Lattice { p: f64 },
    /// Uniform density on `[a, b]` (d = 1).
    Uniform { a: f64, b: f64 },
    /// Density `γ⁻¹ / (1 + |z|^{1+p})` on the real line.
    PowerTail { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    PointMass,
    DiscreteAtoms,
    Density,
}

/// Integer atoms weighted by `1/(1 + |i|^q)`, summed directly up to a
/// cutoff and by Euler–Maclaurin beyond it.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSeries {
    p: f64,
    q: f64,
    gamma: f64,
    /// `suffix[n] = Σ_{i ≥ n} f(i)` for `n ≤ LATTICE_DIRECT_TERMS + 1`.
    suffix: Vec<f64>,
    truncation: f64,
}

impl LatticeSeries {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0) {
            return Err(Error::InvalidInput("lattice series needs p > 0".into()));
        }
        let q = 1.0 + p;
        let m = LATTICE_DIRECT_TERMS;
        let mut suffix = vec![0.0; m + 2];
        suffix[m + 1] = Self::em_tail(q, (m + 1) as f64);
        for n in (0..=m).rev() {
            suffix[n] = suffix[n + 1] + Self::f(q, n as f64);
        }
        let gamma = 2.0 * suffix[0] - Self::f(q, 0.0);
        let truncation = (2.0 / (p * gamma * EPS_TAIL)).powf(1.0 / p).ceil();
        Ok(Self {
            p,
            q,
            gamma,
            suffix,
            truncation,
        })
    }

    fn f(q: f64, i: f64) -> f64 {
        1.0 / (1.0 + i.powf(q))
    }

    /// `Σ_{i ≥ n} f(i)` for large `n`: ∫_n^∞ f + f(n)/2 − f'(n)/12.
    fn em_tail(q: f64, n: f64) -> f64 {
        let integral = quad::integrate_to_infinity(|x| Self::f(q, x), n, 1e-14).value;
        let fp = -q * n.powf(q - 1.0) / (1.0 + n.powf(q)).powi(2);
        integral + 0.5 * Self::f(q, n) - fp / 12.0
    }

    fn suffix_sum(&self, n: u64) -> f64 {
        if (n as usize) < self.suffix.len() {
            self.suffix[n as usize]
        } else {
            Self::em_tail(self.q, n as f64)
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Smallest `N` with `Σ_{|i|>N} w_i < EPS_TAIL` from the `N^{-p}/p` bound.
    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn weight(&self, i: f64) -> f64 {
        Self::f(self.q, i.abs()) / self.gamma
    }

    /// `ν(|z| ≥ t)`.
    pub fn tail(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        let n = t.ceil() as u64;
        (2.0 * self.suffix_sum(n) / self.gamma).min(1.0)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // |Z| by inverting the suffix sums, then a sign
        let u: f64 = rng.random();
        let target = u * self.gamma;
        // P(|Z| ≥ n) γ = 2 S[n] − [n = 0] f(0); find largest n with that ≥ target
        let mass = |n: u64| {
            if n == 0 {
                self.gamma
            } else {
                2.0 * self.suffix_sum(n)
            }
        };
        let (mut lo, mut hi) = (0u64, 1u64);
        while mass(hi) >= target {
            lo = hi;
            hi = hi.saturating_mul(2);
            if hi as f64 > self.truncation {
                hi = self.truncation as u64;
                break;
            }
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if mass(mid) >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let n = lo as f64;
        if n == 0.0 || rng.random::<bool>() {
            n
        } else {
            -n
        }
    }
}

/// One-dimensional source densities.
#[derive(Debug, Clone, PartialEq)]
pub enum Density1D {
    Uniform { a: f64, b: f64 },
    PowerTail { p: f64, q: f64, gamma: f64 },
}

impl Density1D {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInput("uniform source needs finite a < b".into()));
        }
        Ok(Density1D::Uniform { a, b })
    }

    pub fn power_tail(p: f64) -> Result<Self> {
        if !(p > 0.0) {
            return Err(Error::InvalidInput("power-tail source needs p > 0".into()));
        }
        let q = 1.0 + p;
        let pi = std::f64::consts::PI;
        let gamma = 2.0 * (pi / q) / (pi / q).sin();
        Ok(Density1D::PowerTail { p, q, gamma })
    }

    pub fn density(&self, z: f64) -> f64 {
        match *self {
            Density1D::Uniform { a, b } => {
                if z >= a && z <= b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            Density1D::PowerTail { q, gamma, .. } => 1.0 / (gamma * (1.0 + z.abs().powf(q))),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Density1D::Uniform { a, b } => (a, b),
            Density1D::PowerTail { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Points where the density is not smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            Density1D::Uniform { a, b } => vec![a, b],
            Density1D::PowerTail { .. } => vec![0.0],
        }
    }

    pub fn tail(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match *self {
            Density1D::Uniform { a, b } => {
                let right = (b - t.max(a)).max(0.0);
                let left = ((-t).min(b) - a).max(0.0);
                ((right + left) / (b - a)).min(1.0)
            }
            Density1D::PowerTail { .. } => {
                let half = quad::integrate_to_infinity(|z| self.density(z), t, 1e-13).value;
                (2.0 * half).min(1.0)
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Density1D::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            Density1D::PowerTail { p, q, .. } => {
                // Lomax(p) proposal on |z|; (1+t)^q / (1+t^q) ≤ 2^{q-1}
                let bound = 2f64.powf(q - 1.0);
                loop {
                    let u: f64 = 1.0 - rng.random::<f64>();
                    let t = u.powf(-1.0 / p) - 1.0;
                    let ratio = (1.0 + t).powf(q) / (1.0 + t.powf(q));
                    if rng.random::<f64>() * bound <= ratio {
                        return if rng.random::<bool>() { t } else { -t };
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Inner {
    Atoms {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
        cumulative: Vec<f64>,
    },
    Lattice(LatticeSeries),
    Density(Density1D),
}

/// The perturbing probability measure ν.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceMeasure {
    spec: SourceSpec,
    dim: usize,
    pub(crate) inner: Inner,
}

impl SourceMeasure {
    pub fn new(spec: SourceSpec, dim: usize) -> Result<Self> {
        let one_d = |what: &str| -> Result<()> {
            if dim != 1 {
                Err(Error::UnsupportedDimension {
                    dimension: dim,
                    reason: format!("{what} sources are one-dimensional"),
                })
            } else {
                Ok(())
            }
        };
        let inner = match &spec {
            SourceSpec::PointMass { at } => {
                let z = at.clone().unwrap_or_else(|| vec![0.0; dim]);
                Self::atoms(vec![z], vec![1.0], dim)?
            }
            SourceSpec::Atoms { points, weights } => Self::atoms(points.clone(), weights.clone(), dim)?,
            SourceSpec::Lattice { p } => {
                one_d("lattice")?;
                Inner::Lattice(LatticeSeries::new(*p)?)
            }
            SourceSpec::Uniform { a, b } => {
                one_d("uniform")?;
                Inner::Density(Density1D::uniform(*a, *b)?)
            }
            SourceSpec::PowerTail { p } => {
                one_d("power-tail")?;
                Inner::Density(Density1D::power_tail(*p)?)
            }
        };
        Ok(Self { spec, dim, inner })
    }

    pub fn point_mass(dim: usize) -> Self {
        Self::new(SourceSpec::PointMass { at: None }, dim).expect("point mass is always valid")
    }

    fn atoms(points: Vec<Vec<f64>>, weights: Vec<f64>, dim: usize) -> Result<Inner> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidInput(
                "atoms need matching non-empty points and weights".into(),
            ));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidInput(format!("atom locations must have dimension {dim}")));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidInput("atom weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("atom weights sum to {total}, not 1")));
        }
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        Ok(Inner::Atoms {
            points,
            weights,
            cumulative,
        })
    }

    pub fn spec(&self) -> &SourceSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> SourceKind {
        match &self.inner {
            Inner::Atoms { points, .. } if points.len() == 1 => SourceKind::PointMass,
            Inner::Atoms { .. } | Inner::Lattice(_) => SourceKind::DiscreteAtoms,
            Inner::Density(_) => SourceKind::Density,
        }
    }

    /// The single atom of a point mass.
    pub fn point_mass_location(&self) -> Option<&[f64]> {
        match &self.inner {
            Inner::Atoms { points, .. } if points.len() == 1 => Some(&points[0]),
            _ => None,
        }
    }

    pub fn lattice(&self) -> Option<&LatticeSeries> {
        match &self.inner {
            Inner::Lattice(l) => Some(l),
            _ => None,
        }
    }

    pub fn density(&self) -> Option<&Density1D> {
        match &self.inner {
            Inner::Density(d) => Some(d),
            _ => None,
        }
    }

    /// `sup{|z| : z ∈ supp ν}`; infinite for unbounded support.
    pub fn support_radius(&self) -> f64 {
        match &self.inner {
            Inner::Atoms { points, .. } => points
                .iter()
                .map(|p| crate::model::potential::norm(p))
                .fold(0.0, f64::max),
            Inner::Lattice(_) => f64::INFINITY,
            Inner::Density(d) => {
                let (a, b) = d.support();
                a.abs().max(b.abs())
            }
        }
    }

    /// `ν(|z| ≥ t)`.
    pub fn tail(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match &self.inner {
            Inner::Atoms { points, weights, .. } => points
                .iter()
                .zip(weights)
                .filter(|(p, _)| crate::model::potential::norm(p) >= t)
                .map(|(_, w)| w)
                .sum::<f64>()
                .min(1.0),
            Inner::Lattice(l) => l.tail(t),
            Inner::Density(d) => d.tail(t),
        }
    }

    /// One draw from ν written into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.inner {
            Inner::Atoms { points, cumulative, .. } => {
                let u = rng.random::<f64>() * cumulative[cumulative.len() - 1];
                let i = cumulative.partition_point(|c| *c < u).min(points.len() - 1);
                out.copy_from_slice(&points[i]);
            }
            Inner::Lattice(l) => out[0] = l.sample(rng),
            Inner::Density(d) => out[0] = d.sample(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn lattice_gamma_matches_brute_force() {
        // p = 1: Σ 1/(1+i²) = π coth π
        let l = LatticeSeries::new(1.0).unwrap();
        let pi = std::f64::consts::PI;
        assert_relative_eq!(l.gamma(), pi / pi.tanh(), max_relative = 1e-13);
    }

    #[test]
    fn lattice_tail_consistent_with_sums() {
        let l = LatticeSeries::new(1.5).unwrap();
        let direct: f64 = (3..200_000).map(|i| 2.0 * l.weight(i as f64)).sum::<f64>();
        let far = 2.0 * LatticeSeries::em_tail(2.5, 200_000.0) / l.gamma();
        assert_relative_eq!(l.tail(2.5), direct + far, max_relative = 1e-12);
        assert_eq!(l.tail(0.0), 1.0);
        assert!(l.tail(2e5) < l.tail(1e5));
    }

    #[test]
    fn lattice_truncation_bound() {
        let l = LatticeSeries::new(1.0).unwrap();
        let n = l.truncation();
        assert!(l.tail(n + 1.0) < EPS_TAIL);
    }

    #[test]
    fn power_tail_normalised() {
        for p in [0.5, 1.0, 2.0] {
            let d = Density1D::power_tail(p).unwrap();
            let half = quad::integrate_to_infinity(|z| d.density(z), 0.0, 1e-13).value;
            assert_relative_eq!(2.0 * half, 1.0, max_relative = 1e-11);
        }
    }

    #[test]
    fn uniform_tail() {
        let d = Density1D::uniform(-1.0, 1.0).unwrap();
        assert_relative_eq!(d.tail(0.5), 0.5);
        assert_eq!(d.tail(1.5), 0.0);
        let d = Density1D::uniform(0.0, 2.0).unwrap();
        assert_relative_eq!(d.tail(0.5), 0.75);
    }

    #[test]
    fn atoms_reject_bad_weights() {
        let spec = SourceSpec::Atoms {
            points: vec![vec![1.0], vec![-1.0]],
            weights: vec![0.5, 0.6],
        };
        assert!(SourceMeasure::new(spec, 1).is_err());
    }

    #[test]
    fn power_tail_sampler_tail_frequency() {
        let nu = SourceMeasure::new(SourceSpec::PowerTail { p: 1.0 }, 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mut z = [0.0];
        let mut hits = 0usize;
        for _ in 0..n {
            nu.sample_into(&mut rng, &mut z);
            if z[0].abs() >= 2.0 {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        let expect = nu.tail(2.0);
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((freq - expect).abs() < 4.0 * se, "{freq} vs {expect}");
    }

    #[test]
    fn lattice_sampler_frequencies() {
        let nu = SourceMeasure::new(SourceSpec::Lattice { p: 1.0 }, 1).unwrap();
        let l = nu.lattice().unwrap().clone();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mut z = [0.0];
        let mut zeros = 0usize;
        for _ in 0..n {
            nu.sample_into(&mut rng, &mut z);
            assert_eq!(z[0], z[0].round());
            if z[0] == 0.0 {
                zeros += 1;
            }
        }
        let expect = l.weight(0.0);
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((zeros as f64 / n as f64 - expect).abs() < 4.0 * se);
    }
}
