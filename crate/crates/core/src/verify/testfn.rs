use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Calibration,
    Holdout,
}

/// Bounded smooth functions of the first coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Constant {
        c: f64,
    },
    /// `tanh((x − a)/w)`
    Ramp {
        a: f64,
        w: f64,
    },
    /// `exp(−(x − a)²/(2w²))`
    Bump {
        a: f64,
        w: f64,
    },
    /// `½[tanh((x − a + h)/w) − tanh((x − a − h)/w)]`, a smoothed `1_{[a−h, a+h]}`
    Window {
        a: f64,
        h: f64,
        w: f64,
    },
}

impl Shape {
    fn value(&self, x: f64) -> f64 {
        match *self {
            Shape::Constant { c } => c,
            Shape::Ramp { a, w } => ((x - a) / w).tanh(),
            Shape::Bump { a, w } => (-0.5 * ((x - a) / w).powi(2)).exp(),
            Shape::Window { a, h, w } => 0.5 * (((x - a + h) / w).tanh() - ((x - a - h) / w).tanh()),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        let sech2 = |u: f64| 1.0 / u.cosh().powi(2);
        match *self {
            Shape::Constant { .. } => 0.0,
            Shape::Ramp { a, w } => sech2((x - a) / w) / w,
            Shape::Bump { a, w } => -(x - a) / (w * w) * (-0.5 * ((x - a) / w).powi(2)).exp(),
            Shape::Window { a, h, w } => 0.5 * (sech2((x - a + h) / w) - sech2((x - a - h) / w)) / w,
        }
    }

    /// `sup f − inf f` over the real line.
    fn oscillation(&self) -> f64 {
        match *self {
            Shape::Constant { .. } => 0.0,
            Shape::Ramp { .. } => 2.0,
            Shape::Bump { .. } => 1.0,
            Shape::Window { h, w, .. } => (h / w).tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: String,
    pub shape: Shape,
    pub osc_bound: f64,
    pub role: Role,
}

impl TestFunction {
    pub fn new(id: impl Into<String>, shape: Shape, role: Role) -> Self {
        Self {
            id: id.into(),
            osc_bound: shape.oscillation(),
            shape,
            role,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.shape.value(x[0])
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[0] = self.shape.derivative(x[0]);
    }

    /// `|∇f(x)|²`.
    pub fn grad_sq(&self, x: &[f64]) -> f64 {
        self.shape.derivative(x[0]).powi(2)
    }
}

const CALIBRATION: [&[usize]; 3] = [&[0, 3, 6, 9], &[1, 5, 8], &[1, 5, 8]];

/// Thirty functions: ten each of ramps, bumps and smoothed windows with
/// centres in `[−20, 20]` and widths in `[0.5, 5]`. Within each shape the
/// functions are sorted by `|a|` and the calibration picks are spread over
/// that order (4 ramps, 3 bumps, 3 windows), so both sets probe bulk and
/// tails.
pub fn default_corpus(seed: u64) -> Vec<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(30);
    for (kind, picks) in CALIBRATION.iter().enumerate() {
        let mut params: Vec<(f64, f64, f64)> = (0..10)
            .map(|_| {
                (
                    rng.random_range(-20.0..=20.0),
                    rng.random_range(0.5..=5.0),
                    rng.random_range(0.5..=5.0),
                )
            })
            .collect();
        params.sort_by(|p, q| p.0.abs().total_cmp(&q.0.abs()));
        for (i, (a, w, h)) in params.into_iter().enumerate() {
            let (name, shape) = match kind {
                0 => ("ramp", Shape::Ramp { a, w }),
                1 => ("bump", Shape::Bump { a, w }),
                _ => ("window", Shape::Window { a, h, w }),
            };
            let role = if picks.contains(&i) {
                Role::Calibration
            } else {
                Role::Holdout
            };
            out.push(TestFunction::new(format!("{name}_{i:02}"), shape, role));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_split() {
        let c = default_corpus(7);
        assert_eq!(c.len(), 30);
        assert_eq!(c.iter().filter(|f| f.role == Role::Calibration).count(), 10);
        assert_eq!(default_corpus(7), c);
    }

    #[test]
    fn gradients_match_differences() {
        for f in default_corpus(3) {
            for x in [-25.0, -3.3, 0.0, 1.7, 12.0] {
                let h = 1e-5;
                let fd = (f.value(&[x + h]) - f.value(&[x - h])) / (2.0 * h);
                let mut g = [0.0];
                f.gradient(&[x], &mut g);
                assert!((g[0] - fd).abs() <= 1e-6 * fd.abs().max(1.0), "{} at {x}", f.id);
            }
        }
    }

    #[test]
    fn values_within_oscillation() {
        for f in default_corpus(11) {
            let vals: Vec<f64> = (-400..=400).map(|i| f.value(&[i as f64 * 0.1])).collect();
            let (lo, hi) = vals
                .iter()
                .fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
            assert!(hi - lo <= f.osc_bound + 1e-12, "{}", f.id);
        }
    }
}
