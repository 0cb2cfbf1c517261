use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Nonincreasing,
    Nondecreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolation {
    Clamp,
    PowerLaw,
}

/// A monotone function tabulated on a strictly increasing grid.
///
/// Interpolation is linear in log-log coordinates when the grid and all
/// values are positive, linear otherwise. Either way it preserves the
/// declared monotonicity between nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub monotonicity: Monotonicity,
    pub extrapolation: Extrapolation,
}

impl RateTable {
    pub fn new(
        grid: Vec<f64>,
        values: Vec<f64>,
        monotonicity: Monotonicity,
        extrapolation: Extrapolation,
    ) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::InvalidInput(
                "rate table needs ≥ 2 points and matching lengths".into(),
            ));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "rate table grid must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidInput("rate table contains NaN".into()));
        }
        for (i, w) in values.windows(2).enumerate() {
            let slack = MONOTONE_SLACK * w[0].abs().max(w[1].abs()).max(1e-300);
            let bad = match monotonicity {
                Monotonicity::Nonincreasing => w[1] > w[0] + slack,
                Monotonicity::Nondecreasing => w[1] < w[0] - slack,
            };
            if bad {
                return Err(Error::InvalidInput(format!(
                    "rate table is not {monotonicity:?} at {} ({} then {})",
                    grid[i + 1],
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(Self {
            grid,
            values,
            monotonicity,
            extrapolation,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    fn log_scale(&self) -> bool {
        self.grid[0] > 0.0 && self.values.iter().all(|v| *v > 0.0)
    }

    fn interp_segment(&self, i: usize, x: f64) -> f64 {
        let (x0, x1, y0, y1) = (self.grid[i], self.grid[i + 1], self.values[i], self.values[i + 1]);
        if self.log_scale() {
            let t = (x / x0).ln() / (x1 / x0).ln();
            (y0.ln() + t * (y1 / y0).ln()).exp()
        } else {
            y0 + (x - x0) / (x1 - x0) * (y1 - y0)
        }
    }

    /// The tabulated function at `x`, extrapolated beyond the grid per
    /// [`Extrapolation`].
    pub fn value_at(&self, x: f64) -> f64 {
        let n = self.grid.len();
        if x <= self.grid[0] || x >= self.grid[n - 1] {
            let at_end = x >= self.grid[n - 1];
            let (edge, seg) = if at_end { (n - 1, n - 2) } else { (0, 0) };
            if x == self.grid[edge] || self.extrapolation == Extrapolation::Clamp {
                return self.values[edge];
            }
            return self.interp_segment(seg, x);
        }
        let i = crate::grid::segment(&self.grid, x);
        if x == self.grid[i] {
            return self.values[i];
        }
        self.interp_segment(i, x)
    }

    /// Solves the segment-`i` interpolant for `y`.
    fn solve_segment(&self, i: usize, y: f64) -> f64 {
        let (x0, x1, y0, y1) = (self.grid[i], self.grid[i + 1], self.values[i], self.values[i + 1]);
        let x = if self.log_scale() && y > 0.0 {
            let t = (y / y0).ln() / (y1 / y0).ln();
            (x0.ln() + t * (x1 / x0).ln()).exp()
        } else {
            x0 + (y - y0) / (y1 - y0) * (x1 - x0)
        };
        x.clamp(x0, x1)
    }

    /// `inf{x : f(x) ≤ y}` for nonincreasing tables and `inf{x : f(x) ≥ y}`
    /// for nondecreasing ones, over the tabulated range (left-closed).
    pub fn generalized_inverse(&self, y: f64) -> Result<f64> {
        let hit = |v: f64| match self.monotonicity {
            Monotonicity::Nonincreasing => v <= y,
            Monotonicity::Nondecreasing => v >= y,
        };
        let n = self.grid.len();
        if !hit(self.values[n - 1]) {
            return Err(Error::SaturatedAtGridEnd {
                what: "generalized inverse".into(),
                detail: format!(
                    "level {y:e} not reached; table ends at {:e} with value {:e}",
                    self.grid[n - 1],
                    self.values[n - 1]
                ),
            });
        }
        let i = match self.monotonicity {
            Monotonicity::Nonincreasing => self.values.partition_point(|v| *v > y),
            Monotonicity::Nondecreasing => self.values.partition_point(|v| *v < y),
        };
        // the values are monotone up to MONOTONE_SLACK, so a short scan
        // settles the first hit exactly
        let mut i = i.min(n - 1);
        while i > 0 && hit(self.values[i - 1]) {
            i -= 1;
        }
        while !hit(self.values[i]) {
            i += 1;
        }
        if i == 0 {
            return Ok(self.grid[0]);
        }
        Ok(self.solve_segment(i - 1, y))
    }

    /// The same table with every value multiplied by `k > 0`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }

    /// Rows restricted to `lo ≤ x ≤ hi`.
    pub fn window(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        self.grid
            .iter()
            .zip(&self.values)
            .filter(|(x, _)| **x >= lo && **x <= hi)
            .map(|(x, y)| (*x, *y))
            .unzip()
    }

    /// Writes `abscissa,value` rows with the given column names.
    pub fn write_csv<W: Write>(&self, out: W, headers: [&str; 2]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(headers).map_err(io)?;
        for (x, y) in self.grid.iter().zip(&self.values) {
            w.write_record([format!("{x:.17e}"), format!("{y:.17e}")]).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decreasing() -> RateTable {
        let grid: Vec<f64> = crate::grid::log_space(1.0, 1e4, 41);
        let values = grid.iter().map(|r| 3.0 / r.sqrt()).collect();
        RateTable::new(grid, values, Monotonicity::Nonincreasing, Extrapolation::PowerLaw).unwrap()
    }

    #[test]
    fn rejects_wrong_monotonicity() {
        let r = RateTable::new(
            vec![1.0, 2.0],
            vec![1.0, 2.0],
            Monotonicity::Nonincreasing,
            Extrapolation::Clamp,
        );
        assert!(r.is_err());
        let ok = RateTable::new(
            vec![1.0, 2.0],
            vec![1.0, 1.0 + 1e-14],
            Monotonicity::Nonincreasing,
            Extrapolation::Clamp,
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn power_law_extrapolation_is_exact() {
        let t = decreasing();
        for x in [0.1, 3.7, 2e5] {
            assert!((t.value_at(x) / (3.0 / x.sqrt()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_is_left_closed() {
        let grid = vec![1.0, 2.0, 3.0, 4.0];
        let t = RateTable::new(
            grid,
            vec![5.0, 2.0, 2.0, 1.0],
            Monotonicity::Nonincreasing,
            Extrapolation::Clamp,
        )
        .unwrap();
        assert_eq!(t.generalized_inverse(2.0).unwrap(), 2.0);
        assert_eq!(t.generalized_inverse(7.0).unwrap(), 1.0);
        assert!(t.generalized_inverse(0.5).is_err());
    }

    #[test]
    fn inverse_round_trip() {
        let t = decreasing();
        for s in [2.9, 1.0, 0.1, 0.031] {
            let r = t.generalized_inverse(s).unwrap();
            assert!(t.value_at(r) <= s * (1.0 + 1e-12));
            assert!((r / (3.0 / s).powi(2) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = decreasing();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, ["r", "beta"]).unwrap();
        let mut rd = csv::Reader::from_reader(buf.as_slice());
        let rows: Vec<(f64, f64)> = rd.deserialize().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), t.len());
        assert_eq!(rows[7], (t.grid[7], t.values[7]));
    }
}
