//! Log-spaced grids and interpolation on them.

/// `n ≥ 2` log-spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2, "bad log grid [{lo}, {hi}] x {n}");
    let (a, b) = (lo.ln(), hi.ln());
    let mut out: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    out[0] = lo;
    out[n - 1] = hi;
    out
}

/// Log-spaced grid with (at least) `per_decade` points per factor of ten.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1) + 1;
    log_space(lo, hi, n)
}

/// Index `i` with `grid[i] ≤ x < grid[i+1]`, clamped to a valid segment.
pub fn segment(grid: &[f64], x: f64) -> usize {
    let i = grid.partition_point(|g| *g <= x);
    i.saturating_sub(1).min(grid.len().saturating_sub(2))
}

/// Linear interpolation of `ln y` against `ln x` within the table,
/// extrapolating the end segments. All values must be positive.
pub fn loglog_interp(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let i = segment(grid, x);
    let (x0, x1) = (grid[i].ln(), grid[i + 1].ln());
    let (y0, y1) = (values[i].ln(), values[i + 1].ln());
    let t = (x.ln() - x0) / (x1 - x0);
    (y0 + t * (y1 - y0)).exp()
}

/// Linear interpolation within the table, extrapolating the end segments.
pub fn lin_interp(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let i = segment(grid, x);
    let t = (x - grid[i]) / (grid[i + 1] - grid[i]);
    values[i] + t * (values[i + 1] - values[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_exact() {
        let g = log_grid(1e-6, 1e-2, 200);
        assert_eq!(g.len(), 801);
        assert_eq!(g[0], 1e-6);
        assert_eq!(*g.last().unwrap(), 1e-2);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn power_law_interpolates_exactly() {
        let g = log_space(1.0, 100.0, 7);
        let v: Vec<f64> = g.iter().map(|x| 3.0 * x.powf(-1.5)).collect();
        let y = loglog_interp(&g, &v, 17.0);
        assert!((y / (3.0 * 17f64.powf(-1.5)) - 1.0).abs() < 1e-12);
    }
}
