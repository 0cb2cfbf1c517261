//! Variance of `P_t f` along the Langevin semigroup for `f = tanh`, by
//! nested Euler–Maruyama simulation.
//!
//! ```bash
//! cargo run --release --example semigroup_decay
//! ```

use wpi_conv::config::{Preset, RunConfig};
use wpi_conv::verify::{semigroup_decay, DecayPlan, Role, Shape, TestFunction};

fn main() -> wpi_conv::Result<()> {
    let setup = RunConfig::preset(Preset::Example33).resolve()?;
    let f = TestFunction::new("tanh", Shape::Ramp { a: 0.0, w: 1.0 }, Role::Holdout);
    let plan = DecayPlan {
        t_grid: (0..=10).map(|i| i as f64).collect(),
        n_paths: 128,
        inner: 128,
        ..DecayPlan::default()
    };
    let trace = semigroup_decay(&setup.model, &f, &plan)?;
    for ((t, v), ci) in trace
        .times
        .iter()
        .zip(&trace.variance_estimates)
        .zip(&trace.confidence_halfwidths)
    {
        println!("t = {t:>4}: Var(P_t f) = {v:.4e} ± {ci:.1e}");
    }
    println!("final/initial = {:.3}", trace.final_ratio());
    Ok(())
}
