//! Monte Carlo check of `Var(f) ≤ c·α(r)·E(f) + r·Osc²(f)`: c is calibrated
//! on ten test functions and checked on twenty others. Also compares the
//! sampler against the quadrature CDF and finite-difference gradients.
//!
//! ```bash
//! cargo run --release --example empirical_wpi
//! ```

use wpi_conv::config::{Preset, RunConfig};
use wpi_conv::grid::log_space;
use wpi_conv::pipeline::unit_alpha;
use wpi_conv::rates::RatePlan;
use wpi_conv::verify::{
    crosscheck_gradients, crosscheck_points, default_corpus, ks_against_model, sample_convolution, wpi_from_samples,
};

fn main() -> wpi_conv::Result<()> {
    let setup = RunConfig::preset(Preset::Example33).resolve()?;
    let plan = RatePlan::window(1e-4, 0.25);
    let (_, alpha, _) = unit_alpha(&setup, &plan)?;

    let batch = sample_convolution(&setup.model, 101, 1_000_000)?;
    let rep = wpi_from_samples(&batch, &alpha, &default_corpus(1), &log_space(1e-4, 0.25, 25))?;
    let (id, r) = rep.binding.clone().unwrap_or_default();
    println!("c = {:.4e} fixed by {id} at r = {r:.2e}", rep.c);
    let worst = rep
        .holdout
        .iter()
        .max_by(|a, b| (a.slack / a.ci_halfwidth).total_cmp(&(b.slack / b.ci_halfwidth)));
    if let Some(w) = worst {
        println!(
            "tightest holdout: {} at r = {:.2e}, slack {:.2e} ± {:.2e}",
            w.id, w.r, w.slack, w.ci_halfwidth
        );
    }
    println!("holdout violations: {}", rep.holdout_violations);

    let ks_batch = sample_convolution(&setup.model, 5, 100_000)?;
    let ks = ks_against_model(&setup.model, &ks_batch.points)?;
    println!("KS distance {:.5} vs 1% critical {:.5}", ks.distance, ks.critical_1pct);

    let cross = crosscheck_gradients(&setup.model, &crosscheck_points(1, 7, 100, 1.5, 100.0))?;
    println!("largest gradient discrepancy {:.2e}", cross.max_relative());
    Ok(())
}
