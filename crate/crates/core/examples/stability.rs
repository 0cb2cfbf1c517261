//! Compares α for μ = e^{−V} with α for μ∗ν when ν is compactly supported.
//!
//! ```bash
//! cargo run --release --example stability
//! ```

use wpi_conv::config::{Preset, RunConfig};
use wpi_conv::lyapunov::DriftCase;
use wpi_conv::rates::compare_stability;

fn main() -> wpi_conv::Result<()> {
    let mut cfg = RunConfig::preset(Preset::Example33);
    cfg.case = Some(DriftCase::CorA);
    let setup = cfg.resolve()?;
    let rep = compare_stability(&setup.model, &setup.drift, 0.5, &setup.plan, 3.0)?;
    println!(
        "eta0 = {:.4}, sigma = {:.4} (bound {:.4})",
        rep.eta0, rep.sigma, rep.sigma_bound
    );
    println!(
        "alpha ratio spread {:.4}, bounded: {}",
        rep.ratio.max_spread, rep.ratio.bounded
    );
    for (name, fit) in [("mu", &rep.fit_mu), ("mu*nu", &rep.fit_conv)] {
        if let Some(f) = fit {
            println!("{name:<6} {} exponent {:.4}", f.family.name(), f.exponent);
        }
    }
    Ok(())
}
