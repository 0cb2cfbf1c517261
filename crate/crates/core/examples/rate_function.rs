//! α for the logarithmic potential `V = c + 3 log(1+|x|)` convolved with
//! uniform(−1, 1), and the fitted asymptotic order.
//!
//! ```bash
//! cargo run --release --example rate_function
//! ```

use wpi_conv::config::{Preset, RunConfig};
use wpi_conv::rates::{compute_rates, fit_asymptotics, Family};

fn main() -> wpi_conv::Result<()> {
    let mut cfg = RunConfig::preset(Preset::Example33);
    cfg.p = Some(2.0);
    let setup = cfg.resolve()?;
    println!("{} with R0 = {:.3}", setup.label, setup.drift.r0);

    let res = compute_rates(&setup.rate_model, &setup.drift, &setup.plan)?;
    for s in [1e-6, 1e-5, 1e-4, 1e-3, 1e-2] {
        println!("alpha({s:e}) = {:.4e}", res.inverse.value_at(s));
    }

    let fit = fit_asymptotics(&res.inverse, &Family::ALL, (setup.plan.s_min, setup.plan.s_max))?;
    for c in &fit.candidates {
        println!(
            "{:<14} exponent {:>8.4}  r² {:.6}",
            c.family.name(),
            c.exponent,
            c.r_squared
        );
    }
    println!(
        "best: {} (expected power with exponent 2/p = 1)",
        fit.best.family.name()
    );
    Ok(())
}
