//! ν supported on ℤ with weights `∝ 1/(1+|i|^{1+p})`. The rate is computed
//! on a smooth comparison model and moved over with two-sided density
//! bounds; the fitted order is `2/p`.
//!
//! ```bash
//! cargo run --release --example lattice_source
//! ```

use wpi_conv::config::{Preset, RunConfig};
use wpi_conv::pipeline::unit_alpha;
use wpi_conv::rates::{fit_asymptotics, Family};

fn main() -> wpi_conv::Result<()> {
    for p in [1.0, 2.0] {
        let mut cfg = RunConfig::preset(Preset::Example31);
        cfg.p = Some(p);
        // at δ = ½ the p = 2 order only shows below s ≈ 1e-6
        cfg.delta = Some(0.9);
        let setup = cfg.resolve()?;
        let (_, alpha, bounds) = unit_alpha(&setup, &setup.plan)?;
        let b = bounds.expect("lattice presets compare densities");
        let fit = fit_asymptotics(&alpha, &Family::ALL, (setup.plan.s_min, setup.plan.s_max))?;
        println!(
            "p = {p}: c1 = {:.4}, c2 = {:.4}, {} exponent {:.3} (expected {:.3})",
            b.c1,
            b.c2,
            fit.best.family.name(),
            fit.best.exponent,
            2.0 / p
        );
    }
    Ok(())
}
