//! Checks the Lyapunov conditions and certifies `LW ≤ −φW + b·1_{B(r0)}`
//! for the compact-support presets, in both drift constructions.
//!
//! ```bash
//! cargo run --release --example drift_certificate
//! ```

use wpi_conv::config::{Preset, RunConfig};
use wpi_conv::lyapunov::{check_conditions, default_certificate_radii, drift_report, DriftCase, LyapunovData};

fn main() -> wpi_conv::Result<()> {
    for preset in [Preset::Example32, Preset::Example33, Preset::Example34] {
        for (case, sigma, delta) in [(DriftCase::CorA, Some(1.0), None), (DriftCase::CorB, None, Some(0.75))] {
            let mut cfg = RunConfig::preset(preset);
            cfg.case = Some(case);
            cfg.sigma = sigma;
            cfg.delta = delta;
            let setup = cfg.resolve()?;
            let (m, dc) = (&setup.rate_model, &setup.drift);

            let conditions = check_conditions(m, dc);
            let radii = default_certificate_radii(dc.start(m));
            let data = LyapunovData::compute(m, dc, &radii)?;
            let cert = drift_report(m, &data, &radii)?;
            println!(
                "{:<12} {:?}  r0 = {:.3}  conditions {}  violations {}  b = {:.3e}  c0 = {:.3e}",
                preset.name(),
                case,
                dc.r0,
                if conditions.all_passed { "ok" } else { "FAILED" },
                cert.violation_fraction,
                cert.b,
                cert.c0
            );
        }
    }
    Ok(())
}
