//! A custom model from TOML, `V = |x|⁴` with ν = uniform(−1, 1), run through
//! the staged pipeline into a temporary directory. This μ∗ν satisfies a
//! Poincaré inequality, so α levels off instead of following a power law.
//!
//! ```bash
//! cargo run --release --example custom_model
//! ```

use wpi_conv::config::load_config_str;
use wpi_conv::pipeline::run;

const CONFIG: &str = r#"
stages = ["rate", "drift"]
case = "cor_a"

[custom]
dim = 1
potential = { family = "power", p = 4.0 }
source = { kind = "uniform", a = -1.0, b = 1.0 }
"#;

fn main() -> wpi_conv::Result<()> {
    let dir = std::env::temp_dir().join("wpi-conv-custom");
    let cfg = load_config_str(CONFIG, &[format!("output_dir = {:?}", dir.display().to_string())])?;
    let out = run(&cfg);
    for r in &out.records {
        println!("{:?}: {:?} {}", r.stage, r.status, r.detail);
    }
    println!(
        "exit code {} with artifacts in {}",
        out.exit_code,
        out.output_dir.display()
    );
    let alpha = std::fs::read_to_string(out.output_dir.join("alpha.csv"))?;
    let rows: Vec<&str> = alpha.lines().skip(1).collect();
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        println!("alpha.csv first row {first}, last row {last}");
    }
    Ok(())
}
