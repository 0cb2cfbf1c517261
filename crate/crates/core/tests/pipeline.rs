use std::path::Path;
use std::process::Command;

use wpi_conv::config::{load_config_str, Preset, RunConfig, Stage, SweepParam};
use wpi_conv::pipeline::{run, sweep, Status, EXIT_ERROR, EXIT_HYPOTHESIS, EXIT_OK};
use wpi_conv::rates::Family;
use wpi_conv::Error;

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn config(preset: Preset, dir: &Path, stages: &[Stage]) -> RunConfig {
    let mut c = RunConfig::preset(preset);
    c.output_dir = dir.to_path_buf();
    c.stages = stages.to_vec();
    c
}

#[test]
fn empty_stage_list_writes_only_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&config(Preset::Example33, dir.path(), &[]));
    assert_eq!(out.exit_code, EXIT_OK);
    let files: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(files, vec!["manifest.json"]);
    assert_eq!(json(&dir.path().join("manifest.json"))["schema_version"], 1);
}

#[test]
fn log_tail_rate_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(Preset::Example33, dir.path(), &[Stage::Fit]);
    c.p = Some(2.0);
    let out = run(&c);
    assert_eq!(out.exit_code, EXIT_OK);
    let stages: Vec<Stage> = out.records.iter().map(|r| r.stage).collect();
    assert_eq!(stages, vec![Stage::Conditions, Stage::Rate, Stage::Fit]);

    let fit = json(&dir.path().join("fit.json"));
    assert_eq!(fit["best"]["family"], "power");
    assert!((fit["best"]["exponent"].as_f64().unwrap() - 1.0).abs() < 0.15);

    let mut rdr = csv::Reader::from_path(dir.path().join("alpha.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["s", "alpha"]);
    let rows: Vec<(f64, f64)> = rdr.deserialize().map(|r| r.unwrap()).collect();
    assert!(rows.windows(2).all(|w| w[0].0 < w[1].0 && w[1].1 <= w[0].1));
    let rdr = csv::Reader::from_path(dir.path().join("beta.csv"))
        .unwrap()
        .headers()
        .unwrap()
        .clone();
    assert_eq!(rdr, vec!["r", "varphi_phi", "beta"]);
}

#[test]
fn small_drift_radius_fails_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(Preset::Example32, dir.path(), &[Stage::Rate]);
    c.r0 = Some(0.1);
    let out = run(&c);
    assert_eq!(out.exit_code, EXIT_HYPOTHESIS);
    assert_eq!(out.records[0].status, Status::Failed);
    assert_eq!(out.records[1].status, Status::Skipped);
    let cond = json(&dir.path().join("conditions.json"));
    assert_eq!(cond["all_passed"], false);
    let eta = cond["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "eta_positive")
        .unwrap();
    assert_eq!(eta["passed"], false);
    assert!(eta["infimum"].as_f64().unwrap() < 0.0);
    assert!(!dir.path().join("alpha.csv").exists());
}

#[test]
fn verify_pulls_in_rate_and_drift() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(Preset::Example33, dir.path(), &[Stage::Verify]);
    c.verify.n = 20_000;
    c.verify.ks_n = 5_000;
    c.verify.crosscheck_points = 10;
    let out = run(&c);
    let stages: Vec<Stage> = out.records.iter().map(|r| r.stage).collect();
    assert_eq!(
        stages,
        vec![Stage::Conditions, Stage::Drift, Stage::Rate, Stage::Verify]
    );
    for f in [
        "certificate.json",
        "wpi_report.json",
        "ks_report.json",
        "crosscheck.json",
    ] {
        assert_eq!(json(&dir.path().join(f))["schema_version"], 1, "{f}");
    }
}

#[test]
fn artifacts_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let stages = [Stage::Fit, Stage::Drift, Stage::Verify, Stage::Decay];
    let outs: Vec<_> = [a.path(), b.path()]
        .iter()
        .map(|d| {
            let mut c = config(Preset::Example33, d, &stages);
            c.verify.n = 20_000;
            c.verify.ks_n = 5_000;
            c.decay.n_paths = 8;
            c.decay.inner = 8;
            c.decay.t_grid = vec![0.0, 0.1];
            run(&c)
        })
        .collect();
    assert_eq!(outs[0].exit_code, outs[1].exit_code);
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() > 8);
    for n in names.iter().filter(|n| *n != "manifest.json") {
        let x = std::fs::read(a.path().join(n)).unwrap();
        let y = std::fs::read(b.path().join(n)).unwrap();
        assert!(x == y, "{n:?} differs");
    }
    let (mut m1, mut m2) = (
        json(&a.path().join("manifest.json")),
        json(&b.path().join("manifest.json")),
    );
    for m in [&mut m1, &mut m2] {
        m["created_unix"] = 0.into();
        m["config"]["output_dir"] = "".into();
    }
    assert_eq!(m1, m2);
}

#[test]
fn out_of_range_preset_parameter() {
    let err = load_config_str("preset = \"example_3_2\"\np = 1.5\n", &[]).unwrap_err();
    assert!(matches!(&err, Error::Config { .. }));
    assert!(err.to_string().contains("requires 0 < p < 1"), "{err}");
}

#[test]
fn sigma_sweep_ratios_stay_bounded() {
    let c = RunConfig::preset(Preset::Example33);
    let (rep, tables) = sweep(&c, SweepParam::Sigma, &[1.0, 2.0, 5.0]);
    assert_eq!(tables.len(), 3);
    let ratio = rep.ratio.unwrap();
    assert_eq!(ratio.spreads.len(), 3);
    assert!(ratio.bounded && ratio.max_spread < 2.0);
}

#[test]
fn single_value_sweep_matches_plain_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(Preset::Example33, dir.path(), &[Stage::Rate]);
    c.sigma = Some(2.0);
    run(&c);
    let (rep, tables) = sweep(&c, SweepParam::Sigma, &[2.0]);
    assert_eq!(rep.ratio.unwrap().max_spread, 1.0);
    let mut rdr = csv::Reader::from_path(dir.path().join("alpha.csv")).unwrap();
    let alpha: Vec<f64> = rdr.deserialize::<(f64, f64)>().map(|r| r.unwrap().1).collect();
    assert_eq!(alpha, tables[0].values);
}

#[test]
fn lattice_p_sweep_orders() {
    let mut c = RunConfig::preset(Preset::Example31);
    // at δ = ½ the p = 2 order only appears below the default s window
    c.delta = Some(0.9);
    let (rep, _) = sweep(&c, SweepParam::P, &[1.0, 2.0]);
    for (e, want) in rep.entries.iter().zip([2.0, 1.0]) {
        let f = &e.fit.as_ref().unwrap().best;
        assert_eq!(f.family, Family::Power);
        assert!(
            (f.exponent - want).abs() < 0.15 * want,
            "p = {}: {}",
            e.value,
            f.exponent
        );
    }
}

#[test]
fn sweep_records_failures_and_continues() {
    let c = RunConfig::preset(Preset::Example32);
    let (rep, tables) = sweep(&c, SweepParam::P, &[0.6, 1.5]);
    assert!(rep.entries[0].error.is_none());
    assert!(rep.entries[1].error.as_deref().unwrap().contains("0 < p < 1"));
    assert_eq!(tables.len(), 1);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_wpi-conv"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out_dir = dir.path().join("out");
    std::fs::write(
        &cfg,
        format!(
            "preset = \"example_3_2\"\nstages = [\"fit\"]\noutput_dir = {:?}\n",
            out_dir.display().to_string()
        ),
    )
    .unwrap();
    let path = cfg.to_str().unwrap();

    let ok = cli(&["run", path]);
    assert_eq!(
        ok.status.code(),
        Some(EXIT_OK),
        "{}",
        String::from_utf8_lossy(&ok.stdout)
    );
    assert!(out_dir.join("fit.json").exists());

    let failed = cli(&["run", path, "--set", "r0=0.1"]);
    assert_eq!(failed.status.code(), Some(EXIT_HYPOTHESIS));

    let bad = cli(&["run", path, "--set", "p=1.5"]);
    assert_eq!(bad.status.code(), Some(EXIT_ERROR));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("0 < p < 1"));

    let unknown = cli(&["validate", path, "--set", "verify.bogus=1"]);
    assert_eq!(unknown.status.code(), Some(EXIT_ERROR));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("verify"));

    assert_eq!(cli(&["validate", path]).status.code(), Some(EXIT_OK));

    let presets = cli(&["presets"]);
    let text = String::from_utf8_lossy(&presets.stdout);
    for p in Preset::ALL {
        assert!(text.contains(p.name()));
    }

    let sw = cli(&["sweep", path, "--param", "sigma", "--values", "1,2"]);
    assert_eq!(sw.status.code(), Some(EXIT_OK));
    let mut rdr = csv::Reader::from_path(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["s", "alpha_sigma=1", "alpha_sigma=2"]);
}
