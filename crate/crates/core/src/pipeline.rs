//! Stage orchestration and run artifacts.
//!
//! A run resolves its configuration, executes the requested stages and
//! their prerequisites in a fixed order, and writes one file per stage into
//! the output directory. Exit status: 0 when every stage succeeded, 2 when a
//! hypothesis or check failed (the files are still written), 1 on errors.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Setup, Stage, SweepParam};
use crate::error::{Error, Result};
use crate::grid;
use crate::lyapunov::{
    check_conditions, default_certificate_radii, drift_report, ConditionsReport, DriftCase, DriftCertificate,
    LyapunovData,
};
use crate::rates::{
    compare_stability, comparison_points, compute_rates, density_bounds, fit_asymptotics, DensityBounds, Family,
    FitReport, RatePlan, RateResult, RateTable, RatioReport, StabilityReport,
};
use crate::verify::{
    crosscheck_gradients, crosscheck_points, default_corpus, empirical_wpi, ks_against_model, sample_convolution,
    semigroup_decay, CrosscheckReport, KsReport, Role, TestFunction, WpiReport,
};

pub const SCHEMA_VERSION: u32 = 1;
/// Gradient cross-check tolerance on relative discrepancy.
pub const CROSSCHECK_TOL: f64 = 1e-6;
/// `|x|` range of the cross-check points.
pub const CROSSCHECK_RANGE: (f64, f64) = (1.5, 100.0);

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_HYPOTHESIS: i32 = 2;

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, body: &T) -> Result<()> {
    let v = Versioned {
        schema_version: SCHEMA_VERSION,
        body,
    };
    let mut text = serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(&dir.join(name), text.as_bytes())
}

fn write_csv(dir: &Path, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_atomic(&dir.join(name), &buf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// A hypothesis or numerical check did not hold.
    Failed,
    Error,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: Status,
    pub detail: String,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupSummary {
    pub label: String,
    pub dim: usize,
    pub case: DriftCase,
    pub r0: f64,
    pub start: f64,
    pub sigma: f64,
    pub delta: f64,
    pub comparison_model: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Seconds since the Unix epoch; the only time-dependent field of a run.
    pub created_unix: u64,
    pub config: RunConfig,
    pub stages_requested: Vec<Stage>,
    pub setup: Option<SetupSummary>,
    pub records: Vec<StageRecord>,
    pub exit_code: i32,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub output_dir: PathBuf,
    pub records: Vec<StageRecord>,
}

/// Summary of the rate stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub plan: RatePlan,
    pub start: f64,
    pub spatial_extent: f64,
    pub phi_at_start: f64,
    /// Density comparison used to transfer α from the comparison model.
    pub comparison: Option<DensityBounds>,
    /// alpha.csv holds `β_φ^{-1}` (constant 1); the certified rate is
    /// `c0` times it, with `c0` from certificate.json.
    pub alpha_constant: f64,
}

/// α with constant 1 for `setup` on `plan`, transferred through the density
/// comparison when the rate model differs from the convolution.
pub fn unit_alpha(setup: &Setup, plan: &RatePlan) -> Result<(RateResult, RateTable, Option<DensityBounds>)> {
    let res = compute_rates(&setup.rate_model, &setup.drift, plan)?;
    if setup.uses_comparison() {
        let bounds = density_bounds(&setup.model, &setup.rate_model, &comparison_points())?;
        let alpha = bounds.transfer(&res.inverse, &plan.s_grid())?;
        Ok((res, alpha, Some(bounds)))
    } else {
        let alpha = res.inverse.clone();
        Ok((res, alpha, None))
    }
}

/// Per-value outcome of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub value: f64,
    pub fit: Option<FitReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub param: SweepParam,
    pub entries: Vec<SweepEntry>,
    /// Ratios among the successful values.
    pub ratio: Option<RatioReport>,
}

/// Runs the rate stage for every value of `param`; failures are recorded
/// per value and the sweep continues.
pub fn sweep(config: &RunConfig, param: SweepParam, values: &[f64]) -> (SweepReport, Vec<RateTable>) {
    let mut entries = Vec::new();
    let mut tables = Vec::new();
    let mut labels = Vec::new();
    for &v in values {
        let cfg = config.with_param(param, v);
        let out = cfg.resolve().and_then(|setup| {
            let (_, alpha, _) = unit_alpha(&setup, &setup.plan)?;
            let fit = fit_asymptotics(&alpha, &Family::ALL, (setup.plan.s_min, setup.plan.s_max)).ok();
            Ok((alpha, fit))
        });
        match out {
            Ok((alpha, fit)) => {
                entries.push(SweepEntry {
                    value: v,
                    fit,
                    error: None,
                });
                labels.push(format!("{}={v}", param.name()));
                tables.push(alpha);
            }
            Err(e) => entries.push(SweepEntry {
                value: v,
                fit: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let same_grid = tables.windows(2).all(|w| w[0].grid == w[1].grid);
    let ratio = (!tables.is_empty() && same_grid).then(|| {
        RatioReport::new(
            labels,
            tables[0].grid.clone(),
            tables.iter().map(|t| t.values.clone()).collect(),
            config.sweep.factor,
        )
    });
    (SweepReport { param, entries, ratio }, tables)
}

/// Wide CSV: `s` and one α column per successful sweep value.
fn write_sweep_csv(out: &mut Vec<u8>, report: &SweepReport, tables: &[RateTable]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut header = vec!["s".to_string()];
    header.extend(
        report
            .entries
            .iter()
            .filter(|e| e.error.is_none())
            .map(|e| format!("alpha_{}={}", report.param.name(), e.value)),
    );
    w.write_record(&header).map_err(io)?;
    if let Some(first) = tables.first() {
        for (i, s) in first.grid.iter().enumerate() {
            let mut row = vec![format!("{s:.17e}")];
            row.extend(tables.iter().map(|t| format!("{:.17e}", t.values[i])));
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_beta_csv(out: &mut Vec<u8>, res: &RateResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["r", "varphi_phi", "beta"]).map_err(io)?;
    for ((r, v), b) in res.varphi.grid.iter().zip(&res.varphi.values).zip(&res.beta.values) {
        w.write_record([format!("{r:.17e}"), format!("{v:.17e}"), format!("{b:.17e}")])
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Verification artifacts for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub holdout_violations: usize,
    pub ks_passed: Option<bool>,
    pub crosscheck_max_relative: f64,
}

struct Ctx<'a> {
    config: &'a RunConfig,
    setup: &'a Setup,
    dir: &'a Path,
    conditions: Option<ConditionsReport>,
    certificate: Option<DriftCertificate>,
    alpha: Option<RateTable>,
}

type StageResult = Result<(Status, String, Vec<String>)>;

impl Ctx<'_> {
    fn conditions(&mut self) -> StageResult {
        let rep = check_conditions(&self.setup.rate_model, &self.setup.drift);
        write_json(self.dir, "conditions.json", &rep)?;
        let failed: Vec<&str> = rep.failed().map(|c| c.name.as_str()).collect();
        let status = if rep.all_passed { Status::Ok } else { Status::Failed };
        let detail = if failed.is_empty() {
            "all conditions hold".into()
        } else {
            format!("failed: {}", failed.join(", "))
        };
        self.conditions = Some(rep);
        Ok((status, detail, vec!["conditions.json".into()]))
    }

    fn drift(&mut self) -> StageResult {
        let (m, cfg) = (&self.setup.rate_model, &self.setup.drift);
        let radii = default_certificate_radii(cfg.start(m));
        let data = LyapunovData::compute(m, cfg, &radii)?;
        let cert = drift_report(m, &data, &radii)?;
        write_json(self.dir, "certificate.json", &cert)?;
        let status = if cert.valid && cert.violation_fraction == 0.0 {
            Status::Ok
        } else {
            Status::Failed
        };
        let detail = format!("violation_fraction = {}, c0 = {:e}", cert.violation_fraction, cert.c0);
        self.certificate = Some(cert);
        Ok((status, detail, vec!["certificate.json".into()]))
    }

    fn rate(&mut self) -> StageResult {
        let (res, alpha, comparison) = unit_alpha(self.setup, &self.setup.plan)?;
        write_csv(self.dir, "alpha.csv", |b| alpha.write_csv(b, ["s", "alpha"]))?;
        write_csv(self.dir, "beta.csv", |b| write_beta_csv(b, &res))?;
        let summary = RateSummary {
            plan: res.plan,
            start: res.data.start,
            spatial_extent: res.spatial_extent,
            phi_at_start: res.data.phi.values[0],
            comparison,
            alpha_constant: 1.0,
        };
        write_json(self.dir, "rate.json", &summary)?;
        self.alpha = Some(alpha);
        Ok((
            Status::Ok,
            format!(
                "{} s-points, spatial extent {:e}",
                self.setup.plan.s_grid().len(),
                res.spatial_extent
            ),
            vec!["alpha.csv".into(), "beta.csv".into(), "rate.json".into()],
        ))
    }

    fn fit(&mut self) -> StageResult {
        let alpha = self.alpha.as_ref().expect("rate runs before fit");
        let plan = &self.setup.plan;
        let rep = fit_asymptotics(alpha, &Family::ALL, (plan.s_min, plan.s_max))?;
        write_json(self.dir, "fit.json", &rep)?;
        Ok((
            Status::Ok,
            format!(
                "{} exponent {:.4} (r² = {:.5})",
                rep.best.family.name(),
                rep.best.exponent,
                rep.best.r_squared
            ),
            vec!["fit.json".into()],
        ))
    }

    fn verify(&mut self) -> StageResult {
        let v = &self.config.verify;
        let setup = self.setup;
        let mut files = Vec::new();
        let plan = RatePlan {
            s_min: v.r_min,
            s_max: v.r_max,
            ..setup.plan
        };
        let (_, alpha, _) = unit_alpha(setup, &plan)?;
        let r_grid = grid::log_space(v.r_min, v.r_max, v.r_points);
        let corpus: Vec<TestFunction> = default_corpus(v.corpus_seed);
        let wpi: WpiReport = empirical_wpi(&setup.model, &alpha, &corpus, &r_grid, v.seed, v.n)?;
        write_json(self.dir, "wpi_report.json", &wpi)?;
        files.push("wpi_report.json".into());

        let ks: Option<KsReport> = if setup.model.dim() == 1 {
            let batch = sample_convolution(&setup.model, v.ks_seed, v.ks_n)?;
            let rep = ks_against_model(&setup.model, &batch.points)?;
            write_json(self.dir, "ks_report.json", &rep)?;
            files.push("ks_report.json".into());
            Some(rep)
        } else {
            None
        };

        let pts = crosscheck_points(
            setup.model.dim(),
            v.crosscheck_seed,
            v.crosscheck_points,
            CROSSCHECK_RANGE.0,
            CROSSCHECK_RANGE.1,
        );
        let cross: CrosscheckReport = crosscheck_gradients(&setup.model, &pts)?;
        write_json(self.dir, "crosscheck.json", &cross)?;
        files.push("crosscheck.json".into());

        let summary = VerifySummary {
            holdout_violations: wpi.holdout_violations,
            ks_passed: ks.map(|k| k.passed),
            crosscheck_max_relative: cross.max_relative(),
        };
        let ok = summary.holdout_violations == 0
            && summary.ks_passed != Some(false)
            && summary.crosscheck_max_relative <= CROSSCHECK_TOL;
        let holdouts = corpus.iter().filter(|f| f.role == Role::Holdout).count();
        let detail = format!(
            "c = {:.4e}; {} holdout violations over {holdouts} functions; KS {}; crosscheck {:.2e}",
            wpi.c,
            summary.holdout_violations,
            match summary.ks_passed {
                Some(true) => "passed",
                Some(false) => "failed",
                None => "skipped (d > 1)",
            },
            summary.crosscheck_max_relative
        );
        Ok((if ok { Status::Ok } else { Status::Failed }, detail, files))
    }

    fn decay(&mut self) -> StageResult {
        let d = &self.config.decay;
        let f = TestFunction::new("decay", d.function, Role::Holdout);
        let trace = semigroup_decay(&self.setup.model, &f, &d.plan())?;
        write_csv(self.dir, "decay.csv", |b| trace.write_csv(b))?;
        Ok((
            Status::Ok,
            format!(
                "final/initial = {:.4}, largest increase = {:.3} CI",
                trace.final_ratio(),
                trace.worst_increase()
            ),
            vec!["decay.csv".into()],
        ))
    }

    fn sweep(&mut self) -> StageResult {
        let s = &self.config.sweep;
        let param = s.param.expect("validated");
        let (report, tables) = sweep(self.config, param, &s.values);
        write_json(self.dir, "sweep.json", &report)?;
        write_csv(self.dir, "sweep.csv", |b| write_sweep_csv(b, &report, &tables))?;
        let failures = report.entries.iter().filter(|e| e.error.is_some()).count();
        let detail = match &report.ratio {
            Some(r) => format!(
                "max ratio spread {:.4} (bound {}), {failures} failed values",
                r.max_spread, r.factor
            ),
            None => format!("{failures} failed values"),
        };
        let status = if failures == 0 { Status::Ok } else { Status::Failed };
        Ok((status, detail, vec!["sweep.json".into(), "sweep.csv".into()]))
    }

    fn stability(&mut self) -> StageResult {
        let st = &self.config.stability;
        let mut cfg = self.setup.drift;
        cfg.case = DriftCase::CorA;
        let rep: StabilityReport =
            match compare_stability(&self.setup.model, &cfg, st.sigma0, &self.setup.plan, st.factor) {
                Ok(r) => r,
                Err(e) if e.is_hypothesis_failure() => {
                    write_json(self.dir, "stability.json", &e.to_string())?;
                    return Ok((Status::Failed, e.to_string(), vec!["stability.json".into()]));
                }
                Err(e) => return Err(e),
            };
        write_json(self.dir, "stability.json", &rep)?;
        let same = match (&rep.fit_mu, &rep.fit_conv) {
            (Some(a), Some(b)) => a.family == b.family,
            _ => false,
        };
        let ok = rep.ratio.bounded && same;
        Ok((
            if ok { Status::Ok } else { Status::Failed },
            format!("eta0 = {:.4}, ratio spread {:.4}", rep.eta0, rep.ratio.max_spread),
            vec!["stability.json".into()],
        ))
    }
}

fn exit_code(records: &[StageRecord]) -> i32 {
    if records.iter().any(|r| r.status == Status::Error) {
        EXIT_ERROR
    } else if records.iter().any(|r| r.status == Status::Failed) {
        EXIT_HYPOTHESIS
    } else {
        EXIT_OK
    }
}

fn summary(setup: &Setup) -> SetupSummary {
    SetupSummary {
        label: setup.label.clone(),
        dim: setup.model.dim(),
        case: setup.drift.case,
        r0: setup.drift.r0,
        start: setup.drift.start(&setup.rate_model),
        sigma: setup.drift.sigma,
        delta: setup.drift.delta,
        comparison_model: setup.uses_comparison(),
    }
}

/// Executes the configured stages and writes the artifacts and manifest.
pub fn run(config: &RunConfig) -> RunOutcome {
    let dir = config.output_dir.clone();
    let mut records = Vec::new();
    let mut setup_summary = None;
    let stages = Stage::closure(&config.stages);
    if let Err(e) = std::fs::create_dir_all(&dir) {
        return RunOutcome {
            exit_code: EXIT_ERROR,
            output_dir: dir,
            records: vec![StageRecord {
                stage: Stage::Conditions,
                status: Status::Error,
                detail: format!("cannot create output directory: {e}"),
                files: Vec::new(),
            }],
        };
    }
    if !stages.is_empty() {
        match config.resolve() {
            Err(e) => records.extend(stages.iter().map(|s| StageRecord {
                stage: *s,
                status: Status::Error,
                detail: format!("setup: {e}"),
                files: Vec::new(),
            })),
            Ok(setup) => {
                setup_summary = Some(summary(&setup));
                run_stages(config, &setup, &dir, &stages, &mut records);
            }
        }
    }
    let exit = exit_code(&records);
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        config: config.clone(),
        stages_requested: config.stages.clone(),
        setup: setup_summary,
        records: records.clone(),
        exit_code: exit,
    };
    let exit = match write_json(&dir, "manifest.json", &manifest) {
        Ok(()) => exit,
        Err(_) => EXIT_ERROR,
    };
    RunOutcome {
        exit_code: exit,
        output_dir: dir,
        records,
    }
}

fn run_stages(config: &RunConfig, setup: &Setup, dir: &Path, stages: &[Stage], records: &mut Vec<StageRecord>) {
    let mut ctx = Ctx {
        config,
        setup,
        dir,
        conditions: None,
        certificate: None,
        alpha: None,
    };
    for &stage in stages {
        let blocked = match stage {
            Stage::Drift | Stage::Rate => ctx
                .conditions
                .as_ref()
                .is_some_and(|c| !c.all_passed)
                .then_some("conditions"),
            Stage::Fit => ctx.alpha.is_none().then_some("rate"),
            Stage::Verify => {
                if ctx.alpha.is_none() {
                    Some("rate")
                } else if ctx.certificate.is_none() {
                    Some("drift")
                } else {
                    None
                }
            }
            _ => None,
        };
        if let Some(dep) = blocked {
            records.push(StageRecord {
                stage,
                status: Status::Skipped,
                detail: format!("{dep} did not complete"),
                files: Vec::new(),
            });
            continue;
        }
        let out = match stage {
            Stage::Conditions => ctx.conditions(),
            Stage::Drift => ctx.drift(),
            Stage::Rate => ctx.rate(),
            Stage::Fit => ctx.fit(),
            Stage::Verify => ctx.verify(),
            Stage::Decay => ctx.decay(),
            Stage::Sweep => ctx.sweep(),
            Stage::Stability => ctx.stability(),
        };
        records.push(match out {
            Ok((status, detail, files)) => StageRecord {
                stage,
                status,
                detail,
                files,
            },
            Err(e) => StageRecord {
                stage,
                status: if e.is_hypothesis_failure() {
                    Status::Failed
                } else {
                    Status::Error
                },
                detail: e.to_string(),
                files: Vec::new(),
            },
        });
    }
}
