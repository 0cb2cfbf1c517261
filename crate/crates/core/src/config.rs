//! Run configuration: a preset or a custom model, the stages to run, grids,
//! seeds and the output directory, read from TOML.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::{select_r0, DriftCase, DriftConfig};
use crate::model::{ConvolutionModel, Potential, Profile, SourceMeasure, SourceSpec};
use crate::quad::QuadratureSpec;
use crate::rates::RatePlan;
use crate::verify::{DecayPlan, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    /// `V = c + (1+x²)^{δ/2}`, ν on ℤ with weights `∝ 1/(1+|i|^{1+p})`.
    #[serde(rename = "example_3_1")]
    Example31,
    /// `V = c + |x|^p`, `0 < p < 1`, compact ν.
    #[serde(rename = "example_3_2")]
    Example32,
    /// `V = c + (d+p) log(1+|x|)`, compact ν.
    #[serde(rename = "example_3_3")]
    Example33,
    /// `V = c + d log(1+|x|) + p log log(e+|x|)`, `p > 1`, compact ν.
    #[serde(rename = "example_3_4")]
    Example34,
    /// `V = c + (1+x²)^{δ/2}` with ν of density `∝ 1/(1+|z|^{1+p})`.
    #[serde(rename = "lemma_3_2")]
    Lemma32,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Example31,
        Preset::Example32,
        Preset::Example33,
        Preset::Example34,
        Preset::Lemma32,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Example31 => "example_3_1",
            Preset::Example32 => "example_3_2",
            Preset::Example33 => "example_3_3",
            Preset::Example34 => "example_3_4",
            Preset::Lemma32 => "lemma_3_2",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::Example31 => {
                "V = c + (1+x^2)^(delta/2), nu = lattice weights 1/(1+|i|^(1+p)); expect alpha ~ s^(-2/p)"
            }
            Preset::Example32 => "V = c + |x|^p (0<p<1), nu = uniform(-R,R); expect alpha ~ [1+log(1+1/s)]^(2(1-p)/p)",
            Preset::Example33 => "V = c + (d+p) log(1+|x|), nu = uniform(-R,R); expect alpha ~ s^(-2/p)",
            Preset::Example34 => {
                "V = c + d log(1+|x|) + p log log(e+|x|) (p>1), nu = uniform(-R,R); expect log alpha ~ s^(-1/(p-1))"
            }
            Preset::Lemma32 => "V = c + (1+x^2)^(delta/2), nu = density 1/(1+|z|^(1+p)); expect alpha ~ s^(-2/p)",
        }
    }

    fn default_p(self) -> f64 {
        match self {
            Preset::Example31 | Preset::Lemma32 => 1.0,
            Preset::Example32 => 0.6,
            Preset::Example33 | Preset::Example34 => 2.0,
        }
    }

    fn lattice_family(self) -> bool {
        matches!(self, Preset::Example31 | Preset::Lemma32)
    }

    /// The s-window where the asymptotic order is visible at desk scale.
    fn default_plan(self) -> RatePlan {
        match self {
            // smaller s needs radii beyond the f64 range
            Preset::Example34 => RatePlan::window(1e-2, 1e-1),
            _ => RatePlan::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Conditions,
    Drift,
    Rate,
    Fit,
    Verify,
    Decay,
    Sweep,
    Stability,
}

impl Stage {
    fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Drift | Stage::Rate => &[Stage::Conditions],
            Stage::Fit => &[Stage::Rate],
            Stage::Verify => &[Stage::Rate, Stage::Drift],
            _ => &[],
        }
    }

    /// `stages` with their prerequisites, in execution order.
    pub fn closure(stages: &[Stage]) -> Vec<Stage> {
        let mut set: BTreeSet<Stage> = BTreeSet::new();
        let mut todo: Vec<Stage> = stages.to_vec();
        while let Some(s) = todo.pop() {
            if set.insert(s) {
                todo.extend(s.requires());
            }
        }
        set.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomModel {
    pub dim: usize,
    pub potential: Profile,
    pub source: SourceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    /// Monte Carlo sample size for the WPI check.
    pub n: usize,
    pub seed: u64,
    pub corpus_seed: u64,
    /// WPI grid: `r_points` log-spaced values in `[r_min, r_max]`.
    pub r_min: f64,
    pub r_max: f64,
    pub r_points: usize,
    /// Sample size of the KS comparison (d = 1).
    pub ks_n: usize,
    pub ks_seed: u64,
    pub crosscheck_points: usize,
    pub crosscheck_seed: u64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            n: 1_000_000,
            seed: 101,
            corpus_seed: 1,
            r_min: 1e-4,
            r_max: 0.25,
            r_points: 25,
            ks_n: 100_000,
            ks_seed: 5,
            crosscheck_points: 100,
            crosscheck_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecaySettings {
    pub t_grid: Vec<f64>,
    pub n_paths: usize,
    pub inner: usize,
    pub dt: f64,
    pub seed: u64,
    pub function: Shape,
}

impl Default for DecaySettings {
    fn default() -> Self {
        let p = DecayPlan::default();
        Self {
            t_grid: p.t_grid,
            n_paths: p.n_paths,
            inner: p.inner,
            dt: p.dt,
            seed: p.seed,
            function: Shape::Ramp { a: 0.0, w: 1.0 },
        }
    }
}

impl DecaySettings {
    pub fn plan(&self) -> DecayPlan {
        DecayPlan {
            t_grid: self.t_grid.clone(),
            n_paths: self.n_paths,
            inner: self.inner,
            dt: self.dt,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Sigma,
    Delta,
    P,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Sigma => "sigma",
            SweepParam::Delta => "delta",
            SweepParam::P => "p",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma" => Ok(SweepParam::Sigma),
            "delta" => Ok(SweepParam::Delta),
            "p" => Ok(SweepParam::P),
            _ => Err(Error::config(
                "sweep.param",
                format!("unknown sweep parameter `{s}` (sigma, delta, p)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub param: Option<SweepParam>,
    pub values: Vec<f64>,
    /// Pairwise α ratios must vary by less than this factor.
    pub factor: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            param: None,
            values: Vec::new(),
            factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySettings {
    pub sigma0: f64,
    pub factor: f64,
}

impl Default for StabilitySettings {
    fn default() -> Self {
        Self {
            sigma0: 0.5,
            factor: 3.0,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("wpi-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Support radius of the compact ν in the `example_3_2` to `example_3_4` presets.
    #[serde(default, rename = "R", skip_serializing_if = "Option::is_none")]
    pub support_radius: Option<f64>,
    /// Potential exponent δ for the lattice presets; the case (b) δ
    /// otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<DriftCase>,
    /// Drift radius; auto-selected when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(default)]
    pub stages: Vec<Stage>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomModel>,
    /// Rate grids; the preset's window when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RatePlan>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub verify: VerifySettings,
    #[serde(default)]
    pub decay: DecaySettings,
    #[serde(default)]
    pub sweep: SweepSettings,
    #[serde(default)]
    pub stability: StabilitySettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            p: None,
            d: None,
            support_radius: None,
            delta: None,
            sigma: None,
            case: None,
            r0: None,
            stages: Vec::new(),
            output_dir: default_output_dir(),
            custom: None,
            rate: None,
            quadrature: QuadratureSpec::default(),
            verify: VerifySettings::default(),
            decay: DecaySettings::default(),
            sweep: SweepSettings::default(),
            stability: StabilitySettings::default(),
        }
    }
}

/// A resolved configuration: the models and drift settings a run uses.
#[derive(Debug, Clone)]
pub struct Setup {
    pub label: String,
    /// The convolution μ∗ν itself.
    pub model: ConvolutionModel,
    /// The model the drift and rate stages run on. It differs from `model`
    /// for the lattice preset, whose rate comes from the density
    /// comparison model.
    pub rate_model: ConvolutionModel,
    pub drift: DriftConfig,
    pub plan: RatePlan,
}

impl Setup {
    pub fn uses_comparison(&self) -> bool {
        self.model.source().spec() != self.rate_model.source().spec()
    }
}

fn uniform_or_atoms(r: f64, d: usize) -> SourceSpec {
    if d == 1 {
        SourceSpec::Uniform { a: -r, b: r }
    } else {
        let mut e = vec![0.0; d];
        e[0] = r;
        SourceSpec::Atoms {
            points: vec![e.clone(), e.iter().map(|v| -v).collect()],
            weights: vec![0.5, 0.5],
        }
    }
}

fn cfg(path: &str, message: impl Into<String>) -> Error {
    Error::config(path, message)
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        Self {
            preset: Some(preset),
            ..Self::default()
        }
    }

    fn p_value(&self) -> Option<f64> {
        self.preset.map(|pr| self.p.unwrap_or(pr.default_p()))
    }

    /// Checks structure and parameter ranges without building models.
    pub fn validate(&self) -> Result<()> {
        match (&self.preset, &self.custom) {
            (Some(_), Some(_)) => return Err(cfg("preset", "give either a preset or a custom model, not both")),
            (None, None) => return Err(cfg("preset", "a preset or a custom model is required")),
            _ => {}
        }
        if let Some(pr) = self.preset {
            let p = self.p_value().unwrap();
            let name = pr.name();
            match pr {
                Preset::Example32 if !(p > 0.0 && p < 1.0) => {
                    return Err(cfg("p", format!("{name} requires 0 < p < 1, got {p}")))
                }
                Preset::Example34 if !(p > 1.0) => return Err(cfg("p", format!("{name} requires p > 1, got {p}"))),
                _ if !(p > 0.0) => return Err(cfg("p", format!("{name} requires p > 0, got {p}"))),
                _ => {}
            }
            if pr.lattice_family() {
                if self.d.is_some_and(|d| d != 1) {
                    return Err(cfg("d", format!("{name} is one-dimensional")));
                }
                if self.support_radius.is_some() {
                    return Err(cfg("R", format!("{name} has a fixed ν with unbounded support")));
                }
                if let Some(delta) = self.delta {
                    if !(delta > 0.0 && delta < 1.0) {
                        return Err(cfg("delta", format!("{name} requires 0 < delta < 1, got {delta}")));
                    }
                }
            } else {
                if self.support_radius.is_some_and(|r| !(r > 0.0)) {
                    return Err(cfg("R", "support radius must be positive"));
                }
                if let Some(delta) = self.delta {
                    if !(delta > 0.0 && delta < 1.0) {
                        return Err(cfg("delta", format!("delta must lie in (0, 1), got {delta}")));
                    }
                }
            }
            if self.d == Some(0) {
                return Err(cfg("d", "dimension must be positive"));
            }
        } else {
            for (key, set) in [
                ("p", self.p.is_some()),
                ("d", self.d.is_some()),
                ("R", self.support_radius.is_some()),
            ] {
                if set {
                    return Err(cfg(key, "preset overrides do not apply to a custom model"));
                }
            }
            let c = self.custom.as_ref().unwrap();
            if c.dim == 0 {
                return Err(cfg("custom.dim", "dimension must be positive"));
            }
            c.potential
                .validate()
                .map_err(|e| cfg("custom.potential", e.to_string()))?;
        }
        if self.sigma.is_some_and(|s| !(s > 0.0)) {
            return Err(cfg("sigma", "sigma must be positive"));
        }
        if self.r0.is_some_and(|r| !(r > 0.0)) {
            return Err(cfg("r0", "drift radius must be positive"));
        }
        if let Some(plan) = &self.rate {
            plan.validate().map_err(|e| cfg("rate", e.to_string()))?;
        }
        self.decay.plan().validate().map_err(|e| cfg("decay", e.to_string()))?;
        let v = &self.verify;
        if !(v.r_min > 0.0 && v.r_max > v.r_min && v.r_max < 1.0) || v.r_points < 2 || v.n < 2 || v.ks_n < 2 {
            return Err(cfg(
                "verify",
                "need 0 < r_min < r_max < 1, r_points ≥ 2 and sample sizes ≥ 2",
            ));
        }
        if self.stages.contains(&Stage::Sweep) && (self.sweep.param.is_none() || self.sweep.values.is_empty()) {
            return Err(cfg("sweep", "the sweep stage needs sweep.param and sweep.values"));
        }
        Ok(())
    }

    /// The rate plan in effect.
    pub fn plan(&self) -> RatePlan {
        self.rate
            .unwrap_or_else(|| self.preset.map_or_else(RatePlan::default, Preset::default_plan))
    }

    /// Builds the models and resolves the drift radius.
    pub fn resolve(&self) -> Result<Setup> {
        self.validate()?;
        let q = self.quadrature;
        let (label, model, rate_model, default_case) = match (self.preset, &self.custom) {
            (Some(pr), _) => {
                let p = self.p_value().unwrap();
                let d = self.d.unwrap_or(1);
                let build = |profile: Profile, src: SourceSpec| -> Result<ConvolutionModel> {
                    ConvolutionModel::new(Potential::new(profile, d)?, SourceMeasure::new(src, d)?, q)
                };
                let r = self.support_radius.unwrap_or(1.0);
                let label = format!("{} p={p}", pr.name());
                match pr {
                    Preset::Example31 | Preset::Lemma32 => {
                        let kappa = self.delta.unwrap_or(0.5);
                        let profile = Profile::SmoothPower { kappa };
                        let comparison = build(profile.clone(), SourceSpec::PowerTail { p })?;
                        let model = if pr == Preset::Example31 {
                            build(profile, SourceSpec::Lattice { p })?
                        } else {
                            comparison.clone()
                        };
                        (label, model, comparison, DriftCase::A)
                    }
                    Preset::Example32 => {
                        let m = build(Profile::Power { p }, uniform_or_atoms(r, d))?;
                        (label, m.clone(), m, DriftCase::CorA)
                    }
                    Preset::Example33 => {
                        let m = build(Profile::LogTail { coef: d as f64 + p }, uniform_or_atoms(r, d))?;
                        (label, m.clone(), m, DriftCase::CorA)
                    }
                    Preset::Example34 => {
                        let m = build(Profile::LogLog { a: d as f64, p }, uniform_or_atoms(r, d))?;
                        (label, m.clone(), m, DriftCase::CorA)
                    }
                }
            }
            (None, Some(c)) => {
                let m = ConvolutionModel::new(
                    Potential::new(c.potential.clone(), c.dim)?,
                    SourceMeasure::new(c.source.clone(), c.dim)?,
                    q,
                )?;
                let case = if m.source().support_radius().is_finite() {
                    DriftCase::CorA
                } else {
                    DriftCase::A
                };
                ("custom".to_string(), m.clone(), m, case)
            }
            (None, None) => unreachable!("validated"),
        };
        let mut drift = DriftConfig::new(self.case.unwrap_or(default_case), 1.0, model.dim());
        if let Some(s) = self.sigma {
            drift.sigma = s;
        }
        let lattice = self.preset.is_some_and(Preset::lattice_family);
        if let (Some(delta), false) = (self.delta, lattice) {
            drift.delta = delta;
        }
        drift.r0 = match self.r0 {
            Some(r) => r,
            None => select_r0(&rate_model, &drift)?,
        };
        Ok(Setup {
            label,
            model,
            rate_model,
            drift,
            plan: self.plan(),
        })
    }

    /// The configuration with one swept parameter replaced.
    pub fn with_param(&self, param: SweepParam, value: f64) -> Self {
        let mut c = self.clone();
        match param {
            SweepParam::Sigma => c.sigma = Some(value),
            SweepParam::Delta => c.delta = Some(value),
            SweepParam::P => c.p = Some(value),
        }
        c
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("", e.to_string()))
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "overrides have the form key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut t = table;
    for part in &parts[..parts.len() - 1] {
        let entry = t
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key.trim(), format!("`{part}` is not a table")))?;
    }
    t.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Parses TOML text, applies `key=value` overrides (dotted keys reach into
/// tables) and validates the result. Unknown keys are rejected with their
/// path.
pub fn load_config_str(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::config("", e.message().to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        Error::config(
            if path == "." { String::new() } else { path },
            e.into_inner().to_string(),
        )
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// [`load_config_str`] on a file.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    load_config_str(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_preset() {
        let c = load_config_str("preset = \"example_3_3\"\np = 2\nd = 1\n", &[]).unwrap();
        assert_eq!(c.preset, Some(Preset::Example33));
        assert_eq!(c.plan(), RatePlan::default());
        assert!(c.stages.is_empty());
    }

    #[test]
    fn preset_range_violation() {
        let e = load_config_str("preset = \"example_3_2\"\np = 1.5\n", &[]).unwrap_err();
        assert!(e.to_string().contains("requires 0 < p < 1"), "{e}");
        let e = load_config_str("preset = \"example_3_4\"\np = 0.5\n", &[]).unwrap_err();
        assert!(e.to_string().contains("requires p > 1"), "{e}");
    }

    #[test]
    fn unknown_key_has_path() {
        let e = load_config_str("preset = \"example_3_3\"\n[verify]\nsamples = 3\n", &[]).unwrap_err();
        match e {
            Error::Config { path, .. } => assert!(path.starts_with("verify"), "{path}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn custom_round_trip() {
        let text = r#"
stages = ["rate", "fit"]
output_dir = "quartic"

[custom]
dim = 1
potential = { family = "polynomial", coeffs = [0.0, 0.0, 0.0, 0.0, 1.0] }
source = { kind = "uniform", a = -1.0, b = 1.0 }
"#;
        let c = load_config_str(text, &[]).unwrap();
        let again = load_config_str(&c.to_toml().unwrap(), &[]).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let c = load_config_str(
            "preset = \"example_3_3\"\n",
            &[
                "p=4".into(),
                "verify.n=1000".into(),
                "stages=[\"rate\"]".into(),
                "case=cor_b".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.p, Some(4.0));
        assert_eq!(c.verify.n, 1000);
        assert_eq!(c.stages, vec![Stage::Rate]);
        assert_eq!(c.case, Some(DriftCase::CorB));
    }

    #[test]
    fn closure_adds_prerequisites() {
        assert_eq!(
            Stage::closure(&[Stage::Fit]),
            vec![Stage::Conditions, Stage::Rate, Stage::Fit]
        );
        assert_eq!(
            Stage::closure(&[Stage::Verify]),
            vec![Stage::Conditions, Stage::Drift, Stage::Rate, Stage::Verify]
        );
        assert!(Stage::closure(&[]).is_empty());
    }

    #[test]
    fn lattice_preset_uses_comparison_model() {
        let s = RunConfig::preset(Preset::Example31).resolve().unwrap();
        assert!(s.uses_comparison());
        assert_eq!(s.drift.case, DriftCase::A);
        let s = RunConfig::preset(Preset::Lemma32).resolve().unwrap();
        assert!(!s.uses_comparison());
    }
}
