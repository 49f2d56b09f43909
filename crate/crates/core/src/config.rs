//! JSON run configuration: one flat section per module.
//!
//! ```json
//! {
//!   "model": {"p": 2, "eps": 0.1, "T": 1, "M": 100, "n_cells": 64, "length": 1},
//!   "reaction": {"kind": "linear", "scale": 0.5},
//!   "source": {"preset": "constant", "params": {"value": 2}},
//!   "noise": {"sigma": 0.1, "J": 16, "base_seed": 7},
//!   "output": {"dir": "out", "mode": "thin"}
//! }
//! ```
//!
//! Only `model` is required. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::harness::{ConvergenceSetup, EpsStudySetup, ManufacturedCase};
use crate::mesh::{Grid1D, GridFunction};
use crate::model::{InitialDatum, ManufacturedSolution, ModelParams, ReactionSpec, SourceSpec};
use crate::noise::{NoiseModel, DEFAULT_MODES};
use crate::operator::OperatorContext;
use crate::solver::SolverConfig;
use crate::stepper::{Problem, StorageMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub p: f64,
    pub eps: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub steps: usize,
    /// Defaults to the reaction's Lipschitz constant.
    #[serde(rename = "L_beta", default, skip_serializing_if = "Option::is_none")]
    pub l_beta: Option<f64>,
    pub length: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourcePreset {
    #[default]
    Zero,
    /// params: `value`
    Constant,
    /// params: `slope`; `f = slope * t`
    TimeLinear,
    /// params: `decay` (default true); the source of the manufactured solution
    Manufactured,
    /// params: `times`, `xs`, `values`
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    #[serde(default)]
    pub preset: SourcePreset,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub params: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(rename = "J", default = "default_modes")]
    pub modes: usize,
    #[serde(default)]
    pub base_seed: u64,
}

fn default_sigma() -> f64 {
    0.1
}

fn default_modes() -> usize {
    DEFAULT_MODES
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { sigma: default_sigma(), modes: DEFAULT_MODES, base_seed: 0 }
    }
}

/// `u0(x) = mean + amplitude * cos(pi x / length)`, which must stay in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default = "default_mean")]
    pub mean: f64,
    #[serde(default)]
    pub amplitude: f64,
}

fn default_mean() -> f64 {
    0.5
}

impl Default for InitialSection {
    fn default() -> Self {
        Self { mean: default_mean(), amplitude: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub mode: StorageMode,
    /// File name suffix; defaults to `s<base_seed>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir(), mode: StorageMode::Full, tag: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseName {
    #[default]
    Decaying,
    Stationary,
}

/// Settings used only by `mc`, `converge` and `eps-study`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_eps_levels")]
    pub eps_levels: Vec<f64>,
    /// Manufactured case for `converge`; level 0 uses the model's `M` and `n_cells`.
    #[serde(default)]
    pub case: CaseName,
}

fn default_levels() -> usize {
    4
}

fn default_paths() -> usize {
    100
}

fn default_eps_levels() -> Vec<f64> {
    vec![0.1, 0.05, 0.025]
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { levels: default_levels(), n_paths: default_paths(), eps_levels: default_eps_levels(), case: CaseName::Decaying }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub reaction: ReactionSpec,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every module-level invariant by building the problem.
    pub fn validate(&self) -> Result<()> {
        self.problem()?;
        let e = &self.experiment;
        if e.levels < 2 {
            return Err(Error::invalid("experiment.levels", "must be at least 2"));
        }
        if e.n_paths < 2 {
            return Err(Error::invalid("experiment.n_paths", "must be at least 2"));
        }
        if e.eps_levels.is_empty() || e.eps_levels[0] <= 0.0 || e.eps_levels.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::invalid("experiment.eps_levels", "must be a nonempty, strictly decreasing list of positive values"));
        }
        if let Some(tag) = &self.output.tag {
            if tag.is_empty() || tag.contains(['/', '\\']) {
                return Err(Error::invalid("output.tag", "must be a nonempty file name fragment"));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams> {
        let m = &self.model;
        let reaction = ReactionSpec::new(self.reaction.kind, self.reaction.scale).map_err(|e| e.within("reaction"))?;
        let l_beta = m.l_beta.unwrap_or_else(|| reaction.lipschitz());
        ModelParams::new(m.p, m.eps, m.horizon, m.steps, l_beta, m.length).map_err(|e| e.within("model"))
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.model.n_cells, self.model.length).map_err(|e| e.within("model"))
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.noise.modes, self.noise.sigma).map_err(|e| e.within("noise"))
    }

    pub fn source_spec(&self) -> Result<SourceSpec> {
        let params = &self.source.params;
        let allowed: &[&str] = match self.source.preset {
            SourcePreset::Zero => &[],
            SourcePreset::Constant => &["value"],
            SourcePreset::TimeLinear => &["slope"],
            SourcePreset::Manufactured => &["decay"],
            SourcePreset::Tabulated => &["times", "xs", "values"],
        };
        if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::invalid(format!("source.params.{k}"), "unknown key for this preset"));
        }
        let number = |key: &str| -> Result<f64> {
            params
                .get(key)
                .and_then(Value::as_f64)
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::invalid(format!("source.params.{key}"), "required finite number"))
        };
        let field = |key: &str| -> Result<Value> {
            params.get(key).cloned().ok_or_else(|| Error::invalid(format!("source.params.{key}"), "required"))
        };
        Ok(match self.source.preset {
            SourcePreset::Zero => SourceSpec::Zero,
            SourcePreset::Constant => SourceSpec::Constant(number("value")?),
            SourcePreset::TimeLinear => SourceSpec::TimeLinear(number("slope")?),
            SourcePreset::Manufactured => {
                let decay = match params.get("decay") {
                    None => true,
                    Some(v) => v.as_bool().ok_or_else(|| Error::invalid("source.params.decay", "must be a boolean"))?,
                };
                SourceSpec::Manufactured(ManufacturedSolution::new(self.model.p, self.model.length, self.reaction, decay))
            }
            SourcePreset::Tabulated => {
                let times: Vec<f64> = serde_json::from_value(field("times")?)?;
                let xs: Vec<f64> = serde_json::from_value(field("xs")?)?;
                let values: Vec<Vec<f64>> = serde_json::from_value(field("values")?)?;
                SourceSpec::tabulated(times, xs, values).map_err(|e| e.within("source.params"))?
            }
        })
    }

    pub fn problem(&self) -> Result<Problem> {
        let params = self.params()?;
        let grid = self.grid()?;
        let ctx = OperatorContext::new(params, self.reaction, grid)?;
        self.solver.validate().map_err(|e| e.within("solver"))?;
        let (mean, amp, l) = (self.initial.mean, self.initial.amplitude, self.model.length);
        let u0 = GridFunction::from_fn(grid, |x| mean + amp * (std::f64::consts::PI * x / l).cos());
        Ok(Problem {
            ctx,
            noise: self.noise_model()?,
            initial: InitialDatum::new(u0)?,
            source: self.source_spec()?,
            solver: self.solver,
        })
    }

    pub fn convergence_setup(&self) -> Result<ConvergenceSetup> {
        self.params()?;
        let case = match self.experiment.case {
            CaseName::Decaying => ManufacturedCase::Decaying,
            CaseName::Stationary => ManufacturedCase::Stationary,
        };
        Ok(ConvergenceSetup {
            p: self.model.p,
            eps: self.model.eps,
            length: self.model.length,
            horizon: self.model.horizon,
            base_steps: self.model.steps,
            base_cells: self.model.n_cells,
            reaction: self.reaction,
            noise: self.noise_model()?,
            seed: self.noise.base_seed,
            solver: self.solver,
            ..ConvergenceSetup::new(case)
        })
    }

    pub fn eps_setup(&self) -> Result<EpsStudySetup> {
        Ok(EpsStudySetup {
            problem: self.problem()?,
            eps_levels: self.experiment.eps_levels.clone(),
            n_paths: self.experiment.n_paths,
            base_seed: self.noise.base_seed,
        })
    }

    pub fn tag(&self) -> String {
        self.output.tag.clone().unwrap_or_else(|| format!("s{}", self.noise.base_seed))
    }

    pub fn output_path(&self, subcommand: &str, ext: &str) -> PathBuf {
        self.output.dir.join(format!("{subcommand}-{}.{ext}", self.tag()))
    }
}

/// Applies one `section.key=value` override. The value is read as JSON when it
/// parses as JSON and as a string otherwise.
fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::invalid("--set", format!("expected key=value, got '{assignment}'")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let mut keys = path.split('.').peekable();
    while let Some(key) = keys.next() {
        if key.is_empty() {
            return Err(Error::invalid("--set", format!("empty key segment in '{path}'")));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::invalid(path, "cannot descend into a non-object value"))?;
        if keys.peek().is_none() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split yields at least one segment")
}

/// Reads `path` (or starts from an empty object when `None`), applies the
/// overrides in order, then parses and validates.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut root = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::invalid("--config", format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text)?
        }
        None => Value::Object(Map::new()),
    };
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let cfg: RunConfig = serde_json::from_value(root)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"model": {"p": 2, "eps": 0.1, "T": 1, "M": 100, "n_cells": 64, "length": 1}}"#;

    fn key_of(e: Error) -> String {
        match e {
            Error::Invalid { key, .. } => key,
            other => panic!("expected a validation error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.reaction, ReactionSpec::zero());
        assert_eq!(cfg.noise, NoiseSection::default());
        assert_eq!(cfg.solver, SolverConfig::default());
        assert_eq!(cfg.output.mode, StorageMode::Full);
        assert_eq!(cfg.model.l_beta, None);
        assert_eq!(cfg.params().unwrap().l_beta(), 0.0);
        assert!((cfg.params().unwrap().tau() - 0.01).abs() < 1e-15);
        assert_eq!(cfg.output_path("run", "csv"), PathBuf::from("out/run-s0.csv"));
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::from_json(MINIMAL).unwrap();
        cfg.model.l_beta = Some(3.0);
        cfg.reaction = ReactionSpec::sine(2.0);
        cfg.source.preset = SourcePreset::Tabulated;
        cfg.source.params = serde_json::from_str(r#"{"times": [0, 1], "xs": [0, 1], "values": [[0, 1], [1, 2]]}"#).unwrap();
        cfg.output.tag = Some("demo".into());
        cfg.output.mode = StorageMode::Thin;
        cfg.validate().unwrap();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert_eq!(RunConfig::from_json(&RunConfig::from_json(MINIMAL).unwrap().to_json()).unwrap(), RunConfig::from_json(MINIMAL).unwrap());
    }

    #[test]
    fn validation_names_keys() {
        let e = RunConfig::from_json(&MINIMAL.replace(r#""p": 2"#, r#""p": 1.5"#)).unwrap_err();
        assert_eq!(key_of(e), "model.p");
        let text = r#"{"model": {"p": 2, "eps": 0.1, "T": 1, "M": 100, "L_beta": 120, "n_cells": 64, "length": 1},
                       "reaction": {"kind": "linear", "scale": 120}}"#;
        let e = RunConfig::from_json(text).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("tau*L_beta = 1.2"), "{msg}");
        assert_eq!(key_of(e), "model.L_beta");
        let e = RunConfig::from_json(&MINIMAL.replace(r#""eps": 0.1"#, r#""eps": 0"#)).unwrap_err();
        assert_eq!(key_of(e), "model.eps");
    }

    #[test]
    fn omitted_l_beta_is_derived_and_gated() {
        let text = r#"{"model": {"p": 2, "eps": 0.1, "T": 1, "M": 100, "n_cells": 64, "length": 1},
                       "reaction": {"kind": "linear", "scale": 100}}"#;
        assert_eq!(key_of(RunConfig::from_json(text).unwrap_err()), "model.L_beta");
        let small = text.replace("100}}", "50}}");
        assert_eq!(RunConfig::from_json(&small).unwrap().params().unwrap().l_beta(), 50.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = MINIMAL.replace(r#""length": 1"#, r#""length": 1, "dt": 3"#);
        assert!(matches!(RunConfig::from_json(&bad), Err(Error::Json(_))));
        assert!(matches!(RunConfig::from_json(&MINIMAL.replace("}}", r#"}, "extra": {}}"#)), Err(Error::Json(_))));
        let mut cfg = RunConfig::from_json(MINIMAL).unwrap();
        cfg.source.preset = SourcePreset::Constant;
        cfg.source.params = serde_json::from_str(r#"{"value": 1, "slope": 2}"#).unwrap();
        assert_eq!(key_of(cfg.validate().unwrap_err()), "source.params.slope");
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(RunConfig::from_json("{\"model\": "), Err(Error::Json(_))));
    }

    #[test]
    fn overrides_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, MINIMAL).unwrap();
        let cfg = parse_config(
            Some(&path),
            &["model.p=3".into(), "noise.sigma=0".into(), "output.tag=x".into(), "model.p=4".into()],
        )
        .unwrap();
        assert_eq!(cfg.model.p, 4.0);
        assert_eq!(cfg.noise.sigma, 0.0);
        assert_eq!(cfg.output.tag.as_deref(), Some("x"));
        let e = parse_config(Some(&path), &["model.M=0".into()]).unwrap_err();
        assert_eq!(key_of(e), "model.M");
        assert!(parse_config(Some(&path), &["model.p".into()]).is_err());
        assert!(parse_config(Some(&dir.path().join("missing.json")), &[]).is_err());
    }

    #[test]
    fn initial_datum_must_lie_in_box() {
        let mut cfg = RunConfig::from_json(MINIMAL).unwrap();
        cfg.initial.amplitude = 0.6;
        assert_eq!(key_of(cfg.validate().unwrap_err()), "initial");
    }
}
