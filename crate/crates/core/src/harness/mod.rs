//! Scenario files, artifact writing and expectation checks.

mod sweep;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::control::ControllerConfig;
use crate::multibody::RobotModel;
use crate::qpsolver::write_dump;
use crate::sim::{run_jump, JumpError, JumpRun, JumpSummary, SimConfig};
use crate::trajgen::{CubicCurve, JumpParams, LaunchProfile, TimeScaling};

pub use sweep::{run_sweep, sweep_threads, Grid, GridAxis, SweepRow, SweepTable};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl HarnessError {
    fn config(path: &Path, message: impl Into<String>) -> Self {
        HarnessError::Config { path: path.to_path_buf(), message: message.into() }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

/// Launch profile request. Gravity comes from the simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSetup {
    /// Apex rise above take-off [m].
    pub height: f64,
    /// CoM displacement over the launch [m].
    pub displacement: f64,
    #[serde(default)]
    pub curve: CubicCurve,
    #[serde(default)]
    pub time_scaling: TimeScaling,
}

impl Default for JumpSetup {
    fn default() -> Self {
        let p = JumpParams::default();
        Self {
            height: p.height,
            displacement: p.displacement,
            curve: CubicCurve::default(),
            time_scaling: TimeScaling::default(),
        }
    }
}

impl JumpSetup {
    pub fn profile(&self, gravity: f64) -> Result<LaunchProfile, crate::trajgen::TrajError> {
        let params = JumpParams::new(self.height, self.displacement, gravity)?;
        self.curve.validate()?;
        LaunchProfile::new(&params, self.curve, self.time_scaling)
    }
}

/// Number or the name of another summary field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reference {
    Value(f64),
    Field(String),
}

/// Check on one scalar summary field. Bounds are inclusive; `target` with
/// `rel_tol` accepts `|x − target| ≤ rel_tol·|target|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub field: String,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
    #[serde(default)]
    pub target: Option<Reference>,
    #[serde(default)]
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Less,
    Greater,
}

/// `primary.field <relation> paired.field`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub field: String,
    pub relation: Relation,
}

/// Second run of the same scenario with another controller, compared field
/// by field with the primary run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paired {
    pub name: String,
    pub controller: ControllerConfig,
    #[serde(default)]
    pub comparisons: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Model JSON, relative to the scenario file. The built-in model when
    /// absent.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub jump: JumpSetup,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub expectations: Vec<Expectation>,
    #[serde(default)]
    pub paired: Option<Paired>,
    /// Artifact directory; `out/<name>` when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Summary field names, in declaration order.
pub fn summary_fields() -> Vec<String> {
    match serde_json::to_value(JumpSummary::default()) {
        Ok(Value::Object(map)) => map.keys().cloned().collect(),
        _ => unreachable!("the summary serializes to an object"),
    }
}

/// Value of a numeric summary field; `None` when unset.
pub fn summary_value(summary: &JumpSummary, field: &str) -> Option<f64> {
    serde_json::to_value(summary).ok()?.get(field)?.as_f64()
}

impl Scenario {
    /// Parses and checks a scenario. Paths resolve against `origin`.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self, HarnessError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| HarnessError::config(origin, e.to_string()))?;
        s.check(origin)?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::config(path, e.to_string()))?;
        Self::from_json(&text, path)
    }

    fn check(&self, origin: &Path) -> Result<(), HarnessError> {
        let fields = summary_fields();
        let known = |f: &str| fields.iter().any(|k| k == f);
        for e in &self.expectations {
            if !known(&e.field) {
                return Err(HarnessError::config(origin, format!("unknown summary field `{}`", e.field)));
            }
            if let Some(Reference::Field(f)) = &e.target {
                if !known(f) {
                    return Err(HarnessError::config(origin, format!("unknown summary field `{f}`")));
                }
            }
            if e.target.is_some() != e.rel_tol.is_some() {
                return Err(HarnessError::config(origin, format!("`{}`: target and rel_tol go together", e.field)));
            }
            if e.min.is_none() && e.max.is_none() && e.target.is_none() {
                return Err(HarnessError::config(origin, format!("`{}`: expectation checks nothing", e.field)));
            }
        }
        if let Some(p) = &self.paired {
            if let Some(c) = p.comparisons.iter().find(|c| !known(&c.field)) {
                return Err(HarnessError::config(origin, format!("unknown summary field `{}`", c.field)));
            }
        }
        if let Some(m) = self.model_path(origin) {
            if !m.is_file() {
                return Err(HarnessError::config(origin, format!("model file {} not found", m.display())));
            }
        }
        Ok(())
    }

    fn model_path(&self, origin: &Path) -> Option<PathBuf> {
        let dir = origin.parent().unwrap_or(Path::new("."));
        self.model.as_ref().map(|m| dir.join(m))
    }

    pub fn load_model(&self, origin: &Path) -> Result<RobotModel, HarnessError> {
        match self.model_path(origin) {
            None => Ok(RobotModel::icub_sagittal()),
            Some(p) => RobotModel::from_json_file(&p).map_err(|e| HarnessError::config(&p, e.to_string())),
        }
    }

    pub fn profile(&self, origin: &Path) -> Result<LaunchProfile, HarnessError> {
        self.jump.profile(self.sim.gravity().norm()).map_err(|e| HarnessError::config(origin, e.to_string()))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| Path::new("out").join(&self.name))
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub fn check_expectation(e: &Expectation, summary: &JumpSummary) -> Verdict {
    let fail = |detail: String| Verdict { name: e.field.clone(), pass: false, detail };
    let Some(x) = summary_value(summary, &e.field) else {
        return fail("no value".into());
    };
    let mut parts = Vec::new();
    let mut pass = true;
    if let Some(lo) = e.min {
        pass &= x >= lo;
        parts.push(format!("≥ {lo}"));
    }
    if let Some(hi) = e.max {
        pass &= x <= hi;
        parts.push(format!("≤ {hi}"));
    }
    if let (Some(r), Some(tol)) = (&e.target, e.rel_tol) {
        let target = match r {
            Reference::Value(v) => Some(*v),
            Reference::Field(f) => summary_value(summary, f),
        };
        let Some(target) = target else {
            return fail(format!("{x:.6}, reference has no value"));
        };
        pass &= (x - target).abs() <= tol * target.abs();
        parts.push(format!("within {:.1}% of {target:.6}", 100.0 * tol));
    }
    Verdict { name: e.field.clone(), pass, detail: format!("{x:.6} ({})", parts.join(", ")) }
}

fn compare(c: &Comparison, primary: &JumpSummary, paired: &JumpSummary, paired_name: &str) -> Verdict {
    let name = format!("{} vs {paired_name}", c.field);
    match (summary_value(primary, &c.field), summary_value(paired, &c.field)) {
        (Some(a), Some(b)) => {
            let (pass, op) = match c.relation {
                Relation::Less => (a < b, "<"),
                Relation::Greater => (a > b, ">"),
            };
            Verdict { name, pass, detail: format!("{a:.6} {op} {b:.6}") }
        }
        _ => Verdict { name, pass: false, detail: "no value".into() },
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions<'a> {
    /// Overrides the scenario's output directory.
    pub output: Option<&'a Path>,
    /// Write the failing QP as `failed_qp.txt` on a controller fault.
    pub dump_qp: bool,
}

/// Result of a scenario that got as far as running.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub name: String,
    pub output: PathBuf,
    pub summary: JumpSummary,
    pub paired: Option<JumpSummary>,
    pub verdicts: Vec<Verdict>,
}

impl ScenarioReport {
    pub fn faulted(&self) -> bool {
        self.summary.fault.is_some() || self.paired.as_ref().is_some_and(|p| p.fault.is_some())
    }

    /// 0 when every check passes, 1 when one fails, 3 on a run fault.
    pub fn exit_code(&self) -> i32 {
        if self.faulted() {
            3
        } else if self.verdicts.iter().all(|v| v.pass) {
            0
        } else {
            1
        }
    }
}

fn write_artifacts(
    dir: &Path,
    run: &JumpRun,
    profile: &LaunchProfile,
    period: f64,
    dump_qp: bool,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let path = dir.join("log.csv");
    let file = fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
    run.log.write_csv(std::io::BufWriter::new(file)).map_err(|e| HarnessError::io(&path, e.into()))?;
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&run.summary).expect("summary serializes");
    fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))?;
    let path = dir.join("profile.csv");
    let file = fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
    profile.write_csv(std::io::BufWriter::new(file), period).map_err(|e| match e {
        crate::trajgen::TrajError::Io(io) => HarnessError::io(&path, io),
        other => HarnessError::config(&path, other.to_string()),
    })?;
    if dump_qp {
        if let Some(p) = &run.failed_problem {
            let path = dir.join("failed_qp.txt");
            fs::write(&path, write_dump(p)).map_err(|e| HarnessError::io(&path, e))?;
        }
    }
    Ok(())
}

fn execute(
    model: &RobotModel,
    sim: &SimConfig,
    controller: &ControllerConfig,
    profile: &LaunchProfile,
    origin: &Path,
) -> Result<JumpRun, HarnessError> {
    run_jump(model, sim, controller, profile).map_err(|e| match e {
        JumpError::Sim(s) => HarnessError::config(origin, s.to_string()),
        JumpError::Control(c) => HarnessError::config(origin, c.to_string()),
    })
}

/// Runs a loaded scenario and writes its artifacts. Nothing is written when
/// the configuration is rejected.
pub fn run_loaded(scenario: &Scenario, origin: &Path, opts: &RunOptions) -> Result<ScenarioReport, HarnessError> {
    let model = scenario.load_model(origin)?;
    let profile = scenario.profile(origin)?;
    scenario.sim.validate().map_err(|e| HarnessError::config(origin, e.to_string()))?;
    scenario.controller.validate(&model).map_err(|e| HarnessError::config(origin, e.to_string()))?;
    if let Some(p) = &scenario.paired {
        p.controller.validate(&model).map_err(|e| HarnessError::config(origin, e.to_string()))?;
    }
    let out = opts.output.map(Path::to_path_buf).unwrap_or_else(|| scenario.output_dir());

    let run = execute(&model, &scenario.sim, &scenario.controller, &profile, origin)?;
    let paired = match &scenario.paired {
        Some(p) => Some(execute(&model, &scenario.sim, &p.controller, &profile, origin)?),
        None => None,
    };
    write_artifacts(&out, &run, &profile, scenario.sim.period, opts.dump_qp)?;
    let mut verdicts: Vec<Verdict> = scenario.expectations.iter().map(|e| check_expectation(e, &run.summary)).collect();
    if let (Some(p), Some(prun)) = (&scenario.paired, &paired) {
        write_artifacts(&out.join(&p.name), prun, &profile, scenario.sim.period, opts.dump_qp)?;
        verdicts.extend(p.comparisons.iter().map(|c| compare(c, &run.summary, &prun.summary, &p.name)));
    }
    Ok(ScenarioReport {
        name: scenario.name.clone(),
        output: out,
        summary: run.summary,
        paired: paired.map(|p| p.summary),
        verdicts,
    })
}

/// Loads and runs the scenario at `path`.
pub fn run_scenario(path: &Path, opts: &RunOptions) -> Result<ScenarioReport, HarnessError> {
    let scenario = Scenario::load(path)?;
    run_loaded(&scenario, path, opts)
}
