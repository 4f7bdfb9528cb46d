use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{HarnessError, Scenario};
use crate::sim::{run_jump, JumpSummary};

/// One swept scenario entry: a dotted path into the scenario JSON and the
/// values it takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub path: String,
    pub values: Vec<Value>,
}

/// Cross product of its axes, first axis slowest. No axes means no runs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub parameters: Vec<GridAxis>,
}

impl Grid {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::config(origin, e.to_string()))
    }

    pub fn points(&self) -> Vec<Vec<Value>> {
        if self.parameters.is_empty() {
            return Vec::new();
        }
        let mut points = vec![Vec::new()];
        for axis in &self.parameters {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(v.clone());
                        q
                    })
                })
                .collect();
        }
        points
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub values: Vec<Value>,
    pub summary: Option<JumpSummary>,
    /// Run fault or per-row configuration error.
    pub fault: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub parameters: Vec<String>,
    pub rows: Vec<SweepRow>,
}

/// Summary columns of the sweep table: every scalar field, fault last.
fn summary_columns() -> Vec<String> {
    let Ok(Value::Object(map)) = serde_json::to_value(JumpSummary::default()) else {
        unreachable!("the summary serializes to an object")
    };
    map.into_iter().filter(|(k, v)| !v.is_array() && k != "fault").map(|(k, _)| k).collect()
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl SweepTable {
    pub fn columns(&self) -> Vec<String> {
        let mut c = self.parameters.clone();
        c.extend(summary_columns());
        c.push("fault".into());
        c
    }

    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.columns())?;
        let fields = summary_columns();
        for row in &self.rows {
            let mut rec: Vec<String> = row.values.iter().map(cell).collect();
            let summary = row.summary.as_ref().map(|s| serde_json::to_value(s).expect("summary serializes"));
            for f in &fields {
                rec.push(summary.as_ref().and_then(|s| s.get(f)).map(cell).unwrap_or_default());
            }
            rec.push(row.fault.clone().unwrap_or_default());
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), String> {
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let Value::Object(map) = node else {
            return Err(format!("`{}` is not an object", keys[..i].join(".")));
        };
        if i + 1 == keys.len() {
            map.insert(key.to_string(), value);
            return Ok(());
        }
        node = map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err("empty parameter path".into())
}

fn run_point(base: &Value, grid: &Grid, values: &[Value], origin: &Path) -> SweepRow {
    let outcome = (|| -> Result<JumpSummary, String> {
        let mut doc = base.clone();
        for (axis, v) in grid.parameters.iter().zip(values) {
            set_path(&mut doc, &axis.path, v.clone())?;
        }
        let scenario: Scenario = serde_json::from_value(doc).map_err(|e| e.to_string())?;
        scenario.check(origin).map_err(|e| e.to_string())?;
        let model = scenario.load_model(origin).map_err(|e| e.to_string())?;
        let profile = scenario.profile(origin).map_err(|e| e.to_string())?;
        let run = run_jump(&model, &scenario.sim, &scenario.controller, &profile).map_err(|e| e.to_string())?;
        Ok(run.summary)
    })();
    match outcome {
        Ok(summary) => {
            let fault = summary.fault.as_ref().map(|f| format!("{:?} at t = {:.4} s: {}", f.kind, f.time, f.message));
            SweepRow { values: values.to_vec(), summary: Some(summary), fault }
        }
        Err(e) => SweepRow { values: values.to_vec(), summary: None, fault: Some(e) },
    }
}

/// Worker count: `JUMP_THREADS` when set to a positive integer, otherwise
/// the rayon default.
pub fn sweep_threads() -> usize {
    std::env::var("JUMP_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Runs every grid point of the scenario at `path` in parallel. Rows follow
/// the grid order regardless of scheduling.
pub fn run_sweep(path: &Path, grid: &Grid) -> Result<SweepTable, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::config(path, e.to_string()))?;
    // the base must be valid on its own
    Scenario::from_json(&text, path)?;
    let base: Value = serde_json::from_str(&text).map_err(|e| HarnessError::config(path, e.to_string()))?;
    let points = grid.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sweep_threads())
        .build()
        .map_err(|e| HarnessError::config(path, e.to_string()))?;
    let rows = pool.install(|| points.par_iter().map(|v| run_point(&base, grid, v, path)).collect());
    Ok(SweepTable { parameters: grid.parameters.iter().map(|a| a.path.clone()).collect(), rows })
}
