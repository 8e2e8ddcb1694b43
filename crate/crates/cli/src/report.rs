//! Machine-readable run reports.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::RunConfig;
use crate::CliError;

pub const REPORT_SCHEMA: &str = "fracpass-run-report";
pub const REPORT_SCHEMA_VERSION: &str = "1.0.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Relation {
    fn holds(self, value: f64, limit: f64) -> bool {
        match self {
            Relation::Lt => value < limit,
            Relation::Le => value <= limit,
            Relation::Gt => value > limit,
            Relation::Ge => value >= limit,
            Relation::Eq => value == limit,
        }
    }
}

/// One pass/fail flag: `value <relation> limit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Non-finite values are written as `null` and fail the check.
    #[serde(deserialize_with = "nullable_f64")]
    pub value: f64,
    pub relation: Relation,
    pub limit: f64,
}

fn nullable_f64<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, relation: Relation, limit: f64) -> Self {
        Check {
            name: name.into(),
            pass: relation.holds(value, limit),
            value,
            relation,
            limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema: String,
    pub schema_version: String,
    pub artifact_version: String,
    pub command: String,
    pub config: RunConfig,
    /// Numbers, fit slopes and plot-ready columns, grouped by stage.
    pub outputs: Map<String, Value>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    /// Field files written next to the report.
    pub files: Vec<String>,
    pub exit_code: i32,
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        RunReport {
            schema: REPORT_SCHEMA.into(),
            schema_version: REPORT_SCHEMA_VERSION.into(),
            artifact_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: config.clone(),
            outputs: Map::new(),
            checks: Vec::new(),
            warnings: Vec::new(),
            files: Vec::new(),
            exit_code: 0,
            wall_clock_s: 0.0,
        }
    }

    pub fn output<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).expect("output serializes");
        self.outputs.insert(key.into(), v);
    }

    pub fn check(&mut self, name: &str, value: f64, relation: Relation, limit: f64) {
        self.checks.push(Check::new(name, value, relation, limit));
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `key,value` rows with nested objects and arrays flattened by dotted paths.
    pub fn to_csv(&self) -> Result<String, CliError> {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut rows = Vec::new();
        flatten("", &value, &mut rows);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["key", "value"]).map_err(csv_err)?;
        for (k, v) in rows {
            w.write_record([k, v]).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn write(&self, dir: &Path, format: Format) -> Result<PathBuf, CliError> {
        let (name, body) = match format {
            Format::Json => ("report.json", self.to_json()),
            Format::Csv => ("report.csv", self.to_csv()?),
        };
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        f.write_all(body.as_bytes())
            .and_then(|_| f.write_all(b"\n"))
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Input(format!("csv: {e}"))
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(&join(k), x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&join(&i.to_string()), x, out);
            }
        }
        Value::String(s) => out.push((prefix.into(), s.clone())),
        other => out.push((prefix.into(), other.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Structural check of a report document against the published schema:
/// required keys with the right JSON types, a known schema name and version,
/// and `pass` flags consistent with `value`, `relation` and `limit`.
pub fn validate_report(doc: &Value) -> Result<(), String> {
    let obj = doc.as_object().ok_or("report must be an object")?;
    let need = |k: &str| obj.get(k).ok_or_else(|| format!("missing key '{k}'"));
    let string = |k: &str| -> Result<&str, String> {
        need(k)?.as_str().ok_or_else(|| format!("'{k}' must be a string"))
    };
    if string("schema")? != REPORT_SCHEMA {
        return Err("unknown schema name".into());
    }
    if string("schema_version")? != REPORT_SCHEMA_VERSION {
        return Err("unsupported schema version".into());
    }
    string("artifact_version")?;
    let command = string("command")?;
    if !crate::COMMANDS.contains(&command) {
        return Err(format!("unknown command '{command}'"));
    }
    if !need("config")?.is_object() || !need("outputs")?.is_object() {
        return Err("'config' and 'outputs' must be objects".into());
    }
    for k in ["warnings", "files"] {
        let arr = need(k)?.as_array().ok_or_else(|| format!("'{k}' must be an array"))?;
        if !arr.iter().all(Value::is_string) {
            return Err(format!("'{k}' must hold strings"));
        }
    }
    if !need("exit_code")?.is_i64() {
        return Err("'exit_code' must be an integer".into());
    }
    if !need("wall_clock_s")?.as_f64().is_some_and(|t| t >= 0.0) {
        return Err("'wall_clock_s' must be a nonnegative number".into());
    }
    let checks = need("checks")?.as_array().ok_or("'checks' must be an array")?;
    for c in checks {
        let c: Check = serde_json::from_value(c.clone()).map_err(|e| format!("check: {e}"))?;
        if c.pass != c.relation.holds(c.value, c.limit) {
            return Err(format!("check '{}' has an inconsistent pass flag", c.name));
        }
    }
    serde_json::from_value::<RunReport>(doc.clone()).map_err(|e| format!("report: {e}"))?;
    Ok(())
}
