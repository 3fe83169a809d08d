//! Run configuration: a flat `key = value` file whose keys are the dotted
//! paths of [`RunConfig`]'s JSON form, plus dotted overrides from the command
//! line. Every key must already exist in the resolved configuration, so a
//! misspelled key fails before anything runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rtqa::experiment::ExperimentConfig;
use rtqa::training::{Arm, BetaConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Global seed; model, pipeline and curve seeds are derived from it.
    pub seed: u64,
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
    pub beta: BetaConfig,
    /// Seeds of the learning-curve grid.
    pub curve_seeds: Vec<u64>,
    pub arms: Vec<Arm>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            experiment: ExperimentConfig::default(),
            // Staged training unless a positive weight asks for the combined
            // objective.
            beta: BetaConfig {
                lambda: 0.0,
                ..BetaConfig::default()
            },
            curve_seeds: vec![1, 2, 3],
            arms: vec![Arm::Rt, Arm::NoRt],
        }
    }
}

/// Dotted leaf paths of a JSON value. Arrays are leaves.
pub fn flatten(value: &Value) -> BTreeMap<String, Value> {
    fn go(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
        match v {
            Value::Object(m) => {
                for (k, child) in m {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    go(&key, child, out);
                }
            }
            _ => {
                out.insert(prefix.to_string(), v.clone());
            }
        }
    }
    let mut out = BTreeMap::new();
    go("", value, &mut out);
    out
}

/// Renders a config as the flat text format, one key per line, sorted.
pub fn to_flat_text(cfg: &RunConfig) -> String {
    let value = serde_json::to_value(cfg).expect("config serializes");
    flatten(&value)
        .into_iter()
        .map(|(k, v)| format!("{k} = {}\n", render(&v)))
        .collect()
}

fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(render).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

/// A raw value read from text, typed by the value it replaces.
fn parse_like(raw: &str, like: Option<&Value>) -> Value {
    let raw = raw.trim();
    match like {
        Some(Value::String(_)) => Value::String(raw.to_string()),
        Some(Value::Array(items)) => {
            if raw.is_empty() {
                return Value::Array(Vec::new());
            }
            let first = items.first();
            Value::Array(raw.split(',').map(|p| parse_like(p, first)).collect())
        }
        _ => serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string())),
    }
}

fn set_path(root: &mut Value, key: &str, raw: &str) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let obj: &mut Map<String, Value> = node
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("unknown config key {key:?}")))?;
        if i + 1 == parts.len() {
            // New keys are allowed only inside tagged objects (for example a
            // decoding method's width); the final check below rejects any
            // that do not survive deserialization.
            if !obj.contains_key(*part) && !obj.contains_key("method") {
                return Err(CliError::Usage(format!("unknown config key {key:?}")));
            }
            let value = parse_like(raw, obj.get(*part));
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .get_mut(*part)
            .ok_or_else(|| CliError::Usage(format!("unknown config key {key:?}")))?;
    }
    Ok(())
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_flat(text: &str, origin: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected key = value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Defaults, then the config file, then overrides in order.
pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig, CliError> {
    let mut pairs = Vec::new();
    if let Some(path) = file {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        pairs.extend(parse_flat(&text, &path.display().to_string())?);
    }
    pairs.extend(overrides.iter().cloned());

    let mut value = serde_json::to_value(RunConfig::default()).expect("config serializes");
    for (k, v) in &pairs {
        set_path(&mut value, k, v)?;
    }
    let cfg: RunConfig =
        serde_json::from_value(value).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
    let resolved = flatten(&serde_json::to_value(&cfg).expect("config serializes"));
    for (k, _) in &pairs {
        if !resolved.contains_key(k) {
            return Err(CliError::Usage(format!("unknown config key {k:?}")));
        }
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let e = &cfg.experiment;
    let usage = |err: rtqa::Error| CliError::Usage(err.to_string());
    e.pipeline.validate().map_err(usage)?;
    cfg.beta.validate().map_err(usage)?;
    for t in [
        &e.extractor_train,
        &e.qgen_train,
        &e.qgen_pretrain,
        &e.qa_train,
        &e.staged.pretrain,
        &e.staged.finetune,
    ] {
        t.validate().map_err(usage)?;
    }
    e.shape.encoder(1).validate().map_err(usage)?;
    if e.labeled_docs == 0 || e.unlabeled_docs == 0 || e.dev_docs == 0 {
        return Err(CliError::Usage("labeled_docs, unlabeled_docs and dev_docs must be positive".into()));
    }
    if e.curve_sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(CliError::Usage("curve_sizes must be ascending".into()));
    }
    if cfg.arms.is_empty() || cfg.curve_seeds.is_empty() {
        return Err(CliError::Usage("arms and curve_seeds must be non-empty".into()));
    }
    Ok(())
}
