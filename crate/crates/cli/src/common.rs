use bcfbench::bath::BathSpec;
use bcfbench::fitting::ExponentialBCF;
use bcfbench::heom::SystemSpec;
use bcfbench::io::{self, IoError, ModelFile, SystemFile};
use serde::Serialize;
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const UNITS: &str = "hbar from the bath file (default 1); frequencies and times in the bath's units";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Numerical(bcfbench::error::Error),
    #[error("instability: {0}")]
    Instability(String),
}

impl From<bcfbench::error::Error> for CliError {
    fn from(e: bcfbench::error::Error) -> Self {
        use bcfbench::error::Error as E;
        match e {
            E::Instability(m) => CliError::Instability(m),
            // argument problems surface as domain or precondition errors
            E::Domain(_) | E::Precondition(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Instability(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn config_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {msg}", path.display()))
}

pub fn load_bath(path: &Path) -> CliResult<BathSpec> {
    let bath: BathSpec = io::read_json(path)?;
    bath.validate().map_err(|e| config_err(path, e))?;
    Ok(bath)
}

pub fn load_system(path: &Path) -> CliResult<(SystemFile, SystemSpec)> {
    let file: SystemFile = io::read_json(path)?;
    let sys = file.to_system().map_err(|e| config_err(path, e))?;
    Ok((file, sys))
}

pub struct LoadedModel {
    pub path: PathBuf,
    pub k: usize,
    pub meta: Map<String, Value>,
    pub model: ExponentialBCF,
}

pub fn load_model(path: &Path) -> CliResult<LoadedModel> {
    let file: ModelFile = io::read_json(path)?;
    let model = file.to_model().map_err(|e| config_err(path, e))?;
    model.check_invariants().map_err(|e| config_err(path, e))?;
    Ok(LoadedModel { path: path.into(), k: file.k(), meta: file.meta, model })
}

/// Every `*.json` model in `dir`, sorted by K. Two files with the same K
/// are rejected.
pub fn load_models(dir: &Path) -> CliResult<Vec<LoadedModel>> {
    let entries = std::fs::read_dir(dir).map_err(|source| IoError::Fs { path: dir.into(), source })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut by_k: BTreeMap<usize, LoadedModel> = BTreeMap::new();
    for p in paths {
        let m = load_model(&p)?;
        if let Some(prev) = by_k.get(&m.k) {
            return Err(CliError::Config(format!(
                "{} and {} both have K = {}",
                prev.path.display(),
                p.display(),
                m.k
            )));
        }
        by_k.insert(m.k, m);
    }
    if by_k.is_empty() {
        return Err(config_err(dir, "no model files (*.json)"));
    }
    Ok(by_k.into_values().collect())
}

/// Exactly one of `--model` or `--models` must be given.
pub fn load_model_args(model: &Option<PathBuf>, models: &Option<PathBuf>) -> CliResult<Vec<LoadedModel>> {
    match (model, models) {
        (Some(p), None) => Ok(vec![load_model(p)?]),
        (None, Some(d)) => load_models(d),
        _ => Err(CliError::Config("give exactly one of --model or --models".into())),
    }
}

/// `start:stop:step` (inclusive), a comma list, or an empty string.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    if s.contains(':') {
        let parts: Vec<f64> = s
            .split(':')
            .map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad grid {s:?}: {e}")))
            .collect::<Result<_, _>>()?;
        let [a, b, h] = parts[..] else {
            return Err(format!("grid {s:?} must be start:stop:step"));
        };
        if !(h > 0.0 && b >= a) {
            return Err(format!("grid {s:?} needs step > 0 and stop >= start"));
        }
        let n = ((b - a) / h + 1e-9).floor() as usize;
        return Ok((0..=n)
            .map(|i| {
                let w = a + i as f64 * h;
                // land exactly on multiples of the step, zero included
                let r = (w / h).round() * h;
                if (w - r).abs() < 1e-9 * h {
                    r
                } else {
                    w
                }
            })
            .collect());
    }
    s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad grid value {x:?}: {e}"))).collect()
}

/// Header lines for CSV files: tool version, resolved config and units.
pub fn csv_header(config: &Value) -> Vec<(String, String)> {
    vec![
        ("bcfbench".into(), env!("CARGO_PKG_VERSION").into()),
        ("config".into(), config.to_string()),
        ("units".into(), UNITS.into()),
    ]
}

/// JSON output document with the resolved config in front of `body`.
pub fn json_doc(config: &Value, body: impl Serialize) -> CliResult<Value> {
    let body = serde_json::to_value(body).map_err(|e| CliError::Config(e.to_string()))?;
    let mut doc = Map::new();
    doc.insert("bcfbench".into(), json!(env!("CARGO_PKG_VERSION")));
    doc.insert("config".into(), config.clone());
    doc.insert("units".into(), json!(UNITS));
    match body {
        Value::Object(m) => doc.extend(m),
        other => {
            doc.insert("result".into(), other);
        }
    }
    Ok(Value::Object(doc))
}

pub fn to_value(x: impl Serialize) -> Value {
    serde_json::to_value(x).unwrap_or(Value::Null)
}

pub fn model_summaries(models: &[LoadedModel]) -> Value {
    Value::Array(
        models
            .iter()
            .map(|m| {
                let meta: Map<String, Value> =
                    m.meta.iter().filter(|(k, _)| *k != "config" && *k != "units").map(|(k, v)| (k.clone(), v.clone())).collect();
                json!({"path": m.path, "K": m.k, "terms": m.model.len(), "meta": meta})
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("").unwrap(), Vec::<f64>::new());
        assert_eq!(parse_grid("0.5, 1").unwrap(), vec![0.5, 1.0]);
        let g = parse_grid("-0.3:0.3:0.1").unwrap();
        assert_eq!(g.len(), 7);
        assert_eq!(g[3], 0.0);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("1:2").is_err());
    }
}
