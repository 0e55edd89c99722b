//! File formats: model and system JSON, plus CSV with a commented
//! header that records the resolved configuration.

use crate::error::Result;
use crate::fitting::{ExpTerm, ExponentialBCF};
use crate::heom::SystemSpec;
use crate::linalg::CMat;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Problems reading or writing files, kept apart from numerical errors.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs { path: PathBuf, source: std::io::Error },
    #[error("{path}: invalid JSON: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> std::result::Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Fs { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.into(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::result::Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json { path: path.into(), source })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> std::result::Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| IoError::Fs { path: dir.into(), source })?;
    }
    std::fs::write(path, text).map_err(|source| IoError::Fs { path: path.into(), source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub d: Complex64,
    pub z: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub terms: Vec<TermRecord>,
    #[serde(default)]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl ModelFile {
    pub fn from_model(model: &ExponentialBCF, meta: serde_json::Map<String, serde_json::Value>) -> Self {
        ModelFile { terms: model.terms.iter().map(|t| TermRecord { d: t.d, z: t.z }).collect(), meta }
    }

    /// Rebuilds the model; missing conjugate partners are appended.
    pub fn to_model(&self) -> Result<ExponentialBCF> {
        ExponentialBCF::new(self.terms.iter().map(|t| ExpTerm { d: t.d, z: t.z }).collect())
    }

    /// K recorded in the metadata, or the number of terms.
    pub fn k(&self) -> usize {
        self.meta.get("K").and_then(|v| v.as_u64()).map(|k| k as usize).unwrap_or(self.terms.len())
    }
}

/// Row-major complex matrix entries as [re, im] pairs.
pub type MatrixRecord = Vec<[f64; 2]>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub n: usize,
    #[serde(rename = "H_S")]
    pub h_s: MatrixRecord,
    #[serde(rename = "V_S")]
    pub v_s: MatrixRecord,
    /// Named observables for expectation values.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub observables: BTreeMap<String, MatrixRecord>,
    /// Pairs of observable names evaluated as ⟨AB⟩ − ⟨A⟩⟨B⟩.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub covariances: Vec<[String; 2]>,
}

pub fn matrix_from_record(n: usize, rec: &MatrixRecord, what: &str) -> std::result::Result<CMat, String> {
    if rec.len() != n * n {
        return Err(format!("{what} has {} entries, expected {}", rec.len(), n * n));
    }
    Ok(CMat::from_fn(n, n, |r, c| Complex64::new(rec[r * n + c][0], rec[r * n + c][1])))
}

pub fn matrix_to_record(m: &CMat) -> MatrixRecord {
    let n = m.ncols();
    (0..m.nrows() * n).map(|i| [m[(i / n, i % n)].re, m[(i / n, i % n)].im]).collect()
}

impl SystemFile {
    pub fn from_system(sys: &SystemSpec) -> Self {
        SystemFile {
            n: sys.dim(),
            h_s: matrix_to_record(&sys.h_s),
            v_s: matrix_to_record(&sys.v_s),
            observables: BTreeMap::new(),
            covariances: Vec::new(),
        }
    }

    pub fn to_system(&self) -> std::result::Result<SystemSpec, String> {
        let h = matrix_from_record(self.n, &self.h_s, "H_S")?;
        let v = matrix_from_record(self.n, &self.v_s, "V_S")?;
        SystemSpec::new(h, v).map_err(|e| e.to_string())
    }

    /// Plain expectations first, then the requested covariances.
    pub fn observable_list(&self) -> std::result::Result<Vec<(String, crate::testing::Observable)>, String> {
        use crate::testing::Observable;
        let mut out = Vec::new();
        let mut mats = BTreeMap::new();
        for (name, rec) in &self.observables {
            let m = matrix_from_record(self.n, rec, name)?;
            out.push((name.clone(), Observable::Expectation(m.clone())));
            mats.insert(name.clone(), m);
        }
        for [a, b] in &self.covariances {
            let (ma, mb) = match (mats.get(a), mats.get(b)) {
                (Some(x), Some(y)) => (x.clone(), y.clone()),
                _ => return Err(format!("covariance {a}*{b} names an unknown observable")),
            };
            out.push((format!("cov_{a}_{b}"), Observable::Covariance(ma, mb)));
        }
        Ok(out)
    }
}

/// CSV text with `# key: value` header lines, a column row and data rows.
pub fn csv_text(header: &[(String, String)], columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    for (k, v) in header {
        let _ = writeln!(out, "# {k}: {v}");
    }
    let _ = writeln!(out, "{}", columns.join(","));
    for r in rows {
        let _ = writeln!(out, "{}", r.join(","));
    }
    out
}

/// Shortest round-trip representation, so outputs are reproducible.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:e}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}
