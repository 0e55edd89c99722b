use crate::common::{csv_header, json_doc, to_value, CliError, CliResult};
use bcfbench::io::{self, fmt_opt};
use bcfbench::testing::crossing_k;
use clap::Args;
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// surrogate.json written by `test`
    #[arg(long)]
    pub surrogate: PathBuf,
    /// target.json written by `simulate --steady`
    #[arg(long)]
    pub target: PathBuf,
    /// Threshold for the crossing K of each column
    #[arg(long, default_value_t = 0.01)]
    pub level: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// K → named columns, read from one input document.
type Columns = (Vec<String>, BTreeMap<usize, Vec<Option<f64>>>);

fn num(v: Option<&Value>) -> Option<f64> {
    v.and_then(Value::as_f64)
}

fn schema_error(path: &Path, bad: &[String]) -> CliError {
    CliError::Config(format!("{}: schema mismatch, offending keys: {}", path.display(), bad.join(", ")))
}

fn surrogate_columns(path: &Path, doc: &Value) -> CliResult<Columns> {
    let mut bad = Vec::new();
    if doc.get("kind").and_then(Value::as_str) != Some("surrogate") {
        bad.push("kind".to_string());
    }
    let rows = doc.get("rows").and_then(Value::as_array);
    if rows.is_none() {
        bad.push("rows".into());
    }
    let names = vec!["delta_ho_q2".to_string(), "delta_ho_p2".to_string()];
    let mut out = BTreeMap::new();
    for (i, r) in rows.into_iter().flatten().enumerate() {
        let Some(k) = r.get("K").and_then(Value::as_u64) else {
            bad.push(format!("rows[{i}].K"));
            continue;
        };
        for n in &names {
            if !r.get(n).is_some_and(|v| v.is_null() || v.is_number()) {
                bad.push(format!("rows[{i}].{n}"));
            }
        }
        if out.insert(k as usize, names.iter().map(|n| num(r.get(n))).collect()).is_some() {
            bad.push(format!("rows[{i}].K (duplicate {k})"));
        }
    }
    if bad.is_empty() {
        Ok((names, out))
    } else {
        Err(schema_error(path, &bad))
    }
}

fn target_columns(path: &Path, doc: &Value) -> CliResult<Columns> {
    let mut bad = Vec::new();
    if doc.get("kind").and_then(Value::as_str) != Some("target") {
        bad.push("kind".to_string());
    }
    let table = doc.get("table");
    let observables: Vec<String> = match table.and_then(|t| t.get("observables")).and_then(Value::as_array) {
        Some(a) if a.iter().all(Value::is_string) => a.iter().filter_map(|v| v.as_str().map(String::from)).collect(),
        _ => {
            bad.push("table.observables".into());
            Vec::new()
        }
    };
    let rows = table.and_then(|t| t.get("rows")).and_then(Value::as_array);
    if rows.is_none() {
        bad.push("table.rows".into());
    }
    let mut out = BTreeMap::new();
    for (i, r) in rows.into_iter().flatten().enumerate() {
        let Some(k) = r.get("k").and_then(Value::as_u64) else {
            bad.push(format!("table.rows[{i}].k"));
            continue;
        };
        match r.get("deltas").and_then(Value::as_array) {
            Some(d) if d.len() == observables.len() => {
                if out.insert(k as usize, d.iter().map(|v| v.as_f64()).collect()).is_some() {
                    bad.push(format!("table.rows[{i}].k (duplicate {k})"));
                }
            }
            _ => bad.push(format!("table.rows[{i}].deltas")),
        }
    }
    if bad.is_empty() {
        Ok((observables.iter().map(|o| format!("delta_{o}")).collect(), out))
    } else {
        Err(schema_error(path, &bad))
    }
}

fn monotone(values: &[Option<f64>]) -> bool {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    v.windows(2).all(|w| w[1] <= w[0])
}

pub fn run(args: ReportArgs) -> CliResult<()> {
    let sdoc: Value = io::read_json(&args.surrogate)?;
    let tdoc: Value = io::read_json(&args.target)?;
    let (snames, scols) = surrogate_columns(&args.surrogate, &sdoc)?;
    let (tnames, tcols) = target_columns(&args.target, &tdoc)?;
    let only_s: Vec<String> = scols.keys().filter(|k| !tcols.contains_key(k)).map(|k| format!("K={k}")).collect();
    let only_t: Vec<String> = tcols.keys().filter(|k| !scols.contains_key(k)).map(|k| format!("K={k}")).collect();
    if !only_s.is_empty() || !only_t.is_empty() {
        return Err(CliError::Config(format!(
            "K sets differ: only in {}: [{}]; only in {}: [{}]",
            args.surrogate.display(),
            only_s.join(", "),
            args.target.display(),
            only_t.join(", ")
        )));
    }
    let ks: Vec<usize> = scols.keys().copied().collect();
    let mut names = snames;
    names.extend(tnames);
    let rows: Vec<Vec<Option<f64>>> = ks
        .iter()
        .map(|k| {
            let mut r = scols[k].clone();
            r.extend(tcols[k].iter().copied());
            r
        })
        .collect();

    // the reference row is zero by construction and left out of the summary
    let k_ref = tdoc.pointer("/table/k_ref").and_then(Value::as_u64).map(|k| k as usize);
    let summary: Vec<Value> = names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let (sk, sv): (Vec<usize>, Vec<Option<f64>>) =
                ks.iter().zip(&rows).filter(|(k, _)| Some(**k) != k_ref).map(|(k, r)| (*k, r[c])).unzip();
            json!({"column": name, "crossing_K": crossing_k(&sk, &sv, args.level), "monotone": monotone(&sv)})
        })
        .collect();

    let config = json!({
        "args": to_value(&args),
        "surrogate_config": sdoc.get("config"),
        "target_config": tdoc.get("config"),
    });
    let table: Vec<Value> = ks
        .iter()
        .zip(&rows)
        .map(|(k, r)| {
            let mut m = serde_json::Map::new();
            m.insert("K".into(), json!(k));
            for (n, v) in names.iter().zip(r) {
                m.insert(n.clone(), json!(v));
            }
            Value::Object(m)
        })
        .collect();
    let doc = json_doc(&config, json!({"level": args.level, "k_ref": k_ref, "summary": summary, "rows": table}))?;
    io::write_json(&args.out.join("report.json"), &doc)?;
    let mut columns = vec!["K"];
    columns.extend(names.iter().map(|s| s.as_str()));
    let csv_rows: Vec<Vec<String>> = ks
        .iter()
        .zip(&rows)
        .map(|(k, r)| std::iter::once(k.to_string()).chain(r.iter().map(|v| fmt_opt(*v))).collect())
        .collect();
    io::write_text(&args.out.join("report.csv"), &io::csv_text(&csv_header(&config), &columns, &csv_rows))?;
    for s in &summary {
        println!("{}: crossing K = {}, monotone = {}", s["column"].as_str().unwrap_or(""), s["crossing_K"], s["monotone"]);
    }
    Ok(())
}
