use crate::common::{
    config_err, csv_header, json_doc, load_bath, load_model_args, load_system, model_summaries, to_value, CliError,
    CliResult,
};
use bcfbench::heom::{gibbs_state, rk4_propagate, GenericHeom, SteadyOptions};
use bcfbench::io::{self, fmt_f64, fmt_opt};
use bcfbench::linalg::{self, CMat};
use bcfbench::testing::{self, ConvergenceParams, Observable, SteadyMethod};
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::json;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SteadyKind {
    /// Solve for the stationary hierarchy directly
    Solve,
    /// Propagate from the Gibbs state to --t-f
    Propagate,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub bath: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Hierarchy depth H
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
    /// Compute steady-state observables per K instead of time series
    #[arg(long)]
    pub steady: bool,
    #[arg(long, value_enum, default_value_t = SteadyKind::Solve)]
    pub steady_method: SteadyKind,
    /// Reference K for the relative deviations (default: largest K)
    #[arg(long = "k-ref")]
    pub k_ref: Option<usize>,
    #[arg(long, default_value_t = 1e-11)]
    pub tol: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// End of the time series, or propagation time for --steady-method propagate
    #[arg(long, default_value_t = 50.0)]
    pub t_f: f64,
    /// Record every `stride` steps
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: SimulateArgs) -> CliResult<()> {
    let (file, sys) = load_system(&args.system)?;
    let bath = load_bath(&args.bath)?;
    let models = load_model_args(&args.model, &args.models)?;
    let observables = file.observable_list().map_err(|e| config_err(&args.system, e))?;
    let config = json!({
        "args": to_value(&args),
        "bath": to_value(&bath),
        "models": model_summaries(&models),
        "observables": observables.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
    });
    if args.steady {
        steady(&args, &sys, &bath, &models, &observables, &config)
    } else {
        series(&args, &sys, &bath, &models, &observables, &config)
    }
}

fn steady(
    args: &SimulateArgs,
    sys: &bcfbench::heom::SystemSpec,
    bath: &bcfbench::bath::BathSpec,
    models: &[crate::common::LoadedModel],
    observables: &[(String, Observable)],
    config: &serde_json::Value,
) -> CliResult<()> {
    if observables.is_empty() {
        return Err(config_err(&args.system, "defines no observables"));
    }
    let k_ref = args.k_ref.unwrap_or_else(|| models.iter().map(|m| m.k).max().unwrap_or(0));
    let method = match args.steady_method {
        SteadyKind::Solve => SteadyMethod::Solve(SteadyOptions { tol: args.tol, ..Default::default() }),
        SteadyKind::Propagate => SteadyMethod::Propagate { dt: args.dt, t_f: args.t_f },
    };
    let params = ConvergenceParams { depth: args.depth, method, k_ref };
    let list: Vec<(usize, bcfbench::fitting::ExponentialBCF)> = models.iter().map(|m| (m.k, m.model.clone())).collect();
    let table = testing::convergence_report(sys, bath, &list, observables, &params, None)?;

    let doc = json_doc(config, json!({"kind": "target", "depth": args.depth, "table": table}))?;
    io::write_json(&args.out.join("target.json"), &doc)?;
    let mut columns: Vec<String> = vec!["K".into(), "trace".into()];
    columns.extend(table.observables.iter().cloned());
    columns.extend(table.observables.iter().map(|n| format!("delta_{n}")));
    columns.push("failure".into());
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.k.to_string(), fmt_opt(r.trace)];
            row.extend(r.values.iter().map(|v| fmt_opt(*v)));
            row.extend(r.deltas.iter().map(|v| fmt_opt(*v)));
            // commas would break the column layout
            row.push(r.failure.clone().unwrap_or_default().replace(',', ";"));
            row
        })
        .collect();
    let cols: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    io::write_text(&args.out.join("target.csv"), &io::csv_text(&csv_header(config), &cols, &rows))?;

    for r in &table.rows {
        match &r.failure {
            Some(f) => println!("K = {:>3}: failed: {f}", r.k),
            None => println!("K = {:>3}: {}", r.k, r.values.iter().map(|v| fmt_opt(*v)).collect::<Vec<_>>().join(" ")),
        }
    }
    let failures: Vec<&String> = table.rows.iter().filter_map(|r| r.failure.as_ref()).collect();
    if let Some(f) = failures.iter().find(|f| f.starts_with("instability")) {
        return Err(CliError::Instability(f.to_string()));
    }
    if let Some(f) = failures.first() {
        return Err(CliError::Numerical(bcfbench::error::Error::Numerical { msg: f.to_string(), estimate: f64::NAN }));
    }
    Ok(())
}

fn series(
    args: &SimulateArgs,
    sys: &bcfbench::heom::SystemSpec,
    bath: &bcfbench::bath::BathSpec,
    models: &[crate::common::LoadedModel],
    observables: &[(String, Observable)],
    config: &serde_json::Value,
) -> CliResult<()> {
    let lambda = bath.counter_lambda()?;
    let n = sys.dim();
    let pops: Vec<(String, CMat)> = (0..n)
        .map(|i| {
            let mut p = CMat::zeros(n, n);
            p[(i, i)] = num_complex::Complex64::new(1.0, 0.0);
            let label = sys.labels.get(i).cloned().unwrap_or_else(|| i.to_string());
            (format!("p_{label}"), p)
        })
        .collect();
    let mut columns: Vec<String> = vec!["t".into(), "trace".into()];
    columns.extend(observables.iter().map(|(n, _)| n.clone()));
    columns.extend(pops.iter().map(|(n, _)| n.clone()));
    let cols: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    for m in models {
        let heom = GenericHeom::new(&sys.with_counter_term(lambda), &m.model, args.depth, bath.hbar)?;
        let start = heom.initial(&gibbs_state(&sys.h_eff(lambda), bath.beta))?;
        let mut rows = Vec::new();
        rk4_propagate(&heom, &start, args.dt, args.t_f, args.stride, |t, s| {
            let rho = heom.rho0(s);
            let mut row = vec![fmt_f64(t), fmt_f64(linalg::trace(&rho).re)];
            row.extend(observables.iter().map(|(_, o)| fmt_f64(o.evaluate(&rho))));
            row.extend(pops.iter().map(|(_, p)| fmt_f64(linalg::trace(&(p * &rho)).re)));
            rows.push(row);
        })?;
        let path = args.out.join(format!("timeseries_K{}.csv", m.k));
        io::write_text(&path, &io::csv_text(&csv_header(config), &cols, &rows))?;
        println!("K = {:>3}: {} samples -> {}", m.k, rows.len(), path.display());
    }
    Ok(())
}
