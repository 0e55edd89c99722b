use crate::common::{csv_header, json_doc, load_bath, parse_grid, to_value, CliError, CliResult};
use bcfbench::error::Error;
use bcfbench::exact::{self, Correlation, MatsubaraSumSpec, Moment, OscillatorParams};
use bcfbench::io::{self, fmt_f64};
use clap::Args;
use serde::Serialize;
use serde_json::json;
use std::path::PathBuf;

#[derive(Debug, Args, Serialize)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub bath: PathBuf,
    #[arg(long)]
    pub omega0: f64,
    #[arg(long)]
    pub v0: f64,
    /// Spectrum grid, `start:stop:step` or a comma list; empty for moments only
    #[arg(long, default_value = "")]
    pub omegas: String,
    #[arg(long, default_value_t = 10_000)]
    pub matsubara_terms: usize,
    /// Fail with exit code 1 if any grid point is flagged
    #[arg(long)]
    pub strict: bool,
    /// Output directory for benchmark.json and spectra.csv
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: BenchmarkArgs) -> CliResult<()> {
    let bath = load_bath(&args.bath)?;
    let osc = OscillatorParams::new(args.omega0, args.v0)?;
    let omegas = parse_grid(&args.omegas).map_err(CliError::Config)?;
    let spec = MatsubaraSumSpec { n_terms: args.matsubara_terms, tail: true };
    let q2 = exact::eq_moment(&bath, &osc, Moment::Q2, spec)?;
    let p2 = exact::eq_moment(&bath, &osc, Moment::P2, spec)?;
    let config = json!({"args": to_value(&args), "bath": to_value(&bath)});

    let mut rows = Vec::with_capacity(omegas.len());
    let mut flagged = Vec::new();
    for &w in &omegas {
        let qq = exact::spectral_correlation(&bath, &osc, Correlation::Qq, w);
        let pp = exact::spectral_correlation(&bath, &osc, Correlation::Pp, w);
        match (qq, pp) {
            (Ok(a), Ok(b)) => rows.push(vec![fmt_f64(w), fmt_f64(a), fmt_f64(b), String::new()]),
            (Err(Error::Pole(m)), _) | (_, Err(Error::Pole(m))) => {
                log::warn!("omega = {w}: {m}");
                flagged.push(w);
                rows.push(vec![fmt_f64(w), String::new(), String::new(), "pole".into()]);
            }
            (Err(e), _) | (_, Err(e)) => return Err(e.into()),
        }
    }

    let doc = json_doc(
        &config,
        json!({"q2_eq": q2, "p2_eq": p2, "spectrum_points": omegas.len(), "flagged_omegas": flagged}),
    )?;
    io::write_json(&args.out.join("benchmark.json"), &doc)?;
    if !omegas.is_empty() {
        let text = io::csv_text(&csv_header(&config), &["omega", "F_Cqq", "F_Cpp", "flag"], &rows);
        io::write_text(&args.out.join("spectra.csv"), &text)?;
    }
    println!("q2_eq = {q2:.10}, p2_eq = {p2:.10}");
    if !flagged.is_empty() {
        println!("{} grid point(s) flagged as poles", flagged.len());
        if args.strict {
            return Err(CliError::Numerical(Error::Pole(format!("spectrum diverges at omega = {flagged:?}"))));
        }
    }
    Ok(())
}
