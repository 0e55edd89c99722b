use crate::common::{config_err, load_bath, to_value, CliError, CliResult, UNITS};
use bcfbench::fitting::{self, ExponentialBCF, IpParameters};
use bcfbench::io::{self, ModelFile};
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Esprit,
    Aaa,
    Gmt,
    IpConvert,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Number of exponential terms (GMT: spectral-density terms)
    #[arg(long = "K", short = 'K')]
    pub k: Option<usize>,
    #[arg(long)]
    pub bath: Option<PathBuf>,
    /// Pseudomode parameters for ip-convert
    #[arg(long)]
    pub ip: Option<PathBuf>,
    /// Time step of the ESPRIT and GMT samples
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 20.0)]
    pub t_max: f64,
    /// Frequency step of the AAA samples
    #[arg(long, default_value_t = 0.1)]
    pub d_omega: f64,
    /// AAA sampling range [-omega_max, omega_max); default 30 times the bath scale
    #[arg(long)]
    pub omega_max: Option<f64>,
    #[arg(long, default_value_t = 1e-13)]
    pub aaa_tol: f64,
    /// Matsubara terms for GMT
    #[arg(long, default_value_t = 2)]
    pub k_mats: usize,
    /// Horizon of the recorded deltaL
    #[arg(long, default_value_t = 30.0)]
    pub t_f: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn need_k(args: &FitArgs) -> CliResult<usize> {
    args.k.filter(|k| *k > 0).ok_or_else(|| CliError::Config(format!("--K > 0 is required for {:?}", args.method)))
}

pub fn run(args: FitArgs) -> CliResult<()> {
    let bath = match &args.bath {
        Some(p) => Some(load_bath(p)?),
        None => None,
    };
    let need_bath = || bath.as_ref().ok_or_else(|| CliError::Config("--bath is required for this method".into()));
    let mut meta = Map::new();
    let model: ExponentialBCF = match args.method {
        Method::Esprit => {
            let k = need_k(&args)?;
            let grid = fitting::time_grid(need_bath()?, args.dt, args.t_max)?;
            fitting::esprit_fit(&grid, k)?
        }
        Method::Aaa => {
            let k = need_k(&args)?;
            let b = need_bath()?;
            let omega_max = args.omega_max.unwrap_or(30.0 * b.sd.scale());
            meta.insert("omega_max".into(), json!(omega_max));
            let grid = fitting::frequency_grid(b, args.d_omega, omega_max)?;
            for w in &grid.warnings {
                log::warn!("{w}");
            }
            fitting::aaa_fit(&grid, k, args.aaa_tol)?
        }
        Method::Gmt => {
            let k = need_k(&args)?;
            let rep = fitting::gmt_fit(need_bath()?, k, args.k_mats)?;
            meta.insert("gmt_converged".into(), json!(rep.converged));
            meta.insert("gmt_step1_residual".into(), json!(rep.step1_residual));
            meta.insert("gmt_step2_residual".into(), json!(rep.step2_residual));
            rep.model
        }
        Method::IpConvert => {
            let path = args.ip.as_ref().ok_or_else(|| CliError::Config("--ip is required for ip-convert".into()))?;
            let ip: IpParameters = io::read_json(path)?;
            let hbar = bath.as_ref().map(|b| b.hbar).unwrap_or(1.0);
            fitting::ip_to_exponential(&ip, hbar).map_err(|e| config_err(path, e))?
        }
    };
    let delta_l = match &bath {
        Some(b) => Some(fitting::delta_l(b, &model, args.t_f)?),
        None => {
            log::warn!("no --bath given, deltaL is not recorded");
            None
        }
    };
    meta.insert("method".into(), to_value(args.method));
    meta.insert("K".into(), json!(args.k.unwrap_or(model.len())));
    meta.insert("terms".into(), json!(model.len()));
    meta.insert("deltaL".into(), delta_l.map(Value::from).unwrap_or(Value::Null));
    meta.insert("t_f".into(), json!(args.t_f));
    meta.insert("units".into(), json!(UNITS));
    meta.insert(
        "config".into(),
        json!({"bcfbench": env!("CARGO_PKG_VERSION"), "args": to_value(&args), "bath": to_value(&bath)}),
    );
    io::write_json(&args.out, &ModelFile::from_model(&model, meta))?;
    match delta_l {
        Some(d) => println!("{} terms, deltaL = {d:.3e} -> {}", model.len(), args.out.display()),
        None => println!("{} terms -> {}", model.len(), args.out.display()),
    }
    Ok(())
}
