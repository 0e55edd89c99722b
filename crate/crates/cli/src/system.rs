use crate::common::CliResult;
use bcfbench::io::{self, matrix_to_record, SystemFile};
use bcfbench::testing::systems;
use clap::{Args, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct SystemArgs {
    #[command(subcommand)]
    pub kind: SystemKind,
    #[arg(long, global = true, default_value = "system.json")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum SystemKind {
    /// Two coupled spins, V_S = sx1 + sx2
    TwoSpin {
        #[arg(long, default_value_t = 1.2)]
        omega1: f64,
        #[arg(long, default_value_t = 0.8)]
        omega2: f64,
        #[arg(long, default_value_t = 0.4)]
        g: f64,
    },
    /// Transmon coupled to a resonator, V_S = Y_r
    Transmon {
        #[arg(long, default_value_t = 1.0)]
        omega_t: f64,
        #[arg(long, default_value_t = 2.0)]
        omega_r: f64,
        #[arg(long, default_value_t = 0.4)]
        g: f64,
        #[arg(long, default_value_t = 0.15)]
        eps: f64,
        /// Fock levels per mode
        #[arg(long, default_value_t = 5)]
        levels: usize,
    },
}

pub fn run(args: SystemArgs) -> CliResult<()> {
    let file = match args.kind {
        SystemKind::TwoSpin { omega1, omega2, g } => {
            let sys = systems::two_spin(omega1, omega2, g)?;
            let mut f = SystemFile::from_system(&sys);
            for p in ['x', 'y', 'z'] {
                for site in 0..2 {
                    f.observables.insert(format!("s{p}{}", site + 1), matrix_to_record(&systems::two_spin_pauli(p, site)?));
                }
                f.covariances.push([format!("s{p}1"), format!("s{p}2")]);
            }
            f
        }
        SystemKind::Transmon { omega_t, omega_r, g, eps, levels } => {
            let tr = systems::transmon_resonator(omega_t, omega_r, g, eps, levels)?;
            let mut f = SystemFile::from_system(&tr.system);
            for (name, m) in [
                ("n_t", &tr.n_t),
                ("n_r", &tr.n_r),
                ("x2_t", &tr.x2_t),
                ("y2_t", &tr.y2_t),
                ("x2_r", &tr.x2_r),
                ("y2_r", &tr.y2_r),
                ("top_t", &tr.top_t),
                ("top_r", &tr.top_r),
            ] {
                f.observables.insert(name.into(), matrix_to_record(m));
            }
            f
        }
    };
    io::write_json(&args.out, &file)?;
    println!("{}x{} system -> {}", file.n, file.n, args.out.display());
    Ok(())
}
