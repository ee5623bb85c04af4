//! `dkglab`: batch runner for the Dirac-Klein-Gordon laboratory.
//!
//! Exit codes: 0 all checks passed, 1 a scientific check failed, 2 usage or
//! configuration error, 3 numerical abort.

mod commands;
mod params;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Ctx;
use params::{Params, UsageError};

#[derive(Parser, Debug)]
#[command(name = "dkglab", version, about = "Numerical laboratory for the 2D Dirac-Klein-Gordon system")]
struct Cli {
    /// Root of the output tree; runs go to <out>/<command>/<label or timestamp>/.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Name of the run directory (defaults to a UTC timestamp).
    #[arg(long, global = true)]
    label: Option<String>,
    /// Seed for every pseudo-random choice.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// File of key=value lines; command-line parameters override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct KeyValues {
    /// Parameters as key=value.
    params: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Randomized check of the Dirac matrix identities and the null symbol laws.
    VerifyAlgebra {
        #[arg(long)]
        samples: Option<usize>,
        /// Matrix overrides, e.g. beta=I or alpha2=sigma3;beta=sigma2.
        #[arg(long)]
        rep: Option<String>,
        #[command(flatten)]
        kv: KeyValues,
    },
    /// Fit the L-scaling of a counterexample family.
    Sharpness(KeyValues),
    /// Bilinear (kind=bilinear) or square-localized (kind=square) Strichartz ratios.
    Strichartz(KeyValues),
    /// High-high to low interaction scan over dyadic frequencies.
    HhScan(KeyValues),
    /// Integrate the system and write a trajectory.
    Solve(KeyValues),
    /// Picard iterates and their contraction ratios.
    Picard(KeyValues),
    /// Refinement study of the first iterate of the wave component.
    Zheng(KeyValues),
    /// Position of (s, r) relative to the well-posedness region.
    Region(KeyValues),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<dkglab::Error>() {
        Some(dkglab::Error::NumericalAbort { .. }) => 3,
        _ => 2,
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("DKGLAB_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not set thread count: {e}");
                }
            }
            _ => log::warn!("ignoring DKGLAB_THREADS={v:?}"),
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<commands::Outcome> {
    let ctx = Ctx { out: cli.out, label: cli.label, seed: cli.seed };
    let config = cli.config.as_deref();
    let load = |kv: &KeyValues, keys: &[&str]| -> anyhow::Result<Params> {
        let p = Params::load(config, &kv.params)?;
        p.reject_unknown(keys)?;
        Ok(p)
    };
    match cli.command {
        Command::VerifyAlgebra { samples, rep, kv } => {
            let mut p = Params::load(config, &kv.params)?;
            p.set_default("samples", samples.map(|s| s.to_string()));
            p.set_default("rep", rep);
            p.reject_unknown(commands::VERIFY_ALGEBRA_KEYS)?;
            commands::verify_algebra(&p, &ctx)
        }
        Command::Sharpness(kv) => commands::sharpness(&load(&kv, commands::SHARPNESS_KEYS)?, &ctx),
        Command::Strichartz(kv) => commands::strichartz(&load(&kv, commands::STRICHARTZ_KEYS)?, &ctx),
        Command::HhScan(kv) => commands::hh(&load(&kv, commands::HH_SCAN_KEYS)?, &ctx),
        Command::Solve(kv) => commands::solve(&load(&kv, commands::SOLVE_KEYS)?, &ctx),
        Command::Picard(kv) => commands::picard(&load(&kv, commands::PICARD_KEYS)?, &ctx),
        Command::Zheng(kv) => commands::zheng(&load(&kv, commands::ZHENG_KEYS)?, &ctx),
        Command::Region(kv) => commands::region(&load(&kv, commands::REGION_KEYS)?, &ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    configure_threads();
    match run(cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            if let Some(dir) = outcome.dir {
                println!("output: {}", dir.display());
            }
            println!("{}", if outcome.pass { "PASS" } else { "FAIL" });
            ExitCode::from(if outcome.pass { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
