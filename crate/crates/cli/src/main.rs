//! `dualchain <command> --config <path> [--out <dir>] [--seed <u64>] [--nmax <int>] [--trials <int>]`
//!
//! Exit status: 0 on success, 2 when the dual is infeasible, 1 on any other
//! error or failed check.

mod commands;
mod config;
mod error;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::{Ctx, Flags, COMMANDS};
use config::Config;
use error::{CliError, CliResult};
use output::Out;

#[derive(Debug, Parser)]
#[command(name = "dualchain", version, about = "Duality and intertwining of finite Markov kernels")]
struct Cli {
    /// One of build, dual, intertwine, spectrum, ssd, simulate, cutoff, verify, plotdata.
    command: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    nmax: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Series for `plotdata`: sep_vs_survival, absorption_pmf, spectrum, phi_profile.
    #[arg(long)]
    series: Option<String>,
}

fn set_threads() {
    if let Some(k) = std::env::var("DUALCHAIN_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if k > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    }
}

fn execute(cli: Cli) -> CliResult<Vec<PathBuf>> {
    if !COMMANDS.contains(&cli.command.as_str()) {
        return Err(CliError::UnknownCommand(cli.command));
    }
    let cfg = Config::load(&cli.config)?;
    let chain = cfg.chain()?;
    let out = Out::new(&cli.out)?;
    let flags = Flags { seed: cli.seed, n_max: cli.nmax, trials: cli.trials, series: cli.series };
    let mut ctx = Ctx { cfg, chain, out, flags };
    let result = commands::run(&cli.command, &mut ctx);
    for f in &ctx.out.written {
        eprintln!("wrote {}", f.display());
    }
    result.map(|_| ctx.out.written)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    set_threads();
    match execute(cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
