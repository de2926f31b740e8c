use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use habit_cli::{run, Command, ConfigError, RunConfig};

/// Optimal retirement spending under habit formation: PDE solves, depletion
/// times, simulation, annuitization and grid-refinement studies.
#[derive(Debug, Parser)]
#[command(name = "habit", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Value function and consumption policy on the wealth x habit grid.
    Solve,
    /// The no-pension problem in scaled wealth.
    SolveScaled,
    /// Expected wealth depletion time and depletion ages.
    Wdt,
    /// Simulated paths under the optimal policy and depletion-age statistics.
    Simulate,
    /// Utility difference of annuitizing, crossing wealth and equivalent wealth.
    Annuitize,
    /// Grid-refinement study of the consumption policy.
    Converge,
    /// Consumption curves over lists of habit speeds, shares and volatilities.
    Sweep,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long, global = true)]
    theta: Option<f64>,
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Initial wealth for `simulate` and `wdt`.
    #[arg(long, global = true)]
    w0: Option<f64>,
    /// Initial habit for `simulate` and `wdt`.
    #[arg(long, global = true)]
    cbar0: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn load(o: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &o.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let pairs: [(&[&str], Option<String>); 7] = [
        (&["model.eta"], o.eta.map(|v| v.to_string())),
        (&["model.theta"], o.theta.map(|v| v.to_string())),
        (&["model.sigma"], o.sigma.map(|v| v.to_string())),
        (&["sim.w0", "wdt.w0"], o.w0.map(|v| v.to_string())),
        (&["sim.cbar0", "wdt.cbar0"], o.cbar0.map(|v| v.to_string())),
        (&["sim.seed"], o.seed.map(|v| v.to_string())),
        (&["output.dir"], o.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (keys, value) in pairs {
        if let Some(v) = value {
            for key in keys {
                cfg.set(key, &v)?;
            }
        }
    }
    Ok(cfg)
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("HABIT_HJB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("HABIT_HJB_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let cmd = match cli.command {
        Sub::Solve => Command::Solve,
        Sub::SolveScaled => Command::SolveScaled,
        Sub::Wdt => Command::Wdt,
        Sub::Simulate => Command::Simulate,
        Sub::Annuitize => Command::Annuitize,
        Sub::Converge => Command::Converge,
        Sub::Sweep => Command::Sweep,
    };
    let cfg = match load(&cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    log::info!("running {}", cmd.name());
    match run(cmd, &cfg) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
