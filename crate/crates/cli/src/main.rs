use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dicke_dpt::scenario::{builtin, run_scenario, RunOptions, ScenarioConfig, ScenarioOutput, BUILTIN};
use dicke_dpt::Error;

/// Dynamical phase transitions in the driven, damped Dicke model.
#[derive(Debug, Parser)]
#[command(name = "dicke-dpt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (default: out/<scenario name>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the scenario described by a TOML file.
    Run { config: PathBuf },
    /// Run a builtin scenario.
    Scenario { name: String },
    /// List the builtin scenarios.
    ListScenarios,
    /// Parse and check a TOML scenario without running it.
    Validate { config: PathBuf },
}

fn read_config(path: &Path) -> Result<ScenarioConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ScenarioConfig::from_toml(&text)
}

fn run(cli: &Cli, config: ScenarioConfig) -> Result<ScenarioOutput, Error> {
    let out = cli.out.clone().unwrap_or_else(|| Path::new("out").join(&config.name));
    let output = run_scenario(&config, &out, &RunOptions { seed: cli.seed })?;
    for f in &output.files {
        println!("wrote {}", f.display());
    }
    if let Some(l) = output.summary.lambda {
        println!("lambda = {l}");
    }
    if let Some(a) = &output.summary.asymptotic {
        for c in a.critical_times.iter().filter(|c| c.significant) {
            println!("critical time t = {:.6}, K = {:.6}", c.t, c.k);
        }
    }
    if let Some(c) = &output.summary.conditioned {
        for t in &c.crossings {
            println!("r_plus and r_minus cross at t = {t:.4}");
        }
    }
    Ok(output)
}

fn execute(cli: &Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Run { config } => run(cli, read_config(config)?).map(|_| ()),
        Command::Scenario { name } => run(cli, builtin(name)?).map(|_| ()),
        Command::ListScenarios => {
            for b in BUILTIN {
                let c = ScenarioConfig::from_toml(b.toml)?;
                println!("{}\t{}", b.name, c.description);
            }
            Ok(())
        }
        Command::Validate { config } => {
            let c = read_config(config)?;
            println!("ok {} ({:?})", c.name, c.task);
            Ok(())
        }
    }
}

fn error_line(err: &Error) -> String {
    let scenario = match err {
        Error::Scenario { scenario, .. } => Some(scenario.clone()),
        _ => None,
    };
    serde_json::json!({ "error": err.kind(), "scenario": scenario, "message": err.to_string() }).to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
