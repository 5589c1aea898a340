use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lwr_vsl::config::{parse_config, parse_model, Format, RunConfig};
use lwr_vsl::output::{q0_label, write_riccati, write_simulation, write_sweep};
use lwr_vsl::scenario::{run_simulation, sweep_q0, RunSummary};
use lwr_vsl::{verify, Error};

const EXIT_USAGE: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_VERIFY: u8 = 3;

/// LQ variable speed limit control for the LWR traffic model.
#[derive(Debug, Parser)]
#[command(name = "lwr-vsl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one closed- or open-loop simulation.
    Simulate(Common),
    /// Run one simulation per Q0 weight and compare car counts.
    Sweep(Common),
    /// Tabulate the feedback function Phi(z) and gain K0(z) per Q0.
    Riccati(Common),
    /// Run the numerical property suite.
    Verify,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Plant model.
    #[arg(long, value_parser = ["linear", "nonlinear"])]
    model: Option<String>,
    /// Enable or disable feedback.
    #[arg(long, value_enum)]
    control: Option<Switch>,
    /// State weight Q0; repeat for sweep/riccati.
    #[arg(long)]
    q0: Vec<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of csv,json,svg.
    #[arg(long, value_delimiter = ',')]
    formats: Option<Vec<String>>,
}

fn load(args: &Common) -> Result<RunConfig, Error> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(m) = &args.model {
        config.scenario.model = parse_model(m)?;
    }
    if let Some(c) = args.control {
        config.scenario.control_enabled = matches!(c, Switch::On);
    }
    if !args.q0.is_empty() {
        config.q0_list = args.q0.clone();
        config.scenario.q0 = args.q0[0];
    }
    if let Some(dir) = &args.out {
        config.output_dir = dir.clone();
    }
    if let Some(list) = &args.formats {
        config.formats = list.iter().map(|s| s.parse::<Format>()).collect::<Result<_, _>>()?;
    }
    config.validate()?;
    Ok(config)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidParameter { .. }
        | Error::CongestedEquilibrium { .. }
        | Error::Uncontrollable { .. } => EXIT_USAGE,
        _ => EXIT_SOLVER,
    }
}

fn simulate(args: &Common) -> Result<u8, Error> {
    let config = load(args)?;
    if args.q0.len() > 1 {
        return Err(Error::Config("simulate takes a single --q0".into()));
    }
    let history = run_simulation(&config.scenario)?;
    write_simulation(&config.output_dir, &config.scenario, &history, &config)?;
    let s = RunSummary::new(&config.scenario, &history);
    println!(
        "{:?} model, control {}: final cars {:.3} (target {:.1}), max density {:.2} cars/km -> {}",
        s.model,
        if s.control_enabled { "on" } else { "off" },
        s.final_total_cars,
        s.target_cars,
        s.max_density_per_km,
        config.output_dir.display()
    );
    Ok(0)
}

fn sweep(args: &Common) -> Result<u8, Error> {
    let config = load(args)?;
    let outcomes = sweep_q0(&config.scenario, &config.q0_list)?;
    write_sweep(&config.output_dir, &config.scenario, &outcomes, &config)?;
    let mut failed = false;
    for o in &outcomes {
        match &o.result {
            Ok(h) => println!("q0 = {:<8} final cars {:.3}", q0_label(o.q0), h.final_total_cars()),
            Err(e) => {
                failed = true;
                eprintln!("q0 = {:<8} failed: {e}", q0_label(o.q0));
            }
        }
    }
    Ok(if failed { EXIT_SOLVER } else { 0 })
}

fn riccati(args: &Common) -> Result<u8, Error> {
    let config = load(args)?;
    if config.q0_list.is_empty() {
        return Err(Error::Config("no Q0 weights given".into()));
    }
    let files = write_riccati(&config.output_dir, &config, &config.q0_list)?;
    println!("wrote {} file(s) to {}", files.len(), config.output_dir.display());
    Ok(0)
}

fn run_verify() -> Result<u8, Error> {
    let checks = verify::run_all()?;
    let mut ok = true;
    for c in &checks {
        println!("{c}");
        ok &= c.passed();
    }
    Ok(if ok { 0 } else { EXIT_VERIFY })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Riccati(a) => riccati(a),
        Command::Verify => run_verify(),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
