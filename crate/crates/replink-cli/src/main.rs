use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use replink_cli::commands;
use replink_cli::scenario::{load_scenario, Override};
use replink_cli::CliError;

/// Simulator and analysis toolkit for a multiplexed quantum-repeater
/// elementary link.
#[derive(Parser)]
#[command(name = "replink", version, about)]
struct Cli {
    /// Override the scenario's RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the scenario's frame budget.
    #[arg(long, global = true)]
    frames: Option<u64>,
    /// Output directory (default: $REPLINK_OUT_DIR or ./replink-out).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for frame execution (0 = auto).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Scenario override, dotted path = JSON value (repeatable), e.g.
    /// --override link.protocol.coincidence_window_ns=40.0
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the link and write event/herald/delivery exports plus a report.
    Simulate { scenario: PathBuf },
    /// Run the (power × window) sweep grid; resumable per point.
    Sweep { scenario: PathBuf },
    /// Run a CHSH campaign on delivered pairs and report S with its error.
    Belltest { scenario: PathBuf },
    /// Reconstruct the delivered state by tomography and report fidelities.
    Tomography { scenario: PathBuf },
    /// Compare the two heralding schemes on identical photon streams.
    Compare { scenario: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    let out_dir = cli
        .out_dir
        .or_else(|| std::env::var_os("REPLINK_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("replink-out"));
    let overrides: Vec<Override> = cli
        .overrides
        .iter()
        .map(|raw| Override::parse(raw))
        .collect::<Result<_, _>>()?;

    let scenario_path = match &cli.command {
        Command::Simulate { scenario }
        | Command::Sweep { scenario }
        | Command::Belltest { scenario }
        | Command::Tomography { scenario }
        | Command::Compare { scenario } => scenario.clone(),
    };
    let loaded = load_scenario(&scenario_path, cli.seed, cli.frames, &overrides)?;

    match cli.command {
        Command::Simulate { .. } => {
            let report = commands::cmd_simulate(&loaded, &out_dir)?;
            let point = &report["point"];
            println!(
                "simulate: {} frames, herald {} Hz, EDR {} Hz, fidelity {}, outputs in {}",
                report["frames"], point["herald_hz"], point["edr_hz"], point["fidelity"],
                out_dir.display()
            );
        }
        Command::Sweep { .. } => {
            let grid = commands::cmd_sweep(&loaded, &out_dir)?;
            println!("sweep: grid written to {}", grid.display());
        }
        Command::Belltest { .. } => {
            let report = commands::cmd_belltest(&loaded, &out_dir)?;
            println!(
                "belltest: S = {} ± {} (significance {}σ)",
                report["s"], report["stderr"], report["significance"]
            );
        }
        Command::Tomography { .. } => {
            let report = commands::cmd_tomography(&loaded, &out_dir)?;
            for (kind, section) in report["reconstructions"].as_object().unwrap() {
                println!(
                    "tomography {}: F(ψ⁺) = {}, F(ψ⁻) = {}",
                    kind, section["fidelity_psi_plus"], section["fidelity_psi_minus"]
                );
            }
        }
        Command::Compare { .. } => {
            let report = commands::cmd_compare(&loaded, &out_dir)?;
            println!(
                "compare: SPI {} Hz, TPI {} Hz, ratio {}",
                report["spi_click_hz"], report["tpi_herald_hz"], report["ratio"]
            );
        }
    }
    Ok(())
}
