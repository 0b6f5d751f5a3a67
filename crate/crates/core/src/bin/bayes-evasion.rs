use std::path::PathBuf;
use std::process::ExitCode;

use bayes_evasion::experiment::{exit_code, run_experiment, RunOptions, Selection};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(version, about = "Episodic evasion planning with learned capture intensity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSV and SVG outputs.
    Run(RunArgs),
    /// Print the names of the bundled scenarios.
    Scenarios,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Config file, or the name of a bundled scenario (fig1, fig2, fig3).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    algorithm: AlgorithmArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    #[arg(long)]
    obs_grid: Option<usize>,
    #[arg(long)]
    pde_grid: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Pc,
    Gp,
    Both,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Scenarios => {
            for name in bayes_evasion::scenario::bundled_names() {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Run(args) => run(args),
    }
}

fn run(args: RunArgs) -> ExitCode {
    let selection = match args.algorithm {
        AlgorithmArg::Pc => Selection::Pc,
        AlgorithmArg::Gp => Selection::Gp,
        AlgorithmArg::Both => Selection::Both,
    };
    let mut opts = RunOptions::new(selection, &args.output_dir);
    opts.seed = args.seed;
    opts.episodes = args.episodes;
    opts.obs_grid = args.obs_grid;
    opts.pde_grid = args.pde_grid;

    match run_experiment(&args.config, &opts) {
        Ok(summary) => {
            println!("Q* = {:.6}", summary.q_star);
            for r in &summary.results {
                println!(
                    "{}: {} episodes, R_T = {:.6}, S_T = {:.6}",
                    r.algorithm, r.episodes, r.final_excess_risk, r.final_capture_rate
                );
            }
            println!("{} files written to {}", summary.files.len(), opts.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}: {e}", args.config.display());
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
