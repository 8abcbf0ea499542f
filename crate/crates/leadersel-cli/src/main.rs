//! Command-line interface: leader selection, simulation and the experiment
//! harnesses, all driven by one JSON network configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use leadersel::config::NetworkConfig;
use leadersel::experiment::{
    run_compare, run_modes_table, run_select, run_simulate, run_sweep, Algorithm,
};
use leadersel::report::{render_certificate, RunReport};
use leadersel::select::SelectionStatus;
use leadersel::Error;

/// Exit codes: 0 success, 2 infeasible or uncertified, 3 invalid input.
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_INVALID: u8 = 3;

#[derive(Parser)]
#[command(name = "leadersel", about = "Leader selection for switched multi-agent networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Network configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports and tables.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Select a minimum-size leader set and certify the dwell windows.
    Select {
        #[command(flatten)]
        common: CommonArgs,
        /// Selection algorithm.
        #[arg(long, value_enum, default_value = "1")]
        algorithm: AlgorithmArg,
    },
    /// Propagate the certified system along a seeded admissible signal.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Selection report; defaults to <out>/report.json.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compare greedy, eigenvalue-greedy and random selection.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Re-run selection over widened dwell windows.
    SweepDwell {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Re-certify with a growing number of modes forced stable.
    ModesTable {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::InvalidGraph(_)
        | Error::Configuration(_)
        | Error::Dimension(_)
        | Error::Domain(_)
        | Error::DegenerateInstance(_)
        | Error::Capability(_) => EXIT_INVALID,
        Error::SynthesisImpossible { .. } => EXIT_INFEASIBLE,
        _ => 1,
    }
}

fn load_config(common: &CommonArgs) -> Result<NetworkConfig, Error> {
    let mut cfg = NetworkConfig::from_file(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(&common.out)?;
    Ok(cfg)
}

fn write_out(path: &Path, contents: &str) -> Result<(), Error> {
    std::fs::write(path, contents)?;
    Ok(())
}

fn cmd_select(common: &CommonArgs, algorithm: Algorithm) -> Result<u8, Error> {
    let cfg = load_config(common)?;
    let report = run_select(&cfg, algorithm)?;
    let path = common.out.join("report.json");
    write_out(&path, &serde_json::to_string_pretty(&report).expect("report serializes"))?;

    let sel = &report.selection;
    println!("status: {:?}", sel.status);
    println!("leaders: {:?}", sel.leaders);
    println!("f trace: {:?}", sel.f_trace);
    println!("gamma_delta: {:.6e} (sparse: {})", sel.gamma_delta, sel.gamma_delta_is_sparse);
    match sel.gamma_0 {
        Some(g0) => println!("gamma_0: {:.4}", g0),
        None => println!("gamma_0: undefined"),
    }
    if let Some(xi) = sel.xi {
        println!("xi: {}", xi);
    }
    if report.certificate.is_some() {
        // re-run the pipeline for the readable conditions list
        let model = cfg.build_model()?;
        let leaders = sel.leaders.iter().copied().collect();
        let full = leadersel::certify::full_certificate(
            &model.with_params(sel.params_used.clone()),
            &leaders,
        )?;
        println!("{}", render_certificate(&full));
    }
    println!("report written to {}", path.display());
    Ok(if sel.status == SelectionStatus::Certified { 0 } else { EXIT_INFEASIBLE })
}

fn cmd_simulate(common: &CommonArgs, report_path: Option<&Path>) -> Result<u8, Error> {
    let cfg = load_config(common)?;
    let default_path = common.out.join("report.json");
    let path = report_path.unwrap_or(&default_path);
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Configuration(format!("cannot read report {}: {}", path.display(), e))
    })?;
    let report: RunReport = serde_json::from_str(&text)
        .map_err(|e| Error::Configuration(format!("malformed report {}: {}", path.display(), e)))?;
    if report.selection.status != SelectionStatus::Certified {
        eprintln!("report is not certified; simulate requires a certified selection");
        return Ok(EXIT_INFEASIBLE);
    }
    let table = run_simulate(&cfg, &report)?;
    let out = common.out.join("trajectory.csv");
    write_out(&out, &table.to_csv())?;
    println!("trajectory ({} samples) written to {}", table.rows.len(), out.display());
    Ok(0)
}

fn run() -> Result<u8, Error> {
    if let Ok(threads) = std::env::var("LEADERSEL_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match &cli.command {
        Command::Select { common, algorithm } => {
            let alg = match algorithm {
                AlgorithmArg::One => Algorithm::One,
                AlgorithmArg::Two => Algorithm::Two,
            };
            cmd_select(common, alg)
        }
        Command::Simulate { common, report } => cmd_simulate(common, report.as_deref()),
        Command::Compare { common } => {
            let cfg = load_config(common)?;
            let table = run_compare(&cfg)?;
            let out = common.out.join("compare.csv");
            write_out(&out, &table.to_csv())?;
            println!("comparison written to {}", out.display());
            Ok(0)
        }
        Command::SweepDwell { common } => {
            let cfg = load_config(common)?;
            let table = run_sweep(&cfg)?;
            for w in &table.warnings {
                eprintln!("warning: {}", w);
            }
            let out = common.out.join("sweep.csv");
            write_out(&out, &table.to_csv())?;
            println!("sweep written to {}", out.display());
            Ok(0)
        }
        Command::ModesTable { common } => {
            let cfg = load_config(common)?;
            let table = run_modes_table(&cfg)?;
            let out = common.out.join("modes_table.csv");
            write_out(&out, &table.to_csv())?;
            println!("modes table written to {}", out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {}", err);
            ExitCode::from(exit_code_for(&err))
        }
    }
}
