use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use frodest::{cmd_analyze, cmd_estimate, cmd_repro_eeg, cmd_simulate, CliError, EstimateOptions, Experiment, Overrides};

#[derive(Parser)]
#[command(name = "frodest", version, about = "Fractional-order network simulation and minimum-energy estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model document (JSON); overrides `model_path` from the config.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Memory depth of the lifted model.
    #[arg(long)]
    v: Option<usize>,
    /// Number of steps N.
    #[arg(long)]
    horizon: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl From<Common> for Overrides {
    fn from(c: Common) -> Self {
        Overrides {
            config: c.config,
            model: c.model,
            seed: c.seed,
            v: c.v,
            horizon: c.horizon,
            out: c.out,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the full-memory network and write trajectory.csv.
    Simulate(Common),
    /// Run the recursive estimator and write estimation.csv.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Measured trajectory CSV; simulated from the config when omitted.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Also solve the batch problem and print the terminal discrepancy.
        #[arg(long)]
        oracle: bool,
    },
    /// Check the stability assumptions and write analysis.json.
    Analyze(Common),
    /// Estimate the synthetic EEG scenario for several memory depths.
    ReproEeg {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 10, 20])]
        v_list: Vec<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(common) => {
            let exp = Experiment::resolve(&common.into())?;
            let done = cmd_simulate(&exp)?;
            println!("wrote {}", done.trajectory.display());
        }
        Command::Estimate { common, trajectory, oracle } => {
            let exp = Experiment::resolve(&common.into())?;
            let done = cmd_estimate(&exp, &EstimateOptions { trajectory, oracle })?;
            println!("wrote {}", done.estimation.display());
            if let Some(d) = done.oracle {
                println!("oracle discrepancy: {:e} (relative {:e})", d.absolute, d.relative);
            }
        }
        Command::Analyze(common) => {
            let exp = Experiment::resolve(&common.into())?;
            let done = cmd_analyze(&exp)?;
            println!("wrote {} (all assumptions satisfied: {})", done.report.display(), done.document["all_satisfied"]);
        }
        Command::ReproEeg { seed, v_list, out } => {
            let done = cmd_repro_eeg(seed, &v_list, &out)?;
            for r in &done.runs {
                println!("v = {:>3}: sup error {:.6}, rms error {:.6}", r.v, r.sup_error, r.rms_error);
            }
            println!("wrote {} files to {}", done.files.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
