use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use brw_cli::config::Config;
use brw_cli::experiments::{self, Ctx};
use brw_cli::report::{OutputFormat, RunReport};
use brw_cli::CliError;

/// Branching random walk simulation and verification experiments.
#[derive(Parser)]
#[command(name = "brw", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for tables and run metadata.
    #[arg(long, global = true, default_value = "brw-out")]
    out: PathBuf,

    /// Worker threads (results are identical for any value).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Data table format.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate forests and emit the martingale series table.
    Simulate {
        /// Also dump the first forest in the binary replay format.
        #[arg(long)]
        dump_forest: bool,
    },
    /// Medians of the square-root-normalized critical martingale ratio.
    TheoremA,
    /// Near-critical scaling of the additive martingale.
    FirstOrder,
    /// Polymer trajectory marginals against meander laws.
    MeanderFdd,
    /// Polymer overlap pair masses across depths.
    Overlap,
    /// Endpoint exponential moment against the meander closed form.
    PropExp,
    /// Estimate the renewal function and its constants.
    Renewal,
    /// Spinal decomposition identity checks.
    SpineCheck,
    /// The exact-identity suite (the verification gate).
    Identities {
        /// Negative control: corrupt the renewal table origin and expect
        /// the suite to fail.
        #[arg(long, hide = true)]
        corrupt_h0: bool,
    },
}

fn run(cli: Cli) -> Result<RunReport, CliError> {
    if let Some(threads) = cli.threads {
        // The global pool can only be set once per process; later calls in
        // tests are harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let mut config = match &cli.config {
        Some(path) => Config::from_path(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.sim.seed = seed;
    }
    let ctx = Ctx::new(config, cli.out.clone(), cli.format)?;
    match cli.command {
        Command::Simulate { dump_forest } => experiments::simulate::run(&ctx, dump_forest),
        Command::TheoremA => experiments::theorem_a::run(&ctx),
        Command::FirstOrder => experiments::first_order::run(&ctx),
        Command::MeanderFdd => experiments::meander_fdd::run(&ctx),
        Command::Overlap => experiments::overlap::run(&ctx),
        Command::PropExp => experiments::prop_exp::run(&ctx),
        Command::Renewal => experiments::renewal::run(&ctx),
        Command::SpineCheck => experiments::spine_check::run(&ctx),
        Command::Identities { corrupt_h0 } => experiments::identities::run(&ctx, corrupt_h0),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            report.print_summary();
            match report.pass {
                Some(false) => ExitCode::from(1),
                _ => ExitCode::SUCCESS,
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
