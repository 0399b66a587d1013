//! `cellfree` command-line interface.
//!
//! Exit codes: 0 on success, 1 for configuration or usage errors, 2 for
//! runtime failures.

mod oracle;

use std::path::PathBuf;
use std::process::ExitCode;

use cellfree::harness::{emit_results, run_experiment, sweep, OutputFormat, ResultTable, ScenarioConfig};
use cellfree::strategies::Strategy;
use cellfree::{Error, Exec};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cellfree", version, about = "Multi-CPU cell-free massive MIMO downlink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Run(RunArgs),
    /// Run a grid over K and D.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated user counts.
        #[arg(long = "k", value_delimiter = ',')]
        ks: Vec<usize>,
        /// Comma-separated CPU counts.
        #[arg(long = "d", value_delimiter = ',')]
        ds: Vec<usize>,
    },
    /// Compare the simulator against brute-force reference computations.
    Oracle {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the effective configuration as TOML.
    Config(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of SC, WC, NC.
    #[arg(long, value_delimiter = ',')]
    strategies: Vec<String>,
    /// Reduced preset: M=30, K=12, D=3, 20 throws of 50 fading blocks.
    #[arg(long, conflicts_with = "paper_scale")]
    desk_scale: bool,
    /// Full-size preset: M=100, 200 throws of 1000 fading blocks.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Disable the thread pool.
    #[arg(long)]
    sequential: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ScenarioConfig, Error> {
        let mut config = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        if self.paper_scale {
            let full = ScenarioConfig::full_scale();
            config.num_aps = full.num_aps;
            config.n_throws = full.n_throws;
            config.n_fading = full.n_fading;
        }
        if self.desk_scale {
            config.apply_desk_scale();
        }
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if !self.strategies.is_empty() {
            config.strategies = self.strategies.iter().map(|s| s.parse::<Strategy>()).collect::<Result<_, _>>()?;
        }
        config.validate()?;
        Ok(config)
    }
}

impl RunArgs {
    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    fn write(&self, table: &ResultTable) -> Result<(), Error> {
        let format: OutputFormat = self.format.parse()?;
        match &self.out {
            Some(path) => emit_results(table, path, format),
            None => {
                let text = match format {
                    OutputFormat::Csv => table.to_csv_string()?,
                    OutputFormat::Json => table.to_json_string()? + "\n",
                };
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn summarize(table: &ResultTable) {
    for r in table.aggregates() {
        let show = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        eprintln!(
            "{} D={} K={}: min rate {} (se {}), max/min {}, {} throws, {} dropped",
            r.strategy,
            r.num_cpus,
            r.num_users,
            show(r.min_rate),
            show(r.min_rate_se),
            show(r.quotient),
            r.n,
            r.dropped_trials
        );
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::InvalidInput(_)) || matches!(e, Error::Io { .. })
}

fn execute(command: Command) -> Result<(), (Error, bool)> {
    // The flag marks errors raised before any simulation work started.
    let early = |e: Error| {
        let config = is_config_error(&e);
        (e, config)
    };
    match command {
        Command::Run(args) => {
            let config = args.config.resolve().map_err(early)?;
            args.format.parse::<OutputFormat>().map_err(early)?;
            let table = run_experiment(&config, args.exec()).map_err(|e| (e, false))?;
            summarize(&table);
            args.write(&table).map_err(|e| (e, false))
        }
        Command::Sweep { run, ks, ds } => {
            let config = run.config.resolve().map_err(early)?;
            run.format.parse::<OutputFormat>().map_err(early)?;
            // Every grid point is validated before any throw runs.
            let table = sweep(&config, &ks, &ds, run.exec()).map_err(|e| {
                let config_error = matches!(e, Error::Config(_));
                (e, config_error)
            })?;
            summarize(&table);
            run.write(&table).map_err(|e| (e, false))
        }
        Command::Oracle { seed } => {
            if oracle::run_all(seed) {
                Ok(())
            } else {
                Err((Error::Solver("oracle comparison failed".into()), false))
            }
        }
        Command::Config(args) => {
            let config = args.resolve().map_err(early)?;
            print!("{}", config.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((e, config_error)) => {
            eprintln!("error: {e}");
            ExitCode::from(if config_error { 1 } else { 2 })
        }
    }
}
