use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wavemaps::config::RunConfig;
use wavemaps::experiments::{output_dir, run};
use wavemaps::WmError;

#[derive(Parser)]
#[command(name = "wavemaps", version, about = "Stability experiments for co-rotational wave-maps blowup")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for independent sub-runs (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Output directory; overrides WAVEMAPS_OUTPUT and the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Parse and validate a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn load(path: &PathBuf) -> Result<RunConfig, ExitCode> {
    RunConfig::from_file(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(cfg) => {
                println!("{}: valid {} config", config.display(), cfg.experiment);
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { config, jobs, output } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let env = std::env::var("WAVEMAPS_OUTPUT").ok();
            let out = output_dir(&cfg, output.as_deref(), env.as_deref());
            match run(&cfg, &out, jobs) {
                Ok(report) => {
                    for c in &report.checks {
                        println!("{} {:<40} {:>24.16e}  ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.limit);
                    }
                    println!("wrote {}", out.join("manifest.json").display());
                    if report.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_FAIL)
                    }
                }
                Err(e @ WmError::Config { .. }) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_CONFIG)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_FAIL)
                }
            }
        }
    }
}
