use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use limitlab::CliError;

#[derive(Parser)]
#[command(name = "limitlab", version, about = "Limit-law experiments for sums of Markovian Bernoulli variables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment in a key-value config file
    Run { config: PathBuf },
    /// List experiment ids
    ListExperiments,
    /// Show an experiment's claim and default parameters
    Describe { id: String },
    /// Emit the CSV table of a saved JSON report
    Plotdata {
        report: PathBuf,
        /// Write to this file instead of stdout
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("limitlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run { config } => {
            limitlab::configure_threads()?;
            let result = limitlab::run(&config, limitlab::env_seed()?)?;
            for c in &result.report.checks {
                println!("{} {}: {} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.bound);
            }
            println!("report: {}", result.json_path.display());
            println!("table:  {}", result.csv_path.display());
            Ok(result.exit_code())
        }
        Command::ListExperiments => {
            print!("{}", limitlab::list_experiments());
            Ok(0)
        }
        Command::Describe { id } => {
            print!("{}", limitlab::describe(&id)?);
            Ok(0)
        }
        Command::Plotdata { report, output } => {
            let bytes = limitlab::plotdata(&report)?;
            match output {
                Some(path) => std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?,
                None => std::io::stdout().write_all(&bytes).map_err(|e| CliError::io("stdout", e))?,
            }
            Ok(0)
        }
    }
}
