use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use steklov_cli::{run, RunConfig, RunError, RunOptions};

#[derive(Parser)]
#[command(name = "steklov", version, about = "Steklov spectra of the penalized curl-curl operator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let Command::Run { config, out, quiet } = cli.command;
    let result = RunConfig::load(&config).map_err(RunError::from).and_then(|cfg| {
        let opts = RunOptions::for_config(&cfg, Some(&config), out);
        run(&cfg, &opts)
    });
    match result {
        Ok(summary) => {
            if !quiet {
                for f in &summary.files {
                    println!("{}", f.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
