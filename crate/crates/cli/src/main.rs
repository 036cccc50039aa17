use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use driftlab_cli::{report, run, CliError, Format, RunOptions};

#[derive(Parser)]
#[command(name = "driftlab", version, about = "Run and report estimate checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks named by an experiment file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        /// Overrides the config's `out` and $DRIFTLAB_OUT.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-emit the reports listed in a manifest.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        /// Defaults to the manifest's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, unknown formats included.
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, jobs, out } => {
            if jobs == Some(0) {
                return fail(CliError::Config {
                    path: config,
                    line: None,
                    field: Some("jobs".into()),
                    message: "must be at least 1".into(),
                });
            }
            match run(&config, &RunOptions { jobs, out }) {
                Ok(outcome) => {
                    for e in &outcome.manifest.reports {
                        let verdict = if e.expect_fail {
                            format!("{} (expected)", e.verdict)
                        } else {
                            e.verdict.clone()
                        };
                        println!("{:<26} {:<22} {:>8.1}s", e.check, verdict, e.seconds);
                    }
                    println!("manifest: {}", outcome.manifest_path.display());
                    if outcome.success() {
                        ExitCode::SUCCESS
                    } else {
                        for p in outcome.failing_paths() {
                            eprintln!("failed: {}", p.display());
                        }
                        ExitCode::from(1)
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Report {
            manifest,
            format,
            out,
        } => match report(&manifest, format, out.as_deref()) {
            Ok(files) => {
                for f in files {
                    println!("{}", f.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
