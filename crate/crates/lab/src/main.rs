// glibc malloc returns large tensor buffers to the OS on every free
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use std::io::{Read as _, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use taml_lab::runner::{self, CurveInit, RunError};

#[derive(Parser)]
#[command(name = "taml", version, about = "Task-agnostic meta-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and meta-test one config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run or reuse several configs and tabulate their meta-test results.
    Compare {
        #[arg(long, value_delimiter = ',', required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the meta-test metric after 0..=max-steps adaptation steps as CSV.
    Curve {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        max_steps: usize,
        #[arg(long, value_enum, default_value = "trained")]
        init: CurveInit,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inequality measures of a column of losses (`-` reads stdin).
    Measures {
        #[arg(long)]
        input: String,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ RunError::Config { .. }) => {
            eprint!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), RunError> {
    // a closed pipe (`taml run ... | head`) is not an error
    let mut stdout = std::io::stdout().lock();
    match command {
        Command::Run { config, seed } => {
            let parsed = runner::load_config(&config, seed)?;
            let record = runner::run(&parsed)?;
            if let Some(mt) = &record.summary.meta_test {
                for p in &mt.curve {
                    let _ = writeln!(
                        stdout,
                        "step {}: {} {:.4} ± {:.4}",
                        p.step, mt.metric, p.mean, p.ci_half_width
                    );
                }
            }
            let _ = writeln!(stdout, "wrote {}", record.dir.display());
        }
        Command::Compare { configs, out } => {
            let c = runner::compare(&configs, &out)?;
            let _ = stdout.write_all(c.text.as_bytes());
        }
        Command::Curve {
            run,
            max_steps,
            init,
            out,
        } => {
            let csv = runner::curve(&run, max_steps, init)?;
            match out {
                Some(path) => std::fs::write(&path, csv).map_err(|source| RunError::Io {
                    path: path.display().to_string(),
                    source,
                })?,
                None => {
                    let _ = stdout.write_all(csv.as_bytes());
                }
            }
        }
        Command::Measures { input } => {
            let text = if input == "-" {
                let mut s = String::new();
                std::io::stdin().read_to_string(&mut s).map_err(|source| RunError::Io {
                    path: "<stdin>".into(),
                    source,
                })?;
                s
            } else {
                std::fs::read_to_string(&input).map_err(|source| RunError::Io {
                    path: input.clone(),
                    source,
                })?
            };
            let m = runner::measures(&text)?;
            let _ = writeln!(stdout, "{}", serde_json::to_string(&m).expect("measures serialize"));
        }
    }
    Ok(())
}
