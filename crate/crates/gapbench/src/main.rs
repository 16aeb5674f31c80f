use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gapbench::fixture::{conformance_jsonl, serve, FixtureMode};
use gapbench::{apply_thread_override, execute, exit, exit_code, Experiment, ExperimentConfig, Kind, Report, RunError};

#[derive(Parser)]
#[command(
    name = "gapbench",
    version,
    about = "Sampling-rate lower-bound experiments for ReLU networks and neural operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML or JSON configuration.
    Run {
        config: PathBuf,
        /// Output directory; overrides the configuration's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = one per core); overrides the configuration.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the experiment kinds.
    Kinds,
    /// Explain an experiment kind and print its default configuration.
    Describe { kind: String },
    /// Re-validate a report.json against its embedded curves and config.
    Verify { report: PathBuf },
    /// Print the echo-zero conformance vectors as JSON lines.
    ProtocolFixture {
        /// Write to this file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reference external client speaking the line protocol on stdin/stdout.
    #[command(hide = true)]
    FixtureClient {
        #[arg(value_enum)]
        mode: FixtureMode,
    },
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn run(config: PathBuf, out: Option<PathBuf>, threads: Option<usize>) -> ExitCode {
    let mut cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return code(exit::CONFIG);
        }
    };
    if let Some(t) = threads {
        cfg.threads = t;
    }
    if let Err(e) = apply_thread_override(&mut cfg, std::env::var(gapbench::THREADS_ENV).ok().as_deref()) {
        eprintln!("error: {e}");
        return code(exit::CONFIG);
    }
    let dir = out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("gapbench-out").join(cfg.kind().name()));
    let report = match execute(&cfg) {
        Ok(r) => r,
        Err(RunError::Config(e)) => {
            eprintln!("error: {e}");
            return code(exit::CONFIG);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return code(exit::FAIL);
        }
    };
    if let Err(e) = report.write(&dir) {
        eprintln!("error: {e}");
        return code(exit::FAIL);
    }
    print!("{}", report.summary());
    println!("  wrote {}", dir.display());
    code(exit_code(&report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, threads } => run(config, out, threads),
        Command::Kinds => {
            for k in Kind::ALL {
                println!("{:<18} {}", k.name(), k.summary());
            }
            code(exit::PASS)
        }
        Command::Describe { kind } => match kind.parse::<Kind>() {
            Ok(k) => {
                println!("{}\n", k.describe());
                println!("Default configuration:\n");
                print!(
                    "{}",
                    ExperimentConfig::new(Experiment::default_for(k))
                        .to_toml()
                        .expect("default configs serialize")
                );
                code(exit::PASS)
            }
            Err(e) => {
                eprintln!("error: {e}");
                code(exit::CONFIG)
            }
        },
        Command::Verify { report } => match Report::load(&report) {
            Ok(r) => {
                println!(
                    "{} is consistent ({} checks, verdict {:?})",
                    report.display(),
                    r.checks.len(),
                    r.verdict
                );
                code(exit::PASS)
            }
            Err(e) => {
                eprintln!("error: {e}");
                code(exit::FAIL)
            }
        },
        Command::ProtocolFixture { out } => {
            let text = conformance_jsonl();
            match out {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, text) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return code(exit::FAIL);
                    }
                }
                None => print!("{text}"),
            }
            code(exit::PASS)
        }
        Command::FixtureClient { mode } => {
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            match serve(mode, stdin.lock(), stdout.lock()) {
                Ok(()) => code(exit::PASS),
                Err(_) => code(exit::FAIL),
            }
        }
    }
}
