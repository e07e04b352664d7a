use std::path::PathBuf;
use std::process::ExitCode;

use basiskit::exec::PoolExecutor;
use basiskit::harness::{cost_report, run, Status};
use basiskit::libsvm::serialize_libsvm;
use basiskit::output::{read_csv, write_csv, write_svg, Series};
use basiskit::verify::{verify, Suite};
use basiskit::RunConfig;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "basiskit", version, about = "Compressed Newton-type federated optimization simulator")]
struct Cli {
    /// Worker threads for client work (default: BASISKIT_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config and write its CSV.
    Run {
        config: PathBuf,
        /// CSV output (overrides the config's `csv`).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run verification suites.
    Verify {
        #[arg(value_enum, default_value = "all")]
        suite: Suite,
    },
    /// Plot f gap against bits per node for one or more run CSVs.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        /// Count uploaded bits only.
        #[arg(long)]
        upload_only: bool,
    },
    /// Print the analytic per-round message sizes of a config.
    Cost {
        config: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write the bundled a1a-shaped fixture in LibSVM format.
    Fixture {
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> basiskit::Result<ExitCode> {
    let exec = match cli.threads {
        Some(t) => PoolExecutor::new(t),
        None => PoolExecutor::from_env(),
    };
    match cli.command {
        Command::Run { config, csv } => {
            let cfg = RunConfig::load(&config)?;
            let out = csv.or_else(|| cfg.csv.clone());
            let e = run(cfg, &exec)?;
            let last = e.last();
            println!(
                "{}: {:?} after {} rounds, f gap {:e}, {:.0} up + {:.0} down bits/node",
                e.config.display_name(),
                e.status,
                last.round,
                last.fgap,
                last.up_bits,
                last.down_bits
            );
            if let Some(d) = &e.diagnostic {
                eprintln!("{d}");
            }
            if let Some(path) = out {
                write_csv(&path, &e.records)?;
            }
            Ok(if e.status == Status::Diverged {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Verify { suite } => {
            let reports = verify(suite, &exec)?;
            for r in &reports {
                print!("{r}");
            }
            Ok(if reports.iter().all(|r| r.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Plot { csv, output, upload_only } => {
            let mut series = Vec::new();
            for path in &csv {
                let records = read_csv(path)?;
                let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
                series.push(Series::from_records(name, &records, !upload_only));
            }
            let label = if upload_only { "uploaded bits per node" } else { "communicated bits per node" };
            write_svg(&output, &series, label)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Cost { config, json } => {
            let report = cost_report(&RunConfig::load(&config)?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("serializable report"));
            } else {
                print!("{report}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Fixture { output } => {
            let text = serialize_libsvm(&basiskit::dataset::a1a_fixture());
            std::fs::write(&output, text).map_err(|e| basiskit::DataError::io(&output, e))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
