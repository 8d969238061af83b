use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use scale_opt::cli::{self, BenchOptions, VerifyConfig};
use scale_opt::Error;

#[derive(Parser)]
#[command(
    name = "scale-opt",
    version,
    about = "Optimizer experiments, normalization benchmarks and memory accounting"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment config and write one trace CSV per seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Time the five normalizations on square Gaussian matrices.
    BenchNorms {
        #[arg(long, value_delimiter = ',', default_value = "1024,2048")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        repeats: usize,
        /// Wall-clock allowance per (kind, dim) cell.
        #[arg(long, default_value_t = 60.0)]
        budget_secs: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weights-plus-state memory table for a shape file or bundled shape name.
    Memory {
        /// Shape JSON path, or `llama_1b` / `llama_7b`. Both bundled shapes if omitted.
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-block gradient variance at initialization and along training.
    Variance {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Run the property suites end to end.
    Verify {
        /// JSON with optional `ns` coefficient overrides and `seed`.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cmd: Command) -> Result<i32, Error> {
    match cmd {
        Command::Train { config, out, seeds } => {
            let res = cli::cmd_train(&config, out.as_deref(), seeds.as_deref())?;
            for (path, (seed, tr)) in res.files.iter().zip(&res.traces) {
                println!(
                    "seed {seed}: {} steps, final loss {:.6e}{} -> {}",
                    tr.steps(),
                    tr.final_loss,
                    if tr.divergent { " (diverged)" } else { "" },
                    path.display()
                );
            }
            let diverged = res.divergent_seeds();
            if diverged.is_empty() {
                Ok(cli::EXIT_OK)
            } else {
                eprintln!("diverged seeds: {diverged:?}");
                Ok(cli::EXIT_FAILURE)
            }
        }
        Command::BenchNorms {
            dims,
            repeats,
            budget_secs,
            out,
        } => {
            if !(budget_secs >= 0.0 && budget_secs.is_finite()) {
                return Err(Error::Config(
                    "--budget-secs must be a non-negative number".into(),
                ));
            }
            let opts = BenchOptions {
                dims,
                repeats,
                budget: Duration::from_secs_f64(budget_secs),
                ..BenchOptions::default()
            };
            let report = cli::cmd_bench_norms(&opts)?;
            report.write_csv(std::io::stdout().lock())?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                report.write_csv(std::fs::File::create(dir.join("bench_norms.csv"))?)?;
            }
            Ok(cli::EXIT_OK)
        }
        Command::Memory { config, out } => {
            let shapes = match config {
                Some(c) => vec![c],
                None => vec!["llama_1b".to_string(), "llama_7b".to_string()],
            };
            for s in shapes {
                let res = cli::cmd_memory(&s, out.as_deref())?;
                println!("# {}", res.shape.name.as_deref().unwrap_or(&s));
                scale_opt::diagnostics::write_memory_csv(std::io::stdout().lock(), &res.rows)?;
            }
            Ok(cli::EXIT_OK)
        }
        Command::Variance { config, out, seeds } => {
            let res = cli::cmd_variance(&config, out.as_deref(), seeds.as_deref())?;
            for (seed, est) in &res.at_init {
                let order: Vec<&str> = est
                    .ordering()
                    .iter()
                    .map(|&i| est.blocks[i].as_str())
                    .collect();
                println!("seed {seed}: variance ordering {}", order.join(" > "));
            }
            println!(
                "wrote {} files to {}",
                res.files.len(),
                res.out_dir.display()
            );
            Ok(cli::EXIT_OK)
        }
        Command::Verify { config } => {
            let cfg = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)
                        .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                    serde_json::from_str::<VerifyConfig>(&text).map_err(|e| {
                        Error::Config(format!(
                            "{}: byte {}: {e}",
                            p.display(),
                            cli::json_error_offset(&text, &e)
                        ))
                    })?
                }
                None => VerifyConfig::default(),
            };
            let report = cli::cmd_verify(&cfg)?;
            print!("{report}");
            Ok(if report.passed() {
                cli::EXIT_OK
            } else {
                cli::EXIT_FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
