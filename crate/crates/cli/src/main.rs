// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ifd_core::par::Parallelism;
use ifd_lab::error::{CliError, EXIT_OK};
use ifd_lab::{parse_config, run_scenario, schema, OutputDir, RunOptions, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "ifd-lab",
    version,
    about = "Run time-periodic ideal-free-dispersal scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write report.json plus CSV artifacts.
    Run {
        config: PathBuf,
        /// Output directory (default: the config's `output`, else `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 1 runs everything sequentially.
        #[arg(long)]
        jobs: Option<usize>,
        /// Override the grid resolution as `nx,nt`.
        #[arg(long, value_parser = parse_grid)]
        seed_grid: Option<(usize, usize)>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Print the config JSON schema.
    Schema,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected nx,nt")?;
    let nx = a.trim().parse().map_err(|e| format!("nx: {e}"))?;
    let nt = b.trim().parse().map_err(|e| format!("nt: {e}"))?;
    Ok((nx, nt))
}

/// Writes a line to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn load(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    parse_config(&text)
}

fn fail(err: &CliError, out: Option<&Path>) -> ExitCode {
    let report = err.report();
    let text = serde_json::to_string_pretty(&report).expect("error report serialises");
    let _ = writeln!(std::io::stderr().lock(), "{text}");
    if let Some(dir) = out {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), format!("{text}\n"));
        }
    }
    ExitCode::from(report.exit_code as u8)
}

fn run(config: &Path, out: Option<PathBuf>, jobs: Option<usize>, grid: Option<(usize, usize)>) -> ExitCode {
    let mut cfg = match load(config) {
        Ok(c) => c,
        Err(e) => return fail(&e, out.as_deref()),
    };
    if let Some((nx, nt)) = grid {
        cfg = cfg.with_resolution(nx, nt);
    }
    let dir = out.unwrap_or_else(|| PathBuf::from(cfg.output.as_deref().unwrap_or("out")));
    let parallelism = match jobs {
        Some(1) => Parallelism::Sequential,
        _ => Parallelism::Parallel,
    };
    let exec = || -> Result<_, CliError> {
        let mut od = OutputDir::create(&dir)?;
        // Leftovers from an earlier run would be misleading.
        for stale in ["report.json", "error.json"] {
            let _ = std::fs::remove_file(dir.join(stale));
        }
        run_scenario(&cfg, &mut od, &RunOptions { parallelism })
    };
    let result = match jobs {
        #[cfg(feature = "parallel")]
        Some(n) if n > 1 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(exec),
            Err(e) => {
                log::warn!("could not build a {n}-thread pool ({e}); using the global pool");
                exec()
            }
        },
        _ => exec(),
    };
    match result {
        Ok(outcome) => {
            log::info!("wrote {} artifacts to {}", outcome.artifacts.len(), dir.display());
            emit(&dir.join("report.json").display().to_string());
            ExitCode::from(EXIT_OK as u8)
        }
        Err(e) => fail(&e, Some(&dir)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            jobs,
            seed_grid,
        } => run(&config, out, jobs, seed_grid),
        Command::Validate { config } => match load(&config).and_then(|c| c.validate().map(|_| c)) {
            Ok(c) => {
                emit(&format!(
                    "ok: {} run on a {}x{} grid",
                    c.run.kind(),
                    c.domain.nx,
                    c.time.nt
                ));
                ExitCode::from(EXIT_OK as u8)
            }
            Err(e) => fail(&e, None),
        },
        Command::Schema => {
            emit(&serde_json::to_string_pretty(&schema()).expect("schema serialises"));
            ExitCode::from(EXIT_OK as u8)
        }
    }
}
