use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use tspmp_cli::{
    compare_golden, lambda_grid, run_scenario, sweep_lambda, write_artifacts, CliError,
    CliResult, GoldenFile, Scenario,
};

#[derive(Parser)]
#[command(name = "tspmp", version, about = "Sampled-data optimal control on time scales")]
struct Cli {
    /// Integration step overriding every scenario.
    #[arg(long, global = true, env = "TSPMP_STEP")]
    step: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve scenario files and write their artifacts.
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Add one sampling time λ to a base scenario and move it across a range.
    Sweep {
        #[arg(long)]
        base: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        from: f64,
        #[arg(long, default_value_t = 11.95)]
        to: f64,
        #[arg(long, default_value_t = 239)]
        steps: usize,
        /// Distance to a bound below which a control counts as saturated.
        #[arg(long, default_value_t = 1e-2)]
        saturation_tol: f64,
        /// Directory for the table and thresholds; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare stored results against golden values.
    Compare {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        golden: PathBuf,
    },
}

fn run(paths: &[PathBuf], out: &Path, step: Option<f64>) -> i32 {
    let outcomes: Vec<(String, CliResult<String>, i32)> = paths
        .par_iter()
        .map(|path| {
            let label = path.display().to_string();
            let outcome = Scenario::load(path)
                .and_then(|sc| run_scenario(&sc, step))
                .and_then(|run| {
                    write_artifacts(&run, out)?;
                    let code = run.record.exit_code();
                    let lines = run
                        .record
                        .solvers
                        .iter()
                        .map(|s| {
                            let mut line = s.summary_line(&run.record.scenario);
                            for m in &s.mismatches {
                                line.push_str(&format!("\n  mismatch: {m}"));
                            }
                            line
                        })
                        .collect::<Vec<_>>()
                        .join("\n");
                    Ok((lines, code))
                });
            match outcome {
                Ok((lines, code)) => (label, Ok(lines), code),
                Err(e) => {
                    let code = e.exit_code();
                    (label, Err(e), code)
                }
            }
        })
        .collect();
    let mut worst = 0;
    for (label, outcome, code) in outcomes {
        match outcome {
            Ok(lines) => println!("{lines}"),
            Err(e) => eprintln!("{label}: {e}"),
        }
        worst = worst.max(code);
    }
    worst
}

fn sweep(
    base: &Path,
    grid: Vec<f64>,
    band: f64,
    out: Option<&Path>,
    step: Option<f64>,
) -> CliResult<i32> {
    let scenario = Scenario::load(base)?;
    let mut bands = vec![band];
    if band != 0.0 {
        bands.push(0.0);
    }
    let result = sweep_lambda(&scenario, &grid, &bands, step)?;
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
                path: dir.to_path_buf(),
                source: e,
            })?;
            for (name, body) in [
                ("lambda_sweep.csv", result.table_csv()),
                ("thresholds.csv", result.thresholds_csv()),
            ] {
                let path = dir.join(name);
                std::fs::write(&path, body).map_err(|e| CliError::Io { path, source: e })?;
            }
            print!("{}", result.thresholds_csv());
        }
        None => {
            print!("{}", result.table_csv());
            println!();
            print!("{}", result.thresholds_csv());
        }
    }
    Ok(0)
}

fn compare(results: &Path, golden: &Path) -> CliResult<i32> {
    let golden = GoldenFile::load(golden)?;
    let cmp = compare_golden(results, &golden)?;
    print!("{}", cmp.table());
    Ok(cmp.exit_code())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    if let Some(h) = cli.step {
        if !(h > 0.0 && h.is_finite()) {
            eprintln!("invalid step {h}");
            return ExitCode::from(2);
        }
    }
    let code = match cli.command {
        Command::Run { scenarios, out } => Ok(run(&scenarios, &out, cli.step)),
        Command::Sweep {
            base,
            from,
            to,
            steps,
            saturation_tol,
            out,
        } => sweep(
            &base,
            lambda_grid(from, to, steps),
            saturation_tol,
            out.as_deref(),
            cli.step,
        ),
        Command::Compare { results, golden } => compare(&results, &golden),
    };
    match code {
        Ok(c) => ExitCode::from(c as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
