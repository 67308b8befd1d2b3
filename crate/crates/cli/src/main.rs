use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nhtrack_core::analysis::{self, STEADY_FRACTION};
use nhtrack_core::sim::{certify, plot, run_experiment_grid, run_scenario, GridOptions, RunLog, RunResult, ScenarioFile, SimError};

#[derive(Parser)]
#[command(name = "nhtrack", version, about = "Distributed trajectory tracking of unicycle vehicle networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its log, plots and summary.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Defaults to the scenario's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reproduce the three-topology experiment, clean and attacked.
    Grid {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Run a scenario and print its ultimate-bound certificate.
    Certify {
        #[arg(long)]
        scenario: PathBuf,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot trajectories and error curves from a run log.
    Plot {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_run(result: &RunResult, dir: &Path, defaults: &[String]) -> Result<(), SimError> {
    std::fs::create_dir_all(dir)?;
    let file = std::fs::File::create(dir.join("run.csv"))?;
    result.log.write_csv(std::io::BufWriter::new(file))?;
    if result.log.is_empty() {
        return Ok(());
    }
    plot::plot_log(&result.log, dir)?;
    let log = &result.log;
    let o = &result.outcome;
    let last = log.rows.last().expect("nonempty");
    let mut s = format!(
        "run: {}\nsteps: {}\nfusion: {}\nnavigator corrupted: {}\nfinal e~: {:.6e}\nsteady e~: {:.6e}\nsteady eps~: {:.6e}\nmax solve residual: {:.3e}\n",
        o.label,
        o.steps_completed,
        if o.worst_case { "worst-case" } else { "guarded or nominal" },
        o.navigator_corrupted,
        last.e_tilde,
        analysis::steady_max(&log.times(), &log.column(|r| r.e_tilde), STEADY_FRACTION),
        analysis::steady_max(&log.times(), &log.column(|r| r.eps_tilde), STEADY_FRACTION),
        o.max_residual,
    );
    if !defaults.is_empty() {
        s.push_str("artifact defaults:\n");
        for d in defaults {
            s.push_str(&format!("  - {d}\n"));
        }
    }
    std::fs::write(dir.join("summary.txt"), &s)?;
    print!("{s}");
    Ok(())
}

fn execute(cmd: Command) -> Result<(), SimError> {
    match cmd {
        Command::Run { scenario, out, seed } => {
            let mut file = ScenarioFile::load(&scenario)?;
            if let Some(seed) = seed {
                file.seed = seed;
            }
            let sc = file.resolve()?;
            let dir = out
                .or_else(|| sc.output_dir.clone())
                .ok_or_else(|| SimError::Config("no output directory: pass --out or set output_dir".into()))?;
            match run_scenario(&sc) {
                Ok(result) => write_run(&result, &dir, &sc.defaulted_settings()),
                Err(failure) => {
                    write_run(&failure.partial, &dir, &[])?;
                    eprintln!("partial log ({} rows) written to {}", failure.partial.log.len(), dir.join("run.csv").display());
                    Err(failure.error)
                }
            }
        }
        Command::Grid { out, seed, horizon, dt } => {
            let mut opts = GridOptions { seed, ..Default::default() };
            if let Some(h) = horizon {
                opts.horizon = h;
            }
            if let Some(dt) = dt {
                opts.dt = dt;
            }
            let report = run_experiment_grid(&opts)?;
            report.write(&out)?;
            print!("{}", report.summary());
            Ok(())
        }
        Command::Certify { scenario, out } => {
            let sc = ScenarioFile::load(&scenario)?.resolve()?;
            let (report, _) = certify::certify(&sc)?;
            let text = report.to_string();
            if let Some(path) = out {
                std::fs::write(path, &text)?;
            }
            print!("{text}");
            Ok(())
        }
        Command::Plot { log, out } => {
            let file = std::fs::File::open(&log).map_err(|e| SimError::Io(format!("{}: {e}", log.display())))?;
            let parsed = RunLog::read_csv(std::io::BufReader::new(file))?;
            for p in plot::plot_log(&parsed, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
