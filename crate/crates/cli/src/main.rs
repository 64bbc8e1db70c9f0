//! `packest`: simulate a reconfigurable pack, run the estimators and report.
//!
//! Exit codes: 0 on success, 2 for invalid input, 3 for numerical failure.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use packest_core::experiment::{self, FilterKind, Scenario};
use packest_core::{sim, Error};

#[derive(Parser, Debug)]
#[command(name = "packest", version, about = "Reconfigurable battery pack simulation and distributed state estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the plant and write truth.csv.
    Simulate(RunArgs),
    /// Simulate, run the selected filters and write all logs.
    Estimate(RunArgs),
    /// Search the alpha grid for the smallest consistent partitioned filter.
    Calibrate(RunArgs),
    /// Rebuild the metrics table from a run directory.
    Report {
        /// Directory written by `estimate`.
        dir: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Scenario file.
    scenario: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to the scenario's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated filter names, e.g. `cukf,pukf`.
    #[arg(long, value_delimiter = ',')]
    filters: Option<Vec<String>>,
    /// Override the sampling period, s.
    #[arg(long)]
    ts: Option<f64>,
}

impl RunArgs {
    fn load(&self) -> Result<(Scenario, PathBuf), Error> {
        let mut s = Scenario::load(&self.scenario)?;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(ts) = self.ts {
            s.sample_time = Some(ts);
        }
        if let Some(f) = &self.filters {
            s.filters = f.iter().map(|n| n.parse()).collect::<Result<Vec<FilterKind>, _>>()?;
        }
        s.validate()?;
        let out = self.out.clone().unwrap_or_else(|| s.output_dir());
        Ok((s, out))
    }
}

fn simulate(args: &RunArgs) -> Result<(), Error> {
    let (s, out) = args.load()?;
    let (traj, clamps) = experiment::simulate(&s)?;
    std::fs::create_dir_all(&out)?;
    sim::write_truth_csv(&traj, BufWriter::new(File::create(out.join("truth.csv"))?))?;
    println!(
        "simulated {} steps of {} cells; max Kirchhoff residual {:.3e}; {} stoichiometry clamps",
        traj.len(),
        s.pack.cells,
        traj.max_kirchhoff_residual,
        clamps
    );
    println!("wrote {}", out.join("truth.csv").display());
    Ok(())
}

fn estimate(args: &RunArgs) -> Result<(), Error> {
    let (s, out) = args.load()?;
    let result = experiment::run_experiment(&s)?;
    experiment::write_outputs(&result, &out)?;
    for run in &result.runs {
        if let Some(f) = &run.failure {
            eprintln!("{} stopped at step {}: {}", run.kind, f.step, f.message);
        }
    }
    if result.clamp_events > 0 {
        eprintln!("plant clamped stoichiometries {} times", result.clamp_events);
    }
    print!("{}", experiment::read_report(&out)?.render());
    println!("wrote {}", out.display());
    Ok(())
}

fn calibrate(args: &RunArgs) -> Result<(), Error> {
    let (s, out) = args.load()?;
    let cal = experiment::calibrate(&s)?;
    std::fs::create_dir_all(&out)?;
    let mut summary = csv_writer(&out.join("calibration.csv"))?;
    summary.write_record(["alpha", "worst_margin", "worst_step", "failed_at", "satisfied"])?;
    for c in &cal.candidates {
        println!(
            "alpha {:<10.6} worst margin {:>11.3e} at step {:<6} {}",
            c.alpha,
            c.worst_margin,
            c.worst_step,
            if c.satisfied() { "ok" } else { "violated" }
        );
        summary.write_record([
            c.alpha.to_string(),
            c.worst_margin.to_string(),
            c.worst_step.to_string(),
            c.failed_at.map_or(String::new(), |k| k.to_string()),
            c.satisfied().to_string(),
        ])?;
    }
    summary.flush()?;
    let mut trace = csv_writer(&out.join("calibration_trace.csv"))?;
    let mut header = vec!["k".to_string()];
    header.extend(cal.candidates.iter().map(|c| format!("alpha_{}", c.alpha)));
    trace.write_record(&header)?;
    let steps = cal.candidates.iter().map(|c| c.margins.len()).max().unwrap_or(0);
    for k in 0..steps {
        let mut row = vec![k.to_string()];
        row.extend(cal.candidates.iter().map(|c| c.margins.get(k).map_or(String::new(), f64::to_string)));
        trace.write_record(&row)?;
    }
    trace.flush()?;
    println!("wrote {}", out.display());
    let chosen = cal.selected()?;
    println!("selected alpha {} (worst margin {:.3e})", chosen.alpha, chosen.worst_margin);
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, Error> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(path)?)))
}

fn report(dir: &Path) -> Result<(), Error> {
    print!("{}", experiment::read_report(dir)?.render());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Report { dir } => report(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
