use std::f64::consts::FRAC_PI_4;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gatecap::annealer::{CapacityKind, EncoderScope, SigmaScheme};
use gatecap::gates::{FamilyTag, GateFamily};
use gatecap::sweep::{
    alpha_grid, compare_report, emit, read_records, run_point, run_sweep, with_thread_cap, write_gnuplot,
    ConfigOverrides, OutputFormat, PointTask, ResultRecord, SweepSpec, DEFAULT_GRID, FINE_GRID,
};

#[derive(Parser)]
#[command(name = "gatecap", version, about = "Entangling and communication capacities of two-qubit canonical gates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one capacity at one α.
    Point(PointArgs),
    /// Optimize capacities over an α grid.
    Sweep(SweepArgs),
    /// Compare entanglement and Holevo curves from result files.
    Compare(CompareArgs),
}

#[derive(Args)]
struct Schedule {
    /// Random restarts per optimization.
    #[arg(long)]
    restarts: Option<usize>,
    /// Initial step size.
    #[arg(long)]
    sigma0: Option<f64>,
    /// Initial annealing tolerance.
    #[arg(long)]
    tau0: Option<f64>,
    /// Step cap per restart.
    #[arg(long)]
    max_steps: Option<u64>,
    /// Steps run with stall halving before the rate20 scheme takes over.
    #[arg(long)]
    warmup: Option<u64>,
    /// Step-size schedule for Holevo kinds: stall or rate20.
    #[arg(long)]
    scheme: Option<SigmaScheme>,
}

impl Schedule {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            sigma0: self.sigma0,
            tau0: self.tau0,
            max_steps: self.max_steps,
            warmup_steps: self.warmup,
            scheme: self.scheme,
            restarts: self.restarts,
        }
    }
}

#[derive(Args)]
struct Output {
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json; json also stores witnesses and schedule metadata.
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct PointArgs {
    #[arg(long)]
    family: FamilyTag,
    #[arg(long)]
    alpha: f64,
    /// E, dE, chi or dchi.
    #[arg(long)]
    kind: CapacityKind,
    /// Ancilla dimension on each side.
    #[arg(long, default_value_t = 1)]
    anc: usize,
    /// Ensemble members (Holevo kinds).
    #[arg(long, default_value_t = 2)]
    ensemble: usize,
    /// Fix ensemble probabilities to 1/n.
    #[arg(long)]
    equal_probs: bool,
    /// Encoders act on Alice's full space (full) or her gate qubit only (au).
    #[arg(long, default_value = "full")]
    encoders: EncoderScope,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    schedule: Schedule,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    family: FamilyTag,
    /// Explicit α values (comma separated); overrides the grid.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    alpha: Option<Vec<f64>>,
    /// Number of equally spaced α points on [0, max-alpha].
    #[arg(long)]
    grid: Option<usize>,
    /// Use the π/400 grid.
    #[arg(long, conflicts_with = "grid")]
    fine: bool,
    #[arg(long, default_value_t = FRAC_PI_4)]
    max_alpha: f64,
    /// Capacity kinds (comma separated).
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    kind: Vec<CapacityKind>,
    /// Ancilla dimensions (comma separated).
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "1")]
    anc: Vec<usize>,
    /// Ensemble sizes for Holevo kinds (comma separated).
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "2")]
    ensemble: Vec<usize>,
    #[arg(long)]
    equal_probs: bool,
    #[arg(long, default_value = "full")]
    encoders: EncoderScope,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write two-column gnuplot files into this directory.
    #[arg(long)]
    gnuplot: Option<PathBuf>,
    #[command(flatten)]
    schedule: Schedule,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CompareArgs {
    /// CSV or JSON result files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Report file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write two-column gnuplot files into this directory.
    #[arg(long)]
    gnuplot: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Point(a) => point(a),
        Command::Sweep(a) => sweep(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("gatecap: {e}");
            ExitCode::from(1)
        }
    }
}

/// Reports failed records on stderr; true when there were none.
fn all_ok(records: &[ResultRecord]) -> bool {
    let mut ok = true;
    for r in records.iter().filter(|r| !r.is_ok()) {
        ok = false;
        eprintln!(
            "gatecap: {} {} alpha={} n={} d_anc={} failed: {}",
            r.family,
            r.kind,
            r.alpha,
            r.ensemble_size,
            r.d_anc,
            r.error.as_deref().unwrap_or("unknown error")
        );
    }
    ok
}

fn point(a: PointArgs) -> gatecap::Result<bool> {
    let mut task = PointTask::new(GateFamily::new(a.family, a.alpha), a.kind, a.ensemble, a.anc, a.seed);
    task.equal_probs = a.equal_probs;
    task.encoder_scope = a.encoders;
    task.config = a.schedule.overrides().apply(task.config);
    task.config.validate()?;
    let records = vec![with_thread_cap(|| run_point(&task))];
    emit(&records, a.output.format, a.output.out.as_deref())?;
    Ok(all_ok(&records))
}

fn sweep(a: SweepArgs) -> gatecap::Result<bool> {
    let alphas = match a.alpha {
        Some(list) => list,
        None => alpha_grid(if a.fine { FINE_GRID } else { a.grid.unwrap_or(DEFAULT_GRID) }, a.max_alpha),
    };
    let spec = SweepSpec {
        family: a.family,
        alphas,
        kinds: a.kind,
        d_ancs: a.anc,
        ensemble_sizes: a.ensemble,
        equal_probs: a.equal_probs,
        encoder_scope: a.encoders,
        overrides: a.schedule.overrides(),
        seed: a.seed,
    };
    let records = run_sweep(&spec)?;
    emit(&records, a.output.format, a.output.out.as_deref())?;
    if let Some(dir) = a.gnuplot {
        write_gnuplot(&records, &dir)?;
    }
    Ok(all_ok(&records))
}

fn compare(a: CompareArgs) -> gatecap::Result<bool> {
    let mut records = Vec::new();
    for p in &a.inputs {
        records.extend(read_records(p)?);
    }
    let report = compare_report(&records)?;
    let text = report.render();
    match a.out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    if let Some(dir) = a.gnuplot {
        write_gnuplot(&records, &dir)?;
    }
    Ok(true)
}
