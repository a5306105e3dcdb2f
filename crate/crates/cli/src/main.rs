use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kinstruct::experiments::{
    run_convergence_study, run_scaling_study, run_synthetic_tracking_file, write_scaling_csv, ConstraintKind, ConvergenceOptions,
    FrameSampling,
};
use kinstruct::{ExperimentError, Mode};

#[derive(Parser)]
#[command(name = "kinstruct", version, about = "Kinematic-structure pose optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo study of constraint convergence between two bodies.
    Converge {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 5)]
        iters: usize,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Add random SPD Hessians and gradients instead of zero energies.
        #[arg(long)]
        random_energy: bool,
        /// Constraint frames at the model frames or at random placements.
        #[arg(long, value_enum, default_value_t = Frames::Random)]
        frames: Frames,
    },
    /// Per-iteration time of projected vs constrained serial chains.
    Scaling {
        #[arg(long, default_value_t = 50)]
        max_bodies: usize,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track a scripted structure from noisy pose targets.
    Track {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Rotvec,
    Trans,
    Full,
    Ortho,
}

impl From<Kind> for ConstraintKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Rotvec => ConstraintKind::RotVec,
            Kind::Trans => ConstraintKind::Trans,
            Kind::Full => ConstraintKind::Full,
            Kind::Ortho => ConstraintKind::Orthogonality,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Frames {
    Model,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Independent,
    Projected,
    Constrained,
    Combined,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Independent => Mode::Independent,
            ModeArg::Projected => Mode::Projected,
            ModeArg::Constrained => Mode::Constrained,
            ModeArg::Combined => Mode::Combined,
        }
    }
}

const CONFIG_ERROR: u8 = 1;
const SOLVER_ERROR: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(CONFIG_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                ExperimentError::Solver(_) => SOLVER_ERROR,
                _ => CONFIG_ERROR,
            })
        }
    }
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, ExperimentError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(command: Command) -> Result<(), ExperimentError> {
    match command {
        Command::Converge { trials, iters, kind, seed, out, random_energy, frames } => {
            if trials == 0 || iters == 0 {
                return Err(invalid("--trials and --iters must be at least 1"));
            }
            let mut opts = ConvergenceOptions::new(kind.into(), trials, iters, seed);
            opts.random_energy = random_energy;
            opts.frames = match frames {
                Frames::Model => FrameSampling::Model,
                Frames::Random => FrameSampling::Random,
            };
            let study = run_convergence_study(&opts);
            let mut w = create(&out)?;
            study.write_csv(&mut w)?;
            w.flush()?;
            let (rot, trans) = study.percentile(1, 99.0);
            eprintln!(
                "{} trials of {}: p99 after one iteration rot {rot:.3e} rad, trans {trans:.3e} m ({} failed factorizations)",
                trials,
                study.kind,
                study.failures()
            );
        }
        Command::Scaling { max_bodies, reps, seed, out } => {
            if max_bodies < 2 {
                return Err(invalid("--max-bodies must be at least 2"));
            }
            let samples = run_scaling_study(max_bodies, reps, seed)?;
            let mut w = create(&out)?;
            write_scaling_csv(&samples, &mut w)?;
            w.flush()?;
        }
        Command::Track { config, mode, steps, seed, out } => {
            let report = run_synthetic_tracking_file(&config, mode.into(), steps, seed)?;
            let mut w = create(&out)?;
            report.write_csv(&mut w)?;
            w.flush()?;
            eprintln!(
                "{}: mean ADD {:.4e} m, AUC(ADD) {:.4}, AUC(ADD-S) {:.4}, max constraint residual {:.2e}",
                report.mode,
                report.mean_add(),
                report.auc_add,
                report.auc_add_s,
                report.max_constraint_residual()
            );
        }
    }
    Ok(())
}

fn invalid(message: &str) -> ExperimentError {
    ExperimentError::Config(kinstruct::ConfigError::Invalid { field: "arguments".into(), message: message.into() })
}
