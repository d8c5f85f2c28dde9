use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pkmdyn::batch::{run_trajectory, time_invdyn, write_rows_csv, RunOptions};
use pkmdyn::invdyn::InvDynOptions;
use pkmdyn::model::{load_model_file, PkmModel};
use pkmdyn::oracle::{verify_model, FdConfig, VerifyOptions};
use pkmdyn::trajectory::{IkTracker, TrajectorySpec};

#[derive(Parser)]
#[command(
    name = "pkmdyn",
    version,
    about = "Inverse dynamics of parallel manipulators with first and second time derivatives"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a trajectory and write actuator motion, forces and motor torques as CSV.
    Run {
        #[command(flatten)]
        traj: TrajectoryArgs,
        /// Samples per second.
        #[arg(long, default_value_t = 1000.0)]
        rate: f64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Evaluate the samples on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Time one inverse dynamics call on a fixed state of the trajectory.
    Bench {
        #[command(flatten)]
        traj: TrajectoryArgs,
        #[arg(long, default_value_t = 10_000)]
        calls: usize,
    },
    /// Check the analytic derivatives against finite differences along the trajectory.
    Verify {
        #[command(flatten)]
        traj: TrajectoryArgs,
        /// Multiplies every tolerance.
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
        /// Number of sample times.
        #[arg(long, default_value_t = 10)]
        samples: usize,
        /// Report CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TrajKind {
    Roll,
    P2p,
}

#[derive(Args)]
struct TrajectoryArgs {
    /// Model file (JSON).
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = TrajKind::Roll)]
    traj: TrajKind,
    /// Lower end of the motion along the axis: roll angle in rad, or the
    /// start coordinate of a point-to-point move [default: -0.5 | 0].
    #[arg(long, allow_negative_numbers = true)]
    tmin: Option<f64>,
    /// Upper end of the motion along the axis [default: 0.5 | 0.02].
    #[arg(long, allow_negative_numbers = true)]
    tmax: Option<f64>,
    /// Task coordinate that moves [default: 0 for roll, the last one for p2p].
    #[arg(long)]
    axis: Option<usize>,
    /// Roll period or point-to-point duration in seconds.
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    /// Trajectory spec file (JSON); replaces the shape flags above.
    #[arg(long, conflicts_with_all = ["traj", "tmin", "tmax", "axis", "duration"])]
    spec: Option<PathBuf>,
}

impl TrajectoryArgs {
    fn load(&self) -> Result<(PkmModel, TrajectorySpec)> {
        let model = load_model_file(&self.model)
            .with_context(|| format!("loading model {}", self.model.display()))?;
        let spec = match &self.spec {
            Some(path) => read_spec(path)?,
            None => self.spec_from_flags(model.dof())?,
        };
        spec.validate(model.dof()).context("invalid trajectory")?;
        Ok((model, spec))
    }

    fn spec_from_flags(&self, dof: usize) -> Result<TrajectorySpec> {
        if let Some(axis) = self.axis.filter(|&a| a >= dof) {
            bail!("--axis {axis} is outside the {dof} task coordinates");
        }
        Ok(match self.traj {
            TrajKind::Roll => TrajectorySpec::Roll {
                theta_min: self.tmin.unwrap_or(-0.5),
                theta_max: self.tmax.unwrap_or(0.5),
                period: self.duration,
                axis: self.axis.unwrap_or(0),
            },
            TrajKind::P2p => {
                let axis = self.axis.unwrap_or(dof.saturating_sub(1));
                let at = |x: f64| {
                    let mut v = vec![0.0; dof];
                    v[axis] = x;
                    v
                };
                TrajectorySpec::PointToPoint {
                    start: at(self.tmin.unwrap_or(0.0)),
                    end: at(self.tmax.unwrap_or(0.02)),
                    duration: self.duration,
                }
            }
        })
    }
}

fn read_spec(path: &Path) -> Result<TrajectorySpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading trajectory spec {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing trajectory spec {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// `Ok(false)` is a failed verification; errors are input problems.
fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            traj,
            rate,
            out,
            sequential,
        } => {
            let (model, spec) = traj.load()?;
            let trajectory = spec.build(&model)?;
            let opts = RunOptions {
                parallel: !sequential && pkmdyn::par::PARALLEL_AVAILABLE,
                ..RunOptions::new(0.0, spec.duration(), rate)
            };
            let rows = run_trajectory(&model, &trajectory, &opts)?;
            let mut w = output(out.as_deref())?;
            write_rows_csv(&rows, model.n_actuators(), &mut w)?;
            w.flush()?;
            eprintln!("{} rows", rows.len());
            Ok(true)
        }
        Command::Bench { traj, calls } => {
            let (model, spec) = traj.load()?;
            let trajectory = spec.build(&model)?;
            let sample = trajectory.sample(0.25 * spec.duration());
            let theta = IkTracker::new(&model, false)
                .solve(&sample.pose)
                .context("inverse kinematics of the benchmark state")?
                .to_vec();
            let t = time_invdyn(&model, &theta, &sample.task, &InvDynOptions::default(), calls)?;
            println!("calls: {}", t.calls);
            println!("mean_us: {:.3}", t.mean_us);
            println!("p99_us: {:.3}", t.p99_us);
            println!("lu_factorizations_per_call: {}", t.factorizations_per_call);
            Ok(true)
        }
        Command::Verify {
            traj,
            tolerance_scale,
            samples,
            out,
        } => {
            if !(tolerance_scale > 0.0 && tolerance_scale.is_finite()) {
                bail!("--tolerance-scale must be positive and finite (got {tolerance_scale})");
            }
            let (model, spec) = traj.load()?;
            let trajectory = spec.build(&model)?;
            let cfg = FdConfig::default().scaled(tolerance_scale);
            let opts = VerifyOptions {
                samples,
                ..Default::default()
            };
            let report = verify_model(&model, &trajectory, spec.duration(), &cfg, &opts)?;
            let mut w = output(out.as_deref())?;
            report.write_csv(&mut w)?;
            w.flush()?;
            let failed: Vec<_> = report.failures().map(|c| c.name.as_str()).collect();
            if failed.is_empty() {
                eprintln!("verification passed: {} checks", report.checks.len());
            } else {
                eprintln!("verification failed: {}", failed.join(", "));
            }
            Ok(failed.is_empty())
        }
    }
}

/// The error and its causes joined by `: `, skipping a cause whose text the
/// previous message already ends with.
fn error_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for msg in e.chain().map(|c| c.to_string()) {
        if out.ends_with(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            ExitCode::from(2)
        }
    }
}
