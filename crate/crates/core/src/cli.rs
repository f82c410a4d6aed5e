//! Command-line front end of the `trajproj` binary.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{SystemKind, Trajectory};
use crate::harness::landscape::{taylor_landscape, QuadraticMode};
use crate::harness::{degrade, evaluate, run_experiment, DegradeContext, DegradeKind, DegradeSpec};
use crate::integrators::{generate_dataset, Generator};
use crate::io::{read_trajectory, to_csv, write_trajectory};
use crate::projections::{project, project_lbfgs, Lambda, Method, ProjectionConfig};
use crate::systems::{ConstraintSpec, Scheme, System};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "trajproj", version, about = "Project approximate ODE/PDE trajectories onto their discretized constraints")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate ground-truth trajectories.
    Generate(GenerateArgs),
    /// Corrupt a trajectory to produce an approximate one.
    Degrade(DegradeArgs),
    /// Project a trajectory onto the constraint set.
    Project(ProjectArgs),
    /// Compare a trajectory against ground truth.
    Evaluate(EvaluateArgs),
    /// Violation along an L-BFGS path against its Taylor models.
    Landscape(LandscapeArgs),
    /// Full degrade/project/evaluate run over a dataset.
    Report(ReportArgs),
    /// Convert a trajectory file to CSV.
    ExportCsv(ExportArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    /// First seed; trajectory i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resolution: Option<usize>,
    /// Frames before windowing.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ConstraintArgs {
    /// Micro-steps per recorded interval (defaults to the system's).
    #[arg(long)]
    micro_steps: Option<usize>,
}

#[derive(Debug, Args)]
struct DegradeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// spectral-truncate | gaussian-noise | coarse-time | blend
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    keep_fraction: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    factor: Option<usize>,
    #[arg(long)]
    weight: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    constraint: ConstraintArgs,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// constrained | relaxed | lbfgs
    #[arg(long)]
    method: Option<String>,
    /// Number or `norm-of-uhat`.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    krylov_tol: Option<f64>,
    /// Krylov or L-BFGS iteration budget.
    #[arg(long)]
    max_iters: Option<usize>,
    #[command(flatten)]
    constraint: ConstraintArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Ground truth; its first frame fixes the initial condition.
    #[arg(long)]
    truth: PathBuf,
    #[command(flatten)]
    constraint: ConstraintArgs,
}

#[derive(Debug, Args)]
struct LandscapeArgs {
    #[arg(long)]
    input: PathBuf,
    /// CSV output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// gauss-newton | secant-fd
    #[arg(long, default_value = "gauss-newton")]
    mode: String,
    #[command(flatten)]
    constraint: ConstraintArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a shipped preset instead of --config.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_INVALID
                }
            };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_INVALID
            }
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let config = cli.config.as_deref().map(RunConfig::load).transpose()?;
    match cli.command {
        Command::Generate(a) => generate(a, config.as_ref(), out),
        Command::Degrade(a) => degrade_cmd(a, config.as_ref(), out),
        Command::Project(a) => project_cmd(a, config.as_ref(), out),
        Command::Evaluate(a) => evaluate_cmd(a, out),
        Command::Landscape(a) => landscape_cmd(a, config.as_ref(), out),
        Command::Report(a) => report_cmd(a, config, out),
        Command::ExportCsv(a) => {
            let f = read_trajectory(&a.input)?;
            fs::write(&a.out, to_csv(&f.trajectory))?;
            writeln!(out, "wrote {}", a.out.display())?;
            Ok(())
        }
    }
}

fn generate(a: GenerateArgs, config: Option<&RunConfig>, out: &mut dyn Write) -> Result<()> {
    let (mut gen, seeds) = match (config, &a.system) {
        (Some(c), None) => (c.generator()?, c.seeds()?),
        (Some(c), Some(s)) if c.kind()? == s.parse::<SystemKind>()? => (c.generator()?, c.seeds()?),
        (_, Some(s)) => (Generator::default_for(s.parse()?), vec![0]),
        (None, None) => return Err(Error::config("generate needs --system or --config")),
    };
    if let Some(r) = a.resolution {
        gen.resolution = r;
    }
    if let Some(s) = a.steps {
        gen.steps = s;
        if gen.window.is_some_and(|(_, b)| b > s) {
            gen.window = None;
        }
    }
    let first = a.seed.unwrap_or(seeds[0]);
    let count = a.count.unwrap_or(seeds.len());
    if count == 0 {
        return Err(Error::config("--count must be ≥ 1"));
    }
    let seeds: Vec<u64> = if a.seed.is_none() && a.count.is_none() {
        seeds
    } else {
        (0..count as u64).map(|i| first + i).collect()
    };
    let paths = generate_dataset(&gen, &seeds, &a.out)?;
    writeln!(out, "wrote {} trajectories to {}", paths.len(), a.out.display())?;
    Ok(())
}

/// Constraint for a file whose first frame is the true initial state.
fn constraint_for(t: &Trajectory, scheme: Scheme, args: &ConstraintArgs) -> (System, ConstraintSpec) {
    let system = System::default_for(t.grid().kind);
    let micro = args.micro_steps.unwrap_or_else(|| match scheme {
        Scheme::Heun => Generator::default_for(SystemKind::Ns).record_every,
        _ => 1,
    });
    (system, ConstraintSpec::new(t.frame(0).to_vec(), scheme, micro))
}

fn degrade_cmd(a: DegradeArgs, config: Option<&RunConfig>, out: &mut dyn Write) -> Result<()> {
    let f = read_trajectory(&a.input)?;
    let t = &f.trajectory;
    let base = config.map(|c| c.degrade_spec()).transpose()?.flatten();
    let mut spec = match (&a.kind, base) {
        (Some(k), Some(b)) if b.kind == k.parse::<DegradeKind>()? => b,
        (Some(k), _) => match k.parse::<DegradeKind>()? {
            DegradeKind::SpectralTruncate => DegradeSpec::spectral_truncate(0.5),
            DegradeKind::GaussianNoise => DegradeSpec::gaussian_noise(0.0, 0),
            DegradeKind::CoarseTime => DegradeSpec::coarse_time(2),
            DegradeKind::Blend => DegradeSpec::blend(0.5, 0),
        },
        (None, Some(b)) => b,
        (None, None) => return Err(Error::config("degrade needs --kind or a [degrade] section")),
    };
    if let Some(v) = a.keep_fraction {
        spec.keep_fraction = v;
    }
    if let Some(v) = a.sigma {
        spec.noise_sigma = v;
    }
    if let Some(v) = a.factor {
        spec.coarse_factor = v;
    }
    if let Some(v) = a.weight {
        spec.blend_weight = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    let (system, constraint) = constraint_for(t, f.scheme, &a.constraint);
    let generator = match config {
        Some(c) if c.kind()? == t.grid().kind => c.generator()?,
        _ => Generator::default_for(t.grid().kind),
    };
    let ctx = DegradeContext {
        system: &system,
        constraint: &constraint,
        generator: Some(&generator),
    };
    let d = degrade(t, &spec, ctx)?;
    write_trajectory(&a.out, &d, f.scheme)?;
    writeln!(out, "{} -> {} ({})", a.input.display(), a.out.display(), spec.kind)?;
    Ok(())
}

fn projection_config(
    config: Option<&RunConfig>,
    kind: SystemKind,
    method: Method,
    lambda: Option<&str>,
) -> Result<ProjectionConfig> {
    let mut cfg = match config {
        Some(c) if c.kind()? == kind => c.projection_config(method)?,
        _ => crate::harness::experiment::default_method_configs(kind)
            .into_iter()
            .find(|c| c.method == method)
            .expect("every method has a default"),
    };
    if let Some(l) = lambda {
        cfg.lambda = l.parse::<Lambda>()?;
    }
    Ok(cfg)
}

fn project_cmd(a: ProjectArgs, config: Option<&RunConfig>, out: &mut dyn Write) -> Result<()> {
    let f = read_trajectory(&a.input)?;
    let t = &f.trajectory;
    let method: Method = match (&a.method, config) {
        (Some(m), _) => m.parse()?,
        (None, Some(c)) => *c.methods()?.first().ok_or_else(|| Error::config("no projection method configured"))?,
        (None, None) => return Err(Error::config("project needs --method or a config")),
    };
    let mut cfg = projection_config(config, t.grid().kind, method, a.lambda.as_deref())?;
    if let Some(v) = a.krylov_tol {
        cfg.krylov_tol = v;
    }
    if let Some(v) = a.max_iters {
        cfg.krylov_max_iters = v;
        cfg.lbfgs.max_iters = v;
    }
    cfg.validate()?;
    let (system, constraint) = constraint_for(t, f.scheme, &a.constraint);
    let (u, report) = project(t, &constraint, &system, &cfg)?;
    write_trajectory(&a.out, &u, f.scheme)?;
    writeln!(
        out,
        "method={} lambda={} iterations={} converged={} residual_before={:e} residual_after={:e}",
        report.method,
        report.lambda,
        report.iterations(),
        report.converged(),
        report.residual_before,
        report.residual_after
    )?;
    if let Some(note) = &report.note {
        writeln!(out, "note: {note}")?;
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let u = read_trajectory(&a.input)?;
    let gt = read_trajectory(&a.truth)?;
    let (system, constraint) = constraint_for(&gt.trajectory, gt.scheme, &a.constraint);
    let row = evaluate(&u.trajectory, &gt.trajectory, &constraint, &system)?;
    writeln!(out, "mse={} residual={:e}", row.mse, row.residual)?;
    Ok(())
}

fn landscape_cmd(a: LandscapeArgs, config: Option<&RunConfig>, out: &mut dyn Write) -> Result<()> {
    let mode: QuadraticMode = a.mode.parse()?;
    let f = read_trajectory(&a.input)?;
    let t = &f.trajectory;
    let mut cfg = projection_config(config, t.grid().kind, Method::Lbfgs, a.lambda.as_deref())?;
    if let Some(v) = a.max_iters {
        cfg.lbfgs.max_iters = v;
    }
    cfg.lbfgs.record_path = true;
    let (system, constraint) = constraint_for(t, f.scheme, &a.constraint);
    let (_, trace) = project_lbfgs(t, &constraint, &system, &cfg)?;
    let curve = taylor_landscape(&trace, t.grid(), &constraint, &system, mode)?;
    fs::write(&a.out, curve.to_csv())?;
    let last = curve.len() - 1;
    writeln!(
        out,
        "points={} path_length={:e} linear_error={:e} quadratic_error={:e}",
        curve.len(),
        curve.d[last],
        curve.linear_error(last),
        curve.quadratic_error(last)
    )?;
    Ok(())
}

fn report_cmd(a: ReportArgs, config: Option<RunConfig>, out: &mut dyn Write) -> Result<()> {
    let config = match (a.preset.as_deref(), config) {
        (Some(p), None) => RunConfig::preset(p.parse()?),
        (None, Some(c)) => c,
        (Some(_), Some(_)) => return Err(Error::config("give either --preset or --config")),
        (None, None) => return Err(Error::config("report needs --config or --preset")),
    };
    let exp = config.experiment()?;
    let dir = a.out.unwrap_or_else(|| config.output_dir());
    let report = run_experiment(&exp)?;
    write_report(&dir, &report)?;
    write!(out, "{}", report.to_table())?;
    writeln!(out, "wrote {}", dir.join("report.csv").display())?;
    Ok(())
}

fn write_report(dir: &Path, report: &crate::harness::Report) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.csv"), report.to_csv())?;
    fs::write(dir.join("report.txt"), report.to_table())?;
    fs::write(dir.join("config.txt"), &report.config)?;
    Ok(())
}
