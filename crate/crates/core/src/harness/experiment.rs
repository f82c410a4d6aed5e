//! Degrade → project → evaluate over a set of generated trajectories.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::grid::{SystemKind, Trajectory};
use crate::integrators::Generator;
use crate::projections::{project, Method, ProjectionConfig};
use crate::spectral::resample;
use crate::systems::ConstraintSpec;

use super::degrade::{degrade, DegradeContext, DegradeSpec};
use super::metrics::{evaluate, MetricsRow};

pub const BASELINE: &str = "baseline";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub generator: Generator,
    pub seeds: Vec<u64>,
    /// Its seed is offset by each trajectory seed.
    pub degrade: DegradeSpec,
    pub methods: Vec<ProjectionConfig>,
    /// Evaluation resolutions; empty means the generator's own.
    pub resolutions: Vec<usize>,
    /// Worker threads; 0 picks the available parallelism.
    pub threads: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.degrade.validate()?;
        for m in &self.methods {
            m.validate()?;
        }
        if self.seeds.is_empty() {
            return Err(Error::config("the experiment needs at least one trajectory seed"));
        }
        if self.generator.kind() == SystemKind::Lorenz && self.resolutions.iter().any(|&r| r != 0) {
            return Err(Error::config("lorenz has no spatial resolution to vary"));
        }
        if self.resolutions.iter().any(|&r| r < 4 && self.generator.kind() != SystemKind::Lorenz) {
            return Err(Error::config("evaluation resolutions must be ≥ 4"));
        }
        Ok(())
    }

    fn eval_resolutions(&self) -> Vec<usize> {
        match self.generator.kind() {
            SystemKind::Lorenz => vec![0],
            _ if self.resolutions.is_empty() => vec![self.generator.resolution],
            _ => self.resolutions.clone(),
        }
    }

    fn method_names(&self) -> Vec<String> {
        let mut names = vec![BASELINE.to_string()];
        names.extend(self.methods.iter().map(|m| m.method.name().to_string()));
        names
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub seed: u64,
    pub resolution: usize,
    pub method: String,
    pub error: String,
}

/// Mean metrics for one (resolution, method) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub metrics: MetricsRow,
    /// Trajectories that contributed.
    pub count: usize,
    pub expected: usize,
}

impl ReportRow {
    pub fn is_partial(&self) -> bool {
        self.count < self.expected
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub system: SystemKind,
    pub rows: Vec<ReportRow>,
    pub failures: Vec<Failure>,
    /// Per-trajectory rows in seed order.
    pub per_trajectory: Vec<(u64, MetricsRow)>,
    pub config: String,
}

impl Report {
    pub fn row(&self, resolution: usize, method: &str) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.metrics.resolution == resolution && r.metrics.method == method)
            .map(|r| &r.metrics)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("system,resolution,method,mse,residual,wall_time_s,iterations,converged\n");
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{},{},{},{:e},{:e},{:e},{},{}",
                self.system, m.resolution, m.method, m.mse, m.residual, m.wall_time_s, m.iterations, m.converged
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<6} {:>10} {:<12} {:>12} {:>12} {:>10} {:>10}  {}\n",
            "system", "resolution", "method", "mse", "residual", "time [s]", "iters", "status"
        );
        for r in &self.rows {
            let m = &r.metrics;
            let status = match (r.is_partial(), m.converged) {
                (true, _) => format!("partial {}/{}", r.count, r.expected),
                (false, true) => "ok".to_string(),
                (false, false) => "not converged".to_string(),
            };
            let _ = writeln!(
                s,
                "{:<6} {:>10} {:<12} {:>12.4e} {:>12.4e} {:>10.3} {:>10.1}  {}",
                self.system, m.resolution, m.method, m.mse, m.residual, m.wall_time_s, m.iterations, status
            );
        }
        for f in &self.failures {
            let _ = writeln!(s, "failed: seed {} resolution {} {}: {}", f.seed, f.resolution, f.method, f.error);
        }
        s
    }
}

struct Cell {
    seed: u64,
    resolution: usize,
    method: String,
    result: std::result::Result<MetricsRow, String>,
}

/// Ground truth, its constraint and the degraded trajectory at every evaluation resolution.
pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<(usize, Trajectory, ConstraintSpec, Trajectory)>> {
    let gen = &cfg.generator;
    let r0 = gen.resolution;
    let ic0 = gen.sample_ic(seed, r0)?;
    let truth0 = gen.integrate(&ic0)?;
    let spec0 = gen.constraint(truth0.frame(0).to_vec());
    let ctx = DegradeContext {
        system: &gen.system,
        constraint: &spec0,
        generator: Some(gen),
    };
    let uhat0 = degrade(&truth0, &cfg.degrade.with_seed(cfg.degrade.seed.wrapping_add(seed)), ctx)?;
    let mut out = Vec::new();
    for r in cfg.eval_resolutions() {
        if r == 0 || r == r0 {
            out.push((r, truth0.clone(), spec0.clone(), uhat0.clone()));
            continue;
        }
        let gen_r = Generator {
            resolution: r,
            ..gen.clone()
        };
        let ic = match gen.kind() {
            // same initial function, refined spectrally
            SystemKind::Ks => resample(&ic0, &[r0], &[r])?,
            _ => gen.sample_ic(seed, r)?,
        };
        let truth = gen_r.integrate(&ic)?;
        let spec = gen_r.constraint(truth.frame(0).to_vec());
        let shape0 = &truth0.grid().resolutions;
        let shape = &truth.grid().resolutions;
        let mut frames = Vec::with_capacity(truth.len());
        for t in 0..uhat0.num_frames() {
            frames.extend(resample(uhat0.frame(t), shape0, shape)?);
        }
        let mut uhat = Trajectory::new(truth.grid().clone(), frames)?;
        uhat.frame_mut(0).copy_from_slice(truth.frame(0));
        out.push((r, truth, spec, uhat));
    }
    Ok(out)
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Vec<Cell> {
    let names = cfg.method_names();
    let resolutions = cfg.eval_resolutions();
    let prepared = match prepare(cfg, seed) {
        Ok(p) => p,
        Err(e) => {
            let mut cells = Vec::new();
            for &r in &resolutions {
                for m in &names {
                    cells.push(Cell {
                        seed,
                        resolution: r,
                        method: m.clone(),
                        result: Err(format!("preparation: {e}")),
                    });
                }
            }
            return cells;
        }
    };
    let system = &cfg.generator.system;
    let mut cells = Vec::new();
    for (r, truth, spec, uhat) in prepared {
        let baseline = evaluate(&uhat, &truth, &spec, system).map(|mut row| {
            row.method = BASELINE.into();
            row.resolution = r;
            row
        });
        cells.push(Cell {
            seed,
            resolution: r,
            method: BASELINE.into(),
            result: baseline.map_err(|e| e.to_string()),
        });
        for pc in &cfg.methods {
            let start = Instant::now();
            let result = project(&uhat, &spec, system, pc).and_then(|(u, report)| {
                let wall = start.elapsed().as_secs_f64();
                let mut row = evaluate(&u, &truth, &spec, system)?;
                row.method = pc.method.name().into();
                row.resolution = r;
                row.wall_time_s = wall;
                row.iterations = report.iterations() as f64;
                row.converged = report.converged();
                Ok(row)
            });
            cells.push(Cell {
                seed,
                resolution: r,
                method: pc.method.name().into(),
                result: result.map_err(|e| e.to_string()),
            });
        }
    }
    cells
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let threads = match cfg.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(cfg.seeds.len());
    let next = AtomicUsize::new(0);
    let done = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = cfg.seeds.get(i) else { break };
                let cells = run_seed(cfg, seed);
                done.lock().expect("worker panicked").push((i, cells));
            });
        }
    });
    let mut done = done.into_inner().expect("worker panicked");
    done.sort_by_key(|(i, _)| *i);

    let mut per_trajectory = Vec::new();
    let mut failures = Vec::new();
    for (_, cells) in &done {
        for c in cells {
            match &c.result {
                Ok(row) => per_trajectory.push((c.seed, row.clone())),
                Err(e) => failures.push(Failure {
                    seed: c.seed,
                    resolution: c.resolution,
                    method: c.method.clone(),
                    error: e.clone(),
                }),
            }
        }
    }

    let expected = cfg.seeds.len();
    let mut rows = Vec::new();
    for r in cfg.eval_resolutions() {
        for name in cfg.method_names() {
            let cell: Vec<&MetricsRow> = per_trajectory
                .iter()
                .map(|(_, m)| m)
                .filter(|m| m.resolution == r && m.method == name)
                .collect();
            let n = cell.len();
            let mean = |f: &dyn Fn(&MetricsRow) -> f64| if n == 0 { f64::NAN } else { cell.iter().map(|m| f(m)).sum::<f64>() / n as f64 };
            rows.push(ReportRow {
                metrics: MetricsRow {
                    method: name.clone(),
                    mse: mean(&|m| m.mse),
                    residual: mean(&|m| m.residual),
                    resolution: r,
                    wall_time_s: mean(&|m| m.wall_time_s),
                    iterations: mean(&|m| m.iterations),
                    converged: n == expected && cell.iter().all(|m| m.converged),
                },
                count: n,
                expected,
            });
        }
    }
    Ok(Report {
        system: cfg.generator.kind(),
        rows,
        failures,
        per_trajectory,
        config: format!("{cfg:#?}"),
    })
}

/// Methods present in the report, baseline first.
pub fn methods_in(report: &Report) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in &report.rows {
        if !out.contains(&r.metrics.method) {
            out.push(r.metrics.method.clone());
        }
    }
    out
}

/// Default λ for the relaxed and nonlinear methods of each system.
pub fn default_method_configs(kind: SystemKind) -> Vec<ProjectionConfig> {
    use crate::projections::Lambda;
    let relaxed = match kind {
        SystemKind::Lorenz => Lambda::Value(1000.0),
        SystemKind::Ks => Lambda::Value(10.0),
        SystemKind::Ns => Lambda::NormOfUhat,
    };
    vec![
        ProjectionConfig::new(Method::Constrained, Lambda::Value(0.0)),
        ProjectionConfig::new(Method::Relaxed, relaxed),
        ProjectionConfig::new(Method::Lbfgs, relaxed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_lorenz() -> ExperimentConfig {
        let mut generator = Generator::default_for(SystemKind::Lorenz);
        generator.steps = 64;
        ExperimentConfig {
            generator,
            seeds: vec![1, 2, 3],
            degrade: DegradeSpec::gaussian_noise(0.01, 5),
            methods: default_method_configs(SystemKind::Lorenz),
            resolutions: Vec::new(),
            threads: 2,
        }
    }

    #[test]
    fn baseline_only_without_methods() {
        let mut cfg = small_lorenz();
        cfg.methods.clear();
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].metrics.method, BASELINE);
        assert_eq!(report.rows[0].count, 3);
        assert_eq!(report.to_csv().lines().count(), 2);
    }

    #[test]
    fn projections_reduce_lorenz_residual() {
        let report = run_experiment(&small_lorenz()).unwrap();
        let base = report.row(0, BASELINE).unwrap().residual;
        for m in ["constrained", "relaxed", "lbfgs"] {
            let row = report.row(0, m).unwrap();
            assert!(row.residual < 0.3 * base, "{m}: {} vs {base}", row.residual);
        }
        assert!(report.failures.is_empty());
        assert_eq!(methods_in(&report), vec!["baseline", "constrained", "relaxed", "lbfgs"]);
        assert!(report.to_table().contains("lbfgs"));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mut cfg = small_lorenz();
        cfg.methods.truncate(2);
        let a = run_experiment(&cfg).unwrap();
        cfg.threads = 1;
        let b = run_experiment(&cfg).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.metrics.mse, y.metrics.mse);
            assert_eq!(x.metrics.residual, y.metrics.residual);
        }
    }

    #[test]
    fn failures_mark_partial_rows() {
        let mut cfg = small_lorenz();
        cfg.degrade = DegradeSpec::coarse_time(64);
        cfg.generator.dt = 0.05;
        cfg.methods.truncate(1);
        let report = run_experiment(&cfg).unwrap();
        assert!(!report.failures.is_empty());
        assert!(report.rows.iter().all(|r| r.is_partial()));
        assert!(report.to_table().contains("partial"));
    }

    #[test]
    fn multi_resolution_ks_shapes() {
        let mut generator = Generator::default_for(SystemKind::Ks);
        generator.steps = 24;
        generator.window = Some((8, 24));
        let cfg = ExperimentConfig {
            generator,
            seeds: vec![4],
            degrade: DegradeSpec::spectral_truncate(0.5),
            methods: Vec::new(),
            resolutions: vec![64, 128],
            threads: 1,
        };
        let prepared = prepare(&cfg, 4).unwrap();
        assert_eq!(prepared.len(), 2);
        let (_, truth, spec, uhat) = &prepared[1];
        assert_eq!(truth.grid().resolutions, vec![128]);
        assert_eq!(uhat.grid(), truth.grid());
        assert_eq!(uhat.frame(0), truth.frame(0));
        assert_eq!(spec.initial_state.as_slice(), truth.frame(0));
        let r = crate::systems::residual(truth, spec, &cfg.generator.system).unwrap().norm2();
        assert!(r <= 16.0 * 1e-20, "{r}");
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small_lorenz();
        cfg.seeds.clear();
        assert!(run_experiment(&cfg).is_err());
        let mut cfg = small_lorenz();
        cfg.resolutions = vec![64];
        assert!(run_experiment(&cfg).is_err());
    }
}
