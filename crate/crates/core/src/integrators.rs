//! Reference integrators, initial-condition samplers and dataset generation.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, SystemKind, Trajectory};
use crate::io;
use crate::krylov::{gmres, FnOperator, SolveOptions};
use crate::linalg::{axpy, norm};
use crate::spectral::{resample, SpectralWorkspace};
use crate::systems::{ConstraintSpec, Dynamics, KsParams, LorenzParams, NsParams, Scheme, System, VectorField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub max_iters: usize,
    /// Bound on the 2-norm of the BDF1 step residual `(u' − u)/dt − F(u')`.
    pub abs_tolerance: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            max_iters: 50,
            abs_tolerance: 1e-10,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.abs_tolerance > 0.0) {
            return Err(Error::config("newton needs max_iters ≥ 1 and a positive tolerance"));
        }
        Ok(())
    }
}

fn check_finite(x: &[f64], step: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence {
            step,
            reason: "state became non-finite".into(),
        })
    }
}

/// Explicit Euler or Heun with `micro_steps` steps of size `dt`, recording
/// the initial state and every `record_every`-th state, `frames` in total.
/// Returns the recorded frames back to back.
pub fn explicit_steps(
    field: &mut Dynamics,
    scheme: Scheme,
    x0: &[f64],
    dt: f64,
    frames: usize,
    record_every: usize,
) -> Result<Vec<f64>> {
    let n = x0.len();
    if field.dim() != n {
        return Err(Error::shape("initial state does not match the vector field"));
    }
    if !(dt > 0.0) || record_every == 0 || frames == 0 {
        return Err(Error::config("explicit integration needs dt > 0, record_every ≥ 1 and at least one frame"));
    }
    check_finite(x0, 0)?;
    let mut out = Vec::with_capacity(n * frames);
    out.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut xs) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut step = 0;
    for _ in 1..frames {
        for _ in 0..record_every {
            step += 1;
            field.eval(&x, &mut k1);
            match scheme {
                Scheme::Euler => axpy(dt, &k1, &mut x),
                Scheme::Heun => {
                    for i in 0..n {
                        xs[i] = x[i] + dt * k1[i];
                    }
                    field.eval(&xs, &mut k2);
                    for i in 0..n {
                        x[i] += 0.5 * dt * (k1[i] + k2[i]);
                    }
                }
                Scheme::Bdf1 => return Err(Error::config("bdf1 is not an explicit scheme")),
            }
            check_finite(&x, step)?;
        }
        out.extend_from_slice(&x);
    }
    Ok(out)
}

/// BDF1 with a Newton solve per step; inner solves are GMRES on
/// `I − dt·J_F`, right-preconditioned by the field's stiff linear part.
/// Returns `steps` frames back to back, starting with `u0`.
pub fn bdf1_steps(field: &mut Dynamics, u0: &[f64], dt: f64, steps: usize, newton: &NewtonConfig) -> Result<Vec<f64>> {
    newton.validate()?;
    let n = u0.len();
    if field.dim() != n {
        return Err(Error::shape("initial state does not match the vector field"));
    }
    if !(dt > 0.0) || steps == 0 {
        return Err(Error::config("bdf1 needs dt > 0 and at least one frame"));
    }
    check_finite(u0, 0)?;
    let mut out = Vec::with_capacity(n * steps);
    out.extend_from_slice(u0);
    let mut prev = u0.to_vec();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut delta = vec![0.0; n];
    for step in 1..steps {
        let mut u = prev.clone();
        let mut iterations = 0;
        loop {
            field.eval(&u, &mut f);
            for i in 0..n {
                g[i] = (u[i] - prev[i]) / dt - f[i];
            }
            let gnorm = norm(&g);
            if !gnorm.is_finite() {
                return Err(Error::Divergence {
                    step,
                    reason: "newton residual became non-finite".into(),
                });
            }
            if gnorm <= newton.abs_tolerance {
                break;
            }
            if iterations == newton.max_iters {
                return Err(Error::Newton {
                    step,
                    iterations,
                    residual: gnorm,
                });
            }
            iterations += 1;
            // (I − dt J_F) δ = −dt g, solved for z with δ = P⁻¹ z
            let rhs: Vec<f64> = g.iter().map(|v| -dt * v).collect();
            let tol = (0.01 * newton.abs_tolerance / gnorm).clamp(1e-13, 0.1);
            let base = u.clone();
            let z = {
                let mut pz = vec![0.0; n];
                let mut jv = vec![0.0; n];
                let field = &mut *field;
                let mut op = FnOperator::new(n, |z: &[f64], out: &mut [f64]| {
                    field.solve_linear_part(dt, z, &mut pz);
                    field.tangent(&base, &pz, &mut jv);
                    for i in 0..n {
                        out[i] = pz[i] - dt * jv[i];
                    }
                    Ok(())
                });
                gmres(&mut op, &rhs, SolveOptions { tol, max_iters: 500 }, 50, None)?.0
            };
            field.solve_linear_part(dt, &z, &mut delta);
            for i in 0..n {
                u[i] += delta[i];
            }
        }
        check_finite(&u, step)?;
        out.extend_from_slice(&u);
        prev = u;
    }
    Ok(out)
}

/// Lorenz trajectory by explicit Euler; `steps` frames including `u0`.
pub fn euler_integrate(u0: [f64; 3], p: &LorenzParams, dt: f64, steps: usize) -> Result<Trajectory> {
    let grid = GridSpec::lorenz(steps, dt);
    grid.validate()?;
    let mut field = Dynamics::new(&System::Lorenz(*p), &grid)?;
    let values = explicit_steps(&mut field, Scheme::Euler, &u0, dt, steps, 1)?;
    Trajectory::new(grid, values)
}

/// KS trajectory by BDF1; `steps` frames including `u0`.
pub fn bdf1_integrate(u0: &[f64], p: &KsParams, dt: f64, steps: usize, newton: &NewtonConfig) -> Result<Trajectory> {
    let grid = GridSpec {
        lengths: vec![p.domain_length],
        ..GridSpec::ks(u0.len(), steps, dt)
    };
    grid.validate()?;
    let mut field = Dynamics::new(&System::Ks(*p), &grid)?;
    let values = bdf1_steps(&mut field, u0, dt, steps, newton)?;
    Trajectory::new(grid, values)
}

/// NS vorticity trajectory by Heun with micro-step `dt`. Frame 0 is `w0`
/// and frame `j` the state after `j·record_every` micro-steps, giving
/// `micro_steps / record_every` frames. The stored time step is
/// `record_every·dt`.
pub fn heun_integrate(
    w0: &[f64],
    shape: [usize; 2],
    p: &NsParams,
    dt: f64,
    micro_steps: usize,
    record_every: usize,
) -> Result<Trajectory> {
    if record_every == 0 || micro_steps % record_every != 0 || micro_steps == 0 {
        return Err(Error::config(format!(
            "record_every = {record_every} must divide micro_steps = {micro_steps}"
        )));
    }
    let frames = micro_steps / record_every;
    let grid = GridSpec::ns(shape[0], shape[1], frames, dt * record_every as f64);
    grid.validate()?;
    if w0.len() != grid.spatial_size() {
        return Err(Error::shape("initial vorticity does not match the grid"));
    }
    let mut field = Dynamics::new(&System::Ns(*p), &grid)?;
    let values = explicit_steps(&mut field, Scheme::Heun, w0, dt, frames, record_every)?;
    Trajectory::new(grid, values)
}

/// `x₀ ~ N(0, std²)` per component.
pub fn sample_lorenz_ic(seed: u64, std: f64) -> Result<[f64; 3]> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::config(format!("lorenz initial std must be non-negative, got {std}")));
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::config(format!("lorenz initial std: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok([normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)])
}

/// One term `a cos(2π ω x / L + φ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineMode {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

/// Random cosine sums for KS initial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsInitSpec {
    pub num_modes: usize,
    pub amplitude: [f64; 2],
    pub frequency: [f64; 2],
    pub phase: [f64; 2],
    pub seed: u64,
}

impl Default for KsInitSpec {
    fn default() -> Self {
        KsInitSpec {
            num_modes: 10,
            amplitude: [0.0, 1.0],
            frequency: [1.0, 5.0],
            phase: [0.0, 2.0 * PI],
            seed: 0,
        }
    }
}

impl KsInitSpec {
    pub fn with_seed(self, seed: u64) -> Self {
        KsInitSpec { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_modes == 0 {
            return Err(Error::config("KS initial data needs at least one mode"));
        }
        for (name, r) in [("amplitude", self.amplitude), ("frequency", self.frequency), ("phase", self.phase)] {
            if !(r[0] <= r[1] && r[0].is_finite() && r[1].is_finite()) {
                return Err(Error::config(format!("KS {name} range {r:?} is not an interval")));
            }
        }
        Ok(())
    }

    /// Draws `(a_k, ω_k, φ_k)` for every mode, in that order.
    pub fn draw(&self) -> Result<Vec<CosineMode>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut uniform = |r: [f64; 2]| if r[0] == r[1] { r[0] } else { rng.gen_range(r[0]..r[1]) };
        Ok((0..self.num_modes)
            .map(|_| CosineMode {
                amplitude: uniform(self.amplitude),
                frequency: uniform(self.frequency),
                phase: uniform(self.phase),
            })
            .collect())
    }
}

/// Evaluates a cosine sum on the grid points of a 1-D periodic grid.
pub fn cosine_sum(modes: &[CosineMode], grid: &GridSpec) -> Vec<f64> {
    let length = grid.lengths[0];
    grid.coordinates(0)
        .iter()
        .map(|&x| {
            modes
                .iter()
                .map(|m| m.amplitude * (2.0 * PI * m.frequency * x / length + m.phase).cos())
                .sum()
        })
        .collect()
}

pub fn sample_ks_ic(spec: &KsInitSpec, grid: &GridSpec) -> Result<Vec<f64>> {
    if grid.kind != SystemKind::Ks {
        return Err(Error::config("KS initial data needs a KS grid"));
    }
    Ok(cosine_sum(&spec.draw()?, grid))
}

/// Gaussian random field with coefficient variance `σ² (|k|² + τ²)^(−α)`,
/// `σ = τ^(α−1)`, and zero mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrfSpec {
    pub alpha: f64,
    pub tau: f64,
    pub sample_resolution: usize,
    pub seed: u64,
}

impl Default for GrfSpec {
    fn default() -> Self {
        GrfSpec {
            alpha: 2.5,
            tau: 7.0,
            sample_resolution: 256,
            seed: 0,
        }
    }
}

impl GrfSpec {
    pub fn with_seed(self, seed: u64) -> Self {
        GrfSpec { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0) || !(self.tau > 0.0) || self.sample_resolution < 2 {
            return Err(Error::config("GRF needs alpha > 1, tau > 0 and a sample resolution ≥ 2"));
        }
        Ok(())
    }

    /// Expected `|c_k|²` of the Fourier coefficient at integer wavevector `k`.
    pub fn coefficient_variance(&self, k2: f64) -> f64 {
        let sigma = self.tau.powf(self.alpha - 1.0);
        sigma * sigma * (k2 + self.tau * self.tau).powf(-self.alpha)
    }

    /// One field on the `sample_resolution²` grid, values indexed `ix·n + iy`.
    pub fn sample_fine(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let m = self.sample_resolution;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise: Vec<f64> = (0..m * m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut ws = SpectralWorkspace::with_shape(&[m, m], &[2.0 * PI, 2.0 * PI], false)?;
        let mut spec = ws.zero_spectrum();
        ws.forward(&noise, &mut spec);
        // white noise has E|ξ_k|² = m², so ξ_k / m has unit variance
        for (i, s) in spec.iter_mut().enumerate() {
            let k2 = ws.k2(i);
            *s *= if k2 == 0.0 {
                0.0
            } else {
                self.coefficient_variance(k2).sqrt() * (m as f64)
            };
        }
        let mut out = vec![0.0; m * m];
        ws.inverse(&spec, &mut out);
        Ok(out)
    }
}

/// GRF vorticity sampled at the fine resolution and spectrally truncated to `grid`.
pub fn sample_ns_ic(spec: &GrfSpec, grid: &GridSpec) -> Result<Vec<f64>> {
    if grid.kind != SystemKind::Ns {
        return Err(Error::config("NS initial data needs an NS grid"));
    }
    let m = spec.sample_resolution;
    let fine = spec.sample_fine()?;
    resample(&fine, &[m, m], &grid.resolutions)
}

/// Data-generation settings for one system.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub system: System,
    /// Spatial points per axis (ignored for Lorenz).
    pub resolution: usize,
    /// Integrator step; for NS the micro-step.
    pub dt: f64,
    /// Frames before windowing, including the initial state.
    pub steps: usize,
    /// NS micro-steps per recorded frame.
    pub record_every: usize,
    /// Keep frames `start..end` only.
    pub window: Option<(usize, usize)>,
    pub lorenz_ic_std: f64,
    pub ks_init: KsInitSpec,
    pub grf: GrfSpec,
    pub newton: NewtonConfig,
}

impl Generator {
    /// Settings from the reference experiments.
    pub fn default_for(kind: SystemKind) -> Self {
        let system = System::default_for(kind);
        let base = Generator {
            system,
            resolution: 64,
            dt: 1.0 / 512.0,
            steps: 512,
            record_every: 1,
            window: None,
            lorenz_ic_std: 0.1f64.sqrt(),
            ks_init: KsInitSpec::default(),
            grf: GrfSpec::default(),
            newton: NewtonConfig::default(),
        };
        match kind {
            SystemKind::Lorenz => base,
            SystemKind::Ks => Generator { dt: 0.1, ..base },
            SystemKind::Ns => Generator {
                dt: 2e-3,
                steps: 256,
                record_every: 16,
                ..base
            },
        }
    }

    pub fn kind(&self) -> SystemKind {
        self.system.kind()
    }

    pub fn scheme(&self) -> Scheme {
        self.system.default_scheme()
    }

    /// Grid of the generated (windowed) trajectories.
    pub fn grid(&self) -> GridSpec {
        let frames = self.window.map_or(self.steps, |(a, b)| b - a);
        match self.kind() {
            SystemKind::Lorenz => GridSpec::lorenz(frames, self.dt),
            SystemKind::Ks => GridSpec::ks(self.resolution, frames, self.dt),
            SystemKind::Ns => GridSpec::ns(self.resolution, self.resolution, frames, self.dt * self.record_every as f64),
        }
    }

    /// Constraint under which generated trajectories are feasible.
    pub fn constraint(&self, initial_state: Vec<f64>) -> ConstraintSpec {
        ConstraintSpec::new(initial_state, self.scheme(), self.record_every)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.steps == 0 || !(self.dt > 0.0) || self.record_every == 0 {
            return Err(Error::config("generator needs steps ≥ 1, dt > 0, record_every ≥ 1"));
        }
        if self.kind() != SystemKind::Ns && self.record_every != 1 {
            return Err(Error::config("record_every applies to NS only"));
        }
        if let Some((a, b)) = self.window {
            if !(a < b && b <= self.steps) {
                return Err(Error::config(format!("window {a}..{b} is outside 0..{}", self.steps)));
            }
        }
        if !(self.lorenz_ic_std >= 0.0) {
            return Err(Error::config("lorenz initial std must be non-negative"));
        }
        self.newton.validate()
    }

    /// Initial state for `seed` on a grid with `resolution` points per axis.
    pub fn sample_ic(&self, seed: u64, resolution: usize) -> Result<Vec<f64>> {
        let grid = self.grid().with_resolution(resolution);
        match self.kind() {
            SystemKind::Lorenz => Ok(sample_lorenz_ic(seed, self.lorenz_ic_std)?.to_vec()),
            SystemKind::Ks => sample_ks_ic(&self.ks_init.with_seed(seed), &grid),
            SystemKind::Ns => sample_ns_ic(&self.grf.with_seed(seed), &grid),
        }
    }

    /// Integrates from `ic` (its length fixes the resolution) and applies the window.
    pub fn integrate(&self, ic: &[f64]) -> Result<Trajectory> {
        self.validate()?;
        let full = match &self.system {
            System::Lorenz(p) => {
                let ic: [f64; 3] = ic.try_into().map_err(|_| Error::shape("lorenz state has 3 components"))?;
                euler_integrate(ic, p, self.dt, self.steps)?
            }
            System::Ks(p) => bdf1_integrate(ic, p, self.dt, self.steps, &self.newton)?,
            System::Ns(p) => {
                let n = (ic.len() as f64).sqrt().round() as usize;
                if n * n != ic.len() {
                    return Err(Error::shape("NS initial vorticity must be square"));
                }
                heun_integrate(ic, [n, n], p, self.dt, self.steps * self.record_every, self.record_every)?
            }
        };
        match self.window {
            Some((a, b)) => full.window(a, b),
            None => Ok(full),
        }
    }

    /// Ground-truth trajectory for `seed` and its constraint.
    pub fn trajectory(&self, seed: u64) -> Result<(Trajectory, ConstraintSpec)> {
        let ic = self.sample_ic(seed, self.resolution)?;
        let t = self.integrate(&ic)?;
        let spec = self.constraint(t.frame(0).to_vec());
        Ok((t, spec))
    }
}

/// Writes one file per seed plus `manifest.txt`; returns the file paths.
pub fn generate_dataset(generator: &Generator, seeds: &[u64], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    generator.validate()?;
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(seeds.len());
    for (i, seed) in seeds.iter().enumerate() {
        let (t, _) = generator.trajectory(*seed)?;
        let path = dir.join(format!("traj_{i:05}.utrj"));
        io::write_trajectory(&path, &t, generator.scheme())?;
        paths.push(path);
    }
    fs::write(dir.join("manifest.txt"), manifest(generator, seeds, &paths))?;
    Ok(paths)
}

fn manifest(g: &Generator, seeds: &[u64], paths: &[PathBuf]) -> String {
    let grid = g.grid();
    let join = |items: Vec<String>| items.join(",");
    let mut m = String::new();
    let _ = writeln!(m, "generator-version=trajproj {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "system={}", g.kind());
    let _ = writeln!(m, "dims={}", join(grid.dims().iter().map(|d| d.to_string()).collect()));
    let _ = writeln!(m, "dt={}", grid.dt);
    let _ = writeln!(m, "integrator-dt={}", g.dt);
    let _ = writeln!(m, "steps={}", g.steps);
    let _ = writeln!(m, "scheme={}", g.scheme());
    let _ = writeln!(m, "micro-steps={}", g.record_every);
    if let Some((a, b)) = g.window {
        let _ = writeln!(m, "window={a}..{b}");
    }
    match g.kind() {
        SystemKind::Lorenz => {
            let _ = writeln!(m, "lorenz-ic-std={}", g.lorenz_ic_std);
        }
        SystemKind::Ks => {
            let k = &g.ks_init;
            let _ = writeln!(m, "ks-modes={}", k.num_modes);
            let _ = writeln!(m, "ks-amplitude={}..{}", k.amplitude[0], k.amplitude[1]);
            let _ = writeln!(m, "ks-frequency={}..{}", k.frequency[0], k.frequency[1]);
            let _ = writeln!(m, "ks-phase={}..{}", k.phase[0], k.phase[1]);
            let _ = writeln!(m, "newton-tolerance={}", g.newton.abs_tolerance);
        }
        SystemKind::Ns => {
            let _ = writeln!(m, "grf-alpha={}", g.grf.alpha);
            let _ = writeln!(m, "grf-tau={}", g.grf.tau);
            let _ = writeln!(m, "grf-sample-resolution={}", g.grf.sample_resolution);
        }
    }
    let _ = writeln!(m, "count={}", seeds.len());
    let _ = writeln!(m, "seeds={}", join(seeds.iter().map(|s| s.to_string()).collect()));
    let names = paths
        .iter()
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    let _ = writeln!(m, "files={}", join(names));
    m
}
