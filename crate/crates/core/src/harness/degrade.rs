//! Degradation operators producing approximate trajectories `û` from ground truth.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::Trajectory;
use crate::integrators::{bdf1_steps, explicit_steps, Generator, NewtonConfig};
use crate::spectral::SpectralWorkspace;
use crate::systems::{ConstraintSpec, Dynamics, Scheme, System};

/// Seed offset for the second trajectory mixed in by `blend`.
pub const BLEND_SEED_SHIFT: u64 = 1_000_003;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DegradeKind {
    SpectralTruncate,
    GaussianNoise,
    CoarseTime,
    Blend,
}

impl DegradeKind {
    pub const ALL: [DegradeKind; 4] = [
        DegradeKind::SpectralTruncate,
        DegradeKind::GaussianNoise,
        DegradeKind::CoarseTime,
        DegradeKind::Blend,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DegradeKind::SpectralTruncate => "spectral-truncate",
            DegradeKind::GaussianNoise => "gaussian-noise",
            DegradeKind::CoarseTime => "coarse-time",
            DegradeKind::Blend => "blend",
        }
    }
}

impl fmt::Display for DegradeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for DegradeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DegradeKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::config(format!(
                "unknown degradation `{s}` (expected spectral-truncate, gaussian-noise, coarse-time or blend)"
            ))
        })
    }
}

/// Parameters for every kind; only those of `kind` are used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradeSpec {
    pub kind: DegradeKind,
    /// Fraction of the resolved band kept per axis, in (0, 1].
    pub keep_fraction: f64,
    pub noise_sigma: f64,
    pub coarse_factor: usize,
    /// Weight of the second trajectory, in [0, 1].
    pub blend_weight: f64,
    pub seed: u64,
}

impl DegradeSpec {
    fn base(kind: DegradeKind) -> Self {
        DegradeSpec {
            kind,
            keep_fraction: 1.0,
            noise_sigma: 0.0,
            coarse_factor: 1,
            blend_weight: 0.0,
            seed: 0,
        }
    }

    pub fn spectral_truncate(keep_fraction: f64) -> Self {
        DegradeSpec {
            keep_fraction,
            ..Self::base(DegradeKind::SpectralTruncate)
        }
    }

    pub fn gaussian_noise(sigma: f64, seed: u64) -> Self {
        DegradeSpec {
            noise_sigma: sigma,
            seed,
            ..Self::base(DegradeKind::GaussianNoise)
        }
    }

    pub fn coarse_time(factor: usize) -> Self {
        DegradeSpec {
            coarse_factor: factor,
            ..Self::base(DegradeKind::CoarseTime)
        }
    }

    pub fn blend(weight: f64, seed: u64) -> Self {
        DegradeSpec {
            blend_weight: weight,
            seed,
            ..Self::base(DegradeKind::Blend)
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        DegradeSpec { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::config(format!("keep-fraction must lie in (0, 1], got {}", self.keep_fraction)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config(format!("noise sigma must be finite and ≥ 0, got {}", self.noise_sigma)));
        }
        if self.coarse_factor == 0 {
            return Err(Error::config("coarse factor must be ≥ 1"));
        }
        if !(0.0..=1.0).contains(&self.blend_weight) {
            return Err(Error::config(format!("blend weight must lie in [0, 1], got {}", self.blend_weight)));
        }
        Ok(())
    }
}

/// What `degrade` needs besides the trajectory: the dynamics for
/// `coarse-time` and a generator for the second trajectory of `blend`.
#[derive(Clone, Copy)]
pub struct DegradeContext<'a> {
    pub system: &'a System,
    pub constraint: &'a ConstraintSpec,
    pub generator: Option<&'a Generator>,
}

/// Degraded copy of `u_gt` whose initial frame equals `u_gt[0]`.
pub fn degrade(u_gt: &Trajectory, spec: &DegradeSpec, ctx: DegradeContext<'_>) -> Result<Trajectory> {
    spec.validate()?;
    let mut out = match spec.kind {
        DegradeKind::SpectralTruncate => spectral_truncate(u_gt, spec.keep_fraction)?,
        DegradeKind::GaussianNoise => gaussian_noise(u_gt, spec.noise_sigma, spec.seed)?,
        DegradeKind::CoarseTime => coarse_time(u_gt, spec.coarse_factor, ctx)?,
        DegradeKind::Blend => blend(u_gt, spec, ctx)?,
    };
    out.frame_mut(0).copy_from_slice(u_gt.frame(0));
    Ok(out)
}

/// Zeroes every Fourier mode with `|m| > keep · n / 2` on some axis, frame by frame.
pub fn spectral_truncate(u: &Trajectory, keep_fraction: f64) -> Result<Trajectory> {
    let grid = u.grid();
    if !grid.periodic || grid.resolutions.is_empty() {
        return Err(Error::Unsupported(format!("spectral truncation needs a periodic spatial grid ({})", grid.kind)));
    }
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::config(format!("keep-fraction must lie in (0, 1], got {keep_fraction}")));
    }
    if keep_fraction == 1.0 {
        return Ok(u.clone());
    }
    let mut ws = SpectralWorkspace::with_shape(&grid.resolutions, &grid.lengths, false)?;
    let keep: Vec<bool> = (0..ws.spectral_len())
        .map(|idx| {
            grid.resolutions.iter().zip(&grid.lengths).enumerate().all(|(axis, (&n, &len))| {
                let m = (ws.k(axis, idx) * len / (2.0 * std::f64::consts::PI)).round().abs();
                m <= keep_fraction * n as f64 / 2.0
            })
        })
        .collect();
    let mut spec = ws.zero_spectrum();
    let mut out = u.clone();
    let mut frame = vec![0.0; grid.spatial_size()];
    for t in 0..grid.num_steps {
        ws.forward(u.frame(t), &mut spec);
        for (s, k) in spec.iter_mut().zip(&keep) {
            if !k {
                *s = num_complex::Complex64::new(0.0, 0.0);
            }
        }
        ws.inverse(&spec, &mut frame);
        out.frame_mut(t).copy_from_slice(&frame);
    }
    Ok(out)
}

pub fn gaussian_noise(u: &Trajectory, sigma: f64, seed: u64) -> Result<Trajectory> {
    if sigma == 0.0 {
        return Ok(u.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::config(format!("noise sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = u.clone();
    for v in out.values_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}

/// Re-solves from `u[0]` with the frame spacing multiplied by `factor`, then
/// interpolates linearly back onto the original frames.
pub fn coarse_time(u: &Trajectory, factor: usize, ctx: DegradeContext<'_>) -> Result<Trajectory> {
    if factor == 0 {
        return Err(Error::config("coarse factor must be ≥ 1"));
    }
    let grid = u.grid();
    let spec = ctx.constraint;
    let frames = grid.num_steps;
    let coarse_frames = (frames - 1).div_ceil(factor) + 1;
    let dt = grid.dt * factor as f64;
    let mut field = Dynamics::new(ctx.system, grid)?;
    let newton = ctx.generator.map_or_else(NewtonConfig::default, |g| g.newton);
    let coarse = match spec.scheme {
        Scheme::Bdf1 => bdf1_steps(&mut field, u.frame(0), dt, coarse_frames, &newton)?,
        scheme => explicit_steps(&mut field, scheme, u.frame(0), dt / spec.micro_steps as f64, coarse_frames, spec.micro_steps)?,
    };
    let n = u.frame(0).len();
    let mut out = u.clone();
    for t in 0..frames {
        let (s, a) = (t / factor, t % factor);
        let w = a as f64 / factor as f64;
        let lo = &coarse[s * n..(s + 1) * n];
        let frame = out.frame_mut(t);
        if a == 0 {
            frame.copy_from_slice(lo);
        } else {
            let hi = &coarse[(s + 1) * n..(s + 2) * n];
            for ((f, l), h) in frame.iter_mut().zip(lo).zip(hi) {
                *f = (1.0 - w) * l + w * h;
            }
        }
    }
    Ok(out)
}

/// `(1 − w)·u + w·v` with `v` generated from seed `spec.seed + BLEND_SEED_SHIFT`.
pub fn blend(u: &Trajectory, spec: &DegradeSpec, ctx: DegradeContext<'_>) -> Result<Trajectory> {
    let gen = ctx
        .generator
        .ok_or_else(|| Error::config("blend degradation needs a generator for the second trajectory"))?;
    let resolution = u.grid().resolutions.first().copied().unwrap_or(gen.resolution);
    let gen = Generator {
        resolution,
        ..gen.clone()
    };
    let (other, _) = gen.trajectory(spec.seed.wrapping_add(BLEND_SEED_SHIFT))?;
    u.grid().check_same(other.grid(), "blend partner")?;
    let w = spec.blend_weight;
    let values = u.values().iter().zip(other.values()).map(|(a, b)| (1.0 - w) * a + w * b).collect();
    Trajectory::new(u.grid().clone(), values)
}
