//! TOML run configuration.
//!
//! ```toml
//! system = "ks"                  # lorenz | ks | ns
//!
//! [generator]                    # every key optional
//! resolution = 64
//! dt = 0.1
//! steps = 512                    # frames before windowing, incl. the initial one
//! record_every = 1               # ns micro-steps per frame
//! window = [256, 512]
//! scheme = "bdf1"                # must match the system
//! seeds = [0, 1]                 # or: count = 16, first_seed = 1000
//!
//! [degrade]
//! kind = "spectral-truncate"     # | gaussian-noise | coarse-time | blend
//! keep_fraction = 0.5
//!
//! [projection]
//! methods = ["constrained", "relaxed", "lbfgs"]
//! krylov_tol = 1e-8
//! krylov_max_iters = 2000
//! penalty_norms = "squared"      # | unsquared
//! [projection.relaxed]
//! lambda = 10                    # number or "norm-of-uhat"
//! [projection.lbfgs]
//! lambda = 10
//! max_iters = 200
//!
//! [evaluation]
//! resolutions = [64, 128, 256]
//! threads = 0
//!
//! [output]
//! dir = "out/ks"
//! ```
//!
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::SystemKind;
use crate::harness::experiment::ExperimentConfig;
use crate::harness::{DegradeKind, DegradeSpec};
use crate::integrators::Generator;
use crate::lbfgs::LbfgsConfig;
use crate::projections::{Lambda, Method, PenaltyNorms, ProjectionConfig};
use crate::systems::{Scheme, System};

pub const LORENZ_PRESET: &str = include_str!("../configs/lorenz.toml");
pub const KS_PRESET: &str = include_str!("../configs/ks.toml");
pub const NS_PRESET: &str = include_str!("../configs/ns.toml");

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: String,
    #[serde(default)]
    pub generator: GeneratorSection,
    pub degrade: Option<DegradeSection>,
    #[serde(default)]
    pub projection: ProjectionSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub resolution: Option<usize>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub record_every: Option<usize>,
    pub window: Option<[usize; 2]>,
    pub scheme: Option<String>,
    pub lorenz_ic_std: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub count: Option<usize>,
    pub first_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradeSection {
    pub kind: String,
    pub keep_fraction: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub coarse_factor: Option<usize>,
    pub blend_weight: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum LambdaValue {
    Number(f64),
    Token(String),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub lambda: Option<LambdaValue>,
    pub memory: Option<usize>,
    pub max_iters: Option<usize>,
    pub gradient_tolerance: Option<f64>,
    pub wolfe_c1: Option<f64>,
    pub wolfe_c2: Option<f64>,
    pub max_line_search_evals: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionSection {
    pub methods: Option<Vec<String>>,
    pub krylov_tol: Option<f64>,
    pub krylov_max_iters: Option<usize>,
    pub penalty_norms: Option<String>,
    pub relaxed: Option<MethodSection>,
    pub lbfgs: Option<MethodSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    pub resolutions: Option<Vec<usize>>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl LambdaValue {
    fn resolve(&self) -> Result<Lambda> {
        match self {
            LambdaValue::Number(v) => {
                let l = Lambda::Value(*v);
                l.validate()?;
                Ok(l)
            }
            LambdaValue::Token(s) => s.parse(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The shipped configuration for `kind`.
    pub fn preset(kind: SystemKind) -> Self {
        let text = match kind {
            SystemKind::Lorenz => LORENZ_PRESET,
            SystemKind::Ks => KS_PRESET,
            SystemKind::Ns => NS_PRESET,
        };
        Self::parse(text).expect("shipped presets are valid")
    }

    pub fn kind(&self) -> Result<SystemKind> {
        self.system.parse()
    }

    /// Checks every section without running anything.
    pub fn validate(&self) -> Result<()> {
        self.generator()?;
        self.seeds()?;
        self.degrade_spec()?;
        self.projection_configs()?;
        if let Some(r) = &self.evaluation.resolutions {
            if self.kind()? == SystemKind::Lorenz && !r.is_empty() {
                return Err(Error::config("evaluation.resolutions does not apply to lorenz"));
            }
            if r.iter().any(|&n| n < 4) {
                return Err(Error::config("evaluation.resolutions must all be ≥ 4"));
            }
        }
        Ok(())
    }

    pub fn generator(&self) -> Result<Generator> {
        let kind = self.kind()?;
        let g = &self.generator;
        let mut gen = Generator::default_for(kind);
        if let Some(v) = g.resolution {
            gen.resolution = v;
        }
        if let Some(v) = g.dt {
            gen.dt = v;
        }
        if let Some(v) = g.steps {
            gen.steps = v;
        }
        if let Some(v) = g.record_every {
            gen.record_every = v;
        }
        if let Some([a, b]) = g.window {
            gen.window = Some((a, b));
        }
        if let Some(v) = g.lorenz_ic_std {
            gen.lorenz_ic_std = v;
        }
        if let Some(s) = &g.scheme {
            let scheme: Scheme = s.parse()?;
            let expected = System::default_for(kind).default_scheme();
            if scheme != expected {
                return Err(Error::config(format!("{kind} data is generated with {expected}, not {scheme}")));
            }
        }
        gen.validate()?;
        Ok(gen)
    }

    pub fn seeds(&self) -> Result<Vec<u64>> {
        let g = &self.generator;
        match (&g.seeds, g.count) {
            (Some(_), Some(_)) => Err(Error::config("give either generator.seeds or generator.count, not both")),
            (Some(s), None) if s.is_empty() => Err(Error::config("generator.seeds is empty")),
            (Some(s), None) => Ok(s.clone()),
            (None, Some(0)) => Err(Error::config("generator.count must be ≥ 1")),
            (None, count) => {
                let first = g.first_seed.unwrap_or(0);
                Ok((0..count.unwrap_or(1) as u64).map(|i| first + i).collect())
            }
        }
    }

    /// `None` when no `[degrade]` section is present.
    pub fn degrade_spec(&self) -> Result<Option<DegradeSpec>> {
        let Some(d) = &self.degrade else { return Ok(None) };
        let kind: DegradeKind = d.kind.parse()?;
        let mut spec = match kind {
            DegradeKind::SpectralTruncate => DegradeSpec::spectral_truncate(d.keep_fraction.unwrap_or(0.5)),
            DegradeKind::GaussianNoise => DegradeSpec::gaussian_noise(d.noise_sigma.unwrap_or(0.0), 0),
            DegradeKind::CoarseTime => DegradeSpec::coarse_time(d.coarse_factor.unwrap_or(2)),
            DegradeKind::Blend => DegradeSpec::blend(d.blend_weight.unwrap_or(0.5), 0),
        };
        if let Some(v) = d.keep_fraction {
            spec.keep_fraction = v;
        }
        if let Some(v) = d.noise_sigma {
            spec.noise_sigma = v;
        }
        if let Some(v) = d.coarse_factor {
            spec.coarse_factor = v;
        }
        if let Some(v) = d.blend_weight {
            spec.blend_weight = v;
        }
        spec.seed = d.seed.unwrap_or(0);
        spec.validate()?;
        Ok(Some(spec))
    }

    /// Projection settings for `method`, whether or not it is listed in `methods`.
    pub fn projection_config(&self, method: Method) -> Result<ProjectionConfig> {
        let p = &self.projection;
        let defaults = crate::harness::experiment::default_method_configs(self.kind()?);
        let mut cfg = defaults
            .into_iter()
            .find(|c| c.method == method)
            .expect("defaults cover every method");
        if let Some(v) = p.krylov_tol {
            cfg.krylov_tol = v;
        }
        if let Some(v) = p.krylov_max_iters {
            cfg.krylov_max_iters = v;
        }
        if let Some(s) = &p.penalty_norms {
            cfg.penalty_norms = match s.as_str() {
                "squared" => PenaltyNorms::Squared,
                "unsquared" => PenaltyNorms::Unsquared,
                _ => return Err(Error::config(format!("penalty_norms must be squared or unsquared, got `{s}`"))),
            };
        }
        let section = match method {
            Method::Constrained => None,
            Method::Relaxed => p.relaxed.as_ref(),
            Method::Lbfgs => p.lbfgs.as_ref(),
        };
        if let Some(s) = section {
            if let Some(l) = &s.lambda {
                cfg.lambda = l.resolve()?;
            }
            let lbfgs_only = [s.memory, s.max_iters, s.max_line_search_evals].iter().any(Option::is_some)
                || [s.gradient_tolerance, s.wolfe_c1, s.wolfe_c2].iter().any(Option::is_some);
            if method == Method::Relaxed && lbfgs_only {
                return Err(Error::config("projection.relaxed accepts only `lambda`"));
            }
            let l: &mut LbfgsConfig = &mut cfg.lbfgs;
            if let Some(v) = s.memory {
                l.memory = v;
            }
            if let Some(v) = s.max_iters {
                l.max_iters = v;
            }
            if let Some(v) = s.gradient_tolerance {
                l.gradient_tolerance = v;
            }
            if let Some(v) = s.wolfe_c1 {
                l.wolfe_c1 = v;
            }
            if let Some(v) = s.wolfe_c2 {
                l.wolfe_c2 = v;
            }
            if let Some(v) = s.max_line_search_evals {
                l.max_line_search_evals = v;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        match &self.projection.methods {
            None => Ok(Method::ALL.to_vec()),
            Some(names) => {
                let mut out = Vec::new();
                for n in names {
                    let m: Method = n.parse()?;
                    if out.contains(&m) {
                        return Err(Error::config(format!("method `{m}` listed twice")));
                    }
                    out.push(m);
                }
                Ok(out)
            }
        }
    }

    pub fn projection_configs(&self) -> Result<Vec<ProjectionConfig>> {
        self.methods()?.into_iter().map(|m| self.projection_config(m)).collect()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let degrade = self
            .degrade_spec()?
            .ok_or_else(|| Error::config("an experiment needs a [degrade] section"))?;
        let cfg = ExperimentConfig {
            generator: self.generator()?,
            seeds: self.seeds()?,
            degrade,
            methods: self.projection_configs()?,
            resolutions: self.evaluation.resolutions.clone().unwrap_or_default(),
            threads: self.evaluation.threads.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for kind in [SystemKind::Lorenz, SystemKind::Ks, SystemKind::Ns] {
            let cfg = RunConfig::preset(kind);
            let exp = cfg.experiment().unwrap();
            assert_eq!(exp.generator.kind(), kind);
            assert_eq!(exp.methods.len(), 3);
        }
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::parse("system = \"lorenz\"").unwrap();
        assert_eq!(cfg.generator().unwrap(), Generator::default_for(SystemKind::Lorenz));
        assert_eq!(cfg.seeds().unwrap(), vec![0]);
        assert_eq!(cfg.degrade_spec().unwrap(), None);
        let relaxed = cfg.projection_config(Method::Relaxed).unwrap();
        assert_eq!(relaxed.lambda, Lambda::Value(1000.0));
        assert!(cfg.experiment().is_err());
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::parse(
            r#"
system = "ns"
[generator]
resolution = 32
steps = 5
count = 3
first_seed = 10
[degrade]
kind = "gaussian-noise"
noise_sigma = 0.1
seed = 4
[projection]
methods = ["lbfgs"]
[projection.lbfgs]
lambda = "norm-of-uhat"
max_iters = 7
"#,
        )
        .unwrap();
        let exp = cfg.experiment().unwrap();
        assert_eq!(exp.generator.resolution, 32);
        assert_eq!(exp.seeds, vec![10, 11, 12]);
        assert_eq!(exp.degrade, DegradeSpec::gaussian_noise(0.1, 4));
        assert_eq!(exp.methods.len(), 1);
        assert_eq!(exp.methods[0].lambda, Lambda::NormOfUhat);
        assert_eq!(exp.methods[0].lbfgs.max_iters, 7);
    }

    fn rejects(text: &str, needle: &str) {
        let err = RunConfig::parse(text).unwrap_err().to_string();
        assert!(err.contains(needle), "`{err}` lacks `{needle}`");
    }

    #[test]
    fn validation_messages() {
        rejects("system = \"lorenz\"\nfoo = 1", "unknown field");
        rejects("system = \"lorenz\"\n[generator]\nstep = 3", "unknown field");
        rejects("system = \"heat\"", "unknown system");
        rejects("system = \"ks\"\n[generator]\nscheme = \"rk4\"", "unknown scheme");
        rejects("system = \"ks\"\n[generator]\nscheme = \"heun\"", "generated with bdf1");
        rejects("system = \"ks\"\n[projection.relaxed]\nlambda = -1", "lambda");
        rejects("system = \"ks\"\n[projection.lbfgs]\nlambda = \"big\"", "lambda");
        rejects("system = \"ks\"\n[degrade]\nkind = \"spectral-truncate\"\nkeep_fraction = 0", "keep-fraction");
        rejects("system = \"ks\"\n[degrade]\nkind = \"spectral-truncate\"\nkeep_fraction = 1.5", "keep-fraction");
        rejects("system = \"ks\"\n[degrade]\nkind = \"warp\"", "unknown degradation");
        rejects("system = \"ks\"\n[projection]\nmethods = [\"newton\"]", "unknown projection method");
        rejects("system = \"ks\"\n[generator]\nseeds = [1]\ncount = 2", "either");
        rejects("system = \"lorenz\"\n[evaluation]\nresolutions = [64]", "does not apply");
        rejects("system = \"ks\"\n[projection.relaxed]\nmax_iters = 3", "only `lambda`");
    }
}
