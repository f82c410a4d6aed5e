//! End-to-end properties across generation, degradation, projection and I/O.

use proptest::prelude::*;

use trajproj::harness::{degrade, evaluate, DegradeContext, DegradeSpec};
use trajproj::integrators::Generator;
use trajproj::io::{decode, encode};
use trajproj::projections::{project, Lambda, Method, ProjectionConfig};
use trajproj::systems::{residual, ConstraintSpec, System};
use trajproj::{SystemKind, Trajectory};

fn small(kind: SystemKind) -> Generator {
    let mut gen = Generator::default_for(kind);
    match kind {
        SystemKind::Lorenz => gen.steps = 64,
        // coarser KS grids are under-resolved on [0, 64]
        SystemKind::Ks => gen.steps = 12,
        SystemKind::Ns => {
            gen.resolution = 16;
            gen.steps = 4;
        }
    }
    gen
}

fn degraded(gen: &Generator, seed: u64, spec: &DegradeSpec) -> (Trajectory, ConstraintSpec, Trajectory) {
    let (truth, constraint) = gen.trajectory(seed).unwrap();
    let ctx = DegradeContext { system: &gen.system, constraint: &constraint, generator: Some(gen) };
    let uhat = degrade(&truth, spec, ctx).unwrap();
    (truth, constraint, uhat)
}

fn preset_degradation(kind: SystemKind) -> DegradeSpec {
    match kind {
        SystemKind::Lorenz => DegradeSpec::gaussian_noise(1.3e-3, 7),
        SystemKind::Ks => DegradeSpec::spectral_truncate(0.5),
        SystemKind::Ns => DegradeSpec::spectral_truncate(0.25),
    }
}

fn configs(kind: SystemKind) -> Vec<ProjectionConfig> {
    let lambda = match kind {
        SystemKind::Lorenz => 1e3,
        SystemKind::Ks => 10.0,
        SystemKind::Ns => 1e3,
    };
    let mut lbfgs = ProjectionConfig::new(Method::Lbfgs, Lambda::Value(lambda));
    lbfgs.lbfgs.max_iters = 300;
    vec![
        ProjectionConfig::new(Method::Constrained, Lambda::Value(0.0)),
        ProjectionConfig::new(Method::Relaxed, Lambda::Value(lambda)),
        lbfgs,
    ]
}

#[test]
fn every_method_reduces_the_residual_on_small_presets() {
    for kind in [SystemKind::Lorenz, SystemKind::Ks, SystemKind::Ns] {
        let gen = small(kind);
        let (truth, constraint, uhat) = degraded(&gen, 3, &preset_degradation(kind));
        let before = evaluate(&uhat, &truth, &constraint, &gen.system).unwrap();
        for cfg in configs(kind) {
            let (u, report) = project(&uhat, &constraint, &gen.system, &cfg).unwrap();
            let after = evaluate(&u, &truth, &constraint, &gen.system).unwrap();
            assert!(
                after.residual < before.residual,
                "{kind} {}: {} -> {}",
                cfg.method,
                before.residual,
                after.residual
            );
            assert!((report.residual_after - after.residual).abs() <= 1e-9 * before.residual.max(1.0));
        }
    }
}

#[test]
fn ground_truth_is_a_fixed_point() {
    for kind in [SystemKind::Lorenz, SystemKind::Ks, SystemKind::Ns] {
        let gen = small(kind);
        let (truth, constraint) = gen.trajectory(8).unwrap();
        for cfg in configs(kind) {
            let (u, _) = project(&truth, &constraint, &gen.system, &cfg).unwrap();
            let m = evaluate(&u, &truth, &constraint, &gen.system).unwrap();
            assert!(m.mse <= 1e-16, "{kind} {}: mse {}", cfg.method, m.mse);
        }
    }
}

#[test]
fn constrained_projection_is_close_to_idempotent_on_lorenz() {
    let gen = small(SystemKind::Lorenz);
    let (_, constraint, uhat) = degraded(&gen, 4, &DegradeSpec::gaussian_noise(1e-3, 2));
    let cfg = ProjectionConfig::new(Method::Constrained, Lambda::Value(0.0));
    let (once, _) = project(&uhat, &constraint, &gen.system, &cfg).unwrap();
    let (twice, _) = project(&once, &constraint, &gen.system, &cfg).unwrap();
    let moved: f64 = once.values().iter().zip(twice.values()).map(|(a, b)| (a - b).powi(2)).sum();
    let first: f64 = uhat.values().iter().zip(once.values()).map(|(a, b)| (a - b).powi(2)).sum();
    assert!(moved <= 1e-6 * first, "second pass moved {moved}, first {first}");
}

#[test]
fn pipeline_is_deterministic() {
    let gen = small(SystemKind::Ns);
    let spec = DegradeSpec::blend(0.4, 11);
    let (_, c1, a) = degraded(&gen, 5, &spec);
    let (_, _, b) = degraded(&gen, 5, &spec);
    assert_eq!(encode(&a, gen.scheme()), encode(&b, gen.scheme()));
    let cfg = &configs(SystemKind::Ns)[1];
    let (pa, _) = project(&a, &c1, &gen.system, cfg).unwrap();
    let (pb, _) = project(&b, &c1, &gen.system, cfg).unwrap();
    assert_eq!(pa, pb);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn relaxed_residual_shrinks_with_lambda(seed in 0u64..1000, sigma in 1e-4f64..1e-2) {
        let gen = small(SystemKind::Lorenz);
        let (_, constraint, uhat) = degraded(&gen, seed, &DegradeSpec::gaussian_noise(sigma, seed));
        let system: &System = &gen.system;
        let mut last = residual(&uhat, &constraint, system).unwrap().norm2();
        for lambda in [1.0, 10.0, 100.0, 1000.0] {
            let cfg = ProjectionConfig::new(Method::Relaxed, Lambda::Value(lambda));
            let (u, _) = project(&uhat, &constraint, system, &cfg).unwrap();
            let r = residual(&u, &constraint, system).unwrap().norm2();
            prop_assert!(r <= last * (1.0 + 1e-9), "λ = {lambda}: {r} > {last}");
            last = r;
        }
    }

    #[test]
    fn degraded_files_round_trip(seed in 0u64..1000, keep in 0.05f64..1.0) {
        let gen = small(SystemKind::Ks);
        let (_, _, uhat) = degraded(&gen, seed, &DegradeSpec::spectral_truncate(keep));
        let back = decode(&encode(&uhat, gen.scheme())).unwrap();
        prop_assert_eq!(back.trajectory, uhat);
        prop_assert_eq!(back.scheme, gen.scheme());
    }

    #[test]
    fn degradation_keeps_the_initial_frame(seed in 0u64..1000, w in 0.0f64..1.0) {
        let gen = small(SystemKind::Ns);
        let (truth, _, uhat) = degraded(&gen, seed % 7, &DegradeSpec::blend(w, seed));
        prop_assert_eq!(uhat.frame(0), truth.frame(0));
    }
}
