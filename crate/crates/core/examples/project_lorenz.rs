//! Project a noisy Lorenz trajectory with all three methods.

use trajproj::harness::{degrade, evaluate, DegradeContext, DegradeSpec};
use trajproj::integrators::Generator;
use trajproj::projections::{project, Lambda, Method, ProjectionConfig};
use trajproj::SystemKind;

fn main() -> trajproj::Result<()> {
    let gen = Generator::default_for(SystemKind::Lorenz);
    let (truth, spec) = gen.trajectory(42)?;
    let ctx = DegradeContext { system: &gen.system, constraint: &spec, generator: Some(&gen) };
    let uhat = degrade(&truth, &DegradeSpec::gaussian_noise(1.3e-3, 1), ctx)?;

    let base = evaluate(&uhat, &truth, &spec, &gen.system)?;
    println!("{:<12} mse {:.3e}  residual {:.3e}", "baseline", base.mse, base.residual);

    let configs = [
        ProjectionConfig::new(Method::Constrained, Lambda::Value(0.0)),
        ProjectionConfig::new(Method::Relaxed, Lambda::Value(1e3)),
        {
            let mut c = ProjectionConfig::new(Method::Lbfgs, Lambda::Value(1e9));
            c.lbfgs.max_iters = 10_000;
            c.lbfgs.gradient_tolerance = 1e-12;
            c
        },
    ];
    for cfg in &configs {
        let (u, report) = project(&uhat, &spec, &gen.system, cfg)?;
        let m = evaluate(&u, &truth, &spec, &gen.system)?;
        println!(
            "{:<12} mse {:.3e}  residual {:.3e}  ({} iterations)",
            cfg.method.name(),
            m.mse,
            m.residual,
            report.iterations()
        );
    }
    Ok(())
}
