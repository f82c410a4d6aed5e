//! Constraint violation along an L-BFGS path against its linear and
//! Gauss-Newton quadratic models. Writes the curve as CSV.

use trajproj::harness::{degrade, taylor_landscape, DegradeContext, DegradeSpec, QuadraticMode};
use trajproj::integrators::Generator;
use trajproj::projections::{project_lbfgs, Lambda, Method, ProjectionConfig};
use trajproj::SystemKind;

fn main() -> trajproj::Result<()> {
    let mut gen = Generator::default_for(SystemKind::Ns);
    gen.resolution = 32;
    gen.steps = 5;
    let (truth, spec) = gen.trajectory(5)?;
    let ctx = DegradeContext { system: &gen.system, constraint: &spec, generator: Some(&gen) };
    let uhat = degrade(&truth, &DegradeSpec::spectral_truncate(0.25), ctx)?;

    let mut cfg = ProjectionConfig::new(Method::Lbfgs, Lambda::Value(1e4));
    cfg.lbfgs.max_iters = 100;
    cfg.lbfgs.record_path = true;
    let (_, trace) = project_lbfgs(&uhat, &spec, &gen.system, &cfg)?;
    let curve = taylor_landscape(&trace, uhat.grid(), &spec, &gen.system, QuadraticMode::GaussNewton)?;

    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let k = curve.index_at_fraction(frac);
        println!(
            "d = {:8.3}  v = {:.3e}  linear err {:.2e}  quadratic err {:.2e}",
            curve.d[k],
            curve.v_true[k],
            curve.linear_error(k),
            curve.quadratic_error(k)
        );
    }
    let path = std::env::temp_dir().join("trajproj-landscape.csv");
    std::fs::write(&path, curve.to_csv())?;
    println!("curve written to {}", path.display());
    Ok(())
}
