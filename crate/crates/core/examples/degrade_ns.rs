//! Degradation operators on a small Navier-Stokes run, and how far each moves
//! the trajectory off the feasible set.

use trajproj::harness::{degrade, evaluate, DegradeContext, DegradeSpec};
use trajproj::integrators::Generator;
use trajproj::SystemKind;

fn main() -> trajproj::Result<()> {
    let mut gen = Generator::default_for(SystemKind::Ns);
    gen.resolution = 32;
    gen.steps = 6;
    let (truth, spec) = gen.trajectory(3)?;
    let ctx = DegradeContext { system: &gen.system, constraint: &spec, generator: Some(&gen) };
    let specs = [
        DegradeSpec::spectral_truncate(0.25),
        DegradeSpec::gaussian_noise(0.05, 9),
        DegradeSpec::coarse_time(4),
        DegradeSpec::blend(0.3, 9),
    ];
    for s in &specs {
        let uhat = degrade(&truth, s, ctx)?;
        let m = evaluate(&uhat, &truth, &spec, &gen.system)?;
        println!("{:<18} mse {:.3e}  residual {:.3e}", s.kind, m.mse, m.residual);
    }
    Ok(())
}
