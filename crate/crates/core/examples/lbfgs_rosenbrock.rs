//! L-BFGS on the Rosenbrock function.

use trajproj::lbfgs::{minimize, LbfgsConfig};

fn main() -> trajproj::Result<()> {
    let f = |x: &[f64]| {
        let (a, b) = (x[0], x[1]);
        let value = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let grad = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((value, grad))
    };
    let cfg = LbfgsConfig { max_iters: 200, gradient_tolerance: 1e-10, ..Default::default() };
    let (x, trace) = minimize(f, &[-1.2, 1.0], &cfg)?;
    println!("minimum at ({:.12}, {:.12})", x[0], x[1]);
    println!(
        "{} iterations, {} evaluations, stopped on {}",
        trace.iterations(),
        trace.evaluations,
        trace.termination
    );
    for (k, v) in trace.objective_values.iter().enumerate().step_by(5) {
        println!("  f[{k:>3}] = {v:.3e}");
    }
    Ok(())
}
