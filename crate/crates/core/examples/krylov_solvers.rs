//! CG, BiCGSTAB and GMRES on small dense systems, plus a matrix-free operator.

use trajproj::krylov::{bicgstab, cg, gmres, DenseOperator, FnOperator, SolveOptions};

fn main() -> trajproj::Result<()> {
    let n = 50;
    // tridiagonal Laplacian-like SPD matrix
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = 4.0;
        if i > 0 {
            a[i * n + i - 1] = -1.0;
        }
        if i + 1 < n {
            a[i * n + i + 1] = -1.0;
        }
    }
    let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
    let opts = SolveOptions { tol: 1e-10, max_iters: 500 };

    let mut spd = DenseOperator::new(n, n, a.clone())?.assume_positive_definite();
    let (_, r) = cg(&mut spd, &b, opts, None)?;
    println!("cg:       {} iterations, relative residual {:.1e}", r.iterations, r.final_relative_residual);

    // add a skew part so the matrix is no longer symmetric
    for i in 0..n - 1 {
        a[i * n + i + 1] += 0.5;
        a[(i + 1) * n + i] -= 0.5;
    }
    let mut general = DenseOperator::new(n, n, a)?;
    let (_, r) = bicgstab(&mut general, &b, opts, None)?;
    println!("bicgstab: {} iterations, relative residual {:.1e}", r.iterations, r.final_relative_residual);
    let (_, r) = gmres(&mut general, &b, opts, 20, None)?;
    println!("gmres:    {} iterations, relative residual {:.1e}", r.iterations, r.final_relative_residual);

    // the same solvers only need the action of the operator
    let mut diag = FnOperator::new(n, |x: &[f64], out: &mut [f64]| {
        for (i, (o, v)) in out.iter_mut().zip(x).enumerate() {
            *o = (1.0 + i as f64) * v;
        }
        Ok(())
    })
    .symmetric(true);
    let (x, r) = cg(&mut diag, &b, opts, None)?;
    println!("matrix-free cg: {} iterations, x[10] = {:.6}", r.iterations, x[10]);
    Ok(())
}
