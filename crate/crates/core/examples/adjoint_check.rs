//! Matrix-free Jacobian products of the KS trajectory residual, checked
//! against each other and against finite differences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use trajproj::integrators::Generator;
use trajproj::linalg::{dot, norm, sub};
use trajproj::systems::{ResidualMap, ResidualVector};
use trajproj::{SystemKind, Trajectory};

fn main() -> trajproj::Result<()> {
    let mut gen = Generator::default_for(SystemKind::Ks);
    gen.steps = 64;
    let (u, spec) = gen.trajectory(7)?;
    let grid = u.grid().clone();
    let mut map = ResidualMap::new(&grid, &gen.system, spec)?;
    let lin = map.linearize(&u)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let v = Trajectory::new(grid.clone(), draw(grid.total_size()))?;
    let w = ResidualVector::from_values(grid.spatial_size(), draw(grid.total_size()))?;

    let jv = map.jvp_at(&lin, &v)?;
    let jtw = map.vjp_at(&lin, &w)?;
    println!("<Jv, w>  = {:.15e}", dot(jv.values(), w.values()));
    println!("<v, Jᵀw> = {:.15e}", dot(v.values(), jtw.values()));

    let eps = 1e-6 * u.norm2().sqrt() / v.norm2().sqrt();
    let at = |s: f64| {
        let vals = u.values().iter().zip(v.values()).map(|(a, b)| a + s * b).collect();
        Trajectory::new(grid.clone(), vals)
    };
    let rp = map.residual(&at(eps)?)?;
    let rm = map.residual(&at(-eps)?)?;
    let fd: Vec<f64> = rp.values().iter().zip(rm.values()).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
    println!("finite-difference relative error {:.2e}", norm(&sub(&fd, jv.values())) / norm(jv.values()));
    Ok(())
}
