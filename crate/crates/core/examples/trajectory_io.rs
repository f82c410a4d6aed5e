//! Write a trajectory to the binary format, read it back, and export CSV.

use trajproj::integrators::Generator;
use trajproj::io::{read_trajectory, to_csv, write_trajectory};
use trajproj::SystemKind;

fn main() -> trajproj::Result<()> {
    let mut gen = Generator::default_for(SystemKind::Ks);
    gen.resolution = 16;
    gen.steps = 4;
    let (u, _) = gen.trajectory(1)?;
    let path = std::env::temp_dir().join("trajproj-example.utrj");
    write_trajectory(&path, &u, gen.scheme())?;
    let back = read_trajectory(&path)?;
    let exact = back.trajectory.values().iter().zip(u.values()).all(|(a, b)| a.to_bits() == b.to_bits());
    println!("{} bytes, scheme {}, bit-exact: {exact}", std::fs::metadata(&path)?.len(), back.scheme);
    for line in to_csv(&back.trajectory).lines().take(4) {
        println!("{line}");
    }
    Ok(())
}
