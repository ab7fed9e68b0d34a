use markovian_embed::correlator::{model_from_regime, BrownianParams, Regime};
use markovian_embed::embeddings::build_preset;
use markovian_embed::liouville::{pauli, CMat, SystemSpec};
use markovian_embed::propagator::{evolve, observable, EvolveOptions};
use num_complex::Complex64;

fn main() -> markovian_embed::Result<()> {
    let sz = pauli('z').unwrap();
    let sys = SystemSpec::new(&sz * Complex64::from(0.5), pauli('x').unwrap())?;
    let bath = model_from_regime(&BrownianParams::from_zeta(0.5, 1.0, 0.1, 1.0)?, Regime::Classical)?;
    let gen = build_preset("heom-stable-eq27", &sys, &bath, 12)?;
    let mut rho0 = CMat::zeros(2, 2);
    rho0[(0, 0)] = Complex64::ONE;
    let grid: Vec<f64> = (0..=100).map(|i| 0.1 * i as f64).collect();
    let traj = evolve(&gen, &rho0, &grid, &EvolveOptions::default())?;
    for (t, z) in grid.iter().zip(observable(&traj, &sz)?).step_by(10) {
        println!("{t:5.2} {:+.6}", z.re);
    }
    Ok(())
}
