//! Diffusion in a pure-gauge potential equals the free solution times
//! `exp(-b (gamma(x) - gamma(x0)))`, exactly with link factors and only
//! approximately with midpoint differences.

use liouville_lattice::diffusion::{Couplings, CovariantMode, delta_source, evolve, gauge_transform};
use liouville_lattice::lattice::{LatticeSpec, ScalarField, VectorField, grad};

fn main() -> liouville_lattice::Result<()> {
    let spec = LatticeSpec::unit(8, 8, 20, 0.2)?;
    let c = Couplings::new(1.0, 0.7, 1.0)?;
    let x0 = spec.center();
    let gamma = ScalarField::from_fn(spec, |i, j| (0.9 * i as f64).sin() * (0.4 * j as f64).cos())?;
    let source = delta_source(spec, x0)?;

    let free = evolve(&source, &VectorField::zeros(spec), &c, CovariantMode::ExactSimilarity)?;
    let expected = gauge_transform(&free, &gamma, c.b, x0)?;
    for mode in [CovariantMode::ExactSimilarity, CovariantMode::Naive] {
        let psi = evolve(&source, &grad(&gamma), &c, mode)?;
        let worst = psi
            .values()
            .iter()
            .zip(expected.values())
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max);
        println!("{mode:?}: max |Psi_A - exp(-b gamma) Psi_0| = {worst:.3e}");
    }
    Ok(())
}
