//! Random walkers weighted by `exp(-b int A . dR)` reproduce the covariant
//! diffusion solve, site by site within the sampling error.

use liouville_lattice::diffusion::{Couplings, CovariantMode, delta_source, evolve};
use liouville_lattice::lattice::{LatticeSpec, ScalarField, grad};
use liouville_lattice::walkers::{enumerate_expectation, estimate_psi};

fn main() -> liouville_lattice::Result<()> {
    let (g, a) = (1.0, 0.25);
    let spec = LatticeSpec::new(16, 16, a, 18, a * a / (4.0 * g))?;
    let c = Couplings::new(g, 0.3, 1.0)?;
    let gamma = ScalarField::from_fn(spec, |i, j| (std::f64::consts::TAU * (i as f64 + 2.0 * j as f64) / 16.0).sin())?;
    let a_field = grad(&gamma);
    let x0 = spec.center();

    let est = estimate_psi(&spec, x0, 0.25, &a_field, &c, 100_000, 7)?;
    let pde = evolve(&delta_source(spec, x0)?, &a_field, &c, CovariantMode::ExactSimilarity)?;
    let k = spec.slice_for_time(0.25)?;
    let (i0, j0) = spec.coords(x0);
    println!("{:>4} {:>12} {:>12} {:>12}", "dx", "walkers", "stderr", "pde");
    for d in (-6i64..=6).step_by(2) {
        let x = spec.index(i0 as i64 + d, j0 as i64);
        println!("{d:>4} {:>12.5} {:>12.5} {:>12.5}", est.mean[x], est.stderr[x], pde.get(k, x));
    }

    let small = LatticeSpec::new(2, 2, 1.0, 5, 0.25)?;
    let flat = grad(&ScalarField::from_fn(small, |i, j| 0.3 * i as f64 - 0.8 * j as f64)?);
    let exact = enumerate_expectation(&small, 0, 3, &flat, c.b)?;
    println!("2x2, 3 steps, all 64 paths: {exact:.6?}");
    Ok(())
}
