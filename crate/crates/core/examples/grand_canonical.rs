//! Grand-canonical weight of one pure-gauge configuration: partial sums of
//! `sum (mu Z)^N / N!` against `exp(mu Z)`.

use liouville_lattice::diffusion::{Couplings, CovariantMode, canonical_z, delta_source, evolve};
use liouville_lattice::lattice::{LatticeSpec, ScalarField, grad};
use liouville_lattice::walkers::grand_canonical_xi;

fn main() -> liouville_lattice::Result<()> {
    let spec = LatticeSpec::unit(6, 6, 8, 0.25)?;
    let c = Couplings::new(1.0, 0.5, 1.0)?;
    let gamma = ScalarField::from_fn(spec, |i, j| 0.3 * (i as f64).sin() - 0.2 * (j as f64).cos())?;
    let psi = evolve(&delta_source(spec, 0)?, &grad(&gamma), &c, CovariantMode::ExactSimilarity)?;
    let z = canonical_z(&psi.slice_field(spec.nt - 1));
    println!("Z = {z:.10}");
    for mu in [1.0, 5.0 / z] {
        let sums = grand_canonical_xi(z, mu, 30);
        let exact = (mu * z).exp();
        for n in [2, 5, 10, 20, 30] {
            println!("mu Z = {:.3}, N <= {n:>2}: relative error {:.3e}", mu * z, (sums[n] - exact).abs() / exact);
        }
    }
    Ok(())
}
