//! Mapped finite-`T` action against the Liouville action as `T` grows.

use liouville_lattice::diffusion::Couplings;
use liouville_lattice::lattice::LatticeSpec;
use liouville_lattice::mc::{ActionKind, ActionSpec, McConfig, compare_t_limit, triviality_check};
use liouville_lattice::verify::default_pairs;

fn main() -> liouville_lattice::Result<()> {
    let lat = LatticeSpec::unit(8, 8, 1, 1.0)?;
    let base = ActionSpec::centered(ActionKind::Liouville, Couplings::new(1.0, 0.5, 1.0)?, lat)?;
    let mc = McConfig { sweeps: 204_000, thermalization: 4_000, stride: 4, seed: 2, ..McConfig::default() };
    let report = compare_t_limit(&base, &[1.0, 10.0, 100.0, 1000.0], &mc, &default_pairs(&lat, base.x0))?;
    println!("{:>6} {:>12} {:>12} {:>10} {:>12}", "T", "gap", "gap ratio", "max sigma", "max dev");
    for r in &report.rows {
        println!(
            "{:>6} {:>12.4e} {:>12.4e} {:>10.2} {:>12.4e}",
            r.tt, r.bound, r.bound_ratio, r.max_sigma, r.max_deviation
        );
    }

    let free = base.with_couplings(Couplings::new(1.0, 0.0, 1.0)?);
    let small = McConfig { sweeps: 2_100, thermalization: 100, ..mc };
    let triv = triviality_check(&[1.0, 10.0, 100.0], &free, &small)?;
    println!("b = 0: log-log slope of the interaction term in g = {:.4}", triv.slope);
    Ok(())
}
