//! The retarded operator is block lower-triangular with a field-independent
//! diagonal, so its determinant does not depend on `phi`.

use liouville_lattice::diffusion::Couplings;
use liouville_lattice::gaussian::{OperatorMode, build_k, det_ratio, log_det};
use liouville_lattice::lattice::LatticeSpec;
use liouville_lattice::verify::random_site_field;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> liouville_lattice::Result<()> {
    let spec = LatticeSpec::unit(3, 3, 4, 0.1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for b in [0.3, 0.7, 1.5] {
        let c = Couplings::new(1.0, b, 1.0)?;
        let phi = random_site_field(spec, &mut rng, 2.0);
        let k = build_k(Some(&phi), &c, &spec, OperatorMode::Dressed)?;
        let (logabs, sign) = log_det(&k.matrix)?;
        println!(
            "b = {b}: log|det K| = {logabs:.10}, sign {sign:+}, det K_phi / det K_0 - 1 = {:.2e}",
            det_ratio(&phi, &c, &spec)? - 1.0
        );
    }
    Ok(())
}
