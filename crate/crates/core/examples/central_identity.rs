//! Integrating out the scalar pair: the constrained solve and the two-point
//! bilinear give the same `log Z`, and the special currents reproduce the
//! dressed heat kernel.

use liouville_lattice::diffusion::Couplings;
use liouville_lattice::gaussian::{
    GreenVariant, SourcePair, psi_sector_logz, rhs_identity, special_currents_closed_form,
};
use liouville_lattice::lattice::LatticeSpec;
use liouville_lattice::verify::{random_site_field, smooth_source};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> liouville_lattice::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = LatticeSpec::unit(4, 4, 6, 0.1)?;
    let c = Couplings::new(1.0, 0.6, 1.0)?;
    let phi = random_site_field(spec, &mut rng, 1.0);

    let sources = SourcePair::general(smooth_source(spec, &mut rng), smooth_source(spec, &mut rng))?;
    let lhs = psi_sector_logz(&phi, &sources, &c, &spec)?;
    let rhs = rhs_identity(&phi, &sources, &c, &spec, GreenVariant::Lattice)?;
    println!("random currents: lhs = {lhs:.12}, rhs = {rhs:.12}, diff = {:.2e}", lhs - rhs);

    let spec = LatticeSpec::unit(4, 4, 12, 0.1)?;
    let phi = random_site_field(spec, &mut rng, 1.0);
    let x0 = spec.center();
    let special = SourcePair::special(spec, &c, x0)?;
    let lhs = psi_sector_logz(&phi, &special, &c, &spec)?;
    let closed = special_currents_closed_form(&phi, &c, &spec, x0, GreenVariant::Lattice)?;
    println!("special currents: log Z = {lhs:.12}, closed form = {closed:.12}");
    Ok(())
}
