//! Writing and reading fields as CSV and as JSON envelopes.

use liouville_lattice::io::{CsvField, FieldEnvelope, scalar_to_csv};
use liouville_lattice::lattice::{LatticeSpec, ScalarField};

fn main() -> liouville_lattice::Result<()> {
    let spec = LatticeSpec::unit(3, 2, 1, 1.0)?;
    let phi = ScalarField::from_fn(spec, |i, j| 0.1 * i as f64 - j as f64 / 3.0)?;
    let csv = scalar_to_csv(&phi);
    print!("{csv}");
    let back = CsvField::parse(&csv)?.into_scalar(spec)?;
    assert_eq!(back, phi);

    let json = FieldEnvelope::from(&phi).to_json()?;
    println!("{json}");
    assert_eq!(FieldEnvelope::from_json(&json)?.into_scalar()?, phi);
    Ok(())
}
