//! Gaussian representation of `exp(-alpha F^2 / 4)` through a multiplier
//! integral; large `alpha` enforces `F = 0`.

use liouville_lattice::gaussian::lambda_identity_check;

fn main() -> liouville_lattice::Result<()> {
    println!("{:>6} {:>5} {:>14} {:>14} {:>10}", "alpha", "F", "lhs", "rhs", "residual");
    for alpha in [0.5, 2.0, 8.0, 100.0] {
        for f in [0.0, 0.5, 1.0, 3.0] {
            let r = lambda_identity_check(f, alpha)?;
            println!("{alpha:>6} {f:>5} {:>14.6e} {:>14.6e} {:>10.2e}", r.lhs, r.rhs, r.residual);
        }
    }
    Ok(())
}
