//! Free lattice kernel against the periodic heat kernel at `t = 0.5` while
//! halving the spacing with `dt = a^2 / 8`.

use liouville_lattice::verify::kernel_error;

fn main() -> liouville_lattice::Result<()> {
    let mut prev: Option<f64> = None;
    println!("{:>8} {:>12} {:>8}", "a", "rel. error", "ratio");
    for a in [0.5, 0.25, 0.125, 0.0625] {
        let err = kernel_error((8.0 / a) as usize, a, a * a / 8.0, 0.5, 1.0)?;
        let ratio = prev.map(|p| format!("{:.3}", p / err)).unwrap_or_default();
        println!("{a:>8} {err:>12.4e} {ratio:>8}");
        prev = Some(err);
    }
    Ok(())
}
