//! Random-walk representation of the diffusion kernel.
//!
//! A walker makes one nearest-neighbour hop per time step, each of the four
//! directions with probability 1/4. With `dt = a^2 / (4 g)` this walk has
//! diffusion constant `g`, and weighting each path by the discrete line
//! integral `exp(-b sum_hops A_mu(link) a sgn(hop))` makes the walker
//! expectation coincide step by step with [`crate::diffusion::evolve`] in
//! its exact-similarity mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion::Couplings;
use crate::error::{Error, Result};
use crate::lattice::{Axis, LatticeSpec, VectorField};
use crate::stats::{CompensatedSum, compensated_sum};

/// Number of batches used for per-site error bars.
pub const WALKER_BATCHES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hop {
    pub axis: Axis,
    pub forward: bool,
}

impl Hop {
    const ALL: [Hop; 4] = [
        Hop { axis: Axis::X1, forward: true },
        Hop { axis: Axis::X1, forward: false },
        Hop { axis: Axis::X2, forward: true },
        Hop { axis: Axis::X2, forward: false },
    ];

    fn step(self) -> i64 {
        if self.forward {
            1
        } else {
            -1
        }
    }
}

/// Lattice path starting at `start`, one hop per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkerPath {
    pub start: usize,
    pub hops: Vec<Hop>,
}

impl WalkerPath {
    pub fn nsteps(&self) -> usize {
        self.hops.len()
    }

    /// Elapsed time `nsteps * dt`.
    pub fn elapsed(&self, spec: &LatticeSpec) -> f64 {
        self.hops.len() as f64 * spec.dt
    }

    /// Visited sites, including start and end.
    pub fn sites(&self, spec: &LatticeSpec) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.hops.len() + 1);
        let mut x = self.start;
        out.push(x);
        for h in &self.hops {
            x = spec.shift(x, h.axis, h.step());
            out.push(x);
        }
        out
    }

    pub fn end(&self, spec: &LatticeSpec) -> usize {
        self.hops
            .iter()
            .fold(self.start, |x, h| spec.shift(x, h.axis, h.step()))
    }
}

/// Uniform nearest-neighbour walk of `nsteps` hops.
pub fn sample_path(r0: usize, nsteps: usize, rng: &mut impl Rng) -> WalkerPath {
    let hops = (0..nsteps).map(|_| Hop::ALL[rng.random_range(0..4)]).collect();
    WalkerPath { start: r0, hops }
}

/// Discrete line integral `sum_hops A_mu(link) a sgn(hop)`.
pub fn line_integral(path: &WalkerPath, a_field: &VectorField) -> f64 {
    let spec = a_field.spec();
    let mut x = path.start;
    let mut acc = CompensatedSum::new();
    for h in &path.hops {
        let next = spec.shift(x, h.axis, h.step());
        // a backward hop runs against the forward link that ends at x
        let (link, sign) = if h.forward { (x, 1.0) } else { (next, -1.0) };
        acc.add(sign * a_field.get(h.axis, link) * spec.a);
        x = next;
    }
    acc.value()
}

/// Path weight `exp(-b * line_integral)`.
pub fn path_weight(path: &WalkerPath, a_field: &VectorField, b: f64) -> f64 {
    if b == 0.0 {
        return 1.0;
    }
    (-b * line_integral(path, a_field)).exp()
}

/// Per-site walker estimate of `Psi(t; x, r0, A)`.
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleEstimate {
    pub spec: LatticeSpec,
    pub start: usize,
    pub nsteps: usize,
    pub n_walkers: usize,
    pub seed: u64,
    pub n_batches: usize,
    /// Weighted endpoint histogram normalized by `n_walkers a^2`.
    pub mean: Vec<f64>,
    /// Batch-means standard error per site.
    pub stderr: Vec<f64>,
    /// Unweighted number of walkers ending on each site.
    pub occupancy: Vec<u64>,
}

/// Random stream of walker `index` under `seed`. Walkers never share a
/// stream, so the ensemble does not depend on how walkers are scheduled.
pub fn walker_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Monte Carlo estimate of `Psi` at time `t` from `n_walkers` walkers.
///
/// Requires `t` to be a multiple of `dt` and the walk calibration
/// `dt = a^2 / (4 g)`. Batches are accumulated in walker order and reduced
/// in batch order, so the result is identical for any thread count.
pub fn estimate_psi(
    spec: &LatticeSpec,
    r0: usize,
    t: f64,
    a_field: &VectorField,
    c: &Couplings,
    n_walkers: usize,
    seed: u64,
) -> Result<EnsembleEstimate> {
    c.validate()?;
    if n_walkers == 0 {
        return Err(Error::Config("need at least one walker".into()));
    }
    if r0 >= spec.sites() {
        return Err(Error::Config(format!("start site {r0} outside the lattice")));
    }
    let calib = 4.0 * c.g * spec.dt / (spec.a * spec.a);
    if (calib - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "walker calibration needs dt = a^2 / (4 g); got 4 g dt / a^2 = {calib}"
        )));
    }
    let nsteps = spec.steps_for_time(t)?;
    let n = spec.sites();
    let n_batches = WALKER_BATCHES.min(n_walkers);
    let bounds: Vec<(usize, usize)> = (0..n_batches)
        .map(|b| (b * n_walkers / n_batches, (b + 1) * n_walkers / n_batches))
        .collect();

    let batches: Vec<(Vec<f64>, Vec<u64>)> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let mut sums = vec![CompensatedSum::new(); n];
            let mut counts = vec![0u64; n];
            for i in lo..hi {
                let mut rng = walker_rng(seed, i as u64);
                let path = sample_path(r0, nsteps, &mut rng);
                let end = path.end(spec);
                sums[end].add(path_weight(&path, a_field, c.b));
                counts[end] += 1;
            }
            (sums.iter().map(CompensatedSum::value).collect(), counts)
        })
        .collect();

    let a2 = spec.a * spec.a;
    let mut mean = vec![0.0; n];
    let mut stderr = vec![0.0; n];
    let mut occupancy = vec![0u64; n];
    for x in 0..n {
        mean[x] = compensated_sum(batches.iter().map(|(s, _)| s[x])) / (n_walkers as f64 * a2);
        occupancy[x] = batches.iter().map(|(_, c)| c[x]).sum();
        if n_batches < 2 {
            stderr[x] = f64::INFINITY;
            continue;
        }
        let per_batch: Vec<f64> = batches
            .iter()
            .zip(&bounds)
            .map(|((s, _), (lo, hi))| s[x] / ((hi - lo) as f64 * a2))
            .collect();
        let m = compensated_sum(per_batch.iter().copied()) / n_batches as f64;
        let var = compensated_sum(per_batch.iter().map(|v| (v - m).powi(2))) / (n_batches - 1) as f64;
        stderr[x] = (var / n_batches as f64).sqrt();
    }
    Ok(EnsembleEstimate {
        spec: *spec,
        start: r0,
        nsteps,
        n_walkers,
        seed,
        n_batches,
        mean,
        stderr,
        occupancy,
    })
}

/// Exact expectation of the walker estimator by enumerating all `4^nsteps`
/// paths, normalized like [`EnsembleEstimate::mean`].
pub fn enumerate_expectation(
    spec: &LatticeSpec,
    r0: usize,
    nsteps: usize,
    a_field: &VectorField,
    b: f64,
) -> Result<Vec<f64>> {
    if nsteps > 10 {
        return Err(Error::Config(format!("refusing to enumerate 4^{nsteps} paths")));
    }
    let n = spec.sites();
    let mut sums = vec![CompensatedSum::new(); n];
    let total = 4usize.pow(nsteps as u32);
    for code in 0..total {
        let mut rest = code;
        let hops = (0..nsteps)
            .map(|_| {
                let h = Hop::ALL[rest % 4];
                rest /= 4;
                h
            })
            .collect();
        let path = WalkerPath { start: r0, hops };
        sums[path.end(spec)].add(path_weight(&path, a_field, b));
    }
    let norm = total as f64 * spec.a * spec.a;
    Ok(sums.iter().map(|s| s.value() / norm).collect())
}

/// Partial sums `S_N = sum_{k <= N} (mu Z)^k / k!` for `N = 0..=n_max`.
/// The grand-canonical weight for one vector-potential configuration is the
/// limit `exp(mu Z)`.
pub fn grand_canonical_xi(z: f64, mu: f64, n_max: usize) -> Vec<f64> {
    let x = mu * z;
    let mut term = 1.0;
    let mut acc = CompensatedSum::new();
    let mut out = Vec::with_capacity(n_max + 1);
    for k in 0..=n_max {
        if k > 0 {
            term *= x / k as f64;
        }
        acc.add(term);
        out.push(acc.value());
    }
    out
}
