//! Gauge-coupled diffusion on the periodic lattice.
//!
//! The covariant derivative is `D = grad + b A`, the sign under which the
//! solution transforms as `Psi -> exp(-b (gamma(x) - gamma(x0))) Psi` when
//! `A -> A + grad gamma`, and under which the random-walk line integral
//! `exp(-b sum A . dR)` of [`crate::walkers`] is the path-integral
//! representation of the same kernel.
//!
//! Time stepping is explicit Euler. Slice 0 is the state before the source
//! acts, and a delta source of weight `1 / (a^2 dt)` on slice 0 puts unit
//! mass `sum_x Psi a^2 = 1` on slice 1; see [`LatticeSpec::time_of_slice`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{curl, same_spec, Axis, LatticeSpec, ScalarField, SpaceTimeField, VectorField};
use crate::stats::compensated_sum;

/// Couplings `g`, `b`, `T`, `mu`, `alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Couplings {
    /// Diffusion coupling (length).
    pub g: f64,
    /// Gauge coupling.
    pub b: f64,
    /// The `T` parameter multiplying the constrained operator (length).
    pub tt: f64,
    /// Chemical potential of the grand-canonical sum.
    pub mu: f64,
    /// Transverse stiffness, only used by the multiplier identity check.
    pub alpha: f64,
}

impl Default for Couplings {
    fn default() -> Self {
        Self {
            g: 1.0,
            b: 0.0,
            tt: 1.0,
            mu: 0.0,
            alpha: 1.0,
        }
    }
}

impl Couplings {
    pub fn new(g: f64, b: f64, tt: f64) -> Result<Self> {
        let c = Self {
            g,
            b,
            tt,
            ..Self::default()
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::Config(format!("g must be > 0, got {}", self.g)));
        }
        if !(self.tt > 0.0 && self.tt.is_finite()) {
            return Err(Error::Config(format!("T must be > 0, got {}", self.tt)));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !self.b.is_finite() || !self.mu.is_finite() {
            return Err(Error::Config("b and mu must be finite".into()));
        }
        Ok(())
    }
}

/// Discretization of the covariant Laplacian `(grad + b A)^2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovariantMode {
    /// Covariant differences with link-midpoint averaging; gauge covariant
    /// only up to lattice artefacts.
    Naive,
    /// Link factors `exp(b a A_mu(x))`. For `A = grad gamma` this is the
    /// similarity transform `exp(-b gamma) Lap exp(b gamma)`, so gauge
    /// covariance holds exactly. Transverse `A` is rejected.
    #[default]
    ExactSimilarity,
}

/// Continuum heat kernel `exp(-r^2 / (4 g t)) / (4 pi g t)`.
pub fn heat_kernel(t: f64, dist_sq: f64, g: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    let s = 4.0 * g * t;
    Ok((-dist_sq / s).exp() / (std::f64::consts::PI * s))
}

/// Closed-form free kernel between two sites, using the minimal-image
/// displacement.
pub fn free_kernel_exact(spec: &LatticeSpec, t: f64, x: usize, x0: usize, g: f64) -> Result<f64> {
    heat_kernel(t, spec.min_image_dist_sq(x0, x), g)
}

/// Free kernel on the periodic box: the closed form summed over periodic
/// images, truncated once a whole shell of images adds less than `1e-16`
/// relative to the running sum.
pub fn free_kernel_images(
    spec: &LatticeSpec,
    t: f64,
    x: usize,
    x0: usize,
    g: f64,
) -> Result<f64> {
    let (d1, d2) = spec.min_image(x0, x);
    let (d1, d2) = (d1 as f64 * spec.a, d2 as f64 * spec.a);
    let (lx, ly) = (spec.nx as f64 * spec.a, spec.ny as f64 * spec.a);
    let term = |m: i64, n: i64| {
        let r1 = d1 + m as f64 * lx;
        let r2 = d2 + n as f64 * ly;
        heat_kernel(t, r1 * r1 + r2 * r2, g)
    };
    let mut total = term(0, 0)?;
    for shell in 1i64.. {
        let mut add = 0.0;
        for m in -shell..=shell {
            for n in -shell..=shell {
                if m.abs() == shell || n.abs() == shell {
                    add += term(m, n)?;
                }
            }
        }
        total += add;
        if add <= 1e-16 * total || shell > 10_000 {
            break;
        }
    }
    Ok(total)
}

/// Delta source `delta(t) delta(x - x0)`: weight `1 / (a^2 dt)` on slice 0.
pub fn delta_source(spec: LatticeSpec, x0: usize) -> Result<SpaceTimeField> {
    SpaceTimeField::kronecker(spec, 0, x0, 1.0 / (spec.a * spec.a * spec.dt))
}

/// Checks the explicit-Euler bound `4 g dt / a^2 <= 1`.
pub fn check_stability(spec: &LatticeSpec, g: f64) -> Result<()> {
    let r = 4.0 * g * spec.dt / (spec.a * spec.a);
    if r > 1.0 + 1e-12 {
        return Err(Error::Config(format!(
            "explicit scheme unstable: 4 g dt / a^2 = {r} exceeds 1 (g = {g}, dt = {}, a = {})",
            spec.dt, spec.a
        )));
    }
    Ok(())
}

/// Covariant Laplacian stencil for one vector potential.
pub(crate) struct Stencil {
    spec: LatticeSpec,
    up: [Vec<usize>; 2],
    down: [Vec<usize>; 2],
    kind: StencilKind,
}

enum StencilKind {
    /// Weights of `psi(x + mu)` and `psi(x - mu)` in the update of `x`.
    Links { fwd: [Vec<f64>; 2], bwd: [Vec<f64>; 2] },
    Naive { b: f64, links: [Vec<f64>; 2] },
}

impl Stencil {
    pub(crate) fn new(spec: LatticeSpec, a_field: &VectorField, b: f64, mode: CovariantMode) -> Result<Self> {
        same_spec(&spec, a_field.spec())?;
        let n = spec.sites();
        let up = Axis::ALL.map(|ax| (0..n).map(|x| spec.shift(x, ax, 1)).collect::<Vec<_>>());
        let down = Axis::ALL.map(|ax| (0..n).map(|x| spec.shift(x, ax, -1)).collect::<Vec<_>>());
        let kind = match mode {
            CovariantMode::ExactSimilarity => {
                let transverse = curl(a_field)
                    .values()
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()));
                let scale = a_field.max_abs().max(1.0) / spec.a;
                if transverse > 1e-9 * scale {
                    return Err(Error::Config(format!(
                        "exact-similarity mode needs a pure-gradient vector potential, max |curl A| = {transverse:e}"
                    )));
                }
                let fwd = Axis::ALL.map(|ax| {
                    a_field
                        .component(ax)
                        .iter()
                        .map(|&v| (b * spec.a * v).exp())
                        .collect::<Vec<_>>()
                });
                let bwd = Axis::ALL.map(|ax| {
                    let comp = a_field.component(ax);
                    let dn = &down[ax.index()];
                    (0..n).map(|x| (-b * spec.a * comp[dn[x]]).exp()).collect::<Vec<_>>()
                });
                StencilKind::Links { fwd, bwd }
            }
            CovariantMode::Naive => StencilKind::Naive {
                b,
                links: Axis::ALL.map(|ax| a_field.component(ax).to_vec()),
            },
        };
        Ok(Self { spec, up, down, kind })
    }

    /// `(D^2 psi)(x)`.
    pub(crate) fn apply_at(&self, psi: &[f64], x: usize) -> f64 {
        let a = self.spec.a;
        match &self.kind {
            StencilKind::Links { fwd, bwd } => {
                let mut s = -4.0 * psi[x];
                for mu in 0..2 {
                    s += fwd[mu][x] * psi[self.up[mu][x]] + bwd[mu][x] * psi[self.down[mu][x]];
                }
                s / (a * a)
            }
            StencilKind::Naive { b, links } => {
                let mut s = 0.0;
                for mu in 0..2 {
                    let xf = self.up[mu][x];
                    let xb = self.down[mu][x];
                    // covariant forward difference on the links x -> x+mu and x-mu -> x
                    let d_here = (psi[xf] - psi[x]) / a + b * links[mu][x] * 0.5 * (psi[xf] + psi[x]);
                    let d_back = (psi[x] - psi[xb]) / a + b * links[mu][xb] * 0.5 * (psi[x] + psi[xb]);
                    s += (d_here - d_back) / a
                        + 0.5 * b * (links[mu][x] * d_here + links[mu][xb] * d_back);
                }
                s
            }
        }
    }

    pub(crate) fn apply(&self, psi: &[f64], out: &mut [f64]) {
        out.par_iter_mut()
            .with_min_len(1024)
            .enumerate()
            .for_each(|(x, o)| *o = self.apply_at(psi, x));
    }
}

/// Explicit-Euler solution of `[d/dt - g (grad + b A)^2] Psi = source`.
///
/// `Psi(0) = 0` and `Psi(k + 1) = Psi(k) + dt g D^2 Psi(k) + dt source(k)`.
pub fn evolve(
    source: &SpaceTimeField,
    a_field: &VectorField,
    c: &Couplings,
    mode: CovariantMode,
) -> Result<SpaceTimeField> {
    let spec = *source.spec();
    same_spec(&spec, a_field.spec())?;
    c.validate()?;
    check_stability(&spec, c.g)?;
    let stencil = Stencil::new(spec, a_field, c.b, mode)?;
    let n = spec.sites();
    let mut values = vec![0.0; spec.spacetime_len()];
    let mut lap = vec![0.0; n];
    for k in 0..spec.nt.saturating_sub(1) {
        let (done, rest) = values.split_at_mut((k + 1) * n);
        let cur = &done[k * n..];
        let next = &mut rest[..n];
        stencil.apply(cur, &mut lap);
        let src = source.slice(k);
        for x in 0..n {
            next[x] = cur[x] + spec.dt * c.g * lap[x] + spec.dt * src[x];
        }
    }
    SpaceTimeField::new(spec, values)
}

/// `exp(-b (gamma(x) - gamma(x0))) psi(t, x)`.
pub fn gauge_transform(
    psi: &SpaceTimeField,
    gamma: &ScalarField,
    b: f64,
    x0: usize,
) -> Result<SpaceTimeField> {
    same_spec(psi.spec(), gamma.spec())?;
    let g0 = gamma.get(x0);
    let factors: Vec<f64> = gamma.values().iter().map(|&g| (-b * (g - g0)).exp()).collect();
    psi.scale_sites(&factors)
}

/// `exp(b (phi(x) - phi(x0)))` times the closed-form free kernel; zero for
/// `t <= 0`.
pub fn dressed_kernel(t: f64, x: usize, x0: usize, phi: &ScalarField, c: &Couplings) -> Result<f64> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    let free = free_kernel_exact(phi.spec(), t, x, x0, c.g)?;
    Ok((c.b * (phi.get(x) - phi.get(x0))).exp() * free)
}

/// Canonical partition function `sum_x psi(x) a^2` of one time slice.
pub fn canonical_z(slice: &ScalarField) -> f64 {
    let a2 = slice.spec().a * slice.spec().a;
    compensated_sum(slice.values().iter().map(|v| v * a2))
}

/// Tabulated free lattice kernel from a single source site.
#[derive(Clone, Debug)]
pub struct KernelTable {
    pub g: f64,
    pub source: usize,
    pub values: SpaceTimeField,
}

impl KernelTable {
    /// Free evolution of a delta source at `source`.
    pub fn free(spec: LatticeSpec, g: f64, source: usize) -> Result<Self> {
        let c = Couplings { g, ..Couplings::default() };
        let values = evolve(
            &delta_source(spec, source)?,
            &VectorField::zeros(spec),
            &c,
            CovariantMode::ExactSimilarity,
        )?;
        Ok(Self { g, source, values })
    }

    pub fn spec(&self) -> &LatticeSpec {
        self.values.spec()
    }

    /// Kernel on slice `k` at `x` for a source at `x0`, using translation
    /// invariance of the free kernel.
    pub fn between(&self, k: usize, x: usize, x0: usize) -> f64 {
        let spec = self.spec();
        let (i, j) = spec.coords(x);
        let (i0, j0) = spec.coords(x0);
        let (is, js) = spec.coords(self.source);
        let site = spec.index(
            i as i64 - i0 as i64 + is as i64,
            j as i64 - j0 as i64 + js as i64,
        );
        self.values.get(k, site)
    }

    /// Dressed lattice kernel `exp(b (phi(x) - phi(x0))) G_free(k; x - x0)`,
    /// the exact Green function of `exp(b phi) Lap exp(-b phi)`.
    pub fn dressed(&self, k: usize, x: usize, x0: usize, phi: &ScalarField, b: f64) -> f64 {
        (b * (phi.get(x) - phi.get(x0))).exp() * self.between(k, x, x0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::grad;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scalar(spec: LatticeSpec, seed: u64, amp: f64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarField::from_fn(spec, |_, _| rng.random_range(-amp..amp)).unwrap()
    }

    fn couplings(g: f64, b: f64) -> Couplings {
        Couplings::new(g, b, 1.0).unwrap()
    }

    #[test]
    fn free_kernel_at_origin() {
        let spec = LatticeSpec::unit(4, 4, 2, 0.1).unwrap();
        let v = free_kernel_exact(&spec, 1.0, 5, 5, 1.0).unwrap();
        assert!((v - 0.079_577_471_545_947_67).abs() < 1e-15);
        assert!(free_kernel_exact(&spec, 0.0, 5, 5, 1.0).is_err());
        assert!(free_kernel_exact(&spec, -1.0, 5, 5, 1.0).is_err());
    }

    #[test]
    fn free_kernel_is_even() {
        let spec = LatticeSpec::new(9, 9, 0.5, 2, 0.1).unwrap();
        let x0 = spec.center();
        for x in 0..spec.sites() {
            let a = free_kernel_exact(&spec, 0.7, x, x0, 1.3).unwrap();
            let b = free_kernel_exact(&spec, 0.7, x0, x, 1.3).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn free_kernel_large_time_limit() {
        let spec = LatticeSpec::unit(8, 8, 2, 0.1).unwrap();
        let (x, x0) = (spec.index(1, 2), spec.index(5, 6));
        for t in [1e3, 1e5, 1e7] {
            let ratio = free_kernel_exact(&spec, t, x, x0, 1.0).unwrap() * 4.0 * std::f64::consts::PI * t;
            assert!((1.0 - ratio) < 32.0 / (4.0 * t) + 1e-15);
        }
    }

    #[test]
    fn image_sum_is_normalized() {
        let spec = LatticeSpec::new(16, 16, 0.25, 2, 0.01).unwrap();
        let x0 = spec.center();
        for t in [0.1, 0.5, 2.0] {
            let total: f64 = (0..spec.sites())
                .map(|x| free_kernel_images(&spec, t, x, x0, 1.0).unwrap() * spec.a * spec.a)
                .sum();
            // the Riemann sum of a smooth periodic function is spectrally accurate
            assert!((total - 1.0).abs() < 1e-6, "t = {t}: {total}");
        }
    }

    #[test]
    fn b_zero_ignores_vector_potential() {
        let spec = LatticeSpec::unit(5, 5, 8, 0.2).unwrap();
        let src = delta_source(spec, 7).unwrap();
        let gamma = random_scalar(spec, 1, 1.0);
        let a_grad = grad(&gamma);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a_rand = VectorField::new(spec, (0..50).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let c = couplings(1.0, 0.0);
        let reference = evolve(&src, &VectorField::zeros(spec), &c, CovariantMode::ExactSimilarity).unwrap();
        let exact = evolve(&src, &a_grad, &c, CovariantMode::ExactSimilarity).unwrap();
        assert_eq!(exact.values(), reference.values());
        let naive0 = evolve(&src, &VectorField::zeros(spec), &c, CovariantMode::Naive).unwrap();
        let naive = evolve(&src, &a_rand, &c, CovariantMode::Naive).unwrap();
        assert_eq!(naive.values(), naive0.values());
    }

    #[test]
    fn mass_is_conserved_without_coupling() {
        let spec = LatticeSpec::new(6, 7, 0.5, 30, 0.05).unwrap();
        let src = delta_source(spec, 10).unwrap();
        let gamma = random_scalar(spec, 4, 1.0);
        let out = evolve(&src, &grad(&gamma), &couplings(1.0, 0.0), CovariantMode::ExactSimilarity).unwrap();
        assert_eq!(canonical_z(&out.slice_field(0)), 0.0);
        for k in 1..spec.nt {
            assert!((canonical_z(&out.slice_field(k)) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn output_is_retarded() {
        let spec = LatticeSpec::unit(4, 4, 8, 0.2).unwrap();
        let src = SpaceTimeField::kronecker(spec, 3, 5, 2.0).unwrap();
        let gamma = random_scalar(spec, 5, 1.0);
        let out = evolve(&src, &grad(&gamma), &couplings(1.0, 0.7), CovariantMode::ExactSimilarity).unwrap();
        for k in 0..=3 {
            assert!(out.slice(k).iter().all(|&v| v == 0.0));
        }
        assert!(out.slice(4).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn free_evolution_stays_non_negative() {
        let spec = LatticeSpec::unit(6, 6, 40, 0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let src = SpaceTimeField::from_fn(spec, |k, _| if k < 3 { rng.random_range(0.0..1.0) } else { 0.0 }).unwrap();
        let out = evolve(&src, &VectorField::zeros(spec), &couplings(1.0, 0.0), CovariantMode::Naive).unwrap();
        assert!(out.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn stability_bound_is_enforced() {
        let spec = LatticeSpec::unit(4, 4, 3, 0.3).unwrap();
        let src = delta_source(spec, 0).unwrap();
        let err = evolve(&src, &VectorField::zeros(spec), &couplings(1.0, 0.0), CovariantMode::Naive)
            .unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("1.2")), "{err}");
        // the walker calibration dt = a^2 / (4 g) sits exactly on the bound
        let edge = LatticeSpec::unit(4, 4, 3, 0.25).unwrap();
        assert!(check_stability(&edge, 1.0).is_ok());
    }

    #[test]
    fn exact_mode_rejects_transverse_potential() {
        let spec = LatticeSpec::unit(4, 4, 3, 0.1).unwrap();
        let mut c1 = vec![0.0; 16];
        c1[5] = 1.0;
        let a_field = VectorField::from_components(spec, c1, vec![0.0; 16]).unwrap();
        let src = delta_source(spec, 0).unwrap();
        assert!(evolve(&src, &a_field, &couplings(1.0, 0.5), CovariantMode::ExactSimilarity).is_err());
        assert!(evolve(&src, &a_field, &couplings(1.0, 0.5), CovariantMode::Naive).is_ok());
    }

    #[test]
    fn gauge_transform_trivial_cases() {
        let spec = LatticeSpec::unit(4, 4, 3, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let psi = SpaceTimeField::from_fn(spec, |_, _| rng.random_range(-1.0..1.0)).unwrap();
        let constant = ScalarField::constant(spec, 2.5);
        assert_eq!(gauge_transform(&psi, &constant, 0.8, 3).unwrap(), psi);
        let gamma = random_scalar(spec, 10, 1.0);
        assert_eq!(gauge_transform(&psi, &gamma, 0.0, 3).unwrap(), psi);
    }

    #[test]
    fn gauge_covariance_is_exact() {
        let spec = LatticeSpec::new(6, 6, 0.5, 25, 0.04).unwrap();
        let x0 = spec.index(2, 3);
        let src = delta_source(spec, x0).unwrap();
        let c = couplings(1.2, 0.6);
        let free = evolve(&src, &VectorField::zeros(spec), &c, CovariantMode::ExactSimilarity).unwrap();
        for seed in 0..5 {
            let gamma = random_scalar(spec, 100 + seed, 1.0);
            let lhs = evolve(&src, &grad(&gamma), &c, CovariantMode::ExactSimilarity).unwrap();
            let rhs = gauge_transform(&free, &gamma, c.b, x0).unwrap();
            for (l, r) in lhs.values().iter().zip(rhs.values()) {
                assert!((l - r).abs() <= 1e-12, "{l} vs {r}");
            }
        }
    }

    #[test]
    fn naive_mode_is_only_approximately_covariant() {
        let spec = LatticeSpec::new(8, 8, 0.5, 20, 0.05).unwrap();
        let x0 = spec.center();
        let src = delta_source(spec, x0).unwrap();
        let c = couplings(1.0, 0.3);
        let gamma = ScalarField::from_fn(spec, |i, j| {
            let w = 2.0 * std::f64::consts::PI / 8.0;
            0.5 * (w * i as f64).sin() + 0.3 * (w * j as f64).cos()
        })
        .unwrap();
        let free = evolve(&src, &VectorField::zeros(spec), &c, CovariantMode::Naive).unwrap();
        let naive = evolve(&src, &grad(&gamma), &c, CovariantMode::Naive).unwrap();
        let exact = gauge_transform(&free, &gamma, c.b, x0).unwrap();
        let err = naive
            .values()
            .iter()
            .zip(exact.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let peak = exact.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err > 1e-8 * peak && err < 0.05 * peak, "err {err} peak {peak}");
    }

    #[test]
    fn dressed_kernel_cases() {
        let spec = LatticeSpec::unit(4, 4, 2, 0.1).unwrap();
        let c = couplings(1.0, 0.3);
        let zero = ScalarField::zeros(spec);
        let phi = random_scalar(spec, 12, 1.0);
        let shifted = phi.map(|v| v + 4.0).unwrap();
        for x in 0..16 {
            let free = free_kernel_exact(&spec, 0.5, x, 6, 1.0).unwrap();
            assert_eq!(dressed_kernel(0.5, x, 6, &zero, &c).unwrap(), free);
            let a = dressed_kernel(0.5, x, 6, &phi, &c).unwrap();
            let b = dressed_kernel(0.5, x, 6, &shifted, &c).unwrap();
            assert!((a - b).abs() <= 1e-15 * a.abs());
            assert_eq!(dressed_kernel(0.0, x, 6, &phi, &c).unwrap(), 0.0);
            assert_eq!(dressed_kernel(-1.0, x, 6, &phi, &c).unwrap(), 0.0);
        }
    }

    #[test]
    fn canonical_z_pure_gauge() {
        let spec = LatticeSpec::unit(5, 5, 12, 0.2).unwrap();
        let x0 = spec.index(1, 1);
        let src = delta_source(spec, x0).unwrap();
        let gamma = random_scalar(spec, 13, 1.0);
        let c = couplings(1.0, 0.4);
        let out = evolve(&src, &grad(&gamma), &c, CovariantMode::ExactSimilarity).unwrap();
        let free = evolve(&src, &VectorField::zeros(spec), &c, CovariantMode::ExactSimilarity).unwrap();
        let k = spec.nt - 1;
        let expected: f64 = (0..spec.sites())
            .map(|x| (-c.b * (gamma.get(x) - gamma.get(x0))).exp() * free.get(k, x))
            .sum();
        assert!((canonical_z(&out.slice_field(k)) - expected).abs() < 1e-13);
        assert!((canonical_z(&free.slice_field(k)) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn kernel_table_translation() {
        let spec = LatticeSpec::unit(5, 4, 6, 0.2).unwrap();
        let table = KernelTable::free(spec, 1.0, 0).unwrap();
        let x0 = spec.index(3, 2);
        let direct = evolve(
            &delta_source(spec, x0).unwrap(),
            &VectorField::zeros(spec),
            &couplings(1.0, 0.0),
            CovariantMode::ExactSimilarity,
        )
        .unwrap();
        for k in 0..spec.nt {
            for x in 0..spec.sites() {
                assert!((table.between(k, x, x0) - direct.get(k, x)).abs() < 1e-15);
            }
        }
    }
}
