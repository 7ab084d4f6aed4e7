//! Exact Gaussian integration of the two scalar fields on small space-time
//! lattices.
//!
//! The quadratic form pairs `psi_1` with `K psi_2`, where `K` is the
//! forward-Euler discretization of `T (d/dt - g D_-^2)` and
//! `D_-^2 = exp(b phi) Lap exp(-b phi)`. Integrating out `psi_1` imposes
//! `K psi_2 = J_1`, so
//!
//! ```text
//! log Z_psi = -sum J_2 psi_2 a^2 dt,   psi_2 = K^{-1} J_1,
//! ```
//!
//! up to the `phi`-independent normalization `det K_0`. Row block `k` of `K`
//! reads `(T/dt) psi(k) - (T/dt) psi(k-1) - g T L psi(k-1)` and is driven by
//! `J_1(k-1)`, so the operator is block lower-triangular with a
//! `phi`-independent diagonal, and `det K_phi = det K_0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diffusion::{Couplings, KernelTable, free_kernel_images};
use crate::error::{Error, Result};
use crate::lattice::{Axis, LatticeSpec, ScalarField, SpaceTimeField, grad, same_spec};
use crate::quad;
use crate::stats::CompensatedSum;

/// Largest `nt * nx * ny` accepted for dense storage.
pub const DENSE_SIZE_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorMode {
    Free,
    Dressed,
}

/// Dense matrix of the retarded operator `T (d/dt - g D_-^2)`.
#[derive(Clone, Debug)]
pub struct RetardedOperator {
    pub spec: LatticeSpec,
    pub mode: OperatorMode,
    pub couplings: Couplings,
    pub matrix: DMatrix<f64>,
}

impl RetardedOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Block `(k, k')` of size `sites x sites`.
    pub fn block(&self, k: usize, kp: usize) -> DMatrix<f64> {
        let n = self.spec.sites();
        self.matrix.view((k * n, kp * n), (n, n)).clone_owned()
    }
}

fn check_dense_size(spec: &LatticeSpec) -> Result<()> {
    let size = spec.spacetime_len();
    if size > DENSE_SIZE_LIMIT {
        return Err(Error::Config(format!(
            "dense operator of size nt*nx*ny = {size} exceeds the guard {DENSE_SIZE_LIMIT}"
        )));
    }
    if spec.nt == 0 {
        return Err(Error::Config("operator needs nt >= 1".into()));
    }
    Ok(())
}

/// Spatial block `exp(b phi) Lap exp(-b phi)`, built from the link
/// gradients of `phi` so that only differences of `phi` enter.
pub fn dressed_laplacian(spec: &LatticeSpec, phi: Option<&ScalarField>, b: f64) -> Result<DMatrix<f64>> {
    let n = spec.sites();
    let a2 = spec.a * spec.a;
    let dphi = match phi {
        Some(p) => {
            same_spec(spec, p.spec())?;
            Some(grad(p))
        }
        None => None,
    };
    let mut lap = DMatrix::zeros(n, n);
    for x in 0..n {
        lap[(x, x)] -= 4.0 / a2;
        for axis in Axis::ALL {
            let up = spec.shift(x, axis, 1);
            let down = spec.shift(x, axis, -1);
            let (fwd, bwd) = match &dphi {
                // phi(x) - phi(x+mu) = -a dphi(x);  phi(x) - phi(x-mu) = a dphi(x-mu)
                Some(d) => (
                    (-b * spec.a * d.get(axis, x)).exp(),
                    (b * spec.a * d.get(axis, down)).exp(),
                ),
                None => (1.0, 1.0),
            };
            lap[(x, up)] += fwd / a2;
            lap[(x, down)] += bwd / a2;
        }
    }
    Ok(lap)
}

/// Assembles `K`. `phi` is ignored in [`OperatorMode::Free`].
pub fn build_k(
    phi: Option<&ScalarField>,
    c: &Couplings,
    spec: &LatticeSpec,
    mode: OperatorMode,
) -> Result<RetardedOperator> {
    spec.validate()?;
    c.validate()?;
    check_dense_size(spec)?;
    let n = spec.sites();
    let lap = match mode {
        OperatorMode::Free => dressed_laplacian(spec, None, c.b)?,
        OperatorMode::Dressed => dressed_laplacian(spec, phi, c.b)?,
    };
    let diag = c.tt / spec.dt;
    let sub = DMatrix::<f64>::identity(n, n) * (-diag) - lap * (c.g * c.tt);
    let dim = spec.spacetime_len();
    let mut matrix = DMatrix::zeros(dim, dim);
    for k in 0..spec.nt {
        for x in 0..n {
            matrix[(k * n + x, k * n + x)] = diag;
        }
        if k > 0 {
            matrix.view_mut((k * n, (k - 1) * n), (n, n)).copy_from(&sub);
        }
    }
    Ok(RetardedOperator {
        spec: *spec,
        mode,
        couplings: *c,
        matrix,
    })
}

/// Solves `K psi_2 = J_1` by forward substitution through the time blocks.
/// `J_1` on slice `k` drives the step from slice `k` to slice `k + 1`.
pub fn solve_constraint(k_op: &RetardedOperator, j1: &SpaceTimeField) -> Result<SpaceTimeField> {
    let spec = k_op.spec;
    same_spec(&spec, j1.spec())?;
    if j1.spec().nt != spec.nt {
        return Err(Error::Config("source and operator have different nt".into()));
    }
    let n = spec.sites();
    let mut psi: Vec<DVector<f64>> = Vec::with_capacity(spec.nt);
    for k in 0..spec.nt {
        let mut rhs = if k == 0 {
            DVector::zeros(n)
        } else {
            DVector::from_column_slice(j1.slice(k - 1))
        };
        for (kp, prev) in psi.iter().enumerate() {
            let blk = k_op.matrix.view((k * n, kp * n), (n, n));
            rhs -= blk * prev;
        }
        let diag = k_op.block(k, k).lu();
        let sol = diag
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric(format!("singular diagonal block at slice {k}")))?;
        psi.push(sol);
    }
    let values = psi.iter().flat_map(|v| v.iter().copied()).collect();
    SpaceTimeField::new(spec, values)
}

/// Where a source pair came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum SourceKind {
    /// `J_1 = (T/g) delta(t) delta(x - x0)`, `J_2 = T delta(t - T)`.
    Special { x0: usize },
    General,
}

#[derive(Clone, Debug)]
pub struct SourcePair {
    pub j1: SpaceTimeField,
    pub j2: SpaceTimeField,
    pub kind: SourceKind,
}

impl SourcePair {
    pub fn general(j1: SpaceTimeField, j2: SpaceTimeField) -> Result<Self> {
        same_spec(j1.spec(), j2.spec())?;
        Ok(Self {
            j1,
            j2,
            kind: SourceKind::General,
        })
    }

    /// The special currents that turn the constraint into the heat equation
    /// from `x0` and read the solution off at time `T`. `T` must be a
    /// multiple of `dt` with `T / dt + 1 < nt`.
    pub fn special(spec: LatticeSpec, c: &Couplings, x0: usize) -> Result<Self> {
        c.validate()?;
        let cell = spec.a * spec.a * spec.dt;
        let j1 = SpaceTimeField::kronecker(spec, 0, x0, c.tt / c.g / cell)?;
        let k_t = spec.slice_for_time(c.tt)?;
        let j2 = SpaceTimeField::from_fn(spec, |k, _| if k == k_t { c.tt / spec.dt } else { 0.0 })?;
        Ok(Self {
            j1,
            j2,
            kind: SourceKind::Special { x0 },
        })
    }
}

/// `log Z_psi` from the constrained solution: `-sum J_2 psi_2 a^2 dt`.
pub fn psi_sector_logz(
    phi: &ScalarField,
    sources: &SourcePair,
    c: &Couplings,
    spec: &LatticeSpec,
) -> Result<f64> {
    let k_op = build_k(Some(phi), c, spec, OperatorMode::Dressed)?;
    let psi2 = solve_constraint(&k_op, &sources.j1)?;
    let cell = spec.a * spec.a * spec.dt;
    let mut acc = CompensatedSum::new();
    for (j, p) in sources.j2.values().iter().zip(psi2.values()) {
        acc.add(j * p * cell);
    }
    Ok(-acc.value())
}

/// Green function used on the right-hand side of the identity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GreenVariant {
    /// Exact discrete retarded kernel from the stencil evolution.
    #[default]
    Lattice,
    /// Closed-form periodic heat kernel; exact only in the continuum limit.
    Continuum,
}

/// Free retarded kernel on lag `m` slices between sites, per variant.
struct FreeKernel {
    table: Option<KernelTable>,
    spec: LatticeSpec,
    g: f64,
}

impl FreeKernel {
    fn new(spec: &LatticeSpec, g: f64, variant: GreenVariant) -> Result<Self> {
        let table = match variant {
            GreenVariant::Lattice => Some(KernelTable::free(*spec, g, 0)?),
            GreenVariant::Continuum => None,
        };
        Ok(Self { table, spec: *spec, g })
    }

    fn at(&self, lag: usize, x: usize, xp: usize) -> Result<f64> {
        if lag == 0 {
            return Ok(0.0);
        }
        match &self.table {
            Some(t) => Ok(t.between(lag, x, xp)),
            None if lag == 1 => Ok(if x == xp { 1.0 / (self.spec.a * self.spec.a) } else { 0.0 }),
            None => free_kernel_images(&self.spec, self.spec.time_of_slice(lag), x, xp, self.g),
        }
    }
}

/// Right-hand side of the Gaussian identity: the bilinear
/// `-sum J_1(t',x') G(t-t'; x, x'; phi) J_2(t,x) (a^2 dt)^2` with
/// `G = exp(b (phi(x) - phi(x'))) G_free / T`, the two-point function of the
/// scalar pair. The free kernel comes from [`KernelTable`] (lattice) or the
/// closed form (continuum), never from the dense operator.
pub fn rhs_identity(
    phi: &ScalarField,
    sources: &SourcePair,
    c: &Couplings,
    spec: &LatticeSpec,
    variant: GreenVariant,
) -> Result<f64> {
    c.validate()?;
    same_spec(spec, phi.spec())?;
    same_spec(spec, sources.j1.spec())?;
    let free = FreeKernel::new(spec, c.g, variant)?;
    let n = spec.sites();
    let cell = spec.a * spec.a * spec.dt;
    let dress: Vec<f64> = phi.values().iter().map(|&p| (c.b * p).exp()).collect();
    let undress: Vec<f64> = phi.values().iter().map(|&p| (-c.b * p).exp()).collect();
    let mut acc = CompensatedSum::new();
    for kp in 0..spec.nt {
        for xp in 0..n {
            let j1 = sources.j1.get(kp, xp);
            if j1 == 0.0 {
                continue;
            }
            for k in kp + 1..spec.nt {
                for x in 0..n {
                    let j2 = sources.j2.get(k, x);
                    if j2 == 0.0 {
                        continue;
                    }
                    let g = dress[x] * undress[xp] * free.at(k - kp, x, xp)? / c.tt;
                    acc.add(j1 * g * j2 * cell * cell);
                }
            }
        }
    }
    Ok(-acc.value())
}

/// Closed form of `log Z_psi` for the special currents:
/// `-(T/g) sum_x exp(b (phi(x) - phi(x0))) G_free(T; x - x0) a^2`.
///
/// With the continuum kernel, `(T/g) G_free(T; r) = exp(-r^2/(4 g T)) / (4 pi g^2)`,
/// i.e. the prefactor is [`special_current_prefactor`].
pub fn special_currents_closed_form(
    phi: &ScalarField,
    c: &Couplings,
    spec: &LatticeSpec,
    x0: usize,
    variant: GreenVariant,
) -> Result<f64> {
    c.validate()?;
    let k_t = spec.slice_for_time(c.tt)?;
    let free = FreeKernel::new(spec, c.g, variant)?;
    let a2 = spec.a * spec.a;
    let mut acc = CompensatedSum::new();
    for x in 0..spec.sites() {
        let w = (c.b * (phi.get(x) - phi.get(x0))).exp();
        acc.add(w * free.at(k_t, x, x0)? * a2);
    }
    Ok(-(c.tt / c.g) * acc.value())
}

/// `1 / (4 pi g^2)`, the continuum prefactor of the special-current result.
pub fn special_current_prefactor(g: f64) -> f64 {
    1.0 / (4.0 * std::f64::consts::PI * g * g)
}

/// `log |det|` and sign from an LU factorization.
pub fn log_det(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    let lu = m.clone().lu();
    let mut sign = lu.p().determinant::<f64>();
    let mut log_abs = 0.0;
    for &u in lu.u().diagonal().iter() {
        if u == 0.0 || !u.is_finite() {
            return Err(Error::Numeric("singular LU factorization".into()));
        }
        sign *= u.signum();
        log_abs += u.abs().ln();
    }
    Ok((log_abs, sign))
}

/// `det K_phi / det K_0` from LU factorizations of both operators.
pub fn det_ratio(phi: &ScalarField, c: &Couplings, spec: &LatticeSpec) -> Result<f64> {
    let dressed = build_k(Some(phi), c, spec, OperatorMode::Dressed)?;
    let free = build_k(None, c, spec, OperatorMode::Free)?;
    let (ld, sd) = log_det(&dressed.matrix)?;
    let (l0, s0) = log_det(&free.matrix)?;
    Ok(sd * s0 * (ld - l0).exp())
}

/// Both sides of the one-dimensional multiplier identity
/// `exp(-alpha F^2 / 4) = (pi alpha)^{-1/2} int dlambda exp(-lambda^2/alpha - i lambda F)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LambdaCheck {
    pub alpha: f64,
    pub f: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Imaginary part of the normalized integral (zero by symmetry).
    pub imag: f64,
    pub residual: f64,
}

pub fn lambda_identity_check(f: f64, alpha: f64) -> Result<LambdaCheck> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!("alpha must be > 0, got {alpha}")));
    }
    if !f.is_finite() {
        return Err(Error::Domain("F must be finite".into()));
    }
    // exp(-lambda^2/alpha) < 1e-20 beyond this cutoff
    let cut = (alpha * 46.0).sqrt();
    let norm = (std::f64::consts::PI * alpha).sqrt();
    let re = quad::integrate(|l| (-l * l / alpha).exp() * (l * f).cos(), -cut, cut, 1e-15, 0.0)?;
    let im = quad::integrate(|l| -(-l * l / alpha).exp() * (l * f).sin(), -cut, cut, 1e-15, 0.0)?;
    let lhs = (-alpha * f * f / 4.0).exp();
    let rhs = re.value / norm;
    Ok(LambdaCheck {
        alpha,
        f,
        lhs,
        rhs,
        imag: im.value / norm,
        residual: (lhs - rhs).abs(),
    })
}
