//! Periodic two-dimensional spatial lattice with a discrete time axis.
//!
//! Sites are indexed row-major, `idx = x2 * nx + x1`, and all neighbour
//! lookups wrap modulo `(nx, ny)`. A [`VectorField`] stores one value per
//! forward link: component `mu` at site `x` lives on the link `x -> x + mu`.
//! With forward-difference [`grad`] and plaquette [`curl`] the identity
//! `curl(grad f) = 0` holds at finite spacing, so a gradient vector field is
//! exactly longitudinal on the lattice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary condition tag. Only periodic boxes are supported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodic,
}

/// Spatial direction on the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X1,
    X2,
}

impl Axis {
    pub const ALL: [Axis; 2] = [Axis::X1, Axis::X2];

    pub fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
        }
    }
}

/// Geometry of the periodic lattice and of the time axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub nx: usize,
    pub ny: usize,
    /// Lattice spacing.
    pub a: f64,
    /// Number of time slices.
    pub nt: usize,
    /// Time step.
    pub dt: f64,
    #[serde(default)]
    pub bc: Boundary,
}

impl LatticeSpec {
    pub fn new(nx: usize, ny: usize, a: f64, nt: usize, dt: f64) -> Result<Self> {
        let spec = Self {
            nx,
            ny,
            a,
            nt,
            dt,
            bc: Boundary::Periodic,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Lattice-unit spec (`a = 1`).
    pub fn unit(nx: usize, ny: usize, nt: usize, dt: f64) -> Result<Self> {
        Self::new(nx, ny, 1.0, nt, dt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::Config(format!(
                "lattice needs nx >= 2 and ny >= 2, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::Config(format!("lattice spacing must be > 0, got {}", self.a)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("time step must be > 0, got {}", self.dt)));
        }
        Ok(())
    }

    pub fn sites(&self) -> usize {
        self.nx * self.ny
    }

    /// Number of entries of a space-time field.
    pub fn spacetime_len(&self) -> usize {
        self.nt * self.sites()
    }

    /// Site index of integer coordinates, wrapped onto the torus.
    pub fn index(&self, x1: i64, x2: i64) -> usize {
        let i = x1.rem_euclid(self.nx as i64) as usize;
        let j = x2.rem_euclid(self.ny as i64) as usize;
        j * self.nx + i
    }

    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site % self.nx, site / self.nx)
    }

    /// Neighbour of `site` displaced by `step` units along `axis`.
    pub fn shift(&self, site: usize, axis: Axis, step: i64) -> usize {
        let (i, j) = self.coords(site);
        match axis {
            Axis::X1 => self.index(i as i64 + step, j as i64),
            Axis::X2 => self.index(i as i64, j as i64 + step),
        }
    }

    /// Site closest to the geometric centre of the box.
    pub fn center(&self) -> usize {
        self.index((self.nx / 2) as i64, (self.ny / 2) as i64)
    }

    /// Minimal-image displacement from `from` to `to` in lattice units.
    pub fn min_image(&self, from: usize, to: usize) -> (i64, i64) {
        let (i0, j0) = self.coords(from);
        let (i1, j1) = self.coords(to);
        let wrap = |d: i64, n: i64| {
            let d = d.rem_euclid(n);
            if d > n / 2 {
                d - n
            } else {
                d
            }
        };
        (
            wrap(i1 as i64 - i0 as i64, self.nx as i64),
            wrap(j1 as i64 - j0 as i64, self.ny as i64),
        )
    }

    /// Squared minimal-image distance in physical units.
    pub fn min_image_dist_sq(&self, from: usize, to: usize) -> f64 {
        let (d1, d2) = self.min_image(from, to);
        ((d1 * d1 + d2 * d2) as f64) * self.a * self.a
    }

    /// Physical time represented by a time slice.
    ///
    /// Slice 0 precedes the source and is identically zero for retarded
    /// solutions; slice 1 holds the discretized delta, so slice `k` carries
    /// the kernel at time `(k - 1) * dt`.
    pub fn time_of_slice(&self, k: usize) -> f64 {
        (k as f64 - 1.0) * self.dt
    }

    /// Inverse of [`LatticeSpec::time_of_slice`]; `t` must be a non-negative
    /// multiple of `dt` that fits on the time axis.
    pub fn slice_for_time(&self, t: f64) -> Result<usize> {
        let steps = self.steps_for_time(t)?;
        let k = steps + 1;
        if k >= self.nt {
            return Err(Error::Config(format!(
                "time {t} needs slice {k} but the lattice has only {} slices",
                self.nt
            )));
        }
        Ok(k)
    }

    /// Number of whole time steps in `t`.
    pub fn steps_for_time(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("time must be >= 0, got {t}")));
        }
        let steps = (t / self.dt).round();
        if (steps * self.dt - t).abs() > 1e-9 * self.dt.max(t) {
            return Err(Error::Config(format!(
                "time {t} is not a multiple of dt = {}",
                self.dt
            )));
        }
        Ok(steps as usize)
    }
}

fn check_values(what: &str, expected: usize, values: &[f64]) -> Result<()> {
    if values.len() != expected {
        return Err(Error::Config(format!(
            "{what} needs {expected} values, got {}",
            values.len()
        )));
    }
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{what} has non-finite entry at {pos}")));
    }
    Ok(())
}

/// One real value per spatial site.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    spec: LatticeSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(spec: LatticeSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        check_values("scalar field", spec.sites(), &values)?;
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: LatticeSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    pub fn constant(spec: LatticeSpec, c: f64) -> Self {
        Self {
            spec,
            values: vec![c; spec.sites()],
        }
    }

    /// Builds a field from integer site coordinates.
    pub fn from_fn(spec: LatticeSpec, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let values = (0..spec.sites())
            .map(|s| {
                let (i, j) = spec.coords(s);
                f(i, j)
            })
            .collect();
        Self::new(spec, values)
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, site: usize) -> f64 {
        self.values[site]
    }

    /// Pointwise map; the result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.spec, self.values.iter().map(|&v| f(v)).collect())
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &ScalarField, beta: f64) -> Result<Self> {
        same_spec(&self.spec, &other.spec)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| alpha * x + beta * y)
            .collect();
        Self::new(self.spec, values)
    }

    /// Site inner product `sum_x f(x) g(x)` (no measure factor).
    pub fn dot(&self, other: &ScalarField) -> f64 {
        self.values.iter().zip(&other.values).map(|(x, y)| x * y).sum()
    }
}

/// One real value per (time slice, site), slice-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField {
    spec: LatticeSpec,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn new(spec: LatticeSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        check_values("space-time field", spec.spacetime_len(), &values)?;
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: LatticeSpec) -> Self {
        Self {
            spec,
            values: vec![0.0; spec.spacetime_len()],
        }
    }

    /// Field with a single non-zero entry.
    pub fn kronecker(spec: LatticeSpec, slice: usize, site: usize, value: f64) -> Result<Self> {
        if slice >= spec.nt || site >= spec.sites() {
            return Err(Error::Config(format!(
                "kronecker entry ({slice}, {site}) outside {}x{}x{}",
                spec.nt, spec.nx, spec.ny
            )));
        }
        let mut field = Self::zeros(spec);
        field.values[slice * spec.sites() + site] = value;
        Self::new(spec, field.values)
    }

    pub fn from_fn(
        spec: LatticeSpec,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let n = spec.sites();
        let values = (0..spec.spacetime_len()).map(|i| f(i / n, i % n)).collect();
        Self::new(spec, values)
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, slice: usize, site: usize) -> f64 {
        self.values[slice * self.spec.sites() + site]
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.spec.sites();
        &self.values[k * n..(k + 1) * n]
    }

    /// Copies one time slice into a spatial field.
    pub fn slice_field(&self, k: usize) -> ScalarField {
        ScalarField {
            spec: self.spec,
            values: self.slice(k).to_vec(),
        }
    }

    /// Multiplies every slice by the per-site factor `weights`.
    pub fn scale_sites(&self, weights: &[f64]) -> Result<Self> {
        let n = self.spec.sites();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v * weights[i % n])
            .collect();
        Self::new(self.spec, values)
    }
}

/// Link field: component `mu` at site `x` lives on the forward link
/// `x -> x + mu`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    spec: LatticeSpec,
    values: Vec<f64>,
}

impl VectorField {
    /// `values` holds component 1 for all sites followed by component 2.
    pub fn new(spec: LatticeSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        check_values("vector field", 2 * spec.sites(), &values)?;
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: LatticeSpec) -> Self {
        Self {
            spec,
            values: vec![0.0; 2 * spec.sites()],
        }
    }

    pub fn from_components(spec: LatticeSpec, c1: Vec<f64>, c2: Vec<f64>) -> Result<Self> {
        let mut values = c1;
        values.extend(c2);
        Self::new(spec, values)
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn component(&self, axis: Axis) -> &[f64] {
        let n = self.spec.sites();
        let k = axis.index();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn get(&self, axis: Axis, site: usize) -> f64 {
        self.component(axis)[site]
    }

    /// Sum over links of the product of two link fields.
    pub fn dot(&self, other: &VectorField) -> f64 {
        self.values.iter().zip(&other.values).map(|(x, y)| x * y).sum()
    }

    pub fn combine(&self, alpha: f64, other: &VectorField, beta: f64) -> Result<Self> {
        same_spec(&self.spec, &other.spec)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| alpha * x + beta * y)
            .collect();
        Self::new(self.spec, values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn same_spec(a: &LatticeSpec, b: &LatticeSpec) -> Result<()> {
    if a.nx != b.nx || a.ny != b.ny || a.a != b.a {
        return Err(Error::Config(format!(
            "lattice mismatch: {}x{} (a={}) vs {}x{} (a={})",
            a.nx, a.ny, a.a, b.nx, b.ny, b.a
        )));
    }
    Ok(())
}

/// Forward difference on each link: `(f(x + mu) - f(x)) / a`.
pub fn grad(f: &ScalarField) -> VectorField {
    let spec = *f.spec();
    let n = spec.sites();
    let mut values = vec![0.0; 2 * n];
    for axis in Axis::ALL {
        let off = axis.index() * n;
        for x in 0..n {
            values[off + x] = (f.get(spec.shift(x, axis, 1)) - f.get(x)) / spec.a;
        }
    }
    VectorField { spec, values }
}

/// Backward difference `sum_mu (v_mu(x) - v_mu(x - mu)) / a`, the negative
/// adjoint of [`grad`] under the site inner product.
pub fn divergence(v: &VectorField) -> ScalarField {
    let spec = *v.spec();
    let n = spec.sites();
    let mut values = vec![0.0; n];
    for axis in Axis::ALL {
        let comp = v.component(axis);
        for (x, out) in values.iter_mut().enumerate() {
            *out += (comp[x] - comp[spec.shift(x, axis, -1)]) / spec.a;
        }
    }
    ScalarField { spec, values }
}

/// Five-point Laplacian.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let spec = *f.spec();
    let a2 = spec.a * spec.a;
    let values = (0..spec.sites())
        .map(|x| {
            let sum: f64 = Axis::ALL
                .iter()
                .map(|&ax| f.get(spec.shift(x, ax, 1)) + f.get(spec.shift(x, ax, -1)))
                .sum();
            (sum - 4.0 * f.get(x)) / a2
        })
        .collect();
    ScalarField { spec, values }
}

/// Plaquette circulation `(d1 A2 - d2 A1)` with forward differences, i.e.
/// `(A2(x+1) - A2(x) - A1(x+2) + A1(x)) / a`.
pub fn curl(v: &VectorField) -> ScalarField {
    let spec = *v.spec();
    let a1 = v.component(Axis::X1);
    let a2 = v.component(Axis::X2);
    let values = (0..spec.sites())
        .map(|x| {
            let d1a2 = a2[spec.shift(x, Axis::X1, 1)] - a2[x];
            let d2a1 = a1[spec.shift(x, Axis::X2, 1)] - a1[x];
            (d1a2 - d2a1) / spec.a
        })
        .collect();
    ScalarField { spec, values }
}
