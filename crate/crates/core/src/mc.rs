//! Metropolis sampling of the pinned Liouville action and of its finite-`T`
//! counterpart obtained after integrating out the scalar pair.
//!
//! ```text
//! S[phi] = sum_x a^2 [ (1/2) (grad phi)^2 + w(x) exp(b phi(x)) / (4 pi g^2) ],  phi(x0) = 0
//! ```
//!
//! with `w = 1` for the Liouville action and
//! `w(x) = exp(-(x - x0)^2 / (4 g T))` (minimal-image distance) for the
//! mapped one.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::Couplings;
use crate::error::{Error, Result};
use crate::lattice::{Axis, LatticeSpec, ScalarField, same_spec};
use crate::quad;
use crate::stats::{self, CompensatedSum, Estimate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    Liouville,
    MappedFiniteT,
    FreeGaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub kind: ActionKind,
    pub couplings: Couplings,
    /// Pinned site.
    pub x0: usize,
    pub lattice: LatticeSpec,
}

impl ActionSpec {
    pub fn new(kind: ActionKind, couplings: Couplings, x0: usize, lattice: LatticeSpec) -> Result<Self> {
        let s = Self {
            kind,
            couplings,
            x0,
            lattice,
        };
        s.validate()?;
        Ok(s)
    }

    /// Same action pinned at the centre of the lattice.
    pub fn centered(kind: ActionKind, couplings: Couplings, lattice: LatticeSpec) -> Result<Self> {
        Self::new(kind, couplings, lattice.center(), lattice)
    }

    pub fn validate(&self) -> Result<()> {
        self.lattice.validate()?;
        self.couplings.validate()?;
        if self.x0 >= self.lattice.sites() {
            return Err(Error::Config(format!(
                "pinned site {} outside a lattice of {} sites",
                self.x0,
                self.lattice.sites()
            )));
        }
        Ok(())
    }

    pub fn with_kind(&self, kind: ActionKind) -> Self {
        Self { kind, ..*self }
    }

    pub fn with_couplings(&self, couplings: Couplings) -> Self {
        Self { couplings, ..*self }
    }

    /// Window `w(x)` multiplying the exponential potential.
    pub fn window(&self, x: usize) -> f64 {
        match self.kind {
            ActionKind::Liouville => 1.0,
            ActionKind::FreeGaussian => 0.0,
            ActionKind::MappedFiniteT => mapped_window(&self.lattice, &self.couplings, self.x0, x),
        }
    }

    /// Per-site coefficient `a^2 w(x) / (4 pi g^2)` of `exp(b phi(x))`.
    pub fn interaction_coefficients(&self) -> Vec<f64> {
        let pref = interaction_prefactor(self.couplings.g) * self.lattice.a * self.lattice.a;
        (0..self.lattice.sites()).map(|x| pref * self.window(x)).collect()
    }
}

/// `1 / (4 pi g^2)`.
pub fn interaction_prefactor(g: f64) -> f64 {
    1.0 / (4.0 * std::f64::consts::PI * g * g)
}

/// `exp(-(x - x0)^2 / (4 g T))` with the minimal-image distance.
pub fn mapped_window(spec: &LatticeSpec, c: &Couplings, x0: usize, x: usize) -> f64 {
    (-spec.min_image_dist_sq(x0, x) / (4.0 * c.g * c.tt)).exp()
}

/// `(1/2) sum over links of (phi(x + mu) - phi(x))^2`, i.e.
/// `sum_x a^2 (1/2) (grad phi)^2`.
pub fn kinetic_action(phi: &ScalarField) -> f64 {
    let spec = phi.spec();
    let mut acc = CompensatedSum::new();
    for x in 0..spec.sites() {
        for axis in Axis::ALL {
            let d = phi.get(spec.shift(x, axis, 1)) - phi.get(x);
            acc.add(0.5 * d * d);
        }
    }
    acc.value()
}

/// `sum_x a^2 w(x) exp(b phi(x)) / (4 pi g^2)`.
pub fn interaction_action(phi: &ScalarField, spec: &ActionSpec) -> Result<f64> {
    same_spec(&spec.lattice, phi.spec())?;
    let b = spec.couplings.b;
    Ok(spec
        .interaction_coefficients()
        .iter()
        .zip(phi.values())
        .map(|(c, p)| c * (b * p).exp())
        .collect::<CompensatedSum>()
        .value())
}

/// Action of a pinned configuration. `phi(x0) != 0` is a contract error.
pub fn action_value(phi: &ScalarField, spec: &ActionSpec) -> Result<f64> {
    same_spec(&spec.lattice, phi.spec())?;
    if phi.get(spec.x0) != 0.0 {
        return Err(Error::Contract(format!(
            "configuration not pinned: phi(x0) = {}",
            phi.get(spec.x0)
        )));
    }
    Ok(kinetic_action(phi) + interaction_action(phi, spec)?)
}

/// Action before the shift `phi -> phi - phi(x0)`: the potential is
/// evaluated on `exp(b (phi(x) - phi(x0)))`.
pub fn action_value_unpinned(phi: &ScalarField, spec: &ActionSpec) -> Result<f64> {
    let p0 = phi.get(spec.x0);
    let shifted = phi.map(|v| v - p0)?;
    Ok(kinetic_action(phi) + interaction_action(&shifted, spec)?)
}

/// `(1/(4 pi g^2)) sum_x a^2 (1 - w(x))`, the action difference between the
/// Liouville and mapped actions at `phi = 0`.
pub fn window_deficit(spec: &ActionSpec) -> f64 {
    let mapped = spec.with_kind(ActionKind::MappedFiniteT);
    let pref = interaction_prefactor(spec.couplings.g) * spec.lattice.a * spec.lattice.a;
    (0..spec.lattice.sites())
        .map(|x| pref * (1.0 - mapped.window(x)))
        .collect::<CompensatedSum>()
        .value()
}

/// `(1/(4 pi g^2)) sum_x a^2`, the Liouville interaction term at `phi = 0`.
pub fn interaction_volume_term(spec: &ActionSpec) -> f64 {
    interaction_prefactor(spec.couplings.g) * spec.lattice.a * spec.lattice.a * spec.lattice.sites() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// Total sweeps, thermalization included.
    pub sweeps: usize,
    pub thermalization: usize,
    /// Initial proposal width. Zero disables both updates and tuning.
    pub width: f64,
    pub seed: u64,
    /// Sweeps between measurements.
    pub stride: usize,
    pub batches: usize,
    /// Tune the width toward 40-60% acceptance during thermalization.
    pub tune: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            sweeps: 20_000,
            thermalization: 2_000,
            width: 1.0,
            seed: 1,
            stride: 1,
            batches: 20,
            tune: true,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps <= self.thermalization {
            return Err(Error::Config(format!(
                "sweeps ({}) must exceed thermalization ({})",
                self.sweeps, self.thermalization
            )));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        if self.batches < 20 {
            return Err(Error::Config(format!("batches must be >= 20, got {}", self.batches)));
        }
        if !(self.width >= 0.0 && self.width.is_finite()) {
            return Err(Error::Config(format!("proposal width must be >= 0, got {}", self.width)));
        }
        let measured = (self.sweeps - self.thermalization) / self.stride;
        if measured < self.batches {
            return Err(Error::Config(format!(
                "{measured} measurements cannot fill {} batches",
                self.batches
            )));
        }
        Ok(())
    }
}

/// Outcome of one Markov chain.
#[derive(Clone, Debug, Serialize)]
pub struct McRun {
    pub spec: ActionSpec,
    pub config: McConfig,
    /// Frozen proposal width used for the measurement sweeps.
    pub width: f64,
    /// Acceptance rate over the measurement sweeps.
    pub acceptance: f64,
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
    #[serde(skip)]
    pub action: Vec<f64>,
    #[serde(skip)]
    pub interaction: Vec<f64>,
    pub action_estimate: Estimate,
    pub interaction_estimate: Estimate,
}

impl McRun {
    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Estimate of an arbitrary per-configuration observable.
    pub fn observable(&self, f: impl Fn(&[f64]) -> f64) -> Estimate {
        let series: Vec<f64> = self.samples.iter().map(|s| f(s)).collect();
        stats::estimate(&series, self.config.batches)
    }
}

/// Precomputed local data for single-site updates.
struct LocalAction {
    neighbours: Vec<[usize; 4]>,
    coeff: Vec<f64>,
    b: f64,
}

impl LocalAction {
    fn new(spec: &ActionSpec) -> Self {
        let lat = spec.lattice;
        let neighbours = (0..lat.sites())
            .map(|x| {
                [
                    lat.shift(x, Axis::X1, 1),
                    lat.shift(x, Axis::X1, -1),
                    lat.shift(x, Axis::X2, 1),
                    lat.shift(x, Axis::X2, -1),
                ]
            })
            .collect();
        Self {
            neighbours,
            coeff: spec.interaction_coefficients(),
            b: spec.couplings.b,
        }
    }

    /// `S(phi with phi(x) = new) - S(phi)`, summed over the four links at `x`.
    fn delta(&self, phi: &[f64], x: usize, new: f64) -> f64 {
        let old = phi[x];
        let mut kin = 0.0;
        for &n in &self.neighbours[x] {
            let pn = phi[n];
            kin += 0.5 * ((new - pn).powi(2) - (old - pn).powi(2));
        }
        let int = if self.coeff[x] == 0.0 {
            0.0
        } else {
            self.coeff[x] * ((self.b * new).exp() - (self.b * old).exp())
        };
        kin + int
    }

    fn interaction(&self, phi: &[f64]) -> f64 {
        self.coeff
            .iter()
            .zip(phi)
            .map(|(c, p)| c * (self.b * p).exp())
            .collect::<CompensatedSum>()
            .value()
    }
}

/// Metropolis acceptance probability `min(1, exp(-dS))`.
pub fn acceptance_probability(delta_s: f64) -> f64 {
    if delta_s <= 0.0 { 1.0 } else { (-delta_s).exp() }
}

/// Density of the single-site move `phi -> phi'` (which must differ from
/// `phi` at `site` only): Gaussian proposal density times acceptance,
/// divided by the number of updatable sites.
pub fn transition_density(
    spec: &ActionSpec,
    phi: &ScalarField,
    site: usize,
    new_value: f64,
    width: f64,
) -> Result<f64> {
    if site == spec.x0 {
        return Ok(0.0);
    }
    let local = LocalAction::new(spec);
    let ds = local.delta(phi.values(), site, new_value);
    let step = (new_value - phi.get(site)) / width;
    let q = (-0.5 * step * step).exp() / (width * (2.0 * std::f64::consts::PI).sqrt());
    Ok(q * acceptance_probability(ds) / (spec.lattice.sites() - 1) as f64)
}

fn sweep(local: &LocalAction, phi: &mut [f64], x0: usize, width: f64, rng: &mut ChaCha8Rng) -> usize {
    let mut accepted = 0;
    for x in 0..phi.len() {
        if x == x0 {
            continue;
        }
        let z: f64 = rng.sample(StandardNormal);
        let new = phi[x] + width * z;
        let ds = local.delta(phi, x, new);
        if ds <= 0.0 || rng.random::<f64>() < (-ds).exp() {
            phi[x] = new;
            accepted += 1;
        }
    }
    accepted
}

/// Runs one chain from the cold start `phi = 0`.
pub fn metropolis_run(spec: &ActionSpec, mc: &McConfig) -> Result<McRun> {
    spec.validate()?;
    mc.validate()?;
    const TUNE_EVERY: usize = 10;
    let lat = spec.lattice;
    let local = LocalAction::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
    let mut phi = vec![0.0; lat.sites()];
    let updatable = lat.sites() - 1;
    let mut width = mc.width;

    let mut window_acc = 0usize;
    for s in 0..mc.thermalization {
        window_acc += sweep(&local, &mut phi, spec.x0, width, &mut rng);
        if mc.tune && width > 0.0 && (s + 1) % TUNE_EVERY == 0 {
            let rate = window_acc as f64 / (TUNE_EVERY * updatable) as f64;
            if rate > 0.6 {
                width *= 1.1;
            } else if rate < 0.4 {
                width *= 0.9;
            }
            window_acc = 0;
        }
    }

    let n_meas = (mc.sweeps - mc.thermalization) / mc.stride;
    let mut samples = Vec::with_capacity(n_meas);
    let mut action = Vec::with_capacity(n_meas);
    let mut interaction = Vec::with_capacity(n_meas);
    let mut accepted = 0usize;
    let mut proposed = 0usize;
    for s in 0..mc.sweeps - mc.thermalization {
        accepted += sweep(&local, &mut phi, spec.x0, width, &mut rng);
        proposed += updatable;
        if (s + 1) % mc.stride == 0 {
            let field = ScalarField::new(lat, phi.clone())?;
            let int = local.interaction(&phi);
            action.push(kinetic_action(&field) + int);
            interaction.push(int);
            samples.push(field.into_values());
        }
    }
    let action_estimate = stats::estimate(&action, mc.batches);
    let interaction_estimate = stats::estimate(&interaction, mc.batches);
    Ok(McRun {
        spec: *spec,
        config: *mc,
        width,
        acceptance: accepted as f64 / proposed as f64,
        samples,
        action,
        interaction,
        action_estimate,
        interaction_estimate,
    })
}

/// Difference correlators of one site pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CorrelatorRow {
    pub x: usize,
    pub y: usize,
    /// `<(phi(x) - phi(y))^2>`.
    pub sq_diff: Estimate,
    /// `<exp(b (phi(x) - phi(y)))>`.
    pub exp_diff: Estimate,
}

pub fn measure_diff_correlators(run: &McRun, pairs: &[(usize, usize)]) -> Result<Vec<CorrelatorRow>> {
    let n = run.spec.lattice.sites();
    let b = run.spec.couplings.b;
    pairs
        .iter()
        .map(|&(x, y)| {
            if x >= n || y >= n {
                return Err(Error::Config(format!("pair ({x}, {y}) outside the lattice")));
            }
            Ok(CorrelatorRow {
                x,
                y,
                sq_diff: run.observable(|s| (s[x] - s[y]).powi(2)),
                exp_diff: run.observable(|s| (b * (s[x] - s[y])).exp()),
            })
        })
        .collect()
}

/// Covariance of the free field with `phi(x0) = 0`: the inverse of the
/// lattice Laplacian form restricted to the unpinned sites, embedded with a
/// zero row and column at `x0`.
pub fn pinned_propagator(spec: &LatticeSpec, x0: usize) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = spec.sites();
    if x0 >= n {
        return Err(Error::Config(format!("pinned site {x0} outside the lattice")));
    }
    let index: Vec<Option<usize>> = (0..n)
        .map(|x| match x.cmp(&x0) {
            std::cmp::Ordering::Less => Some(x),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(x - 1),
        })
        .collect();
    let mut form = DMatrix::zeros(n - 1, n - 1);
    for x in 0..n {
        for axis in Axis::ALL {
            // each link contributes (phi_x - phi_y)^2 / 2, i.e. [[1, -1], [-1, 1]] to S = phi^T M phi / 2
            let y = spec.shift(x, axis, 1);
            for (p, q, v) in [(x, x, 1.0), (y, y, 1.0), (x, y, -1.0), (y, x, -1.0)] {
                if let (Some(i), Some(j)) = (index[p], index[q]) {
                    form[(i, j)] += v;
                }
            }
        }
    }
    let inv = form
        .try_inverse()
        .ok_or_else(|| Error::Numeric("pinned Laplacian is singular".into()))?;
    let mut cov = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            if let (Some(i), Some(j)) = (index[x], index[y]) {
                cov[(x, y)] = inv[(i, j)];
            }
        }
    }
    Ok(cov)
}

/// Exact `<(phi(x) - phi(y))^2>` of the pinned free field.
pub fn exact_free_sq_diff(cov: &DMatrix<f64>, x: usize, y: usize) -> f64 {
    cov[(x, x)] + cov[(y, y)] - 2.0 * cov[(x, y)]
}

/// `<exp(b phi(site))>` on a 2x2 lattice by tensor-product quadrature over
/// the three unpinned variables on `[-half_width, half_width]^3`.
pub fn two_by_two_exp_expectation(spec: &ActionSpec, site: usize, half_width: f64, panels: usize) -> Result<f64> {
    spec.validate()?;
    let lat = spec.lattice;
    if lat.nx != 2 || lat.ny != 2 {
        return Err(Error::Config("quadrature oracle needs a 2x2 lattice".into()));
    }
    let free: Vec<usize> = (0..4).filter(|&x| x != spec.x0).collect();
    let rule = quad::composite_rule(-half_width, half_width, panels);
    let b = spec.couplings.b;
    let local = LocalAction::new(spec);
    let proto = ScalarField::zeros(lat);
    // Reference action at phi = 0 keeps the weights O(1).
    let s0 = action_value(&proto, spec)?;
    let (num, den) = rule
        .par_iter()
        .map(|&(u, wu)| {
            let mut phi = [0.0; 4];
            let mut num = CompensatedSum::new();
            let mut den = CompensatedSum::new();
            phi[free[0]] = u;
            for &(v, wv) in &rule {
                phi[free[1]] = v;
                for &(w, ww) in &rule {
                    phi[free[2]] = w;
                    let s = local_action_total(&local, &phi);
                    let weight = wu * wv * ww * (-(s - s0)).exp();
                    num.add(weight * (b * phi[site]).exp());
                    den.add(weight);
                }
            }
            (num.value(), den.value())
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(num / den)
}

fn local_action_total(local: &LocalAction, phi: &[f64]) -> f64 {
    let mut kin = 0.0;
    for (x, nb) in local.neighbours.iter().enumerate() {
        // forward links only: neighbours[0] is +x1, neighbours[2] is +x2
        kin += 0.5 * (phi[nb[0]] - phi[x]).powi(2) + 0.5 * (phi[nb[2]] - phi[x]).powi(2);
    }
    kin + local.interaction(phi)
}

/// One `T` of the `T`-limit study.
#[derive(Clone, Debug, Serialize)]
pub struct TLimitRow {
    pub tt: f64,
    /// `(1/(4 pi g^2)) sum_x a^2 (1 - w(x))`.
    pub bound: f64,
    /// `bound` relative to the Liouville interaction term at `phi = 0`.
    pub bound_ratio: f64,
    pub correlators: Vec<CorrelatorRow>,
    /// Largest distance to the Liouville reference in combined standard errors.
    pub max_sigma: f64,
    /// Largest absolute deviation from the Liouville reference.
    pub max_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TLimitReport {
    pub reference: Vec<CorrelatorRow>,
    pub rows: Vec<TLimitRow>,
    pub bound_monotone: bool,
    /// Whether the largest correlator deviation decreases from one `T` to the next.
    pub deviation_decreasing: bool,
    pub within_3sigma_at_largest: bool,
}

fn correlator_distance(a: &[CorrelatorRow], b: &[CorrelatorRow]) -> (f64, f64) {
    let mut sigma: f64 = 0.0;
    let mut dev: f64 = 0.0;
    for (p, q) in a.iter().zip(b) {
        for (u, v) in [(p.sq_diff, q.sq_diff), (p.exp_diff, q.exp_diff)] {
            sigma = sigma.max(u.sigma_distance(&v));
            dev = dev.max((u.mean - v.mean).abs());
        }
    }
    (sigma, dev)
}

/// Samples the mapped action at each `T` and the Liouville action with the
/// same configuration, and compares difference correlators.
pub fn compare_t_limit(
    base: &ActionSpec,
    t_list: &[f64],
    mc: &McConfig,
    pairs: &[(usize, usize)],
) -> Result<TLimitReport> {
    if t_list.is_empty() || t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("T list must be non-empty and ascending".into()));
    }
    let liouville = base.with_kind(ActionKind::Liouville);
    let specs: Vec<ActionSpec> = std::iter::once(Ok(liouville))
        .chain(t_list.iter().map(|&tt| {
            let c = Couplings { tt, ..base.couplings };
            c.validate()?;
            Ok(base.with_kind(ActionKind::MappedFiniteT).with_couplings(c))
        }))
        .collect::<Result<_>>()?;
    let tables: Vec<Vec<CorrelatorRow>> = specs
        .par_iter()
        .map(|s| {
            let run = metropolis_run(s, mc)?;
            measure_diff_correlators(&run, pairs)
        })
        .collect::<Result<_>>()?;
    let reference = tables[0].clone();
    let volume = interaction_volume_term(&liouville);
    let rows: Vec<TLimitRow> = specs[1..]
        .iter()
        .zip(&tables[1..])
        .map(|(s, table)| {
            let bound = window_deficit(s);
            let (max_sigma, max_deviation) = correlator_distance(table, &reference);
            TLimitRow {
                tt: s.couplings.tt,
                bound,
                bound_ratio: bound / volume,
                correlators: table.clone(),
                max_sigma,
                max_deviation,
            }
        })
        .collect();
    let bound_monotone = rows.windows(2).all(|w| w[1].bound < w[0].bound);
    let deviation_decreasing = rows.windows(2).all(|w| w[1].max_deviation <= w[0].max_deviation);
    let within_3sigma_at_largest = rows.last().is_some_and(|r| r.max_sigma <= 3.0);
    Ok(TLimitReport {
        reference,
        rows,
        bound_monotone,
        deviation_decreasing,
        within_3sigma_at_largest,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TrivialityRow {
    pub g: f64,
    pub interaction: Estimate,
    /// `(1/(4 pi g^2)) sum_x a^2`.
    pub expected: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrivialityReport {
    pub rows: Vec<TrivialityRow>,
    /// Log-log slope of the measured interaction term against `g`.
    pub slope: f64,
    pub pass: bool,
}

/// At `b = 0` measures the interaction term for each `g` and fits its
/// log-log slope, expected to be `-2`.
pub fn triviality_check(g_list: &[f64], base: &ActionSpec, mc: &McConfig) -> Result<TrivialityReport> {
    if base.couplings.b != 0.0 {
        return Err(Error::Config("triviality check needs b = 0".into()));
    }
    if g_list.len() < 2 {
        return Err(Error::Config("triviality check needs at least two values of g".into()));
    }
    let rows: Vec<TrivialityRow> = g_list
        .par_iter()
        .map(|&g| {
            let c = Couplings { g, ..base.couplings };
            c.validate()?;
            let spec = base.with_couplings(c);
            let run = metropolis_run(&spec, mc)?;
            Ok(TrivialityRow {
                g,
                interaction: run.interaction_estimate,
                expected: interaction_volume_term(&spec),
            })
        })
        .collect::<Result<_>>()?;
    let lx: Vec<f64> = rows.iter().map(|r| r.g.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.interaction.mean.ln()).collect();
    let slope = stats::fit_slope(&lx, &ly);
    Ok(TrivialityReport {
        pass: (slope + 2.0).abs() <= 0.1,
        rows,
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: ActionKind, n: usize, g: f64, b: f64, tt: f64) -> ActionSpec {
        let lat = LatticeSpec::unit(n, n, 1, 1.0).unwrap();
        ActionSpec::centered(kind, Couplings::new(g, b, tt).unwrap(), lat).unwrap()
    }

    fn random_pinned(s: &ActionSpec, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..s.lattice.sites()).map(|_| rng.random_range(-1.5..1.5)).collect();
        v[s.x0] = 0.0;
        ScalarField::new(s.lattice, v).unwrap()
    }

    #[test]
    fn zero_field_action_is_window_sum() {
        let s = spec(ActionKind::Liouville, 8, 1.0, 0.5, 10.0);
        let phi = ScalarField::zeros(s.lattice);
        let expected = 64.0 / (4.0 * std::f64::consts::PI);
        assert!((action_value(&phi, &s).unwrap() - expected).abs() < 1e-13);
        let m = s.with_kind(ActionKind::MappedFiniteT);
        let w: f64 = (0..64).map(|x| m.window(x)).sum();
        assert!((action_value(&phi, &m).unwrap() - w / (4.0 * std::f64::consts::PI)).abs() < 1e-13);
        assert_eq!(m.window(m.x0), 1.0);
    }

    #[test]
    fn pinning_is_a_contract() {
        let s = spec(ActionKind::Liouville, 4, 1.0, 0.5, 1.0);
        let phi = ScalarField::constant(s.lattice, 0.1);
        assert!(matches!(action_value(&phi, &s), Err(Error::Contract(_))));
    }

    #[test]
    fn b_zero_is_free_plus_constant() {
        let s = spec(ActionKind::Liouville, 6, 1.3, 0.0, 1.0);
        let free = s.with_kind(ActionKind::FreeGaussian);
        let phi = random_pinned(&s, 1);
        let d = action_value(&phi, &s).unwrap() - action_value(&phi, &free).unwrap();
        assert!((d - interaction_volume_term(&s)).abs() < 1e-12);
    }

    #[test]
    fn kinetic_action_matches_gradient_form() {
        let lat = LatticeSpec::new(5, 4, 0.3, 1, 1.0).unwrap();
        let phi = ScalarField::from_fn(lat, |i, j| (i as f64 * 0.7).sin() + 0.2 * j as f64 * j as f64).unwrap();
        let g = crate::lattice::grad(&phi);
        let via_grad = 0.5 * lat.a * lat.a * g.dot(&g);
        assert!((kinetic_action(&phi) - via_grad).abs() < 1e-12);
    }

    #[test]
    fn mapped_action_increases_toward_liouville() {
        let base = spec(ActionKind::Liouville, 8, 1.0, 0.5, 1.0);
        let phi = random_pinned(&base, 2);
        let target = action_value(&phi, &base).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for tt in [1.0, 10.0, 100.0, 1000.0] {
            let m = base
                .with_kind(ActionKind::MappedFiniteT)
                .with_couplings(Couplings::new(1.0, 0.5, tt).unwrap());
            let v = action_value(&phi, &m).unwrap();
            assert!(v > prev && v < target);
            prev = v;
        }
        assert!((target - prev) / target < 1e-2);
    }

    #[test]
    fn mapped_action_depends_on_differences_only() {
        let s = spec(ActionKind::MappedFiniteT, 6, 1.0, 0.7, 3.0);
        let phi = random_pinned(&s, 3);
        let shifted = phi.map(|v| v + 2.5).unwrap();
        let a = action_value(&phi, &s).unwrap();
        let b = action_value_unpinned(&shifted, &s).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn local_delta_matches_full_action() {
        for n in [2, 3, 6] {
            let s = spec(ActionKind::MappedFiniteT, n, 0.8, 0.6, 2.0);
            let local = LocalAction::new(&s);
            let phi = random_pinned(&s, 4);
            for x in 0..s.lattice.sites() {
                if x == s.x0 {
                    continue;
                }
                let mut moved = phi.values().to_vec();
                moved[x] += 0.37;
                let full = action_value_unpinned(&ScalarField::new(s.lattice, moved).unwrap(), &s).unwrap()
                    - action_value_unpinned(&phi, &s).unwrap();
                let d = local.delta(phi.values(), x, phi.get(x) + 0.37);
                assert!((full - d).abs() < 1e-12, "n={n} x={x}: {full} vs {d}");
            }
        }
    }

    #[test]
    fn detailed_balance_on_single_site_moves() {
        let s = spec(ActionKind::Liouville, 3, 1.0, 0.8, 1.0);
        let phi = random_pinned(&s, 5);
        let s_phi = action_value(&phi, &s).unwrap();
        for site in 0..9 {
            if site == s.x0 {
                continue;
            }
            for new in [-2.0, -0.3, 0.0, 0.9, 2.2] {
                let mut v = phi.values().to_vec();
                v[site] = new;
                let moved = ScalarField::new(s.lattice, v).unwrap();
                let s_moved = action_value(&moved, &s).unwrap();
                let fwd = (-s_phi).exp() * transition_density(&s, &phi, site, new, 0.7).unwrap();
                let bwd = (-s_moved).exp() * transition_density(&s, &moved, site, phi.get(site), 0.7).unwrap();
                assert!((fwd - bwd).abs() <= 1e-14 * fwd.max(bwd), "{fwd} vs {bwd}");
            }
        }
        assert_eq!(transition_density(&s, &phi, s.x0, 1.0, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn zero_width_chain_is_constant() {
        let s = spec(ActionKind::Liouville, 4, 1.0, 0.5, 1.0);
        let mc = McConfig { sweeps: 200, thermalization: 50, width: 0.0, stride: 1, ..McConfig::default() };
        let run = metropolis_run(&s, &mc).unwrap();
        assert_eq!(run.acceptance, 1.0);
        assert!(run.samples.iter().all(|v| v.iter().all(|&p| p == 0.0)));
        assert_eq!(run.action_estimate.stderr, 0.0);
    }

    #[test]
    fn chain_is_pinned_reproducible_and_tuned() {
        let s = spec(ActionKind::Liouville, 4, 1.0, 0.5, 1.0);
        let mc = McConfig { sweeps: 3000, thermalization: 1000, width: 5.0, seed: 9, ..McConfig::default() };
        let a = metropolis_run(&s, &mc).unwrap();
        let b = metropolis_run(&s, &mc).unwrap();
        assert_eq!(a.samples, b.samples);
        assert!(a.samples.iter().all(|v| v[s.x0] == 0.0));
        assert!(a.width < 5.0);
        assert!((0.3..0.7).contains(&a.acceptance), "acceptance {}", a.acceptance);
        let c = metropolis_run(&s, &McConfig { seed: 10, ..mc }).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn config_validation() {
        let ok = McConfig::default();
        assert!(ok.validate().is_ok());
        assert!(McConfig { batches: 10, ..ok }.validate().is_err());
        assert!(McConfig { sweeps: 100, thermalization: 100, ..ok }.validate().is_err());
        assert!(McConfig { stride: 0, ..ok }.validate().is_err());
        assert!(McConfig { width: -1.0, ..ok }.validate().is_err());
    }

    #[test]
    fn pinned_propagator_properties() {
        let lat = LatticeSpec::unit(4, 4, 1, 1.0).unwrap();
        let x0 = 5;
        let cov = pinned_propagator(&lat, x0).unwrap();
        assert!(cov.row(x0).iter().all(|&v| v == 0.0));
        assert!((&cov - cov.transpose()).abs().max() < 1e-13);
        // Laplacian form times covariance is the identity away from x0
        for x in 0..16 {
            if x == x0 {
                continue;
            }
            for y in 0..16 {
                if y == x0 {
                    continue;
                }
                let mut v = 4.0 * cov[(x, y)];
                for axis in Axis::ALL {
                    v -= cov[(lat.shift(x, axis, 1), y)] + cov[(lat.shift(x, axis, -1), y)];
                }
                let id = if x == y { 1.0 } else { 0.0 };
                assert!((v - id).abs() < 1e-12);
            }
        }
        // neighbouring site of the pin on 2x2: form is [[4,-2,-2],[-2,4,0],...]
        let lat2 = LatticeSpec::unit(2, 2, 1, 1.0).unwrap();
        let c2 = pinned_propagator(&lat2, 0).unwrap();
        // exact inverse of [[4,-2,0],[-2,4,-2],[0,-2,4]] in the order (1, 3, 2)
        assert!((c2[(3, 3)] - 0.5).abs() < 1e-14);
        assert!((c2[(1, 1)] - 0.375).abs() < 1e-14);
        assert!((c2[(1, 2)] - 0.125).abs() < 1e-14);
    }

    #[test]
    fn free_chain_matches_pinned_propagator() {
        let s = spec(ActionKind::Liouville, 4, 1.0, 0.0, 1.0);
        let mc = McConfig { sweeps: 60_000, thermalization: 2_000, seed: 3, ..McConfig::default() };
        let run = metropolis_run(&s, &mc).unwrap();
        let cov = pinned_propagator(&s.lattice, s.x0).unwrap();
        let pairs = [(0, s.x0), (5, 6), (3, 12)];
        for row in measure_diff_correlators(&run, &pairs).unwrap() {
            let exact = exact_free_sq_diff(&cov, row.x, row.y);
            assert!(row.sq_diff.sigma_from(exact) < 3.0, "{row:?} exact {exact}");
        }
        let same = measure_diff_correlators(&run, &[(7, 7)]).unwrap();
        assert_eq!(same[0].sq_diff.mean, 0.0);
        assert_eq!(same[0].exp_diff.mean, 1.0);
    }

    #[test]
    fn two_by_two_quadrature_matches_free_gaussian() {
        // at b = 0 the exponent average of a Gaussian is known: <exp(c phi)> = exp(c^2 C / 2)
        let lat = LatticeSpec::unit(2, 2, 1, 1.0).unwrap();
        let s = ActionSpec::new(ActionKind::FreeGaussian, Couplings::new(1.0, 0.4, 1.0).unwrap(), 0, lat).unwrap();
        let cov = pinned_propagator(&lat, 0).unwrap();
        let q = two_by_two_exp_expectation(&s, 3, 10.0, 8).unwrap();
        let exact = (0.5 * 0.16 * cov[(3, 3)]).exp();
        assert!((q - exact).abs() < 1e-12, "{q} vs {exact}");
    }

    #[test]
    fn window_deficit_decreases_with_t() {
        let mut prev = f64::INFINITY;
        for tt in [1.0, 10.0, 100.0, 1000.0] {
            let s = spec(ActionKind::MappedFiniteT, 8, 1.0, 0.5, tt);
            let d = window_deficit(&s);
            assert!(d < prev);
            prev = d;
        }
        // small-T expansion: sum r^2 / (4 g T) over the 8x8 minimal images is 704 / 4000
        let s = spec(ActionKind::MappedFiniteT, 8, 1.0, 0.5, 1000.0);
        let approx = 704.0 / 4000.0 / (4.0 * std::f64::consts::PI);
        assert!((window_deficit(&s) - approx).abs() < 2e-3 * approx);
    }

    #[test]
    fn triviality_slope() {
        let s = spec(ActionKind::Liouville, 4, 1.0, 0.0, 1.0);
        let mc = McConfig { sweeps: 400, thermalization: 100, ..McConfig::default() };
        let r = triviality_check(&[1.0, 10.0, 100.0], &s, &mc).unwrap();
        assert!((r.slope + 2.0).abs() < 1e-12 && r.pass);
        for row in &r.rows {
            assert!((row.interaction.mean - row.expected).abs() < 1e-12 * row.expected);
        }
        assert!(triviality_check(&[1.0, 2.0], &spec(ActionKind::Liouville, 4, 1.0, 0.5, 1.0), &mc).is_err());
    }
}
