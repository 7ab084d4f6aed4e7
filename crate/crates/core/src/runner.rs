//! Configuration-driven experiment runner behind the `liouville-lattice`
//! binary.
//!
//! A run resolves its configuration in three layers: the built-in defaults
//! of the subcommand, the TOML file given by `--config`, and command-line
//! flags. Flags mirror the file keys (`--nx` is `lattice.nx`, `--T` is
//! `couplings.T`, `--sweeps` is `mc.sweeps`, and so on).
//!
//! Every run writes `manifest.json` (resolved configuration, its digest and
//! the outcome) and `report.json` into the output directory, next to the
//! CSV data of the subcommand.
//!
//! Exit status: 0 when every in-run tolerance holds, 1 when one fails, 2 for
//! usage errors and the dense-size guard, 3 for an invalid or unreadable
//! configuration, 4 when a computation or file write fails.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Value, json};
use sha2::{Digest, Sha256};

use crate::diffusion::{Couplings, CovariantMode, delta_source, evolve, free_kernel_images};
use crate::error::Error;
use crate::gaussian::{self, DENSE_SIZE_LIMIT, GreenVariant, SourcePair};
use crate::io::spacetime_to_csv;
use crate::lattice::{LatticeSpec, grad};
use crate::mc::{self, ActionKind, ActionSpec, CorrelatorRow, McConfig};
use crate::verify::{self, VerifyConfig, default_pairs, random_site_field, smooth_site_field, smooth_source};
use crate::walkers::estimate_psi;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Diffusion solve compared with the dressed closed-form kernel.
    Kernel,
    /// Random-walk path integral compared with the diffusion solve.
    Walk,
    /// Both sides of the Gaussian identity for the scalar pair.
    Identity,
    /// Determinant ratio of the dressed and free retarded operators.
    Detk,
    /// Multiplier identity by quadrature.
    Lambda,
    /// Metropolis run of the pinned Liouville action.
    McLiouville,
    /// Metropolis run of the finite-T mapped action.
    McMapped,
    /// Mapped against Liouville correlators over a list of T.
    Compare,
    /// Every acceptance check.
    VerifyAll,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Kernel => "kernel",
            Command::Walk => "walk",
            Command::Identity => "identity",
            Command::Detk => "detk",
            Command::Lambda => "lambda",
            Command::McLiouville => "mc-liouville",
            Command::McMapped => "mc-mapped",
            Command::Compare => "compare",
            Command::VerifyAll => "verify-all",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "liouville-lattice", version, about = "Lattice checks of the Liouville mapping")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

/// Overrides for configuration keys. Each flag maps to exactly one key.
#[derive(Debug, Default, Args)]
pub struct Flags {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long = "tol-identity", global = true)]
    pub tol_identity: Option<f64>,
    #[arg(long = "tol-det", global = true)]
    pub tol_det: Option<f64>,

    #[arg(long, global = true)]
    pub nx: Option<usize>,
    #[arg(long, global = true)]
    pub ny: Option<usize>,
    /// Lattice spacing.
    #[arg(long, global = true)]
    pub a: Option<f64>,
    #[arg(long, global = true)]
    pub nt: Option<usize>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,

    #[arg(long, global = true)]
    pub g: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long = "T", global = true)]
    pub tt: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,

    /// Evaluation time (kernel, walk).
    #[arg(long, global = true)]
    pub t: Option<f64>,
    /// Source or pinned site (kernel, walk, mc).
    #[arg(long, global = true)]
    pub x0: Option<usize>,
    /// Amplitude of the random smooth gauge function (kernel, walk).
    #[arg(long = "gamma-amp", global = true)]
    pub gamma_amp: Option<f64>,
    /// Covariant discretization (kernel): naive or exact-similarity.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Tolerance of the kernel and lambda reports.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub walkers: Option<usize>,
    /// Source choice (identity): random or special.
    #[arg(long, global = true)]
    pub sources: Option<String>,
    /// Green function of the identity right-hand side: lattice or continuum.
    #[arg(long, global = true)]
    pub variant: Option<String>,
    /// Number of random draws (identity, detk).
    #[arg(long, global = true)]
    pub draws: Option<usize>,
    /// Amplitude of the random site field (identity, detk).
    #[arg(long = "phi-amp", global = true)]
    pub phi_amp: Option<f64>,
    /// Field strength of the multiplier identity.
    #[arg(long = "f", global = true, allow_negative_numbers = true)]
    pub f: Option<f64>,

    #[arg(long, global = true)]
    pub sweeps: Option<usize>,
    #[arg(long, global = true)]
    pub thermalization: Option<usize>,
    #[arg(long, global = true)]
    pub width: Option<f64>,
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    #[arg(long, global = true)]
    pub batches: Option<usize>,
    #[arg(long, global = true)]
    pub tune: Option<bool>,
    /// Comma-separated ascending list of T (compare).
    #[arg(long = "t-list", global = true, value_delimiter = ',')]
    pub t_list: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub nx: usize,
    pub ny: usize,
    pub a: f64,
    pub nt: usize,
    pub dt: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    pub g: f64,
    pub b: f64,
    #[serde(rename = "T")]
    pub tt: f64,
    pub mu: f64,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub identity: f64,
    pub det: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<usize>,
    pub gamma_amp: f64,
    pub mode: CovariantMode,
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSection {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<usize>,
    pub gamma_amp: f64,
    pub walkers: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceChoice {
    Random,
    Special,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitySection {
    pub sources: SourceChoice,
    pub variant: GreenVariant,
    pub draws: usize,
    pub phi_amp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetkSection {
    pub draws: usize,
    pub phi_amp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSection {
    pub f: f64,
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub sweeps: usize,
    pub thermalization: usize,
    pub width: f64,
    pub stride: usize,
    pub batches: usize,
    pub tune: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub t_list: Vec<f64>,
}

/// Fully resolved configuration of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub lattice: LatticeSection,
    pub couplings: CouplingSection,
    pub tolerances: Tolerances,
    pub kernel: KernelSection,
    pub walk: WalkSection,
    pub identity: IdentitySection,
    pub detk: DetkSection,
    pub lambda: LambdaSection,
    pub mc: McSection,
    pub compare: CompareSection,
}

impl RunConfig {
    /// Built-in defaults; the lattice and couplings depend on the subcommand.
    pub fn defaults(command: Command) -> Self {
        let (lattice, couplings) = match command {
            Command::Kernel => (
                LatticeSection { nx: 32, ny: 32, a: 0.25, nt: 66, dt: 0.0078125 },
                (1.0, 0.5, 1.0, 0.0, 1.0),
            ),
            Command::Walk => (
                LatticeSection { nx: 16, ny: 16, a: 0.25, nt: 18, dt: 0.015625 },
                (1.0, 0.3, 1.0, 0.0, 1.0),
            ),
            Command::Identity => (LatticeSection { nx: 3, ny: 3, a: 1.0, nt: 5, dt: 0.1 }, (1.0, 0.3, 1.0, 0.0, 1.0)),
            Command::Detk => (LatticeSection { nx: 3, ny: 3, a: 1.0, nt: 4, dt: 0.1 }, (1.0, 0.7, 1.0, 0.0, 1.0)),
            Command::Lambda => (LatticeSection { nx: 2, ny: 2, a: 1.0, nt: 1, dt: 1.0 }, (1.0, 0.0, 1.0, 0.0, 2.0)),
            Command::McMapped => (LatticeSection { nx: 8, ny: 8, a: 1.0, nt: 1, dt: 1.0 }, (1.0, 0.5, 1000.0, 0.0, 1.0)),
            Command::McLiouville | Command::Compare | Command::VerifyAll => {
                (LatticeSection { nx: 8, ny: 8, a: 1.0, nt: 1, dt: 1.0 }, (1.0, 0.5, 1.0, 0.0, 1.0))
            }
        };
        let (g, b, tt, mu, alpha) = couplings;
        let vc = VerifyConfig::default();
        Self {
            seed: vc.seed,
            out: PathBuf::from("out").join(command.name()),
            lattice,
            couplings: CouplingSection { g, b, tt, mu, alpha },
            tolerances: Tolerances { identity: vc.tol_identity, det: vc.tol_det },
            kernel: KernelSection { t: 0.5, x0: None, gamma_amp: 1.0, mode: CovariantMode::ExactSimilarity, tol: 1e-2 },
            walk: WalkSection { t: 0.25, x0: None, gamma_amp: 1.0, walkers: 100_000 },
            identity: IdentitySection { sources: SourceChoice::Random, variant: GreenVariant::Lattice, draws: 10, phi_amp: 1.0 },
            detk: DetkSection { draws: 20, phi_amp: 1.0 },
            lambda: LambdaSection { f: 1.0, tol: 1e-12 },
            mc: McSection { sweeps: 102_000, thermalization: 2_000, width: 1.0, stride: 2, batches: 20, tune: true, x0: None },
            compare: CompareSection { t_list: vec![1.0, 10.0, 100.0, 1000.0] },
        }
    }

    pub fn lattice_spec(&self) -> crate::Result<LatticeSpec> {
        let l = self.lattice;
        LatticeSpec::new(l.nx, l.ny, l.a, l.nt, l.dt)
    }

    pub fn couplings(&self) -> crate::Result<Couplings> {
        let c = self.couplings;
        let out = Couplings { g: c.g, b: c.b, tt: c.tt, mu: c.mu, alpha: c.alpha };
        out.validate()?;
        Ok(out)
    }

    fn check_tolerances(&self) -> Result<(), Failure> {
        for (name, v) in [
            ("tolerances.identity", self.tolerances.identity),
            ("tolerances.det", self.tolerances.det),
            ("kernel.tol", self.kernel.tol),
            ("lambda.tol", self.lambda.tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Failure::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn mc_config(&self) -> McConfig {
        let m = self.mc;
        McConfig {
            sweeps: m.sweeps,
            thermalization: m.thermalization,
            width: m.width,
            seed: self.seed,
            stride: m.stride,
            batches: m.batches,
            tune: m.tune,
        }
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn digest(&self) -> String {
        let inputs = Self { out: PathBuf::new(), ..self.clone() };
        let text = serde_json::to_string(&inputs).expect("config serializes");
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Why a run could not produce a verdict.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Config(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Config(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Config(m) => write!(f, "invalid configuration: {m}"),
            Failure::Runtime(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Domain(_) | Error::Parse(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn set(table: &mut toml::Table, section: Option<&str>, key: &str, value: toml::Value) {
    match section {
        None => {
            table.insert(key.to_string(), value);
        }
        Some(s) => {
            let entry = table
                .entry(s.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            if let toml::Value::Table(t) = entry {
                t.insert(key.to_string(), value);
            }
        }
    }
}

fn int(v: usize) -> toml::Value {
    toml::Value::Integer(v as i64)
}

/// Translates flags into a table shaped like the configuration file.
pub fn flag_table(command: Command, flags: &Flags) -> Result<toml::Table, Failure> {
    let mut t = toml::Table::new();
    let section_for = |flag: &str, allowed: &[(Command, &'static str)]| -> Result<&'static str, Failure> {
        allowed
            .iter()
            .find(|(c, _)| *c == command)
            .map(|(_, s)| *s)
            .ok_or_else(|| Failure::Usage(format!("--{flag} does not apply to `{}`", command.name())))
    };
    use Command::*;
    if let Some(v) = flags.seed {
        if v > i64::MAX as u64 {
            return Err(Failure::Usage(format!("--seed must be at most {}", i64::MAX)));
        }
        set(&mut t, None, "seed", toml::Value::Integer(v as i64));
    }
    if let Some(v) = &flags.out {
        set(&mut t, None, "out", toml::Value::String(v.to_string_lossy().into_owned()));
    }
    let floats = [
        (flags.tol_identity, "tolerances", "identity"),
        (flags.tol_det, "tolerances", "det"),
        (flags.a, "lattice", "a"),
        (flags.dt, "lattice", "dt"),
        (flags.g, "couplings", "g"),
        (flags.b, "couplings", "b"),
        (flags.tt, "couplings", "T"),
        (flags.mu, "couplings", "mu"),
        (flags.alpha, "couplings", "alpha"),
    ];
    for (v, s, k) in floats {
        if let Some(v) = v {
            set(&mut t, Some(s), k, toml::Value::Float(v));
        }
    }
    for (v, k) in [(flags.nx, "nx"), (flags.ny, "ny"), (flags.nt, "nt")] {
        if let Some(v) = v {
            set(&mut t, Some("lattice"), k, int(v));
        }
    }
    if let Some(v) = flags.t {
        let s = section_for("t", &[(Kernel, "kernel"), (Walk, "walk")])?;
        set(&mut t, Some(s), "t", toml::Value::Float(v));
    }
    if let Some(v) = flags.x0 {
        let s = section_for(
            "x0",
            &[(Kernel, "kernel"), (Walk, "walk"), (McLiouville, "mc"), (McMapped, "mc"), (Compare, "mc")],
        )?;
        set(&mut t, Some(s), "x0", int(v));
    }
    if let Some(v) = flags.gamma_amp {
        let s = section_for("gamma-amp", &[(Kernel, "kernel"), (Walk, "walk")])?;
        set(&mut t, Some(s), "gamma_amp", toml::Value::Float(v));
    }
    if let Some(v) = &flags.mode {
        let s = section_for("mode", &[(Kernel, "kernel")])?;
        set(&mut t, Some(s), "mode", toml::Value::String(v.clone()));
    }
    if let Some(v) = flags.tol {
        let s = section_for("tol", &[(Kernel, "kernel"), (Lambda, "lambda")])?;
        set(&mut t, Some(s), "tol", toml::Value::Float(v));
    }
    if let Some(v) = flags.walkers {
        let s = section_for("walkers", &[(Walk, "walk")])?;
        set(&mut t, Some(s), "walkers", int(v));
    }
    if let Some(v) = &flags.sources {
        let s = section_for("sources", &[(Identity, "identity")])?;
        set(&mut t, Some(s), "sources", toml::Value::String(v.clone()));
    }
    if let Some(v) = &flags.variant {
        let s = section_for("variant", &[(Identity, "identity")])?;
        set(&mut t, Some(s), "variant", toml::Value::String(v.clone()));
    }
    if let Some(v) = flags.draws {
        let s = section_for("draws", &[(Identity, "identity"), (Detk, "detk")])?;
        set(&mut t, Some(s), "draws", int(v));
    }
    if let Some(v) = flags.phi_amp {
        let s = section_for("phi-amp", &[(Identity, "identity"), (Detk, "detk")])?;
        set(&mut t, Some(s), "phi_amp", toml::Value::Float(v));
    }
    if let Some(v) = flags.f {
        let s = section_for("f", &[(Lambda, "lambda")])?;
        set(&mut t, Some(s), "f", toml::Value::Float(v));
    }
    let mc_cmds = [(McLiouville, "mc"), (McMapped, "mc"), (Compare, "mc")];
    for (v, k) in [
        (flags.sweeps, "sweeps"),
        (flags.thermalization, "thermalization"),
        (flags.stride, "stride"),
        (flags.batches, "batches"),
    ] {
        if let Some(v) = v {
            let s = section_for(k, &mc_cmds)?;
            set(&mut t, Some(s), k, int(v));
        }
    }
    if let Some(v) = flags.width {
        let s = section_for("width", &mc_cmds)?;
        set(&mut t, Some(s), "width", toml::Value::Float(v));
    }
    if let Some(v) = flags.tune {
        let s = section_for("tune", &mc_cmds)?;
        set(&mut t, Some(s), "tune", toml::Value::Boolean(v));
    }
    if let Some(v) = &flags.t_list {
        let s = section_for("t-list", &[(Compare, "compare")])?;
        set(
            &mut t,
            Some(s),
            "t_list",
            toml::Value::Array(v.iter().map(|&x| toml::Value::Float(x)).collect()),
        );
    }
    Ok(t)
}

/// Defaults, then the file, then the flags.
pub fn resolve_config(command: Command, flags: &Flags) -> Result<RunConfig, Failure> {
    let defaults = RunConfig::defaults(command);
    let mut table = toml::Table::try_from(&defaults).map_err(|e| Failure::Runtime(e.to_string()))?;
    if let Some(path) = &flags.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: toml::Table =
            toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        merge(&mut table, file);
    }
    merge(&mut table, flag_table(command, flags)?);
    let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Failure::Config(e.to_string()))?;
    cfg.check_tolerances()?;
    Ok(cfg)
}

/// Outcome of a subcommand before it is written out.
pub struct Outcome {
    pub pass: bool,
    pub summary: String,
    pub report: Value,
    /// `(file name, contents)` pairs written into the output directory.
    pub files: Vec<(String, String)>,
}

fn guard(spec: &LatticeSpec) -> Result<(), Failure> {
    let size = spec.spacetime_len();
    if size > DENSE_SIZE_LIMIT {
        return Err(Failure::Usage(format!(
            "size guard: nt*nx*ny = {size} exceeds the dense limit {DENSE_SIZE_LIMIT}"
        )));
    }
    Ok(())
}

fn site_or_center(x0: Option<usize>, spec: &LatticeSpec) -> Result<usize, Failure> {
    match x0 {
        None => Ok(spec.center()),
        Some(x) if x < spec.sites() => Ok(x),
        Some(x) => Err(Failure::Config(format!("site {x} outside a lattice of {} sites", spec.sites()))),
    }
}

fn run_kernel(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let spec = cfg.lattice_spec()?;
    let c = cfg.couplings()?;
    let k = cfg.kernel;
    let x0 = site_or_center(k.x0, &spec)?;
    let gamma = smooth_site_field(spec, &mut ChaCha8Rng::seed_from_u64(cfg.seed), k.gamma_amp);
    let a_field = grad(&gamma);
    let psi = evolve(&delta_source(spec, x0)?, &a_field, &c, k.mode)?;
    let slice = spec.slice_for_time(k.t)?;
    let mut rows = String::from("site,x1,x2,lattice,closed_form\n");
    let (mut err, mut peak) = (0.0f64, 0.0f64);
    for x in 0..spec.sites() {
        let exact = (-c.b * (gamma.get(x) - gamma.get(x0))).exp() * free_kernel_images(&spec, k.t, x, x0, c.g)?;
        let v = psi.get(slice, x);
        err = err.max((v - exact).abs());
        peak = peak.max(exact.abs());
        let (i, j) = spec.coords(x);
        let _ = writeln!(rows, "{x},{i},{j},{v:e},{exact:e}");
    }
    let rel = err / peak;
    Ok(Outcome {
        pass: rel <= k.tol,
        summary: format!("kernel: L-inf relative error {rel:.3e} at t = {} (tol {:.1e})", k.t, k.tol),
        report: json!({ "t": k.t, "x0": x0, "slice": slice, "linf_relative_error": rel, "tol": k.tol, "mode": k.mode }),
        files: vec![("kernel.csv".into(), spacetime_to_csv(&psi)), ("kernel_slice.csv".into(), rows)],
    })
}

fn run_walk(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let spec = cfg.lattice_spec()?;
    let c = cfg.couplings()?;
    let w = cfg.walk;
    let x0 = site_or_center(w.x0, &spec)?;
    let gamma = smooth_site_field(spec, &mut ChaCha8Rng::seed_from_u64(cfg.seed), w.gamma_amp);
    let a_field = grad(&gamma);
    let est = estimate_psi(&spec, x0, w.t, &a_field, &c, w.walkers, cfg.seed)?;
    let pde = evolve(&delta_source(spec, x0)?, &a_field, &c, CovariantMode::ExactSimilarity)?;
    let slice = spec.slice_for_time(w.t)?;
    let mut rows = String::from("site,x1,x2,mean,stderr,occupancy,pde\n");
    let (mut considered, mut agree) = (0usize, 0usize);
    for x in 0..spec.sites() {
        let p = pde.get(slice, x);
        if est.occupancy[x] > 50 {
            considered += 1;
            if (est.mean[x] - p).abs() <= 3.0 * est.stderr[x] {
                agree += 1;
            }
        }
        let (i, j) = spec.coords(x);
        let _ = writeln!(rows, "{x},{i},{j},{:e},{:e},{},{p:e}", est.mean[x], est.stderr[x], est.occupancy[x]);
    }
    let fraction = if considered == 0 { 0.0 } else { agree as f64 / considered as f64 };
    Ok(Outcome {
        pass: fraction >= 0.95,
        summary: format!("walk: {agree}/{considered} occupied sites within 3 standard errors"),
        report: json!({ "t": w.t, "x0": x0, "walkers": w.walkers, "steps": est.nsteps,
                        "sites_considered": considered, "sites_within_3se": agree, "fraction": fraction }),
        files: vec![("walk.csv".into(), rows)],
    })
}

fn run_identity(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let spec = cfg.lattice_spec()?;
    guard(&spec)?;
    let c = cfg.couplings()?;
    let id = cfg.identity;
    let tol = cfg.tolerances.identity;
    let mut rows = String::from("draw,lhs,rhs,residual\n");
    let mut worst = 0.0f64;
    let mut table = Vec::new();
    for draw in 0..id.draws {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(draw as u64);
        let phi = random_site_field(spec, &mut rng, id.phi_amp);
        let sources = match id.sources {
            SourceChoice::Random => SourcePair::general(smooth_source(spec, &mut rng), smooth_source(spec, &mut rng))?,
            SourceChoice::Special => SourcePair::special(spec, &c, spec.center())?,
        };
        let lhs = gaussian::psi_sector_logz(&phi, &sources, &c, &spec)?;
        let rhs = gaussian::rhs_identity(&phi, &sources, &c, &spec, id.variant)?;
        let residual = (lhs - rhs).abs() / lhs.abs().max(1.0);
        worst = worst.max(residual);
        let _ = writeln!(rows, "{draw},{lhs:e},{rhs:e},{residual:e}");
        let mut row = json!({ "draw": draw, "lhs": lhs, "rhs": rhs, "residual": residual });
        if id.sources == SourceChoice::Special {
            row["closed_form"] = json!(gaussian::special_currents_closed_form(&phi, &c, &spec, spec.center(), id.variant)?);
        }
        table.push(row);
    }
    Ok(Outcome {
        pass: worst <= tol,
        summary: format!("identity: worst relative residual {worst:.3e} over {} draws (tol {tol:.1e})", id.draws),
        report: json!({ "sources": id.sources, "variant": id.variant, "worst_residual": worst, "tol": tol,
                        "special_current_prefactor": gaussian::special_current_prefactor(c.g), "draws": table }),
        files: vec![("identity.csv".into(), rows)],
    })
}

fn run_detk(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let spec = cfg.lattice_spec()?;
    guard(&spec)?;
    let c = cfg.couplings()?;
    let tol = cfg.tolerances.det;
    let mut rows = String::from("draw,ratio,deviation\n");
    let mut worst = 0.0f64;
    for draw in 0..cfg.detk.draws {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(draw as u64);
        let phi = random_site_field(spec, &mut rng, cfg.detk.phi_amp);
        let ratio = gaussian::det_ratio(&phi, &c, &spec)?;
        worst = worst.max((ratio - 1.0).abs());
        let _ = writeln!(rows, "{draw},{ratio:e},{:e}", (ratio - 1.0).abs());
    }
    Ok(Outcome {
        pass: worst <= tol,
        summary: format!("detk: max |det ratio - 1| = {worst:.3e} over {} draws (tol {tol:.1e})", cfg.detk.draws),
        report: json!({ "draws": cfg.detk.draws, "max_deviation": worst, "tol": tol, "b": c.b }),
        files: vec![("detk.csv".into(), rows)],
    })
}

fn run_lambda(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let r = gaussian::lambda_identity_check(cfg.lambda.f, cfg.couplings.alpha)?;
    let tol = cfg.lambda.tol;
    Ok(Outcome {
        pass: r.residual <= tol && r.imag.abs() <= tol,
        summary: format!("lambda: lhs {:.6} rhs {:.6} residual {:.3e}", r.lhs, r.rhs, r.residual),
        report: json!({ "check": r, "tol": tol }),
        files: vec![],
    })
}

fn correlator_csv(out: &mut String, prefix: &str, rows: &[CorrelatorRow]) {
    for r in rows {
        for (name, e) in [("sq_diff", r.sq_diff), ("exp_diff", r.exp_diff)] {
            let _ = writeln!(out, "{prefix}{name},{}:{},{:e},{:e},{:e}", r.x, r.y, e.mean, e.stderr, e.tau_int);
        }
    }
}

fn run_mc(cfg: &RunConfig, kind: ActionKind) -> Result<Outcome, Failure> {
    let lat = cfg.lattice_spec()?;
    let spec = ActionSpec::new(kind, cfg.couplings()?, site_or_center(cfg.mc.x0, &lat)?, lat)?;
    let run = mc::metropolis_run(&spec, &cfg.mc_config())?;
    let rows = mc::measure_diff_correlators(&run, &default_pairs(&lat, spec.x0))?;
    let mut csv = String::from("observable,pair,mean,stderr,tau_int\n");
    for (name, e) in [("action", run.action_estimate), ("interaction", run.interaction_estimate)] {
        let _ = writeln!(csv, "{name},-,{:e},{:e},{:e}", e.mean, e.stderr, e.tau_int);
    }
    correlator_csv(&mut csv, "", &rows);
    Ok(Outcome {
        pass: true,
        summary: format!(
            "{}: {} samples, acceptance {:.3}, <S> = {:.5} +- {:.5}",
            if kind == ActionKind::Liouville { "mc-liouville" } else { "mc-mapped" },
            run.n_samples(),
            run.acceptance,
            run.action_estimate.mean,
            run.action_estimate.stderr
        ),
        report: json!({ "run": run, "correlators": rows }),
        files: vec![("observables.csv".into(), csv)],
    })
}

fn run_compare(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let lat = cfg.lattice_spec()?;
    let base = ActionSpec::new(ActionKind::Liouville, cfg.couplings()?, site_or_center(cfg.mc.x0, &lat)?, lat)?;
    let report = mc::compare_t_limit(&base, &cfg.compare.t_list, &cfg.mc_config(), &default_pairs(&lat, base.x0))?;
    let mut csv = String::from("T,observable,pair,mean,stderr,tau_int\n");
    correlator_csv(&mut csv, "inf,", &report.reference);
    for row in &report.rows {
        correlator_csv(&mut csv, &format!("{},", row.tt), &row.correlators);
    }
    let last = report.rows.last().expect("non-empty T list");
    Ok(Outcome {
        pass: report.bound_monotone && report.within_3sigma_at_largest,
        summary: format!(
            "compare: max deviation {:.2} sigma at T = {}, window deficit ratio {:.3e}",
            last.max_sigma, last.tt, last.bound_ratio
        ),
        report: serde_json::to_value(&report).map_err(Error::from)?,
        files: vec![("compare.csv".into(), csv)],
    })
}

fn run_verify_all(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let vc = VerifyConfig { seed: cfg.seed, tol_identity: cfg.tolerances.identity, tol_det: cfg.tolerances.det };
    let reports = verify::run_all(&vc)?;
    let lines: Vec<String> = reports.iter().map(|r| r.line()).collect();
    let passed = reports.iter().filter(|r| r.pass).count();
    Ok(Outcome {
        pass: passed == reports.len(),
        summary: format!("{}\nverify-all: {passed}/{} checks pass", lines.join("\n"), reports.len()),
        report: serde_json::to_value(&reports).map_err(Error::from)?,
        files: vec![],
    })
}

/// Runs one subcommand on a resolved configuration.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Outcome, Failure> {
    match command {
        Command::Kernel => run_kernel(cfg),
        Command::Walk => run_walk(cfg),
        Command::Identity => run_identity(cfg),
        Command::Detk => run_detk(cfg),
        Command::Lambda => run_lambda(cfg),
        Command::McLiouville => run_mc(cfg, ActionKind::Liouville),
        Command::McMapped => run_mc(cfg, ActionKind::MappedFiniteT),
        Command::Compare => run_compare(cfg),
        Command::VerifyAll => run_verify_all(cfg),
    }
}

fn write_artifacts(dir: &Path, command: Command, cfg: &RunConfig, out: &Outcome) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, contents) in &out.files {
        fs::write(dir.join(name), contents)?;
    }
    let report = serde_json::to_string_pretty(&out.report)?;
    fs::write(dir.join("report.json"), report + "\n")?;
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": command.name(),
        "config": cfg,
        "config_toml": toml::to_string(cfg).unwrap_or_default(),
        "inputs_digest": cfg.digest(),
        "pass": out.pass,
        "files": out.files.iter().map(|(n, _)| n.clone()).chain(["report.json".to_string()]).collect::<Vec<_>>(),
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = resolve_config(cli.command, &cli.flags).and_then(|cfg| {
        let out = execute(cli.command, &cfg)?;
        write_artifacts(&cfg.out, cli.command, &cfg, &out)
            .map_err(|e| Failure::Runtime(format!("writing {}: {e}", cfg.out.display())))?;
        Ok(out)
    });
    match result {
        Ok(out) => {
            println!("{}", out.summary);
            if !out.pass {
                eprintln!("tolerance check failed");
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("liouville-lattice").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        for cmd in [Command::Kernel, Command::Identity, Command::Compare] {
            let cfg = RunConfig::defaults(cmd);
            let text = toml::to_string(&cfg).unwrap();
            let back: RunConfig = toml::from_str(&text).unwrap();
            assert_eq!(cfg, back);
        }
    }

    #[test]
    fn flags_override_keys() {
        let cli = parse(&["lambda", "--alpha", "8", "--f", "-3"]);
        let cfg = resolve_config(cli.command, &cli.flags).unwrap();
        assert_eq!(cfg.couplings.alpha, 8.0);
        assert_eq!(cfg.lambda.f, -3.0);
        let cli = parse(&["compare", "--t-list", "1,5", "--sweeps", "5000", "--T", "3"]);
        let cfg = resolve_config(cli.command, &cli.flags).unwrap();
        assert_eq!(cfg.compare.t_list, vec![1.0, 5.0]);
        assert_eq!(cfg.mc.sweeps, 5000);
        assert_eq!(cfg.couplings.tt, 3.0);
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "seed = 7\n[lattice]\nnx = 4\n[detk]\ndraws = 3\n").unwrap();
        let cli = parse(&["detk", "--config", path.to_str().unwrap(), "--nx", "5"]);
        let cfg = resolve_config(cli.command, &cli.flags).unwrap();
        assert_eq!((cfg.seed, cfg.lattice.nx, cfg.lattice.ny, cfg.detk.draws), (7, 5, 3, 3));
    }

    #[test]
    fn misplaced_flag_is_usage_error() {
        let cli = parse(&["detk", "--walkers", "10"]);
        assert!(matches!(resolve_config(cli.command, &cli.flags), Err(Failure::Usage(_))));
    }

    #[test]
    fn unknown_key_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        fs::write(&path, "[lattice]\nnz = 4\n").unwrap();
        let cli = parse(&["detk", "--config", path.to_str().unwrap()]);
        assert!(matches!(resolve_config(cli.command, &cli.flags), Err(Failure::Config(_))));
    }

    #[test]
    fn non_positive_tolerance_is_config_error() {
        let cli = parse(&["identity", "--tol-identity", "0"]);
        assert!(matches!(resolve_config(cli.command, &cli.flags), Err(Failure::Config(_))));
    }

    #[test]
    fn digest_tracks_config() {
        let a = RunConfig::defaults(Command::Detk);
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.digest(), b.digest());
        b.seed += 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn size_guard_is_usage_error() {
        let cli = parse(&["identity", "--nx", "16", "--ny", "16", "--nt", "17"]);
        let cfg = resolve_config(cli.command, &cli.flags).unwrap();
        let err = execute(cli.command, &cfg).err().unwrap();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("size guard"));
    }
}
