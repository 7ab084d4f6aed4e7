//! Field serialization.
//!
//! CSV layout: a `nx,ny,nt` header line, one line with those three integers,
//! then one value per line in index order (slice-major, then row-major
//! sites). `nt` is the number of stored slices (1 for a spatial field).
//! Values are written in shortest round-trip exponent form, so parsing
//! returns the identical bits.
//!
//! The JSON envelope embeds the full [`LatticeSpec`] next to the values.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, ScalarField, SpaceTimeField, VectorField};

/// Raw contents of a CSV field file.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvField {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub values: Vec<f64>,
}

impl CsvField {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
        if header.replace(' ', "") != "nx,ny,nt" {
            return Err(Error::Parse(format!("bad CSV header {header:?}")));
        }
        let dims = lines
            .next()
            .ok_or_else(|| Error::Parse("missing dimension line".into()))?;
        let dims: Vec<usize> = dims
            .split(',')
            .map(|d| {
                d.trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad dimension {d:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        let [nx, ny, nt] = dims[..] else {
            return Err(Error::Parse(format!("expected 3 dimensions, got {}", dims.len())));
        };
        let values: Vec<f64> = lines
            .map(|l| {
                l.parse()
                    .map_err(|e| Error::Parse(format!("bad value {l:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != nx * ny * nt {
            return Err(Error::Parse(format!(
                "expected {} values for {nx}x{ny}x{nt}, got {}",
                nx * ny * nt,
                values.len()
            )));
        }
        Ok(Self { nx, ny, nt, values })
    }

    pub fn render(&self) -> String {
        let mut out = format!("nx,ny,nt\n{},{},{}\n", self.nx, self.ny, self.nt);
        for v in &self.values {
            writeln!(out, "{v:e}").expect("writing to a String cannot fail");
        }
        out
    }

    /// Spatial field on `spec`; the file must hold exactly one slice.
    pub fn into_scalar(self, spec: LatticeSpec) -> Result<ScalarField> {
        self.check_dims(&spec, 1)?;
        ScalarField::new(spec, self.values)
    }

    pub fn into_spacetime(self, spec: LatticeSpec) -> Result<SpaceTimeField> {
        self.check_dims(&spec, spec.nt)?;
        SpaceTimeField::new(spec, self.values)
    }

    fn check_dims(&self, spec: &LatticeSpec, nt: usize) -> Result<()> {
        if (self.nx, self.ny, self.nt) != (spec.nx, spec.ny, nt) {
            return Err(Error::Parse(format!(
                "CSV is {}x{}x{}, expected {}x{}x{nt}",
                self.nx, self.ny, self.nt, spec.nx, spec.ny
            )));
        }
        Ok(())
    }
}

pub fn scalar_to_csv(f: &ScalarField) -> String {
    CsvField {
        nx: f.spec().nx,
        ny: f.spec().ny,
        nt: 1,
        values: f.values().to_vec(),
    }
    .render()
}

pub fn spacetime_to_csv(f: &SpaceTimeField) -> String {
    CsvField {
        nx: f.spec().nx,
        ny: f.spec().ny,
        nt: f.spec().nt,
        values: f.values().to_vec(),
    }
    .render()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Scalar,
    Spacetime,
    Vector,
}

/// JSON envelope for any field type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldEnvelope {
    pub kind: FieldKind,
    pub spec: LatticeSpec,
    pub values: Vec<f64>,
}

impl FieldEnvelope {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    fn expect(self, kind: FieldKind) -> Result<Self> {
        if self.kind != kind {
            return Err(Error::Parse(format!("expected a {kind:?} field, got {:?}", self.kind)));
        }
        Ok(self)
    }

    pub fn into_scalar(self) -> Result<ScalarField> {
        let e = self.expect(FieldKind::Scalar)?;
        ScalarField::new(e.spec, e.values)
    }

    pub fn into_spacetime(self) -> Result<SpaceTimeField> {
        let e = self.expect(FieldKind::Spacetime)?;
        SpaceTimeField::new(e.spec, e.values)
    }

    pub fn into_vector(self) -> Result<VectorField> {
        let e = self.expect(FieldKind::Vector)?;
        VectorField::new(e.spec, e.values)
    }
}

impl From<&ScalarField> for FieldEnvelope {
    fn from(f: &ScalarField) -> Self {
        Self {
            kind: FieldKind::Scalar,
            spec: *f.spec(),
            values: f.values().to_vec(),
        }
    }
}

impl From<&SpaceTimeField> for FieldEnvelope {
    fn from(f: &SpaceTimeField) -> Self {
        Self {
            kind: FieldKind::Spacetime,
            spec: *f.spec(),
            values: f.values().to_vec(),
        }
    }
}

impl From<&VectorField> for FieldEnvelope {
    fn from(f: &VectorField) -> Self {
        Self {
            kind: FieldKind::Vector,
            spec: *f.spec(),
            values: f.values().to_vec(),
        }
    }
}
