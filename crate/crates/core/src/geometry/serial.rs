//! Self-describing JSON container for weights.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{GeometryError, ModelGeometry, TauPolynomial, Weight};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometryDescriptor {
    EllipticCurve { tau: [f64; 2], degree: usize, nx: usize, ny: usize },
    P1Symmetric { degree: usize, n: usize },
    EllipticFamily { tau: Vec<[f64; 2]>, degree: usize, nx: usize, ny: usize, half_width: usize, spacing: f64 },
}

impl GeometryDescriptor {
    pub fn of(geom: &ModelGeometry) -> Self {
        match geom {
            ModelGeometry::EllipticCurve { tau, degree, grid } => GeometryDescriptor::EllipticCurve {
                tau: [tau.re, tau.im],
                degree: *degree,
                nx: grid.nx(),
                ny: grid.ny(),
            },
            ModelGeometry::P1Symmetric { degree, grid } => {
                GeometryDescriptor::P1Symmetric { degree: *degree, n: grid.len() }
            }
            ModelGeometry::EllipticFamily(f) => GeometryDescriptor::EllipticFamily {
                tau: f.tau.coeffs().iter().map(|c| [c.re, c.im]).collect(),
                degree: f.degree,
                nx: f.grid.nx(),
                ny: f.grid.ny(),
                half_width: f.half_width,
                spacing: f.spacing,
            },
        }
    }

    pub fn build(&self) -> Result<ModelGeometry, GeometryError> {
        match self {
            GeometryDescriptor::EllipticCurve { tau, degree, nx, ny } => {
                ModelGeometry::elliptic(Complex64::new(tau[0], tau[1]), *degree, *nx, *ny)
            }
            GeometryDescriptor::P1Symmetric { degree, n } => ModelGeometry::p1(*degree, *n),
            GeometryDescriptor::EllipticFamily { tau, degree, nx, ny, half_width, spacing } => {
                let poly = TauPolynomial::new(tau.iter().map(|c| Complex64::new(c[0], c[1])).collect());
                ModelGeometry::family(poly, *degree, *nx, *ny, *half_width, *spacing)
            }
        }
    }
}

const FORMAT: &str = "bergflow-weight";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRecord {
    pub format: String,
    pub version: u32,
    pub geometry: GeometryDescriptor,
    pub level: usize,
    /// `flat` or `fubini-study`.
    pub reference: String,
    pub samples: Vec<f64>,
}

impl WeightRecord {
    pub fn of(w: &Weight) -> Self {
        let reference = match w.geometry() {
            ModelGeometry::P1Symmetric { .. } => "fubini-study",
            _ => "flat",
        };
        WeightRecord {
            format: FORMAT.to_string(),
            version: 1,
            geometry: GeometryDescriptor::of(w.geometry()),
            level: w.level(),
            reference: reference.to_string(),
            samples: w.u().to_vec(),
        }
    }

    pub fn into_weight(self) -> Result<Weight, GeometryError> {
        if self.format != FORMAT || self.version != 1 {
            return Err(GeometryError::Record(format!("unknown format {} v{}", self.format, self.version)));
        }
        let geom = self.geometry.build()?;
        let expected = match geom {
            ModelGeometry::P1Symmetric { .. } => "fubini-study",
            _ => "flat",
        };
        if self.reference != expected {
            return Err(GeometryError::Record(format!("reference {} on this geometry", self.reference)));
        }
        Weight::new(geom, self.samples)
    }
}

impl Weight {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&WeightRecord::of(self)).expect("weight records always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, GeometryError> {
        let rec: WeightRecord = serde_json::from_str(s).map_err(|e| GeometryError::Record(e.to_string()))?;
        rec.into_weight()
    }
}
