//! Reduced PARSEC airfoil surfaces.
//!
//! A surface is `sqrt(x) * p(x)` with `p` stored by its real roots and leading
//! coefficient. The use-case family fixes both polynomials to
//! `p(x) = c (x - 1)(x - b)` and superimposes the camber line
//! `CAM(x) = e x (f - x)`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One airfoil surface in root-factorized form: `sqrt(x) * c * prod(x - r_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedParsecSide {
    pub roots: Vec<f64>,
    pub leading_coeff: f64,
}

impl ReducedParsecSide {
    pub fn new(roots: Vec<f64>, leading_coeff: f64) -> Self {
        Self {
            roots,
            leading_coeff,
        }
    }

    /// The polynomial factor alone, valid for any real `x`.
    pub fn polynomial(&self, x: f64) -> f64 {
        self.roots
            .iter()
            .fold(self.leading_coeff, |acc, r| acc * (x - r))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        eval_side(self, x)
    }
}

/// Evaluates `sqrt(x) * p(x)` on the chord-normalized interval `[0, 1]`.
pub fn eval_side(side: &ReducedParsecSide, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfDomain(format!(
            "surface abscissa {x} outside [0, 1]"
        )));
    }
    Ok(x.sqrt() * side.polynomial(x))
}

/// Parameters of the two-root airfoil family with superimposed camber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirfoilSpec {
    /// Larger root of the camber line.
    pub f: f64,
    /// Form root shared by both surfaces.
    pub b: f64,
    /// Camber amplitude.
    pub e: f64,
    pub chord: f64,
}

pub const DEFAULT_CAMBER_AMPLITUDE: f64 = 0.3;

impl AirfoilSpec {
    pub fn new(f: f64, b: f64) -> Result<Self> {
        let spec = Self {
            f,
            b,
            e: DEFAULT_CAMBER_AMPLITUDE,
            chord: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_camber_amplitude(mut self, e: f64) -> Result<Self> {
        self.e = e;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b > 1.0) {
            return Err(Error::InvalidGeometry(format!(
                "form root b = {} must exceed 1",
                self.b
            )));
        }
        if !(self.f >= 1.0) {
            return Err(Error::InvalidGeometry(format!(
                "camber root f = {} must be at least 1",
                self.f
            )));
        }
        if !self.e.is_finite() {
            return Err(Error::InvalidGeometry("camber amplitude must be finite".into()));
        }
        if !(self.chord > 0.0 && self.chord.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "chord {} must be positive",
                self.chord
            )));
        }
        Ok(())
    }

    pub fn c_upper(&self) -> f64 {
        1.0 / (2.0 * self.b * self.b)
    }

    pub fn c_lower(&self) -> f64 {
        self.b / 2.0
    }

    pub fn upper_side(&self) -> ReducedParsecSide {
        ReducedParsecSide::new(vec![1.0, self.b], self.c_upper())
    }

    /// Lower surface with the sign flipped so the profile has positive thickness.
    pub fn lower_side(&self) -> ReducedParsecSide {
        ReducedParsecSide::new(vec![1.0, self.b], -self.c_lower())
    }

    pub fn camber(&self, x: f64) -> f64 {
        self.e * x * (self.f - x)
    }

    /// Upper surface at chord-normalized `x`; the caller guarantees `x` in `[0, 1]`.
    pub fn z_upper(&self, x: f64) -> f64 {
        x.sqrt() * self.upper_side().polynomial(x) + self.camber(x)
    }

    pub fn z_lower(&self, x: f64) -> f64 {
        x.sqrt() * self.lower_side().polynomial(x) + self.camber(x)
    }

    pub fn thickness(&self, x: f64) -> f64 {
        self.z_upper(x) - self.z_lower(x)
    }
}

/// Sampled upper and lower surfaces on a shared abscissa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirfoilShape {
    pub spec: AirfoilSpec,
    pub x_samples: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub z_lower: Vec<f64>,
}

pub const MIN_SAMPLES: usize = 8;

/// Cosine-clustered abscissa on `[0, 1]` with exact endpoints.
pub fn cosine_abscissa(n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n)
        .map(|k| match k {
            0 => 0.0,
            k if k == n - 1 => 1.0,
            k => 0.5 * (1.0 - (PI * k as f64 / last).cos()),
        })
        .collect()
}

pub fn build_airfoil(spec: &AirfoilSpec, n_samples: usize) -> Result<AirfoilShape> {
    spec.validate()?;
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "n_samples = {n_samples} is below the minimum of {MIN_SAMPLES}"
        )));
    }
    let x_samples = cosine_abscissa(n_samples);
    let z_upper = x_samples.iter().map(|&x| spec.z_upper(x)).collect();
    let z_lower = x_samples.iter().map(|&x| spec.z_lower(x)).collect();
    Ok(AirfoilShape {
        spec: *spec,
        x_samples,
        z_upper,
        z_lower,
    })
}

impl AirfoilShape {
    pub fn len(&self) -> usize {
        self.x_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_samples.is_empty()
    }

    /// Linear interpolation of both surfaces at chord-normalized `x`.
    /// Returns `None` outside `[0, 1]`.
    pub fn surfaces_at(&self, x: f64) -> Option<(f64, f64)> {
        if !(0.0..=1.0).contains(&x) {
            return None;
        }
        let xs = &self.x_samples;
        let hi = xs.partition_point(|&s| s < x).clamp(1, xs.len() - 1);
        let lo = hi - 1;
        let span = xs[hi] - xs[lo];
        let t = if span > 0.0 { (x - xs[lo]) / span } else { 0.0 };
        let lerp = |a: &[f64]| a[lo] + t * (a[hi] - a[lo]);
        Some((lerp(&self.z_lower), lerp(&self.z_upper)))
    }

    pub fn z_range(&self) -> (f64, f64) {
        let lo = self.z_lower.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.z_upper.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Writes one surface as two-column `x,z` CSV.
    pub fn write_surface_csv<W: Write>(&self, mut out: W, upper: bool) -> Result<()> {
        let zs = if upper { &self.z_upper } else { &self.z_lower };
        writeln!(out, "x,z")?;
        for (x, z) in self.x_samples.iter().zip(zs) {
            writeln!(out, "{x},{z}")?;
        }
        Ok(())
    }

    /// Writes `<stem>_upper.csv` and `<stem>_lower.csv` into `dir`.
    pub fn export_csv(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (upper, tag) in [(true, "upper"), (false, "lower")] {
            let file = std::fs::File::create(dir.join(format!("{stem}_{tag}.csv")))?;
            self.write_surface_csv(std::io::BufWriter::new(file), upper)?;
        }
        Ok(())
    }
}
