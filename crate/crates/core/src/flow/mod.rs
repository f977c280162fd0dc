//! Ground-truth objective evaluations.
//!
//! The physical objective solves Stokes flow past a profile in a periodic
//! channel and scores the flow on a vertical evaluation line behind it:
//! `R1` is the mean squared-vertical-velocity ratio and `R2` the spread of
//! speeds. Analytic stand-ins share the same [`Objective`] interface and
//! simulation counter.

mod analytic;
mod dense;
mod stokes;

use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use analytic::{fictitious_1d, synthetic_valley_2d, synthetic_valley_gradient, VALLEY_MIN};
pub use stokes::solve_channel;

use crate::error::{Error, Result};
use crate::geometry::{build_airfoil, AirfoilShape, AirfoilSpec, DEFAULT_CAMBER_AMPLITUDE};

/// Denominator used in the `R1` ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioForm {
    /// `u2^2 / (u1^2 + u2^2)`
    #[default]
    Squared,
    /// `u2^2 / sqrt(u1^2 + u2^2)`, kept for comparing landscapes.
    Magnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub length_x: f64,
    pub height_z: f64,
    pub nx: usize,
    pub nz: usize,
    /// `(u_in, w_in)` in m/s.
    pub inflow: [f64; 2],
    pub leading_edge_x: f64,
    pub leading_edge_z: f64,
    /// Evaluation line abscissa; defaults to half a chord behind the trailing edge.
    pub line_e_x: Option<f64>,
    pub penalization: f64,
    pub solver_tol: f64,
    /// Cap on iterative-refinement sweeps after the direct solve.
    pub max_iters: usize,
    pub camber_amplitude: f64,
    pub shape_samples: usize,
    pub ratio_form: RatioForm,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            length_x: 4.0,
            height_z: 5.0,
            nx: 96,
            nz: 120,
            inflow: [1.0, 0.75],
            leading_edge_x: 1.0,
            leading_edge_z: 0.5,
            line_e_x: None,
            penalization: 1e6,
            solver_tol: 1e-8,
            max_iters: 5,
            camber_amplitude: DEFAULT_CAMBER_AMPLITUDE,
            shape_samples: 257,
            ratio_form: RatioForm::Squared,
        }
    }
}

impl ChannelConfig {
    pub const CHORD: f64 = 1.0;

    pub fn dx(&self) -> f64 {
        self.length_x / self.nx as f64
    }

    pub fn dz(&self) -> f64 {
        self.height_z / self.nz as f64
    }

    pub fn line_e(&self) -> f64 {
        self.line_e_x
            .unwrap_or(self.leading_edge_x + Self::CHORD + 0.5)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.length_x > 0.0 && self.height_z > 0.0) {
            return bad("channel dimensions must be positive".into());
        }
        if self.nx < 4 || self.nz < 4 {
            return bad(format!("grid {}x{} too coarse", self.nx, self.nz));
        }
        if !(self.penalization > 0.0) {
            return bad("penalization must be positive".into());
        }
        if !(self.solver_tol > 0.0) {
            return bad("solver_tol must be positive".into());
        }
        if !self.inflow.iter().all(|v| v.is_finite()) {
            return bad("inflow must be finite".into());
        }
        let te = self.leading_edge_x + Self::CHORD;
        let e = self.line_e();
        if !(e > te && e < self.length_x) {
            return bad(format!(
                "evaluation line x = {e} must lie strictly between the trailing edge {te} and the outflow {}",
                self.length_x
            ));
        }
        Ok(())
    }

    pub fn inflow_magnitude(&self) -> f64 {
        self.inflow[0].hypot(self.inflow[1])
    }
}

/// Velocity and pressure on the staggered grid.
///
/// `u1[i * nz + j]` lives on vertical face `i` (`0..=nx`) at row centre `j`;
/// `u2[i * nz + j]` lives in column `i` on horizontal face `j` (periodic).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    pub nx: usize,
    pub nz: usize,
    pub length_x: f64,
    pub height_z: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub p: Vec<f64>,
    pub converged: bool,
    pub residual: f64,
    pub refinements: usize,
}

impl FlowField {
    /// A uniform field, used for tests and controls.
    pub fn uniform(config: &ChannelConfig, velocity: [f64; 2]) -> Self {
        let (nx, nz) = (config.nx, config.nz);
        Self {
            nx,
            nz,
            length_x: config.length_x,
            height_z: config.height_z,
            u1: vec![velocity[0]; (nx + 1) * nz],
            u2: vec![velocity[1]; nx * nz],
            p: vec![0.0; nx * nz],
            converged: true,
            residual: 0.0,
            refinements: 0,
        }
    }

    pub fn dx(&self) -> f64 {
        self.length_x / self.nx as f64
    }

    pub fn dz(&self) -> f64 {
        self.height_z / self.nz as f64
    }

    pub fn u1_face(&self, i: usize, j: usize) -> f64 {
        self.u1[i * self.nz + j]
    }

    pub fn u2_face(&self, i: usize, j: usize) -> f64 {
        self.u2[i * self.nz + j % self.nz]
    }

    /// Largest absolute discrete divergence over all cells.
    pub fn max_divergence(&self) -> f64 {
        let (dx, dz) = (self.dx(), self.dz());
        let mut worst = 0.0_f64;
        for i in 0..self.nx {
            for j in 0..self.nz {
                let div = (self.u1_face(i + 1, j) - self.u1_face(i, j)) / dx
                    + (self.u2_face(i, j + 1) - self.u2_face(i, j)) / dz;
                worst = worst.max(div.abs());
            }
        }
        worst
    }

    /// Cell-centred velocity `(u1, u2)`.
    pub fn cell_velocity(&self, i: usize, j: usize) -> (f64, f64) {
        (
            0.5 * (self.u1_face(i, j) + self.u1_face(i + 1, j)),
            0.5 * (self.u2_face(i, j) + self.u2_face(i, j + 1)),
        )
    }

    /// Dumps cell-centred `x,z,u1,u2` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let (dx, dz) = (self.dx(), self.dz());
        writeln!(out, "x,z,u1,u2")?;
        for i in 0..self.nx {
            for j in 0..self.nz {
                let (a, b) = self.cell_velocity(i, j);
                let x = (i as f64 + 0.5) * dx;
                let z = -0.5 * self.height_z + (j as f64 + 0.5) * dz;
                writeln!(out, "{x},{z},{a},{b}")?;
            }
        }
        Ok(())
    }
}

/// Velocities sampled on the vertical evaluation line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationProfile {
    pub z_samples: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl EvaluationProfile {
    pub fn len(&self) -> usize {
        self.z_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_samples.is_empty()
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self {
            z_samples: (0..pairs.len()).map(|k| k as f64).collect(),
            u1: pairs.iter().map(|p| p.0).collect(),
            u2: pairs.iter().map(|p| p.1).collect(),
        }
    }
}

/// Interpolates both velocity components onto the `nz` row centres of the
/// line `x = line_e_x`.
pub fn sample_line(field: &FlowField, config: &ChannelConfig) -> Result<EvaluationProfile> {
    let x = config.line_e();
    if !(x > 0.0 && x < field.length_x) {
        return Err(Error::OutOfDomain(format!(
            "evaluation line x = {x} outside (0, {})",
            field.length_x
        )));
    }
    let (dx, dz, nx, nz) = (field.dx(), field.dz(), field.nx, field.nz);

    // u1 faces sit at i * dx
    let s = x / dx;
    let i0 = (s.floor() as usize).min(nx - 1);
    let t = s - i0 as f64;

    // u2 columns sit at (i + 0.5) * dx; clamp (zero gradient) outside the centres
    let sc = x / dx - 0.5;
    let (c0, c1, tc) = if sc <= 0.0 {
        (0, 0, 0.0)
    } else if sc >= (nx - 1) as f64 {
        (nx - 1, nx - 1, 0.0)
    } else {
        let c0 = sc.floor() as usize;
        (c0, c0 + 1, sc - c0 as f64)
    };

    let mut profile = EvaluationProfile {
        z_samples: Vec::with_capacity(nz),
        u1: Vec::with_capacity(nz),
        u2: Vec::with_capacity(nz),
    };
    for j in 0..nz {
        let a = (1.0 - t) * field.u1_face(i0, j) + t * field.u1_face(i0 + 1, j);
        let col = |c: usize| 0.5 * (field.u2_face(c, j) + field.u2_face(c, j + 1));
        let b = (1.0 - tc) * col(c0) + tc * col(c1);
        profile
            .z_samples
            .push(-0.5 * field.height_z + (j as f64 + 0.5) * dz);
        profile.u1.push(a);
        profile.u2.push(b);
    }
    Ok(profile)
}

/// Mean vertical-velocity ratio on the line, in `[0, 1]` for the squared form.
pub fn reward_r1(profile: &EvaluationProfile) -> Result<f64> {
    reward_r1_with(profile, RatioForm::Squared)
}

pub fn reward_r1_with(profile: &EvaluationProfile, form: RatioForm) -> Result<f64> {
    if profile.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation profile".into()));
    }
    let mut sum = 0.0;
    for (k, (&a, &b)) in profile.u1.iter().zip(&profile.u2).enumerate() {
        let mag2 = a * a + b * b;
        if mag2 == 0.0 {
            return Err(Error::Degenerate(format!(
                "stagnant sample {k} on the evaluation line"
            )));
        }
        sum += match form {
            RatioForm::Squared => b * b / mag2,
            RatioForm::Magnitude => b * b / mag2.sqrt(),
        };
    }
    Ok(sum / profile.len() as f64)
}

/// Spread `max |u| - min |u|` on the line.
pub fn reward_r2(profile: &EvaluationProfile) -> Result<f64> {
    if profile.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation profile".into()));
    }
    let (lo, hi) = profile
        .u1
        .iter()
        .zip(&profile.u2)
        .map(|(a, b)| a.hypot(*b))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
            (lo.min(m), hi.max(m))
        });
    Ok(hi - lo)
}

/// Tally of ground-truth evaluations; clones share the count.
#[derive(Debug, Clone, Default)]
pub struct SimulationCounter(Arc<AtomicU64>);

impl SimulationCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn increment(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Split of an objective value into its two penalty terms, when available.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub total: f64,
}

/// A ground-truth objective `R(theta)` on parameter vectors.
pub trait Objective: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Evaluates all terms and counts one simulation.
    fn evaluate_terms(&self, theta: &[f64]) -> Result<ObjectiveTerms>;
    fn simulations(&self) -> u64;

    fn evaluate(&self, theta: &[f64]) -> Result<f64> {
        self.evaluate_terms(theta).map(|t| t.total)
    }
}

fn check_dim(theta: &[f64], d: usize) -> Result<()> {
    if theta.len() != d {
        return Err(Error::InvalidArgument(format!(
            "expected a {d}-dimensional parameter, got {}",
            theta.len()
        )));
    }
    Ok(())
}

/// `R = R1 + R2` from a fresh channel solve at `theta = (f, b)`.
#[derive(Debug, Clone)]
pub struct StokesObjective {
    pub config: ChannelConfig,
    counter: SimulationCounter,
}

impl StokesObjective {
    pub fn new(config: ChannelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            counter: SimulationCounter::new(),
        })
    }

    pub fn shape(&self, f: f64, b: f64) -> Result<AirfoilShape> {
        let spec = AirfoilSpec::new(f, b)?.with_camber_amplitude(self.config.camber_amplitude)?;
        build_airfoil(&spec, self.config.shape_samples)
    }

    /// Solves and returns the field alongside the terms, for dumps.
    pub fn solve(&self, f: f64, b: f64) -> Result<(FlowField, ObjectiveTerms)> {
        self.counter.increment();
        let shape = self.shape(f, b)?;
        let field = solve_channel(Some(&shape), &self.config)?;
        if !field.converged {
            return Err(Error::Solver(format!(
                "residual {:.3e} above tolerance {:.1e} at (f, b) = ({f}, {b})",
                field.residual, self.config.solver_tol
            )));
        }
        let terms = terms_from_field(&field, &self.config)?;
        Ok((field, terms))
    }
}

pub fn terms_from_field(field: &FlowField, config: &ChannelConfig) -> Result<ObjectiveTerms> {
    let profile = sample_line(field, config)?;
    let r1 = reward_r1_with(&profile, config.ratio_form)?;
    let r2 = reward_r2(&profile)?;
    Ok(ObjectiveTerms {
        r1: Some(r1),
        r2: Some(r2),
        total: r1 + r2,
    })
}

impl Objective for StokesObjective {
    fn name(&self) -> &str {
        "stokes"
    }

    fn dim(&self) -> usize {
        2
    }

    fn evaluate_terms(&self, theta: &[f64]) -> Result<ObjectiveTerms> {
        check_dim(theta, 2)?;
        self.solve(theta[0], theta[1]).map(|(_, t)| t)
    }

    fn simulations(&self) -> u64 {
        self.counter.get()
    }
}

/// Wraps a closed-form function as a counted objective.
pub struct AnalyticObjective {
    name: String,
    dim: usize,
    func: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    counter: SimulationCounter,
}

impl std::fmt::Debug for AnalyticObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticObjective")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish()
    }
}

impl AnalyticObjective {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        func: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            func: Box::new(func),
            counter: SimulationCounter::new(),
        }
    }

    pub fn synthetic_valley() -> Self {
        Self::new("synthetic-valley", 2, |t| synthetic_valley_2d(t[0], t[1]))
    }

    pub fn fictitious() -> Self {
        Self::new("fictitious-1d", 1, |t| fictitious_1d(t[0]))
    }
}

impl Objective for AnalyticObjective {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate_terms(&self, theta: &[f64]) -> Result<ObjectiveTerms> {
        check_dim(theta, self.dim)?;
        self.counter.increment();
        let total = (self.func)(theta);
        if !total.is_finite() {
            return Err(Error::Backend(format!("{} returned {total} at {theta:?}", self.name)));
        }
        Ok(ObjectiveTerms {
            r1: None,
            r2: None,
            total,
        })
    }

    fn simulations(&self) -> u64 {
        self.counter.get()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ChannelConfig {
        ChannelConfig {
            nx: 32,
            nz: 40,
            ..ChannelConfig::default()
        }
    }

    #[test]
    fn r1_examples() {
        let p = EvaluationProfile::from_pairs(&[(1.0, 0.75); 4]);
        assert!((reward_r1(&p).unwrap() - 0.36).abs() < 1e-15);
        let p = EvaluationProfile::from_pairs(&[(1.0, 0.0); 3]);
        assert_eq!(reward_r1(&p).unwrap(), 0.0);
        let p = EvaluationProfile::from_pairs(&[(1.0, 1.0), (1.0, 0.0)]);
        assert!((reward_r1(&p).unwrap() - 0.25).abs() < 1e-15);
        let p = EvaluationProfile::from_pairs(&[(1.0, 1.0), (0.0, 0.0)]);
        assert!(matches!(reward_r1(&p), Err(Error::Degenerate(_))));
    }

    #[test]
    fn r1_magnitude_form() {
        let p = EvaluationProfile::from_pairs(&[(3.0, 4.0)]);
        assert!((reward_r1_with(&p, RatioForm::Magnitude).unwrap() - 16.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn r2_examples() {
        let p = EvaluationProfile::from_pairs(&[(1.0, 0.75); 5]);
        assert_eq!(reward_r2(&p).unwrap(), 0.0);
        let p = EvaluationProfile::from_pairs(&[(1.0, 0.0), (0.0, 2.0)]);
        assert!((reward_r2(&p).unwrap() - 1.0).abs() < 1e-15);
        let p = EvaluationProfile::from_pairs(&[(3.0, 4.0), (3.0, 4.0)]);
        assert_eq!(reward_r2(&p).unwrap(), 0.0);
        assert!(reward_r2(&EvaluationProfile::from_pairs(&[])).is_err());
    }

    #[test]
    fn uniform_field_samples_uniformly() {
        let cfg = small_config();
        let field = FlowField::uniform(&cfg, [1.0, 0.75]);
        let prof = sample_line(&field, &cfg).unwrap();
        assert_eq!(prof.len(), cfg.nz);
        assert!(prof.u1.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(prof.u2.iter().all(|&v| (v - 0.75).abs() < 1e-15));
    }

    #[test]
    fn odd_u2_has_zero_mean_on_line() {
        let cfg = small_config();
        let mut field = FlowField::uniform(&cfg, [1.0, 0.0]);
        let nz = cfg.nz;
        let dz = cfg.dz();
        for i in 0..cfg.nx {
            for j in 0..nz {
                let z = -0.5 * cfg.height_z + j as f64 * dz;
                field.u2[i * nz + j] = (2.0 * std::f64::consts::PI * z / cfg.height_z).sin();
            }
        }
        let prof = sample_line(&field, &cfg).unwrap();
        let mean = prof.u2.iter().sum::<f64>() / nz as f64;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn line_outside_domain_is_rejected() {
        let cfg = small_config();
        let field = FlowField::uniform(&cfg, [1.0, 0.0]);
        let bad = ChannelConfig {
            line_e_x: Some(5.0),
            ..cfg.clone()
        };
        assert!(sample_line(&field, &bad).is_err());
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_channel_is_uniform() {
        let cfg = small_config();
        let field = solve_channel(None, &cfg).unwrap();
        assert!(field.converged);
        for v in &field.u1 {
            assert!((v - 1.0).abs() < 1e-10);
        }
        for v in &field.u2 {
            assert!((v - 0.75).abs() < 1e-10);
        }
        let cfg0 = ChannelConfig {
            inflow: [1.0, 0.0],
            ..cfg
        };
        let field = solve_channel(None, &cfg0).unwrap();
        let prof = sample_line(&field, &cfg0).unwrap();
        assert!(prof.u2.iter().all(|v| v.abs() < 1e-10));
        assert_eq!(reward_r1(&prof).unwrap() < 1e-18, true);
    }

    #[test]
    fn airfoil_solve_is_divergence_free() {
        let cfg = small_config();
        let shape = build_airfoil(&AirfoilSpec::new(2.0, 2.0).unwrap(), 129).unwrap();
        let field = solve_channel(Some(&shape), &cfg).unwrap();
        assert!(field.converged, "residual {}", field.residual);
        assert!(field.max_divergence() <= 1e-6 * cfg.inflow_magnitude());
        // the body slows the flow inside it
        let min_speed = (0..cfg.nx)
            .flat_map(|i| (0..cfg.nz).map(move |j| (i, j)))
            .map(|(i, j)| {
                let (a, b) = field.cell_velocity(i, j);
                a.hypot(b)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(min_speed < 1e-2);
    }

    #[test]
    fn protruding_profile_is_rejected() {
        let cfg = ChannelConfig {
            height_z: 2.0,
            leading_edge_z: 0.0,
            ..small_config()
        };
        let shape = build_airfoil(&AirfoilSpec::new(2.0, 4.0).unwrap(), 65).unwrap();
        assert!(matches!(
            solve_channel(Some(&shape), &cfg),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn analytic_objective_counts() {
        let obj = AnalyticObjective::synthetic_valley();
        assert_eq!(obj.evaluate(&[2.0, 2.5]).unwrap(), 0.0);
        assert_eq!(obj.evaluate(&[3.0, 2.5]).unwrap(), 5.0);
        assert_eq!(obj.simulations(), 2);
        assert!(obj.evaluate(&[1.0]).is_err());
    }
}
