//! Local quadratic surrogate and the self-consistent value-function
//! fixed point with exact and Monte-Carlo evaluators.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_mdp::{sample_row, transition_matrix, ActionSet, GridPoint, Neighborhood, ParameterGrid, TransitionModel};

/// Quadratic in grid-step displacements `x = s - center` with the constant
/// term pinned to the centre value. Coefficients are ordered squares,
/// cross terms `x_i x_j` (i < j), then linear terms; for d = 2 this is
/// `(a, b, c, d, e)` multiplying `(x², y², xy, x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub center: GridPoint,
    pub center_value: f64,
    pub coeffs: Vec<f64>,
}

pub fn feature_count(d: usize) -> usize {
    2 * d + d * (d.saturating_sub(1)) / 2
}

pub fn quadratic_features(x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut out = Vec::with_capacity(feature_count(d));
    out.extend(x.iter().map(|v| v * v));
    for i in 0..d {
        for j in i + 1..d {
            out.push(x[i] * x[j]);
        }
    }
    out.extend_from_slice(x);
    out
}

fn displacement(center: &GridPoint, p: &GridPoint) -> Vec<f64> {
    p.0.iter()
        .zip(&center.0)
        .map(|(&a, &c)| a as f64 - c as f64)
        .collect()
}

impl SurrogateModel {
    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// Evaluates at a displacement given in grid steps.
    pub fn eval_offset(&self, x: &[f64]) -> f64 {
        self.center_value
            + quadratic_features(x)
                .iter()
                .zip(&self.coeffs)
                .map(|(f, c)| f * c)
                .sum::<f64>()
    }

    pub fn eval(&self, p: &GridPoint) -> f64 {
        if *p == self.center {
            return self.center_value;
        }
        self.eval_offset(&displacement(&self.center, p))
    }

    /// Surrogate values on every member of `nb`, in member order.
    pub fn values_on(&self, nb: &Neighborhood) -> Vec<f64> {
        nb.members().iter().map(|p| self.eval(p)).collect()
    }
}

/// Fits the pinned quadratic through `samples`. Exact when the system is
/// square and regular, minimum-norm when underdetermined and least-squares
/// when overdetermined.
pub fn fit_surrogate(
    center: &GridPoint,
    center_value: f64,
    samples: &[(GridPoint, f64)],
) -> Result<SurrogateModel> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("surrogate needs at least one sample".into()));
    }
    let d = center.dim();
    let m = feature_count(d);
    for (k, (p, v)) in samples.iter().enumerate() {
        if p.dim() != d {
            return Err(Error::InvalidArgument(format!("sample {k} has the wrong dimension")));
        }
        if p == center {
            return Err(Error::InvalidArgument(format!("sample {k} coincides with the centre")));
        }
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("sample {k} has a non-finite value")));
        }
        if samples[..k].iter().any(|(q, _)| q == p) {
            return Err(Error::InvalidArgument(format!("duplicate sample point {:?}", p.0)));
        }
    }
    let a = DMatrix::from_fn(samples.len(), m, |r, c| {
        quadratic_features(&displacement(center, &samples[r].0))[c]
    });
    let rhs = DVector::from_iterator(samples.len(), samples.iter().map(|(_, v)| v - center_value));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return Err(Error::Degenerate("surrogate system has rank zero".into()));
    }
    let eps = smax * 1e-12 * samples.len().max(m) as f64;
    let coeffs = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::Degenerate(format!("surrogate solve failed: {e}")))?;
    Ok(SurrogateModel {
        center: center.clone(),
        center_value,
        coeffs: coeffs.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// `beta_j = ln(2 + j) / T0`, increasing in j.
    #[default]
    StandardLog,
    /// `beta_j = 1 / (T0 ln(2 + j))`, decreasing in j.
    InverseLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoolingSchedule {
    pub kind: ScheduleKind,
    pub t0: f64,
}

impl CoolingSchedule {
    pub fn new(kind: ScheduleKind, t0: f64) -> Self {
        Self { kind, t0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature scale {} must be positive and finite",
                self.t0
            )));
        }
        Ok(())
    }

    pub fn beta(&self, j: usize) -> f64 {
        let l = (2.0 + j as f64).ln();
        match self.kind {
            ScheduleKind::StandardLog => l / self.t0,
            ScheduleKind::InverseLog => 1.0 / (self.t0 * l),
        }
    }
}

impl Default for CoolingSchedule {
    fn default() -> Self {
        Self::new(ScheduleKind::StandardLog, 0.01)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub members: Vec<GridPoint>,
    pub values: Vec<f64>,
    pub gamma: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm change per iteration.
    pub history: Vec<f64>,
    /// Inverse temperature used in each iteration.
    pub betas: Vec<f64>,
    pub horizon: usize,
}

/// Smallest `T` with `gamma^(T+1) max|r| / (1 - gamma) <= tol`, from the
/// closed form `ceil(ln(tol (1 - gamma) / max|r|) / ln gamma)`.
pub fn truncation_horizon(tol: f64, gamma: f64, max_abs: f64) -> usize {
    if gamma <= 0.0 || max_abs <= 0.0 {
        return 0;
    }
    let t = ((tol * (1.0 - gamma) / max_abs).ln() / gamma.ln()).ceil();
    if t.is_finite() && t > 0.0 {
        t as usize
    } else {
        0
    }
}

/// `sum_{t=0}^{horizon} gamma^t P^t r`, together with `P^(horizon+1) r`.
fn powered_sum(model: &TransitionModel, r: &[f64], gamma: f64, horizon: usize) -> (Vec<f64>, Vec<f64>) {
    let mut acc = r.to_vec();
    let mut term = r.to_vec();
    let mut g = 1.0;
    for _ in 0..horizon {
        term = model.apply(&term);
        g *= gamma;
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += g * t;
        }
    }
    let next = model.apply(&term);
    (acc, next)
}

/// Exact truncated discounted return `sum_{t=0}^{horizon} gamma^t (P^t r)(s)`.
pub fn discounted_return(model: &TransitionModel, r: &[f64], gamma: f64, horizon: usize) -> Vec<f64> {
    powered_sum(model, r, gamma, horizon).0
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("discount {gamma} must lie in [0, 1)")));
    }
    Ok(())
}

/// Affine image of `v` onto `[0, 1]`, which makes the kernel temperature
/// dimensionless and independent of the iteration index.
pub fn normalize_unit_spread(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return v.to_vec();
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Fixed-point iteration `V <- sum_t gamma^t P(V, beta_j)^t R` starting from
/// `V = R`. The kernel of iteration j is built from `V` mapped affinely onto
/// `[0, 1]` at inverse temperature `beta_j`. The series is truncated at
/// the tolerance-derived horizon and the remainder is closed with
/// `gamma^(T+1) / (1 - gamma) P^(T+1) R`, which keeps every iterate inside
/// `[min R, max R] / (1 - gamma)`. `tol_v` is relative to the spread of
/// `R / (1 - gamma)`; iteration stops once the sup-norm change drops below it.
pub fn value_fixed_point(
    nb: &Neighborhood,
    surrogate_values: &[f64],
    actions: &ActionSet,
    gamma: f64,
    schedule: &CoolingSchedule,
    tol_v: f64,
    max_j: usize,
) -> Result<ValueTable> {
    value_iterates(nb, surrogate_values, actions, gamma, schedule, tol_v, max_j).map(|(t, _)| t)
}

/// As [`value_fixed_point`], also returning every iterate `V^(0), V^(1), ...`.
pub fn value_iterates(
    nb: &Neighborhood,
    surrogate_values: &[f64],
    actions: &ActionSet,
    gamma: f64,
    schedule: &CoolingSchedule,
    tol_v: f64,
    max_j: usize,
) -> Result<(ValueTable, Vec<Vec<f64>>)> {
    check_gamma(gamma)?;
    schedule.validate()?;
    if nb.is_empty() {
        return Err(Error::InvalidArgument("empty neighbourhood".into()));
    }
    if !(tol_v > 0.0) {
        return Err(Error::InvalidArgument(format!("value tolerance {tol_v} must be positive")));
    }
    if surrogate_values.len() != nb.len() {
        return Err(Error::InvalidArgument(format!(
            "{} surrogate values for {} members",
            surrogate_values.len(),
            nb.len()
        )));
    }
    let r = surrogate_values;
    let max_abs = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let r_min = r.iter().cloned().fold(f64::INFINITY, f64::min);
    let r_max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = (r_min / (1.0 - gamma), r_max / (1.0 - gamma));
    let r_spread = r_max - r_min;
    let tol_abs = if r_spread > 0.0 {
        tol_v * r_spread / (1.0 - gamma)
    } else {
        tol_v
    };
    let horizon = truncation_horizon(tol_abs, gamma, max_abs);
    let tail = if gamma == 0.0 {
        0.0
    } else {
        gamma.powi(horizon as i32 + 1) / (1.0 - gamma)
    };

    let mut v = r.to_vec();
    let mut iterates = vec![v.clone()];
    let mut history = Vec::new();
    let mut betas = Vec::new();
    let mut converged = false;
    for j in 0..max_j {
        let beta = schedule.beta(j);
        let model = transition_matrix(nb, &normalize_unit_spread(&v), actions, beta)?;
        let (acc, next) = powered_sum(&model, r, gamma, horizon);
        let new: Vec<f64> = acc
            .iter()
            .zip(&next)
            // clamp only absorbs rounding; the closed series is a convex mix
            .map(|(a, n)| (a + tail * n).clamp(lo, hi))
            .collect();
        let delta = new
            .iter()
            .zip(&v)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = new;
        iterates.push(v.clone());
        history.push(delta);
        betas.push(beta);
        if delta < tol_abs {
            converged = true;
            break;
        }
    }
    let table = ValueTable {
        members: nb.members().to_vec(),
        values: v,
        gamma,
        iterations: history.len(),
        converged,
        history,
        betas,
        horizon,
    };
    Ok((table, iterates))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// Monte-Carlo discounted return under the fixed kernel built from the
/// surrogate values at inverse temperature `beta`. Walks of `horizon` steps
/// accumulate `sum_{t=0}^{horizon} gamma^t R(X_t)`.
#[allow(clippy::too_many_arguments)]
pub fn mc_value_estimate(
    nb: &Neighborhood,
    surrogate_values: &[f64],
    actions: &ActionSet,
    gamma: f64,
    beta: f64,
    n_walks: usize,
    horizon: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_gamma(gamma)?;
    if horizon < 1 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if n_walks < 1 {
        return Err(Error::InvalidArgument("at least one walk is required".into()));
    }
    let model = transition_matrix(nb, surrogate_values, actions, beta)?;
    let r = surrogate_values;
    let mut mean = Vec::with_capacity(nb.len());
    let mut std_error = Vec::with_capacity(nb.len());
    for s in 0..nb.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n_walks {
            let mut state = s;
            let mut total = r[s];
            let mut g = 1.0;
            for _ in 0..horizon {
                state = sample_row(&model.rows[state], rng.random::<f64>());
                g *= gamma;
                total += g * r[state];
            }
            sum += total;
            sum_sq += total * total;
        }
        let n = n_walks as f64;
        let m = sum / n;
        let var = if n_walks > 1 {
            ((sum_sq - n * m * m) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        mean.push(m);
        std_error.push((var / n).sqrt());
    }
    Ok(McEstimate { mean, std_error })
}

/// Member with the smallest value; ties go to the lexicographically
/// smallest multi-index.
pub fn argmin_value(table: &ValueTable) -> GridPoint {
    let mut best = 0;
    for k in 1..table.values.len() {
        let (v, b) = (table.values[k], table.values[best]);
        if v < b || (v == b && table.members[k] < table.members[best]) {
            best = k;
        }
    }
    table.members[best].clone()
}

pub fn write_history_csv<W: Write>(mut out: W, table: &ValueTable) -> Result<()> {
    writeln!(out, "j,sup_delta,beta_j")?;
    for (j, (d, b)) in table.history.iter().zip(&table.betas).enumerate() {
        writeln!(out, "{j},{d},{b}")?;
    }
    Ok(())
}

pub fn write_value_csv<W: Write>(mut out: W, grid: &ParameterGrid, table: &ValueTable, names: &[&str]) -> Result<()> {
    writeln!(out, "{},V", names.join(","))?;
    for (p, v) in table.members.iter().zip(&table.values) {
        let coords: Vec<String> = grid.point(p).iter().map(|c| format!("{c}")).collect();
        writeln!(out, "{},{v}", coords.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_mdp::make_neighborhood;

    fn g(v: &[usize]) -> GridPoint {
        GridPoint(v.to_vec())
    }

    fn box2(n: usize, r: usize) -> (ParameterGrid, Neighborhood) {
        let grid = ParameterGrid::new(vec![0.0, 0.0], vec![n as f64 - 1.0; 2], vec![1.0, 1.0]).unwrap();
        let c = g(&[n / 2, n / 2]);
        let nb = make_neighborhood(&grid, &c, &[r, r]).unwrap();
        (grid, nb)
    }

    #[test]
    fn recovers_quadratic_from_five_points() {
        let c = g(&[10, 10]);
        let truth = SurrogateModel {
            center: c.clone(),
            center_value: 1.5,
            coeffs: vec![0.7, -0.2, 0.3, 1.1, -0.9],
        };
        let pts = [g(&[12, 10]), g(&[10, 13]), g(&[11, 11]), g(&[8, 10]), g(&[10, 9])];
        let samples: Vec<_> = pts.iter().map(|p| (p.clone(), truth.eval(p))).collect();
        let fit = fit_surrogate(&c, 1.5, &samples).unwrap();
        for (a, b) in fit.coeffs.iter().zip(&truth.coeffs) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(fit.eval(&c), 1.5);
    }

    #[test]
    fn four_corners_of_pure_square() {
        let c = g(&[5, 5]);
        let corners = [g(&[2, 2]), g(&[2, 8]), g(&[8, 2]), g(&[8, 8])];
        let samples: Vec<_> = corners.iter().map(|p| (p.clone(), 2.0 + 0.5 * 9.0)).collect();
        let fit = fit_surrogate(&c, 2.0, &samples).unwrap();
        for (p, v) in &samples {
            assert!((fit.eval(p) - v).abs() < 1e-12);
        }
        // minimum norm splits the curvature evenly between both squares
        assert!((fit.coeffs[0] - 0.25).abs() < 1e-12);
        assert!((fit.coeffs[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn constant_samples_give_zero_coefficients() {
        let c = g(&[3, 3]);
        let samples = vec![(g(&[0, 0]), 4.0), (g(&[6, 6]), 4.0), (g(&[0, 6]), 4.0)];
        let fit = fit_surrogate(&c, 4.0, &samples).unwrap();
        assert!(fit.coeffs.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn surrogate_input_errors() {
        let c = g(&[3, 3]);
        assert!(fit_surrogate(&c, 0.0, &[]).is_err());
        assert!(fit_surrogate(&c, 0.0, &[(c.clone(), 1.0)]).is_err());
        assert!(fit_surrogate(&c, 0.0, &[(g(&[1, 1]), 1.0), (g(&[1, 1]), 2.0)]).is_err());
    }

    #[test]
    fn schedules() {
        let s = CoolingSchedule::new(ScheduleKind::StandardLog, 2.0);
        assert!((s.beta(0) - 2f64.ln() / 2.0).abs() < 1e-15);
        assert!(s.beta(5) > s.beta(4));
        let p = CoolingSchedule::new(ScheduleKind::InverseLog, 2.0);
        assert!((p.beta(0) - 1.0 / (2.0 * 2f64.ln())).abs() < 1e-15);
        assert!(p.beta(5) < p.beta(4));
        assert!(CoolingSchedule::new(ScheduleKind::StandardLog, 0.0).validate().is_err());
    }

    #[test]
    fn horizon_formula() {
        assert_eq!(truncation_horizon(1e-6, 0.0, 5.0), 0);
        let t = truncation_horizon(1e-6, 0.9, 1.0);
        assert_eq!(t, ((1e-7f64).ln() / 0.9f64.ln()).ceil() as usize);
        assert!(0.9f64.powi(t as i32) <= 1e-7 * 1.0000001);
    }

    #[test]
    fn gamma_zero_returns_surrogate() {
        let (_, nb) = box2(9, 2);
        let r: Vec<f64> = (0..nb.len()).map(|k| ((k * 13) % 7) as f64 - 2.5).collect();
        let t = value_fixed_point(&nb, &r, &ActionSet::all(2), 0.0, &CoolingSchedule::default(), 1e-9, 10).unwrap();
        assert_eq!(t.values, r);
        assert!(t.converged);
        let mc = mc_value_estimate(&nb, &r, &ActionSet::all(2), 0.0, 1.0, 3, 5, 11).unwrap();
        assert_eq!(mc.mean, r);
    }

    #[test]
    fn constant_reward_gives_geometric_sum() {
        let (_, nb) = box2(9, 1);
        let r = vec![2.0; nb.len()];
        let t = value_fixed_point(&nb, &r, &ActionSet::all(2), 0.9, &CoolingSchedule::default(), 1e-9, 10).unwrap();
        assert!(t.values.iter().all(|v| (v - 20.0).abs() < 1e-9));
    }

    #[test]
    fn frozen_walks_accumulate_geometric_partial_sum() {
        let (_, nb) = box2(9, 1);
        let r: Vec<f64> = (0..nb.len()).map(|k| k as f64).collect();
        let mc = mc_value_estimate(&nb, &r, &ActionSet::none(2), 0.5, 3.0, 4, 6, 2).unwrap();
        let factor = (1.0 - 0.5f64.powi(7)) / 0.5;
        for (m, v) in mc.mean.iter().zip(&r) {
            assert!((m - v * factor).abs() < 1e-12);
        }
    }

    #[test]
    fn mc_matches_exact_on_small_box() {
        let (_, nb) = box2(9, 1);
        let r: Vec<f64> = (0..nb.len()).map(|k| ((k * 5) % 9) as f64 * 0.3).collect();
        let a = ActionSet::all(2);
        let mc = mc_value_estimate(&nb, &r, &a, 0.8, 0.7, 4000, 30, 5).unwrap();
        let model = transition_matrix(&nb, &r, &a, 0.7).unwrap();
        let exact = discounted_return(&model, &r, 0.8, 30);
        for s in 0..nb.len() {
            assert!((mc.mean[s] - exact[s]).abs() <= 4.0 * mc.std_error[s] + 1e-12);
        }
    }

    #[test]
    fn argmin_ties_prefer_lexicographic() {
        let t = ValueTable {
            members: vec![g(&[0, 1]), g(&[1, 0]), g(&[1, 1])],
            values: vec![2.0, 1.0, 1.0],
            gamma: 0.5,
            iterations: 1,
            converged: true,
            history: vec![0.0],
            betas: vec![1.0],
            horizon: 0,
        };
        assert_eq!(argmin_value(&t), g(&[1, 0]));
        let single = ValueTable {
            members: vec![g(&[4])],
            values: vec![9.0],
            ..t
        };
        assert_eq!(argmin_value(&single), g(&[4]));
    }

    #[test]
    fn invalid_gamma_is_rejected() {
        let (_, nb) = box2(5, 1);
        let r = vec![0.0; nb.len()];
        let s = CoolingSchedule::default();
        assert!(value_fixed_point(&nb, &r, &ActionSet::all(2), 1.0, &s, 1e-6, 3).is_err());
        assert!(mc_value_estimate(&nb, &r, &ActionSet::all(2), 0.5, 1.0, 1, 0, 0).is_err());
    }
}
