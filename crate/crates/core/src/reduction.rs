//! Mesoscopic optimization loop: evaluate the objective at a few sample
//! points of the current neighbourhood, fit the surrogate, estimate the value
//! function, move to its argmin, then decide which dimensions stay active and
//! how large the next neighbourhood is.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Objective;
use crate::grid_mdp::{make_neighborhood, ActionSet, GridPoint, Neighborhood, ParameterGrid};
use crate::value::{argmin_value, fit_surrogate, value_fixed_point, CoolingSchedule, SurrogateModel, ValueTable};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SampleRule {
    /// Corners of the box; endpoints plus one interior point for lines.
    #[default]
    Corners,
    /// Every member of the box.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FreezeMode {
    /// Stability is re-evaluated every cycle, so frozen dimensions can thaw.
    #[default]
    Alternating,
    /// Once frozen, a dimension stays frozen.
    Permanent,
    /// All dimensions stay active with the initial radii.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ResizePolicy {
    /// Active dimensions share a radius chosen so the member count is the
    /// largest value not exceeding the initial box.
    #[default]
    MatchCount,
    /// Active dimensions keep their initial radius.
    KeepRadius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub gamma: f64,
    pub epsilon: f64,
    pub schedule: CoolingSchedule,
    pub initial_radii: Vec<usize>,
    pub tol_v: f64,
    pub max_cycles: usize,
    pub max_j: usize,
    pub surrogate_samples: SampleRule,
    pub freeze: FreezeMode,
    pub resize: ResizePolicy,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            epsilon: 0.1,
            schedule: CoolingSchedule::default(),
            initial_radii: vec![3, 3],
            tol_v: 1e-2,
            max_cycles: 30,
            max_j: 30,
            surrogate_samples: SampleRule::Corners,
            freeze: FreezeMode::Alternating,
            resize: ResizePolicy::MatchCount,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument("gamma must lie in [0, 1)".into()));
        }
        if !(self.tol_v > 0.0) {
            return Err(Error::InvalidArgument("tol_v must be positive".into()));
        }
        if self.max_cycles == 0 || self.max_j == 0 {
            return Err(Error::InvalidArgument("max_cycles and max_j must be positive".into()));
        }
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub stable: Vec<bool>,
    /// Largest surrogate decrease from the centre along each axis line.
    pub axis_drop: Vec<f64>,
    /// Largest surrogate decrease from the centre over the whole box.
    pub full_drop: f64,
    /// Every dimension passed the test; the least stable one was kept active.
    pub all_stable: bool,
}

/// Flags dimension `j` as stable when the largest surrogate decrease along
/// the axis line through the centre is below `epsilon` times the largest
/// decrease over the box. At least one dimension is always left active.
pub fn stability_check(surrogate: &SurrogateModel, nb: &Neighborhood, epsilon: f64) -> StabilityReport {
    let c = &nb.center;
    let vc = surrogate.eval(c);
    let drop = |p: &GridPoint| vc - surrogate.eval(p);
    let full_drop = nb.members().iter().map(drop).fold(f64::NEG_INFINITY, f64::max);
    let axis_drop: Vec<f64> = (0..nb.dim())
        .map(|j| {
            nb.axis_line(c, j)
                .into_iter()
                .map(|k| drop(&nb.members()[k]))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let mut stable: Vec<bool> = axis_drop.iter().map(|&a| a < epsilon * full_drop).collect();
    let all_stable = stable.iter().all(|&s| s);
    if all_stable {
        let keep = (0..stable.len())
            .max_by(|&a, &b| axis_drop[a].total_cmp(&axis_drop[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        stable[keep] = false;
    }
    StabilityReport {
        stable,
        axis_drop,
        full_drop,
        all_stable,
    }
}

/// New radii after freezing: stable dimensions get radius 0 and the active
/// ones are sized by `policy`. A radius never exceeds what is needed to
/// cover the whole grid line from `center`. A mask with every dimension
/// stable is treated like one with none.
pub fn resize_neighborhood(
    grid: &ParameterGrid,
    center: &GridPoint,
    base_radii: &[usize],
    stable: &[bool],
    policy: ResizePolicy,
) -> Vec<usize> {
    if !stable.iter().any(|&s| s) || stable.iter().all(|&s| s) {
        return base_radii.to_vec();
    }
    let cap = |i: usize| {
        let c = center.0[i];
        c.max(grid.counts()[i] - 1 - c)
    };
    let active = stable.iter().filter(|&&s| !s).count() as u32;
    let shared = match policy {
        ResizePolicy::KeepRadius => None,
        ResizePolicy::MatchCount => {
            let target: usize = base_radii.iter().map(|r| 2 * r + 1).product();
            let mut r = 0usize;
            while (2 * (r + 1) + 1).pow(active) <= target {
                r += 1;
            }
            Some(r)
        }
    };
    (0..stable.len())
        .map(|i| {
            if stable[i] {
                0
            } else {
                shared.unwrap_or(base_radii[i]).min(cap(i))
            }
        })
        .collect()
}

/// Surrogate sample points for a box, excluding the centre.
pub fn sample_points(nb: &Neighborhood, rule: SampleRule) -> Vec<GridPoint> {
    let c = &nb.center;
    let mut pts: Vec<GridPoint> = match rule {
        SampleRule::Full => nb.members().to_vec(),
        SampleRule::Corners => {
            let ext = nb.extents();
            let long: Vec<usize> = (0..ext.len()).filter(|&i| ext[i] > 1).collect();
            let mut pts = nb.corners();
            if long.len() == 1 {
                let i = long[0];
                // the far side of the centre gets one interior point
                let (lo_gap, hi_gap) = (c.0[i] - nb.lower[i], nb.upper[i] - c.0[i]);
                let mut p = c.clone();
                if hi_gap >= lo_gap && hi_gap >= 2 {
                    p.0[i] = c.0[i] + hi_gap / 2;
                    pts.push(p);
                } else if lo_gap >= 2 {
                    p.0[i] = c.0[i] - lo_gap / 2;
                    pts.push(p);
                }
            }
            pts
        }
    };
    pts.retain(|p| p != c);
    pts.sort();
    pts.dedup();
    pts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub n: usize,
    pub center: GridPoint,
    pub center_coords: Vec<f64>,
    pub radii: Vec<usize>,
    /// Side lengths of the clipped box.
    pub extents: Vec<usize>,
    pub members: usize,
    pub action_set: Vec<usize>,
    pub frozen_dims: Vec<usize>,
    pub samples: Vec<GridPoint>,
    pub surrogate: SurrogateModel,
    pub value_table: ValueTable,
    pub argmin: GridPoint,
    pub argmin_coords: Vec<f64>,
    pub true_objective_at_center: f64,
    pub true_objective_at_argmin: f64,
    pub simulations_this_cycle: u64,
    pub stability: Option<StabilityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "message", rename_all = "kebab-case")]
pub enum TerminationReason {
    Converged,
    MaxCycles,
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub schema_version: u32,
    pub objective: String,
    pub grid: ParameterGrid,
    pub config: OptimizerConfig,
    pub cycles: Vec<CycleRecord>,
    pub total_simulations: u64,
    pub terminated_reason: TerminationReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Converged,
    MaxCycles,
}

/// Grid-exact convergence test on the latest cycle.
pub fn terminate_check(trace: &OptimizationTrace) -> Decision {
    match trace.cycles.last() {
        Some(last) if last.argmin == last.center => Decision::Converged,
        Some(_) if trace.cycles.len() >= trace.config.max_cycles => Decision::MaxCycles,
        _ => Decision::Continue,
    }
}

impl OptimizationTrace {
    /// Sum of the path length counted in cycles.
    pub fn path_length(&self) -> usize {
        self.cycles.len()
    }

    pub fn total_iterations(&self) -> usize {
        self.cycles.iter().map(|c| c.value_table.iterations).sum()
    }

    /// Box sizes per cycle with repeats collapsed, e.g. `(7x7)^2, (13x1)`.
    pub fn neighborhood_sequence(&self) -> String {
        let mut parts: Vec<(String, usize)> = Vec::new();
        for c in &self.cycles {
            let label: Vec<String> = c.extents.iter().map(|e| e.to_string()).collect();
            let label = format!("({})", label.join("x"));
            match parts.last_mut() {
                Some((l, n)) if *l == label => *n += 1,
                _ => parts.push((label, 1)),
            }
        }
        parts
            .into_iter()
            .map(|(l, n)| if n == 1 { l } else { format!("{l}^{n}") })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn final_center(&self) -> Option<&GridPoint> {
        self.cycles.last().map(|c| &c.argmin)
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self).map_err(|e| Error::Io(e.to_string()))
    }

    /// One row per cycle: centre, objective there, fresh simulations,
    /// frozen dimensions and radii.
    pub fn write_csv<W: Write>(&self, mut out: W, names: &[String]) -> Result<()> {
        let radii: Vec<String> = names.iter().map(|n| format!("radii_{n}")).collect();
        writeln!(out, "cycle,{},R,simulations,frozen_dims,{}", names.join(","), radii.join(","))?;
        for c in &self.cycles {
            let coords: Vec<String> = c.center_coords.iter().map(|v| format!("{v}")).collect();
            let frozen: Vec<&str> = c.frozen_dims.iter().map(|&i| names[i].as_str()).collect();
            let r: Vec<String> = c.radii.iter().map(|v| v.to_string()).collect();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                c.n,
                coords.join(","),
                c.true_objective_at_center,
                c.simulations_this_cycle,
                frozen.join(";"),
                r.join(",")
            )?;
        }
        Ok(())
    }
}

/// Default coordinate names: `f, b` in two dimensions, `x0, x1, ...` otherwise.
pub fn default_names(d: usize) -> Vec<String> {
    if d == 2 {
        vec!["f".into(), "b".into()]
    } else {
        (0..d).map(|i| format!("x{i}")).collect()
    }
}

struct Evaluator<'a> {
    grid: &'a ParameterGrid,
    objective: &'a dyn Objective,
    cache: BTreeMap<GridPoint, f64>,
    fresh: u64,
}

impl Evaluator<'_> {
    fn get(&mut self, p: &GridPoint) -> Result<f64> {
        if let Some(&v) = self.cache.get(p) {
            return Ok(v);
        }
        let v = self.objective.evaluate(&self.grid.point(p))?;
        self.cache.insert(p.clone(), v);
        self.fresh += 1;
        Ok(v)
    }
}

/// Runs cycles from `theta0` until the value argmin coincides with the
/// centre or `max_cycles` is reached. Objective failures end the run with
/// an error reason; the trace up to that point is kept.
pub fn run(
    theta0: &GridPoint,
    grid: &ParameterGrid,
    config: &OptimizerConfig,
    objective: &dyn Objective,
) -> Result<OptimizationTrace> {
    config.validate()?;
    if !grid.contains(theta0) {
        return Err(Error::OffGrid(theta0.0.iter().map(|&k| k as f64).collect()));
    }
    let d = grid.dim();
    if config.initial_radii.len() != d || objective.dim() != d {
        return Err(Error::InvalidArgument(format!(
            "grid has {d} dimensions, radii {} and objective {}",
            config.initial_radii.len(),
            objective.dim()
        )));
    }
    let mut trace = OptimizationTrace {
        schema_version: TRACE_SCHEMA_VERSION,
        objective: objective.name().to_string(),
        grid: grid.clone(),
        config: config.clone(),
        cycles: Vec::new(),
        total_simulations: 0,
        terminated_reason: TerminationReason::MaxCycles,
    };
    let mut eval = Evaluator {
        grid,
        objective,
        cache: BTreeMap::new(),
        fresh: 0,
    };
    let mut center = theta0.clone();
    let mut radii = config.initial_radii.clone();
    let mut frozen = vec![false; d];

    loop {
        match cycle(&mut eval, &trace, &center, &radii, &frozen, config) {
            Ok(record) => {
                trace.total_simulations += record.simulations_this_cycle;
                let next = record.argmin.clone();
                let stability = record.stability.clone();
                trace.cycles.push(record);
                match terminate_check(&trace) {
                    Decision::Converged => {
                        trace.terminated_reason = TerminationReason::Converged;
                        break;
                    }
                    Decision::MaxCycles => {
                        trace.terminated_reason = TerminationReason::MaxCycles;
                        break;
                    }
                    Decision::Continue => {}
                }
                if let Some(report) = stability {
                    frozen = match config.freeze {
                        FreezeMode::Permanent => {
                            let mut f: Vec<bool> =
                                frozen.iter().zip(&report.stable).map(|(a, b)| *a || *b).collect();
                            if f.iter().all(|&x| x) {
                                f = report.stable.clone();
                            }
                            f
                        }
                        _ => report.stable,
                    };
                }
                radii = resize_neighborhood(grid, &next, &config.initial_radii, &frozen, config.resize);
                center = next;
            }
            Err(e) => {
                trace.total_simulations = eval.fresh;
                trace.terminated_reason = TerminationReason::Error(e.to_string());
                break;
            }
        }
    }
    Ok(trace)
}

fn cycle(
    eval: &mut Evaluator<'_>,
    trace: &OptimizationTrace,
    center: &GridPoint,
    radii: &[usize],
    frozen: &[bool],
    config: &OptimizerConfig,
) -> Result<CycleRecord> {
    let grid = eval.grid;
    let before = eval.fresh;
    let nb = make_neighborhood(grid, center, radii)?;
    let actions = ActionSet::from_mask(frozen.iter().map(|f| !f).collect());
    let r_center = eval.get(center)?;
    for p in &sample_points(&nb, config.surrogate_samples) {
        eval.get(p)?;
    }
    // every ground truth already known inside the box joins the fit
    let data: Vec<(GridPoint, f64)> = eval
        .cache
        .iter()
        .filter(|(p, _)| *p != center && nb.contains(p))
        .map(|(p, v)| (p.clone(), *v))
        .collect();
    let samples: Vec<GridPoint> = data.iter().map(|(p, _)| p.clone()).collect();
    let surrogate = if data.is_empty() {
        SurrogateModel {
            center: center.clone(),
            center_value: r_center,
            coeffs: vec![0.0; crate::value::feature_count(grid.dim())],
        }
    } else {
        fit_surrogate(center, r_center, &data)?
    };
    let rhat = surrogate.values_on(&nb);
    let table = value_fixed_point(&nb, &rhat, &actions, config.gamma, &config.schedule, config.tol_v, config.max_j)?;
    let argmin = argmin_value(&table);
    let r_argmin = eval.get(&argmin)?;
    let stability = if config.freeze == FreezeMode::Disabled || argmin == *center {
        None
    } else {
        let reference = make_neighborhood(grid, &argmin, &config.initial_radii)?;
        Some(stability_check(&surrogate, &reference, config.epsilon))
    };
    Ok(CycleRecord {
        n: trace.cycles.len(),
        center: center.clone(),
        center_coords: grid.point(center),
        radii: radii.to_vec(),
        extents: nb.extents(),
        members: nb.len(),
        action_set: actions.changeable_dims(),
        frozen_dims: (0..frozen.len()).filter(|&i| frozen[i]).collect(),
        samples,
        surrogate,
        value_table: table,
        argmin_coords: grid.point(&argmin),
        argmin,
        true_objective_at_center: r_center,
        true_objective_at_argmin: r_argmin,
        simulations_this_cycle: eval.fresh - before,
        stability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::AnalyticObjective;

    fn g(v: &[usize]) -> GridPoint {
        GridPoint(v.to_vec())
    }

    fn valley_grid() -> ParameterGrid {
        ParameterGrid::new(vec![1.5, 1.5], vec![4.0, 4.0], vec![0.1, 0.1]).unwrap()
    }

    fn quad(center: GridPoint, coeffs: [f64; 5]) -> SurrogateModel {
        SurrogateModel {
            center,
            center_value: 0.0,
            coeffs: coeffs.to_vec(),
        }
    }

    #[test]
    fn stability_examples() {
        let grid = valley_grid();
        let c = g(&[10, 10]);
        let nb = make_neighborhood(&grid, &c, &[3, 3]).unwrap();
        // constant in f, linear in b
        let r = stability_check(&quad(c.clone(), [0.0, 0.0, 0.0, 0.0, 1.0]), &nb, 0.01);
        assert_eq!(r.stable, vec![true, false]);
        // isotropic bowl away from its minimum
        let iso = quad(c.clone(), [1.0, 1.0, 0.0, 2.0, 2.0]);
        assert_eq!(stability_check(&iso, &nb, 0.1).stable, vec![false, false]);
        // steep in f, shallow in b
        let aniso = quad(c.clone(), [0.0, 0.0, 0.0, 25.0, 1.0]);
        assert_eq!(stability_check(&aniso, &nb, 0.1).stable, vec![false, true]);
    }

    #[test]
    fn all_stable_keeps_least_stable_active() {
        let grid = valley_grid();
        let c = g(&[10, 10]);
        let nb = make_neighborhood(&grid, &c, &[3, 3]).unwrap();
        // a saddle: the largest drop is off both axes
        let s = quad(c, [0.0, 0.0, -10.0, 0.01, 0.02]);
        let r = stability_check(&s, &nb, 0.5);
        assert!(r.all_stable);
        assert_eq!(r.stable, vec![true, false]);
    }

    #[test]
    fn resize_examples() {
        let grid = valley_grid();
        let c = g(&[12, 12]);
        let r = resize_neighborhood(&grid, &c, &[3, 3], &[false, true], ResizePolicy::MatchCount);
        assert_eq!(r, vec![13, 0]);
        let wide = ParameterGrid::new(vec![0.0, 0.0], vec![100.0, 10.0], vec![1.0, 1.0]).unwrap();
        let r = resize_neighborhood(&wide, &g(&[50, 5]), &[3, 3], &[false, true], ResizePolicy::MatchCount);
        assert_eq!(r, vec![24, 0]);
        let r = resize_neighborhood(&wide, &g(&[50, 5]), &[3, 3], &[true, false], ResizePolicy::MatchCount);
        assert_eq!(r, vec![0, 5]);
        assert_eq!(make_neighborhood(&wide, &g(&[50, 5]), &r).unwrap().len(), 11);
        let r = resize_neighborhood(&grid, &c, &[1, 1], &[false, false], ResizePolicy::MatchCount);
        assert_eq!(r, vec![1, 1]);
        let r = resize_neighborhood(&grid, &c, &[2, 2], &[true, false], ResizePolicy::KeepRadius);
        assert_eq!(r, vec![0, 2]);
    }

    #[test]
    fn line_samples_include_interior_point() {
        let grid = valley_grid();
        let nb = make_neighborhood(&grid, &g(&[10, 10]), &[3, 0]).unwrap();
        let pts = sample_points(&nb, SampleRule::Corners);
        assert_eq!(pts, vec![g(&[7, 10]), g(&[11, 10]), g(&[13, 10])]);
        let short = make_neighborhood(&grid, &g(&[10, 10]), &[1, 0]).unwrap();
        assert_eq!(sample_points(&short, SampleRule::Corners).len(), 2);
        let square = make_neighborhood(&grid, &g(&[10, 10]), &[3, 3]).unwrap();
        assert_eq!(sample_points(&square, SampleRule::Corners).len(), 4);
    }

    #[test]
    fn start_at_minimum_terminates_in_one_cycle() {
        let grid = valley_grid();
        let obj = AnalyticObjective::synthetic_valley();
        let start = grid.locate(&[2.0, 2.5]).unwrap();
        let cfg = OptimizerConfig {
            initial_radii: vec![1, 1],
            ..OptimizerConfig::default()
        };
        let t = run(&start, &grid, &cfg, &obj).unwrap();
        assert_eq!(t.cycles.len(), 1);
        assert_eq!(t.terminated_reason, TerminationReason::Converged);
        assert_eq!(t.cycles[0].argmin, start);
        assert_eq!(t.total_simulations, obj.simulations());
        assert_eq!(t.cycles[0].simulations_this_cycle, 5);
    }

    #[test]
    fn valley_descent_is_monotone_and_budget_consistent() {
        let grid = valley_grid();
        let obj = AnalyticObjective::synthetic_valley();
        let start = grid.locate(&[3.5, 1.7]).unwrap();
        let t = run(&start, &grid, &OptimizerConfig::default(), &obj).unwrap();
        assert_eq!(t.terminated_reason, TerminationReason::Converged);
        let rs: Vec<f64> = t.cycles.iter().map(|c| c.true_objective_at_center).collect();
        assert!(rs.windows(2).all(|w| w[1] <= w[0]), "{rs:?}");
        assert_eq!(t.total_simulations, obj.simulations());
        let sum: u64 = t.cycles.iter().map(|c| c.simulations_this_cycle).sum();
        assert_eq!(sum, t.total_simulations);
        for c in &t.cycles {
            for &i in &c.frozen_dims {
                assert_eq!(c.argmin.0[i], c.center.0[i]);
            }
        }
    }

    #[test]
    fn backend_failure_is_reported_in_trace() {
        let grid = valley_grid();
        let obj = AnalyticObjective::new("nan", 2, |x| if x[0] > 2.9 { f64::NAN } else { -x[0] });
        let start = grid.locate(&[2.5, 2.5]).unwrap();
        let t = run(&start, &grid, &OptimizerConfig::default(), &obj).unwrap();
        assert!(matches!(t.terminated_reason, TerminationReason::Error(_)));
    }

    #[test]
    fn off_grid_start_is_rejected() {
        let grid = valley_grid();
        let obj = AnalyticObjective::synthetic_valley();
        assert!(run(&g(&[40, 0]), &grid, &OptimizerConfig::default(), &obj).is_err());
    }
}
