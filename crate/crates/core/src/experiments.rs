//! Experiment drivers behind the CLI: landscape sweeps, walk comparisons,
//! the one-dimensional fixed-point demonstration and the two optimizer
//! comparisons.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flow::Objective;
use crate::grid_mdp::{hitting_time_experiment, ActionSet, GridPoint, HittingTimeStats, Neighborhood, ParameterGrid, WalkMode};
use crate::reduction::{run, FreezeMode, OptimizationTrace, OptimizerConfig, ResizePolicy, TerminationReason};
use crate::value::{value_iterates, CoolingSchedule, ValueTable};

/// Starting points of the first optimizer comparison.
pub const EXP1_STARTS: [[f64; 2]; 6] = [
    [2.2, 1.7],
    [2.2, 2.6],
    [3.0, 1.7],
    [3.0, 2.6],
    [3.9, 1.7],
    [3.9, 2.6],
];

/// Remote start of the second optimizer comparison.
pub const EXP2_START: [f64; 2] = [9.7, 3.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeRow {
    pub theta: Vec<f64>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    /// NaN when the evaluation failed.
    pub r: f64,
    pub error: Option<String>,
}

/// Evaluates the objective at every grid node; failures are kept per row.
pub fn landscape(grid: &ParameterGrid, objective: &dyn Objective) -> Vec<LandscapeRow> {
    grid.points()
        .map(|p| {
            let theta = grid.point(&p);
            match objective.evaluate_terms(&theta) {
                Ok(t) => LandscapeRow {
                    theta,
                    r1: t.r1,
                    r2: t.r2,
                    r: t.total,
                    error: None,
                },
                Err(e) => LandscapeRow {
                    theta,
                    r1: None,
                    r2: None,
                    r: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Index of the smallest successful row; ties keep the first.
pub fn landscape_argmin(rows: &[LandscapeRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, row) in rows.iter().enumerate() {
        if row.error.is_none() && best.is_none_or(|b| row.r < rows[b].r) {
            best = Some(k);
        }
    }
    best
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn write_landscape_csv<W: Write>(mut out: W, rows: &[LandscapeRow], names: &[String]) -> Result<()> {
    writeln!(out, "{},R1,R2,R,error", names.join(","))?;
    for row in rows {
        let coords: Vec<String> = row.theta.iter().map(|c| format!("{c}")).collect();
        let err = row.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(out, "{},{},{},{},{}", coords.join(","), opt(row.r1), opt(row.r2), row.r, err)?;
    }
    Ok(())
}

/// Objective values at every grid node in lexicographic order.
pub fn grid_values(grid: &ParameterGrid, objective: &dyn Objective) -> Result<Vec<f64>> {
    grid.points().map(|p| objective.evaluate(&grid.point(&p))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkComparison {
    pub fixed: HittingTimeStats,
    pub free: HittingTimeStats,
}

pub fn walk_comparison(
    grid: &ParameterGrid,
    values: &[f64],
    start: &GridPoint,
    n_walks: usize,
    max_steps: usize,
    schedule: &CoolingSchedule,
    seed: u64,
) -> Result<WalkComparison> {
    let run = |mode| hitting_time_experiment(grid, values, start, mode, n_walks, max_steps, schedule, seed);
    Ok(WalkComparison {
        fixed: run(WalkMode::FixedDimensionSequential)?,
        free: run(WalkMode::Free)?,
    })
}

pub fn write_walk_summary_csv<W: Write>(mut out: W, cmp: &WalkComparison) -> Result<()> {
    writeln!(out, "mode,n_walks,mean,median,censored")?;
    for s in [&cmp.fixed, &cmp.free] {
        let censored = s.censored.iter().filter(|&&c| c).count();
        writeln!(out, "{},{},{},{},{censored}", s.mode.label(), s.times.len(), s.mean, s.median)?;
    }
    Ok(())
}

/// Strict local minima of a sampled 1-D function; endpoints compare one side.
pub fn local_minima(v: &[f64]) -> Vec<usize> {
    (0..v.len())
        .filter(|&k| (k == 0 || v[k] < v[k - 1]) && (k + 1 == v.len() || v[k] < v[k + 1]))
        .collect()
}

/// Discrete second difference `v[k-1] - 2 v[k] + v[k+1]`; zero at the ends.
pub fn second_difference(v: &[f64], k: usize) -> f64 {
    if k == 0 || k + 1 >= v.len() {
        return 0.0;
    }
    v[k - 1] - 2.0 * v[k] + v[k + 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointRun {
    pub iterates: Vec<Vec<f64>>,
    pub table: ValueTable,
    /// Local minima of the objective (indices into the grid).
    pub minima: Vec<usize>,
    /// `curvature[j][m]`: second difference of `V^(j)` at minimum `m`.
    pub curvature: Vec<Vec<f64>>,
}

/// Fixed-point iterations on a whole one-dimensional grid.
pub fn fixed_point_demo(
    grid: &ParameterGrid,
    r: &[f64],
    gamma: f64,
    schedule: &CoolingSchedule,
    iterations: usize,
    tol_v: f64,
) -> Result<FixedPointRun> {
    let nb = Neighborhood::whole(grid);
    let (table, iterates) = value_iterates(&nb, r, &ActionSet::all(grid.dim()), gamma, schedule, tol_v, iterations)?;
    let minima = local_minima(r);
    let curvature = iterates
        .iter()
        .map(|v| minima.iter().map(|&k| second_difference(v, k)).collect())
        .collect();
    Ok(FixedPointRun {
        iterates,
        table,
        minima,
        curvature,
    })
}

/// Wide table: one row per grid node, one `V<j>` column per iterate.
pub fn write_iterates_csv<W: Write>(mut out: W, grid: &ParameterGrid, run: &FixedPointRun) -> Result<()> {
    let cols: Vec<String> = (0..run.iterates.len()).map(|j| format!("V{j}")).collect();
    writeln!(out, "x,{}", cols.join(","))?;
    for (k, p) in grid.points().enumerate() {
        let vals: Vec<String> = run.iterates.iter().map(|v| format!("{}", v[k])).collect();
        writeln!(out, "{},{}", grid.point(&p)[0], vals.join(","))?;
    }
    Ok(())
}

/// Per-iteration metrics: sup-norm change, inverse temperature and the
/// second difference at each local minimum of the objective.
pub fn write_sharpening_csv<W: Write>(mut out: W, grid: &ParameterGrid, run: &FixedPointRun) -> Result<()> {
    let cols: Vec<String> = run
        .minima
        .iter()
        .map(|&k| format!("curv_x={}", grid.coordinate(0, k)))
        .collect();
    writeln!(out, "j,sup_delta,beta_j,{}", cols.join(","))?;
    for (j, curv) in run.curvature.iter().enumerate() {
        let (delta, beta) = if j == 0 {
            (String::new(), String::new())
        } else {
            (format!("{}", run.table.history[j - 1]), format!("{}", run.table.betas[j - 1]))
        };
        let c: Vec<String> = curv.iter().map(|x| format!("{x}")).collect();
        writeln!(out, "{j},{delta},{beta},{}", c.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub path_length: usize,
    pub simulations: u64,
    pub iterations: usize,
    pub neighborhoods: String,
    pub reason: String,
    pub final_point: Vec<f64>,
}

impl VariantOutcome {
    fn from_run(result: Result<OptimizationTrace>, grid: &ParameterGrid) -> Self {
        match result {
            Ok(t) => VariantOutcome {
                path_length: t.path_length(),
                simulations: t.total_simulations,
                iterations: t.total_iterations(),
                neighborhoods: t.neighborhood_sequence(),
                reason: match &t.terminated_reason {
                    TerminationReason::Converged => "converged".into(),
                    TerminationReason::MaxCycles => "max-cycles".into(),
                    TerminationReason::Error(m) => format!("error: {m}"),
                },
                final_point: t.final_center().map(|p| grid.point(p)).unwrap_or_default(),
            },
            Err(e) => VariantOutcome {
                path_length: 0,
                simulations: 0,
                iterations: 0,
                neighborhoods: String::new(),
                reason: format!("error: {e}"),
                final_point: Vec::new(),
            },
        }
    }

    pub fn converged(&self) -> bool {
        self.reason == "converged"
    }
}

pub type ObjectiveFactory<'a> = &'a dyn Fn() -> Result<Box<dyn Objective>>;

fn run_variant(
    grid: &ParameterGrid,
    start: &[f64],
    config: &OptimizerConfig,
    make_objective: ObjectiveFactory<'_>,
) -> VariantOutcome {
    let result = grid
        .locate(start)
        .and_then(|p| make_objective().and_then(|obj| run(&p, grid, config, obj.as_ref())));
    VariantOutcome::from_run(result, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Row {
    pub run: usize,
    pub start: Vec<f64>,
    pub fixed: VariantOutcome,
    pub adaptive: VariantOutcome,
}

/// Square neighbourhoods with all dimensions active against adaptive
/// rectangles, from each start.
pub fn exp1(
    grid: &ParameterGrid,
    starts: &[Vec<f64>],
    base: &OptimizerConfig,
    make_objective: ObjectiveFactory<'_>,
) -> Vec<Exp1Row> {
    let fixed_cfg = OptimizerConfig {
        freeze: FreezeMode::Disabled,
        ..base.clone()
    };
    let adaptive_cfg = OptimizerConfig {
        freeze: FreezeMode::Alternating,
        resize: ResizePolicy::MatchCount,
        ..base.clone()
    };
    starts
        .iter()
        .enumerate()
        .map(|(k, s)| Exp1Row {
            run: k + 1,
            start: s.clone(),
            fixed: run_variant(grid, s, &fixed_cfg, make_objective),
            adaptive: run_variant(grid, s, &adaptive_cfg, make_objective),
        })
        .collect()
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
    parts.join(";")
}

pub fn write_exp1_csv<W: Write>(mut out: W, rows: &[Exp1Row]) -> Result<()> {
    writeln!(
        out,
        "run,start,fixed_neighborhoods,fixed_path,fixed_simulations,fixed_end,fixed_status,\
         adaptive_neighborhoods,adaptive_path,adaptive_simulations,adaptive_end,adaptive_status"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.run,
            fmt_point(&r.start),
            r.fixed.neighborhoods,
            r.fixed.path_length,
            r.fixed.simulations,
            fmt_point(&r.fixed.final_point),
            r.fixed.reason.replace(',', ";"),
            r.adaptive.neighborhoods,
            r.adaptive.path_length,
            r.adaptive.simulations,
            fmt_point(&r.adaptive.final_point),
            r.adaptive.reason.replace(',', ";"),
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Row {
    pub radius: usize,
    pub quadratic: VariantOutcome,
    pub rectangle: VariantOutcome,
}

/// Square neighbourhoods of each radius against width-one rectangles of the
/// same half-length, from one start.
pub fn exp2(
    grid: &ParameterGrid,
    start: &[f64],
    radii: &[usize],
    base: &OptimizerConfig,
    make_objective: ObjectiveFactory<'_>,
) -> Vec<Exp2Row> {
    radii
        .iter()
        .map(|&r| {
            let square = OptimizerConfig {
                initial_radii: vec![r; grid.dim()],
                freeze: FreezeMode::Disabled,
                ..base.clone()
            };
            let rect = OptimizerConfig {
                initial_radii: vec![r; grid.dim()],
                freeze: FreezeMode::Alternating,
                resize: ResizePolicy::KeepRadius,
                ..base.clone()
            };
            Exp2Row {
                radius: r,
                quadratic: run_variant(grid, start, &square, make_objective),
                rectangle: run_variant(grid, start, &rect, make_objective),
            }
        })
        .collect()
}

pub fn write_exp2_csv<W: Write>(mut out: W, rows: &[Exp2Row]) -> Result<()> {
    writeln!(
        out,
        "radius,quad_neighborhoods,quad_path,quad_iterations,quad_simulations,quad_status,\
         rect_neighborhoods,rect_path,rect_iterations,rect_simulations,rect_status"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.radius,
            r.quadratic.neighborhoods,
            r.quadratic.path_length,
            r.quadratic.iterations,
            r.quadratic.simulations,
            r.quadratic.reason.replace(',', ";"),
            r.rectangle.neighborhoods,
            r.rectangle.path_length,
            r.rectangle.iterations,
            r.rectangle.simulations,
            r.rectangle.reason.replace(',', ";"),
        )?;
    }
    Ok(())
}
