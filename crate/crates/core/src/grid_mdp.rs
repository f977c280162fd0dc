//! Discrete parameter grid, neighbourhood boxes, single-coordinate action
//! sets and the Metropolis transition kernel built from a value table.

use std::collections::BTreeSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::CoolingSchedule;

/// Multi-index into a [`ParameterGrid`]. Ordering is lexicographic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPoint(pub Vec<usize>);

impl GridPoint {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn differs_only_in(&self, other: &GridPoint, dims: &[bool]) -> bool {
        self.0
            .iter()
            .zip(&other.0)
            .zip(dims)
            .all(|((a, b), &free)| free || a == b)
    }
}

impl From<Vec<usize>> for GridPoint {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Cartesian grid `[min_i, max_i] ∩ (min_i + step_i Z)` per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    min: Vec<f64>,
    max: Vec<f64>,
    step: Vec<f64>,
    counts: Vec<usize>,
}

const GRID_TOL: f64 = 1e-9;

impl ParameterGrid {
    pub fn new(min: Vec<f64>, max: Vec<f64>, step: Vec<f64>) -> Result<Self> {
        let d = min.len();
        if d == 0 || max.len() != d || step.len() != d {
            return Err(Error::InvalidArgument(
                "grid bounds and steps must share a positive dimension".into(),
            ));
        }
        let mut counts = Vec::with_capacity(d);
        for i in 0..d {
            if !(step[i] > 0.0) {
                return Err(Error::InvalidArgument(format!("grid step {i} must be positive")));
            }
            let intervals = (max[i] - min[i]) / step[i];
            let rounded = intervals.round();
            if !(rounded >= 1.0) || (intervals - rounded).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "grid dimension {i}: (max - min) / step = {intervals} is not a positive integer"
                )));
            }
            counts.push(rounded as usize + 1);
        }
        Ok(Self {
            min,
            max,
            step,
            counts,
        })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    pub fn step(&self) -> &[f64] {
        &self.step
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node coordinate, snapped to 1e-9 so decimal grids print cleanly.
    pub fn coordinate(&self, dim: usize, index: usize) -> f64 {
        let x = self.min[dim] + index as f64 * self.step[dim];
        (x * 1e9).round() / 1e9
    }

    pub fn point(&self, p: &GridPoint) -> Vec<f64> {
        p.0.iter()
            .enumerate()
            .map(|(i, &k)| self.coordinate(i, k))
            .collect()
    }

    pub fn contains(&self, p: &GridPoint) -> bool {
        p.dim() == self.dim() && p.0.iter().zip(&self.counts).all(|(k, n)| k < n)
    }

    /// Exact lookup of a parameter vector; fails unless it sits on a node.
    pub fn locate(&self, theta: &[f64]) -> Result<GridPoint> {
        if theta.len() != self.dim() {
            return Err(Error::OffGrid(theta.to_vec()));
        }
        let mut idx = Vec::with_capacity(theta.len());
        for (i, &t) in theta.iter().enumerate() {
            let s = (t - self.min[i]) / self.step[i];
            let k = s.round();
            if (s - k).abs() > GRID_TOL * s.abs().max(1.0) * 1e3 || k < 0.0 || k as usize >= self.counts[i] {
                return Err(Error::OffGrid(theta.to_vec()));
            }
            idx.push(k as usize);
        }
        Ok(GridPoint(idx))
    }

    /// Nearest node, clamped to the bounds.
    pub fn nearest(&self, theta: &[f64]) -> GridPoint {
        GridPoint(
            theta
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let k = ((t - self.min[i]) / self.step[i]).round().max(0.0) as usize;
                    k.min(self.counts[i] - 1)
                })
                .collect(),
        )
    }

    /// Row-major flat index (first dimension outermost).
    pub fn flat_index(&self, p: &GridPoint) -> usize {
        p.0.iter()
            .zip(&self.counts)
            .fold(0, |acc, (&k, &n)| acc * n + k)
    }

    pub fn from_flat(&self, mut flat: usize) -> GridPoint {
        let mut idx = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            idx[i] = flat % self.counts[i];
            flat /= self.counts[i];
        }
        GridPoint(idx)
    }

    /// All nodes in lexicographic order.
    pub fn points(&self) -> impl Iterator<Item = GridPoint> + '_ {
        (0..self.len()).map(|k| self.from_flat(k))
    }
}

/// Axis-aligned box of grid nodes around a centre, clipped to the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub center: GridPoint,
    pub radii: Vec<usize>,
    /// Inclusive per-dimension index bounds after clipping.
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
    /// Whether clipping removed nodes in each dimension.
    pub clipped: Vec<bool>,
    members: Vec<GridPoint>,
}

pub fn make_neighborhood(
    grid: &ParameterGrid,
    center: &GridPoint,
    radii: &[usize],
) -> Result<Neighborhood> {
    if !grid.contains(center) {
        return Err(Error::OffGrid(center.0.iter().map(|&k| k as f64).collect()));
    }
    if radii.len() != grid.dim() {
        return Err(Error::InvalidArgument(format!(
            "{} radii for a {}-dimensional grid",
            radii.len(),
            grid.dim()
        )));
    }
    let mut lower = Vec::with_capacity(grid.dim());
    let mut upper = Vec::with_capacity(grid.dim());
    let mut clipped = Vec::with_capacity(grid.dim());
    for (i, (&c, &r)) in center.0.iter().zip(radii).enumerate() {
        let lo = c.saturating_sub(r);
        let hi = (c + r).min(grid.counts()[i] - 1);
        clipped.push(lo != c.wrapping_sub(r) || c < r || hi != c + r);
        lower.push(lo);
        upper.push(hi);
    }
    let mut nb = Neighborhood {
        center: center.clone(),
        radii: radii.to_vec(),
        lower,
        upper,
        clipped,
        members: Vec::new(),
    };
    let total: usize = nb.extents().iter().product();
    nb.members = (0..total).map(|k| nb.member_from_offset(k)).collect();
    Ok(nb)
}

impl Neighborhood {
    /// The whole grid as a single neighbourhood.
    pub fn whole(grid: &ParameterGrid) -> Self {
        let center = GridPoint(grid.counts().iter().map(|n| n / 2).collect());
        let radii: Vec<usize> = grid.counts().to_vec();
        make_neighborhood(grid, &center, &radii).expect("centre lies on the grid")
    }

    pub fn extents(&self) -> Vec<usize> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l + 1)
            .collect()
    }

    fn member_from_offset(&self, mut k: usize) -> GridPoint {
        let ext = self.extents();
        let mut idx = vec![0; ext.len()];
        for i in (0..ext.len()).rev() {
            idx[i] = self.lower[i] + k % ext[i];
            k /= ext[i];
        }
        GridPoint(idx)
    }

    pub fn members(&self) -> &[GridPoint] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn index_of(&self, p: &GridPoint) -> Option<usize> {
        if p.dim() != self.dim() {
            return None;
        }
        let ext = self.extents();
        let mut flat = 0;
        for i in 0..ext.len() {
            let k = p.0[i];
            if k < self.lower[i] || k > self.upper[i] {
                return None;
            }
            flat = flat * ext[i] + (k - self.lower[i]);
        }
        Some(flat)
    }

    pub fn contains(&self, p: &GridPoint) -> bool {
        self.index_of(p).is_some()
    }

    pub fn center_index(&self) -> usize {
        self.index_of(&self.center).expect("centre is a member")
    }

    /// Distinct corners of the clipped box in lexicographic order.
    pub fn corners(&self) -> Vec<GridPoint> {
        let d = self.dim();
        let mut set = BTreeSet::new();
        for mask in 0..(1usize << d) {
            let idx = (0..d)
                .map(|i| {
                    if mask >> (d - 1 - i) & 1 == 1 {
                        self.upper[i]
                    } else {
                        self.lower[i]
                    }
                })
                .collect();
            set.insert(GridPoint(idx));
        }
        set.into_iter().collect()
    }

    /// Member indices on the axis line through `through` along `dim`.
    pub fn axis_line(&self, through: &GridPoint, dim: usize) -> Vec<usize> {
        (self.lower[dim]..=self.upper[dim])
            .filter_map(|k| {
                let mut p = through.clone();
                p.0[dim] = k;
                self.index_of(&p)
            })
            .collect()
    }
}

/// Subset of dimensions allowed to move by one grid step per transition.
/// The stay move is always available.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionSet {
    changeable: Vec<bool>,
}

impl ActionSet {
    pub fn all(d: usize) -> Self {
        Self {
            changeable: vec![true; d],
        }
    }

    pub fn none(d: usize) -> Self {
        Self {
            changeable: vec![false; d],
        }
    }

    pub fn from_dims(d: usize, dims: &[usize]) -> Result<Self> {
        let mut changeable = vec![false; d];
        for &i in dims {
            if i >= d {
                return Err(Error::InvalidArgument(format!(
                    "dimension {i} out of range for d = {d}"
                )));
            }
            changeable[i] = true;
        }
        Ok(Self { changeable })
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self { changeable: mask }
    }

    pub fn dim(&self) -> usize {
        self.changeable.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.changeable
    }

    pub fn is_changeable(&self, dim: usize) -> bool {
        self.changeable[dim]
    }

    pub fn changeable_dims(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.changeable[i]).collect()
    }

    pub fn is_empty(&self) -> bool {
        !self.changeable.iter().any(|&c| c)
    }

    /// Signed single-coordinate moves `(dim, ±1)`; the stay move is implicit.
    pub fn moves(&self) -> Vec<(usize, i8)> {
        self.changeable_dims()
            .into_iter()
            .flat_map(|i| [(i, -1), (i, 1)])
            .collect()
    }

    /// True for the stay move or a one-step change of a single changeable coordinate.
    pub fn allows(&self, from: &GridPoint, to: &GridPoint) -> bool {
        let mut changed = None;
        for (i, (a, b)) in from.0.iter().zip(&to.0).enumerate() {
            if a != b {
                if changed.is_some() || a.abs_diff(*b) != 1 || !self.changeable[i] {
                    return false;
                }
                changed = Some(i);
            }
        }
        true
    }

    /// Compact label such as `{0,1}`.
    pub fn label(&self) -> String {
        let dims: Vec<String> = self.changeable_dims().iter().map(|d| d.to_string()).collect();
        format!("{{{}}}", dims.join(","))
    }
}

/// Row-stochastic kernel over neighbourhood members; rows hold
/// `(target, probability)` sorted by target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    pub rows: Vec<Vec<(usize, f64)>>,
}

/// One Metropolis row: weight `exp(-beta * max(v(t) - v(s), 0))` for the stay
/// move and every allowed single-step target inside the neighbourhood.
pub(crate) fn metropolis_row(
    nb: &Neighborhood,
    values: &[f64],
    actions: &ActionSet,
    beta: f64,
    state: usize,
) -> Vec<(usize, f64)> {
    let from = &nb.members()[state];
    let v0 = values[state];
    let mut row = vec![(state, 1.0)];
    for (dim, delta) in actions.moves() {
        let k = from.0[dim] as i64 + delta as i64;
        if k < 0 {
            continue;
        }
        let mut to = from.clone();
        to.0[dim] = k as usize;
        if let Some(t) = nb.index_of(&to) {
            let rise = (values[t] - v0).max(0.0);
            row.push((t, (-beta * rise).exp()));
        }
    }
    let total: f64 = row.iter().map(|(_, w)| w).sum();
    for entry in row.iter_mut() {
        entry.1 /= total;
    }
    row.sort_by_key(|e| e.0);
    row
}

fn check_kernel_inputs(nb: &Neighborhood, values: &[f64], actions: &ActionSet, beta: f64) -> Result<()> {
    if values.len() != nb.len() {
        return Err(Error::InvalidArgument(format!(
            "{} values for a neighbourhood of {} members",
            values.len(),
            nb.len()
        )));
    }
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("missing or non-finite value at member {k}")));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "inverse temperature {beta} must be finite and non-negative"
        )));
    }
    if actions.dim() != nb.dim() {
        return Err(Error::InvalidArgument("action set dimension mismatch".into()));
    }
    Ok(())
}

/// Builds the Metropolis kernel on `nb` from `values` (aligned with members).
pub fn transition_matrix(
    nb: &Neighborhood,
    values: &[f64],
    actions: &ActionSet,
    beta: f64,
) -> Result<TransitionModel> {
    check_kernel_inputs(nb, values, actions, beta)?;
    let rows = (0..nb.len())
        .map(|s| metropolis_row(nb, values, actions, beta, s))
        .collect();
    Ok(TransitionModel { rows })
}

impl TransitionModel {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[from]
            .binary_search_by_key(&to, |e| e.0)
            .map(|k| self.rows[from][k].1)
            .unwrap_or(0.0)
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        self.rows
            .iter()
            .map(|row| {
                let mut d = vec![0.0; n];
                for &(t, p) in row {
                    d[t] = p;
                }
                d
            })
            .collect()
    }

    /// `(P x)(s) = sum_t P[s, t] x[t]`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(t, p)| p * x[t]).sum())
            .collect()
    }
}

/// Draws the next state from a row by inversion of the cumulative weights.
pub(crate) fn sample_row(row: &[(usize, f64)], u: f64) -> usize {
    let mut acc = 0.0;
    for &(t, p) in row {
        acc += p;
        if u < acc {
            return t;
        }
    }
    row.last().map(|e| e.0).expect("rows are never empty")
}

/// Samples a walk of `steps` transitions; step `t` uses
/// `schedule[min(t, len - 1)]`.
pub fn sample_walk(
    schedule: &[TransitionModel],
    nb: &Neighborhood,
    start: &GridPoint,
    steps: usize,
    seed: u64,
) -> Result<Vec<GridPoint>> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty kernel schedule".into()));
    }
    if schedule.iter().any(|m| m.len() != nb.len()) {
        return Err(Error::InvalidArgument("kernel size does not match neighbourhood".into()));
    }
    let mut state = nb
        .index_of(start)
        .ok_or_else(|| Error::OutOfDomain(format!("start {:?} outside the neighbourhood", start.0)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = Vec::with_capacity(steps + 1);
    path.push(nb.members()[state].clone());
    for t in 0..steps {
        let model = &schedule[t.min(schedule.len() - 1)];
        state = sample_row(&model.rows[state], rng.random::<f64>());
        path.push(nb.members()[state].clone());
    }
    Ok(path)
}

/// Writes `step,<coordinates...>,value` rows for a walk path.
pub fn write_walk_csv<W: Write>(
    mut out: W,
    grid: &ParameterGrid,
    path: &[GridPoint],
    value: impl Fn(&GridPoint) -> f64,
    names: &[&str],
) -> Result<()> {
    writeln!(out, "step,{},value", names.join(","))?;
    for (t, p) in path.iter().enumerate() {
        let coords: Vec<String> = grid.point(p).iter().map(|c| format!("{c}")).collect();
        writeln!(out, "{t},{},{}", coords.join(","), value(p))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkMode {
    /// Freeze the most significant dimension, walk the rest until the line
    /// minimum is reached, then rotate which dimension is frozen.
    FixedDimensionSequential,
    Free,
}

impl WalkMode {
    pub fn label(&self) -> &'static str {
        match self {
            WalkMode::FixedDimensionSequential => "fixed",
            WalkMode::Free => "free",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingTimeStats {
    pub mode: WalkMode,
    /// First-passage step per walk; censored walks report `max_steps`.
    pub times: Vec<usize>,
    pub censored: Vec<bool>,
    pub mean: f64,
    pub median: f64,
}

fn median(sorted: &[usize]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) as f64
    }
}

/// Per-walk state for the dimension-rotation rule of the fixed mode.
struct PhaseRotation {
    order: Vec<usize>,
    phase: usize,
}

impl PhaseRotation {
    fn actions(&self, d: usize) -> ActionSet {
        if d == 1 {
            return ActionSet::all(1);
        }
        let frozen = self.order[self.phase % d];
        ActionSet::from_mask((0..d).map(|i| i != frozen).collect())
    }
}

/// Index of the minimum value over nodes that differ from `at` only in `free` dims.
fn slice_argmin(nb: &Neighborhood, values: &[f64], at: &GridPoint, free: &[bool]) -> usize {
    let mut best = (f64::INFINITY, usize::MAX);
    for (k, p) in nb.members().iter().enumerate() {
        if p.differs_only_in(at, free) && values[k] < best.0 {
            best = (values[k], k);
        }
    }
    best.1
}

/// Whole-grid walk setup shared by the hitting-time runs.
struct WalkSetup<'a> {
    nb: Neighborhood,
    values: &'a [f64],
    target: usize,
    start: usize,
    order: Vec<usize>,
}

impl<'a> WalkSetup<'a> {
    fn new(grid: &ParameterGrid, values: &'a [f64], start: &GridPoint) -> Result<Self> {
        let nb = Neighborhood::whole(grid);
        check_kernel_inputs(&nb, values, &ActionSet::all(grid.dim()), 0.0)?;
        let start_idx = nb
            .index_of(start)
            .ok_or_else(|| Error::OutOfDomain(format!("start {:?} is off the grid", start.0)))?;
        let min_v = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let argmins: Vec<usize> = (0..values.len()).filter(|&k| values[k] == min_v).collect();
        if argmins.len() != 1 {
            return Err(Error::Degenerate(format!(
                "objective has {} global minimisers; a unique one is required",
                argmins.len()
            )));
        }
        // significance: objective range along each axis through the start
        let d = grid.dim();
        let mut spread: Vec<(usize, f64)> = (0..d)
            .map(|i| {
                let (lo, hi) = nb
                    .axis_line(start, i)
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| {
                        (lo.min(values[k]), hi.max(values[k]))
                    });
                (i, hi - lo)
            })
            .collect();
        spread.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(Self {
            nb,
            values,
            target: argmins[0],
            start: start_idx,
            order: spread.into_iter().map(|(i, _)| i).collect(),
        })
    }

    /// One annealed walk; returns the first-passage step and, if asked, the
    /// visited states.
    fn walk(
        &self,
        mode: WalkMode,
        max_steps: usize,
        schedule: &CoolingSchedule,
        seed: u64,
        walk_id: u64,
        record: bool,
    ) -> (Option<usize>, Vec<usize>) {
        let d = self.nb.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(walk_id);
        let mut rotation = PhaseRotation {
            order: self.order.clone(),
            phase: 0,
        };
        let mut state = self.start;
        let mut path = if record { vec![state] } else { Vec::new() };
        let mut hit = (state == self.target).then_some(0);
        let mut t = 0;
        while hit.is_none() && t < max_steps {
            let actions = match mode {
                WalkMode::Free => ActionSet::all(d),
                WalkMode::FixedDimensionSequential => rotation.actions(d),
            };
            let row = metropolis_row(&self.nb, self.values, &actions, schedule.beta(t), state);
            state = sample_row(&row, rng.random::<f64>());
            t += 1;
            if record {
                path.push(state);
            }
            if state == self.target {
                hit = Some(t);
            } else if mode == WalkMode::FixedDimensionSequential && d > 1 {
                let here = &self.nb.members()[state];
                if slice_argmin(&self.nb, self.values, here, actions.mask()) == state {
                    rotation.phase += 1;
                }
            }
        }
        (hit, path)
    }
}

/// First-passage times of annealed Metropolis walks on the whole grid.
///
/// `values` holds the objective at every grid node in lexicographic order.
/// Step `t` uses inverse temperature `schedule.beta(t)`. Walk `w` draws from
/// stream `w` of the seeded generator, so both modes see the same random
/// numbers.
#[allow(clippy::too_many_arguments)]
pub fn hitting_time_experiment(
    grid: &ParameterGrid,
    values: &[f64],
    start: &GridPoint,
    mode: WalkMode,
    n_walks: usize,
    max_steps: usize,
    schedule: &CoolingSchedule,
    seed: u64,
) -> Result<HittingTimeStats> {
    schedule.validate()?;
    let setup = WalkSetup::new(grid, values, start)?;
    let mut times = Vec::with_capacity(n_walks);
    let mut censored = Vec::with_capacity(n_walks);
    for w in 0..n_walks {
        let (hit, _) = setup.walk(mode, max_steps, schedule, seed, w as u64, false);
        censored.push(hit.is_none());
        times.push(hit.unwrap_or(max_steps));
    }
    let mut sorted = times.clone();
    sorted.sort_unstable();
    let mean = if times.is_empty() {
        f64::NAN
    } else {
        times.iter().sum::<usize>() as f64 / times.len() as f64
    };
    Ok(HittingTimeStats {
        mode,
        median: median(&sorted),
        mean,
        times,
        censored,
    })
}

/// The visited states of walk `walk_id` of [`hitting_time_experiment`].
#[allow(clippy::too_many_arguments)]
pub fn hitting_walk_path(
    grid: &ParameterGrid,
    values: &[f64],
    start: &GridPoint,
    mode: WalkMode,
    max_steps: usize,
    schedule: &CoolingSchedule,
    seed: u64,
    walk_id: u64,
) -> Result<Vec<GridPoint>> {
    schedule.validate()?;
    let setup = WalkSetup::new(grid, values, start)?;
    let (_, path) = setup.walk(mode, max_steps, schedule, seed, walk_id, true);
    Ok(path.into_iter().map(|k| setup.nb.members()[k].clone()).collect())
}

/// Writes `mode,walk_id,steps,censored` rows.
pub fn write_hitting_csv<W: Write>(mut out: W, stats: &[HittingTimeStats]) -> Result<()> {
    writeln!(out, "mode,walk_id,steps,censored")?;
    for s in stats {
        for (w, (t, c)) in s.times.iter().zip(&s.censored).enumerate() {
            writeln!(out, "{},{w},{t},{c}", s.mode.label())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::ScheduleKind;

    fn grid2(n: usize) -> ParameterGrid {
        ParameterGrid::new(vec![0.0, 0.0], vec![n as f64 - 1.0; 2], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn grid_validation_and_lookup() {
        assert!(ParameterGrid::new(vec![0.0], vec![1.0], vec![0.3]).is_err());
        assert!(ParameterGrid::new(vec![0.0], vec![1.0], vec![0.0]).is_err());
        let g = ParameterGrid::new(vec![1.5, 1.5], vec![4.0, 4.0], vec![0.1, 0.1]).unwrap();
        assert_eq!(g.counts(), &[26, 26]);
        let p = g.locate(&[3.9, 2.6]).unwrap();
        assert_eq!(p, GridPoint(vec![24, 11]));
        assert!(g.locate(&[3.95, 2.6]).is_err());
        assert!(g.locate(&[4.1, 2.6]).is_err());
        assert_eq!(g.from_flat(g.flat_index(&p)), p);
    }

    #[test]
    fn neighborhood_sizes() {
        let g = grid2(20);
        let c = GridPoint(vec![10, 10]);
        assert_eq!(make_neighborhood(&g, &c, &[3, 3]).unwrap().len(), 49);
        let single = make_neighborhood(&g, &c, &[0, 0]).unwrap();
        assert_eq!(single.members(), &[c.clone()]);
        let corner = make_neighborhood(&g, &GridPoint(vec![0, 0]), &[1, 1]).unwrap();
        assert_eq!(corner.len(), 4);
        assert_eq!(corner.clipped, vec![true, true]);
        assert!(make_neighborhood(&g, &GridPoint(vec![20, 0]), &[1, 1]).is_err());
    }

    #[test]
    fn corners_of_clipped_box() {
        let g = grid2(20);
        let nb = make_neighborhood(&g, &GridPoint(vec![0, 5]), &[2, 2]).unwrap();
        let corners = nb.corners();
        assert_eq!(corners.len(), 4);
        assert!(corners.contains(&GridPoint(vec![0, 3])));
        assert!(corners.contains(&GridPoint(vec![2, 7])));
        let line = make_neighborhood(&g, &GridPoint(vec![5, 5]), &[2, 0]).unwrap();
        assert_eq!(line.corners().len(), 2);
    }

    #[test]
    fn one_dimensional_kernel_by_hand() {
        let g = ParameterGrid::new(vec![-1.0], vec![1.0], vec![1.0]).unwrap();
        let nb = make_neighborhood(&g, &GridPoint(vec![1]), &[1]).unwrap();
        let beta = 2f64.ln();
        let p = transition_matrix(&nb, &[0.0, 1.0, 0.0], &ActionSet::all(1), beta).unwrap();
        for t in 0..3 {
            assert!((p.prob(1, t) - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((p.prob(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.prob(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.prob(0, 2), 0.0);
    }

    #[test]
    fn zero_beta_is_uniform_over_allowed_targets() {
        let g = grid2(5);
        let nb = make_neighborhood(&g, &GridPoint(vec![2, 2]), &[1, 1]).unwrap();
        let vals: Vec<f64> = (0..nb.len()).map(|k| (k * 7 % 5) as f64).collect();
        let p = transition_matrix(&nb, &vals, &ActionSet::all(2), 0.0).unwrap();
        let c = nb.center_index();
        assert_eq!(p.rows[c].len(), 5);
        assert!(p.rows[c].iter().all(|&(_, q)| q == 0.2));
    }

    #[test]
    fn kernel_input_errors() {
        let g = grid2(5);
        let nb = make_neighborhood(&g, &GridPoint(vec![2, 2]), &[1, 1]).unwrap();
        let a = ActionSet::all(2);
        assert!(transition_matrix(&nb, &[0.0; 8], &a, 1.0).is_err());
        assert!(transition_matrix(&nb, &[0.0; 9], &a, -1.0).is_err());
        let mut vals = vec![0.0; 9];
        vals[3] = f64::NAN;
        assert!(transition_matrix(&nb, &vals, &a, 1.0).is_err());
    }

    #[test]
    fn greedy_walk_descends_ramp() {
        let g = ParameterGrid::new(vec![0.0], vec![9.0], vec![1.0]).unwrap();
        let nb = Neighborhood::whole(&g);
        let vals: Vec<f64> = (0..10).map(|k| 10.0 - k as f64).collect();
        let p = transition_matrix(&nb, &vals, &ActionSet::all(1), 200.0).unwrap();
        let path = sample_walk(&[p], &nb, &GridPoint(vec![0]), 40, 7).unwrap();
        assert_eq!(path.len(), 41);
        for w in path.windows(2) {
            assert!(w[1].0[0] >= w[0].0[0]);
        }
    }

    #[test]
    fn empty_action_set_keeps_walk_still_and_is_deterministic() {
        let g = grid2(5);
        let nb = Neighborhood::whole(&g);
        let vals: Vec<f64> = (0..nb.len()).map(|k| k as f64).collect();
        let p = transition_matrix(&nb, &vals, &ActionSet::none(2), 1.0).unwrap();
        let s = GridPoint(vec![3, 1]);
        let path = sample_walk(&[p], &nb, &s, 10, 1).unwrap();
        assert!(path.iter().all(|q| *q == s));

        let p = transition_matrix(&nb, &vals, &ActionSet::all(2), 0.3).unwrap();
        let a = sample_walk(&[p.clone()], &nb, &s, 50, 99).unwrap();
        let b = sample_walk(&[p], &nb, &s, 50, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn walk_rejects_start_outside() {
        let g = grid2(9);
        let nb = make_neighborhood(&g, &GridPoint(vec![4, 4]), &[1, 1]).unwrap();
        let p = transition_matrix(&nb, &[0.0; 9], &ActionSet::all(2), 1.0).unwrap();
        assert!(sample_walk(&[p], &nb, &GridPoint(vec![0, 0]), 3, 0).is_err());
    }

    #[test]
    fn hitting_time_from_argmin_is_zero() {
        let g = grid2(7);
        let vals: Vec<f64> = g
            .points()
            .map(|p| (p.0[0] as f64 - 3.0).powi(2) + (p.0[1] as f64 - 2.0).powi(2))
            .collect();
        let sched = CoolingSchedule::new(ScheduleKind::StandardLog, 1.0);
        for mode in [WalkMode::Free, WalkMode::FixedDimensionSequential] {
            let s = hitting_time_experiment(&g, &vals, &GridPoint(vec![3, 2]), mode, 5, 100, &sched, 1)
                .unwrap();
            assert!(s.times.iter().all(|&t| t == 0));
        }
    }

    #[test]
    fn one_dimensional_modes_coincide() {
        let g = ParameterGrid::new(vec![0.0], vec![20.0], vec![1.0]).unwrap();
        let vals: Vec<f64> = (0..21).map(|k| (k as f64 - 13.0).abs()).collect();
        let sched = CoolingSchedule::new(ScheduleKind::StandardLog, 2.0);
        let start = GridPoint(vec![2]);
        let a = hitting_time_experiment(&g, &vals, &start, WalkMode::Free, 20, 5000, &sched, 3).unwrap();
        let b = hitting_time_experiment(&g, &vals, &start, WalkMode::FixedDimensionSequential, 20, 5000, &sched, 3)
            .unwrap();
        assert_eq!(a.times, b.times);
    }

    #[test]
    fn non_unique_argmin_is_rejected() {
        let g = ParameterGrid::new(vec![0.0], vec![4.0], vec![1.0]).unwrap();
        let sched = CoolingSchedule::new(ScheduleKind::StandardLog, 1.0);
        let r = hitting_time_experiment(&g, &[1.0, 0.0, 2.0, 0.0, 3.0], &GridPoint(vec![0]), WalkMode::Free, 1, 10, &sched, 0);
        assert!(r.is_err());
    }
}
