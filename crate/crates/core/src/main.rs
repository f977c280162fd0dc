use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rlshape::config::{Backend, Command, RunConfig};
use rlshape::experiments::{
    exp1, exp2, fixed_point_demo, grid_values, landscape, landscape_argmin, walk_comparison, write_exp1_csv,
    write_exp2_csv, write_iterates_csv, write_landscape_csv, write_sharpening_csv, write_walk_summary_csv,
    VariantOutcome,
};
use rlshape::flow::Objective;
use rlshape::grid_mdp::{hitting_walk_path, write_hitting_csv, write_walk_csv, GridPoint, ParameterGrid, WalkMode};
use rlshape::reduction::{run, OptimizerConfig, TerminationReason};
use rlshape::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_MAX_CYCLES: u8 = 4;

#[derive(Parser)]
#[command(name = "rlshape", version, about = "Surrogate-assisted Metropolis shape optimization")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the optimizer from one start and write its trace.
    Optimize(Common),
    /// Evaluate the objective on every grid node.
    Landscape(Common),
    /// Compare first-passage times of fixed-dimension and free random walks.
    Walk(Common),
    /// Fixed-point iterations of the value function on the 1-D test objective.
    Fixedpoint(Common),
    /// Fixed squares against adaptive rectangles from several starts.
    Exp1(Common),
    /// Square against width-one rectangle neighbourhoods from a remote start.
    Exp2(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Objective backend; overrides the config file.
    #[arg(long)]
    backend: Option<Backend>,
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Backend(_) | Error::Solver(_) => EXIT_BACKEND,
            Error::Io(_) => 1,
            _ => EXIT_VALIDATION,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

type Outcome = std::result::Result<u8, Failure>;

struct Ctx {
    config: RunConfig,
    backend: Backend,
    out: PathBuf,
}

impl Ctx {
    fn new(common: &Common, command: Command) -> std::result::Result<Self, Failure> {
        let mut config = match &common.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if common.seed.is_some() {
            config.seed = common.seed;
        }
        if common.backend.is_some() {
            config.backend = common.backend;
        }
        let backend = config.backend_for(command);
        config.validate(command, backend)?;
        fs::create_dir_all(&common.out)?;
        Ok(Ctx {
            config,
            backend,
            out: common.out.clone(),
        })
    }

    fn file(&self, name: &str) -> std::result::Result<BufWriter<File>, Failure> {
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn seed(&self) -> u64 {
        self.config.seed.unwrap_or(self.config.optimizer.seed)
    }
}

fn located(grid: &ParameterGrid, theta: &[f64], path: &str) -> std::result::Result<GridPoint, Failure> {
    grid.locate(theta).map_err(|_| {
        Error::Config {
            path: path.into(),
            message: format!("{theta:?} is not a node of the grid"),
        }
        .into()
    })
}

fn cmd_optimize(ctx: &Ctx) -> Outcome {
    let grid = ctx.config.grid_for(Command::Optimize, ctx.backend)?;
    let names = ctx.config.names(grid.dim())?;
    let start = located(&grid, &ctx.config.optimize_start(ctx.backend), "optimize.start")?;
    let objective = ctx.backend.objective(&ctx.config.channel)?;
    let trace = run(&start, &grid, &ctx.config.optimizer_for(ctx.backend), objective.as_ref())?;
    trace.write_json(ctx.file("trace.json")?)?;
    trace.write_csv(ctx.file("trace.csv")?, &names)?;
    println!(
        "cycles {}  simulations {}  neighborhoods {}  end {:?}",
        trace.path_length(),
        trace.total_simulations,
        trace.neighborhood_sequence(),
        trace.final_center().map(|p| grid.point(p)).unwrap_or_default()
    );
    Ok(match &trace.terminated_reason {
        TerminationReason::Converged => 0,
        TerminationReason::MaxCycles => {
            eprintln!("stopped after max_cycles = {}", ctx.config.optimizer.max_cycles);
            EXIT_MAX_CYCLES
        }
        TerminationReason::Error(m) => {
            eprintln!("objective failed: {m}");
            EXIT_BACKEND
        }
    })
}

fn cmd_landscape(ctx: &Ctx) -> Outcome {
    let grid = ctx.config.grid_for(Command::Landscape, ctx.backend)?;
    let names = ctx.config.names(grid.dim())?;
    let objective = ctx.backend.objective(&ctx.config.channel)?;
    let rows = landscape(&grid, objective.as_ref());
    write_landscape_csv(ctx.file("landscape.csv")?, &rows, &names)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    match landscape_argmin(&rows) {
        Some(k) => println!("argmin {:?}  R = {}", rows[k].theta, rows[k].r),
        None => println!("no successful evaluation"),
    }
    if failed > 0 {
        eprintln!("{failed} of {} evaluations failed", rows.len());
        return Ok(EXIT_BACKEND);
    }
    Ok(0)
}

fn cmd_walk(ctx: &Ctx) -> Outcome {
    let w = &ctx.config.walk;
    let grid = ctx.config.grid_for(Command::Walk, ctx.backend)?;
    let names = ctx.config.names(grid.dim())?;
    let start = located(&grid, &w.start, "walk.start")?;
    let objective = ctx.backend.objective(&ctx.config.channel)?;
    let values = grid_values(&grid, objective.as_ref())?;
    let seed = ctx.seed();
    let cmp = walk_comparison(&grid, &values, &start, w.n_walks, w.max_steps, &w.schedule, seed)?;
    write_hitting_csv(ctx.file("hitting_times.csv")?, &[cmp.fixed.clone(), cmp.free.clone()])?;
    write_walk_summary_csv(ctx.file("walk_summary.csv")?, &cmp)?;
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    for mode in [WalkMode::FixedDimensionSequential, WalkMode::Free] {
        for id in 0..w.export_paths.min(w.n_walks) as u64 {
            let path = hitting_walk_path(&grid, &values, &start, mode, w.max_steps, &w.schedule, seed, id)?;
            let file = ctx.file(&format!("walk_{}_{id}.csv", mode.label()))?;
            write_walk_csv(file, &grid, &path, |p| values[grid.flat_index(p)], &name_refs)?;
        }
    }
    for s in [&cmp.fixed, &cmp.free] {
        let censored = s.censored.iter().filter(|&&c| c).count();
        println!("{:>5}  mean {:.1}  median {:.1}  censored {censored}", s.mode.label(), s.mean, s.median);
    }
    Ok(0)
}

fn cmd_fixedpoint(ctx: &Ctx) -> Outcome {
    let f = &ctx.config.fixedpoint;
    let grid = ctx.config.grid_for(Command::FixedPoint, ctx.backend)?;
    let objective = ctx.backend.objective(&ctx.config.channel)?;
    let r = grid_values(&grid, objective.as_ref())?;
    let demo = fixed_point_demo(&grid, &r, f.gamma, &f.schedule, f.iterations, f.tol_v)?;
    write_iterates_csv(ctx.file("iterates.csv")?, &grid, &demo)?;
    write_sharpening_csv(ctx.file("sharpening.csv")?, &grid, &demo)?;
    let minima: Vec<f64> = demo.minima.iter().map(|&k| grid.coordinate(0, k)).collect();
    println!("iterations {}  local minima at {minima:?}", demo.table.iterations);
    if !demo.table.converged {
        eprintln!(
            "fixed point not converged within {} iterations (tol_v = {:e}); iterates written",
            f.iterations, f.tol_v
        );
    }
    Ok(0)
}

/// Backend failures dominate, then unconverged runs.
fn experiment_code(outcomes: &[&VariantOutcome]) -> u8 {
    if outcomes.iter().any(|o| o.reason.starts_with("error")) {
        EXIT_BACKEND
    } else if outcomes.iter().any(|o| !o.converged()) {
        EXIT_MAX_CYCLES
    } else {
        0
    }
}

fn factory(ctx: &Ctx) -> impl Fn() -> rlshape::Result<Box<dyn Objective>> + '_ {
    move || ctx.backend.objective(&ctx.config.channel)
}

fn cmd_exp1(ctx: &Ctx) -> Outcome {
    let grid = ctx.config.grid_for(Command::Exp1, ctx.backend)?;
    for (k, s) in ctx.config.exp1.starts.iter().enumerate() {
        located(&grid, s, &format!("exp1.starts[{k}]"))?;
    }
    let make = factory(ctx);
    let rows = exp1(&grid, &ctx.config.exp1.starts, &ctx.config.optimizer_for(ctx.backend), &make);
    write_exp1_csv(ctx.file("exp1.csv")?, &rows)?;
    println!("run  fixed path/sims  adaptive path/sims");
    for r in &rows {
        println!(
            "{:>3}  {:>5}/{:<5}  {:>5}/{:<5}",
            r.run, r.fixed.path_length, r.fixed.simulations, r.adaptive.path_length, r.adaptive.simulations
        );
    }
    let all: Vec<&VariantOutcome> = rows.iter().flat_map(|r| [&r.fixed, &r.adaptive]).collect();
    Ok(experiment_code(&all))
}

fn cmd_exp2(ctx: &Ctx) -> Outcome {
    let e = &ctx.config.exp2;
    let grid = ctx.config.grid_for(Command::Exp2, ctx.backend)?;
    located(&grid, &e.start, "exp2.start")?;
    let base = OptimizerConfig {
        max_cycles: e.max_cycles,
        ..ctx.config.optimizer_for(ctx.backend)
    };
    let make = factory(ctx);
    let rows = exp2(&grid, &e.start, &e.radii, &base, &make);
    write_exp2_csv(ctx.file("exp2.csv")?, &rows)?;
    println!("radius  quad path/iters  rect path/iters");
    for r in &rows {
        println!(
            "{:>6}  {:>5}/{:<6}  {:>5}/{:<6}",
            r.radius, r.quadratic.path_length, r.quadratic.iterations, r.rectangle.path_length, r.rectangle.iterations
        );
    }
    let all: Vec<&VariantOutcome> = rows.iter().flat_map(|r| [&r.quadratic, &r.rectangle]).collect();
    Ok(experiment_code(&all))
}

fn dispatch(cmd: &Cmd) -> Outcome {
    let (common, command, handler): (&Common, Command, fn(&Ctx) -> Outcome) = match cmd {
        Cmd::Optimize(c) => (c, Command::Optimize, cmd_optimize),
        Cmd::Landscape(c) => (c, Command::Landscape, cmd_landscape),
        Cmd::Walk(c) => (c, Command::Walk, cmd_walk),
        Cmd::Fixedpoint(c) => (c, Command::FixedPoint, cmd_fixedpoint),
        Cmd::Exp1(c) => (c, Command::Exp1, cmd_exp1),
        Cmd::Exp2(c) => (c, Command::Exp2, cmd_exp2),
    };
    let ctx = Ctx::new(common, command)?;
    handler(&ctx)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
