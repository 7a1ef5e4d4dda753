//! Command-line front end: `solve`, `extract`, `compare`, `simulate`, `verify`.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 solver did not
//! converge, 3 a verification check failed.

mod config;

use std::io::IsTerminal;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{
    BoxSection, ConstraintSection, ExplicitModel, ExtractSection, GridSection, ModelSection,
    PathsSection, RunConfig, SimulateSection, SolveSection, ValueSelection, VerifySection,
};

use crate::dynamics::GameModel;
use crate::error::{Error, Result};
use crate::grid::format::fmt_scalar;
use crate::grid::{read_value_field, write_value_field, Grid, ValueField, ValueKind};
use crate::hamiltonian::HamiltonianEvaluator;
use crate::oracle::{brute_force_value, DiscreteGame};
use crate::setops::{
    compare_masks, extract_sublevel, field_to_vtk, marching_squares, Contour2D, GridMask,
};
use crate::solver::{
    isaacs_gap, solve, solve_both_values, Backend, SolveConfig, SolveReport,
};
use crate::synthesis::{
    simulate, verify_invariance, ControlPolicy, DisturbancePolicy, FeedbackPolicy, Trajectory,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

/// Slack for the pointwise checks in `verify`.
const CHECK_SLACK: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "invariant-hj", version, about = "Robust controlled invariant sets of differential games")]
pub struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the lower and/or upper value function.
    Solve(SolveArgs),
    /// Extract sublevel masks, contours and VTK output from a value file.
    Extract(ExtractArgs),
    /// Compare two value files or mask CSVs.
    Compare(CompareArgs),
    /// Simulate a closed-loop trajectory.
    Simulate(SimulateArgs),
    /// Run the consistency and closed-loop checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub value: Option<ValueSelection>,
    /// `fd` or `sl`.
    #[arg(long, value_parser = parse_backend)]
    pub backend: Option<Backend>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub field: PathBuf,
    /// Optional run configuration supplying extraction defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon_set: Option<f64>,
    /// Comma-separated contour levels.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub levels: Option<Vec<f64>>,
    /// `mask`, `contour`, `vtk` or `all`.
    #[arg(long, default_value = "all")]
    pub format: String,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub first: PathBuf,
    pub second: PathBuf,
    /// Threshold applied to value files.
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub epsilon_set: f64,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Value file used by `feedback` and `worst`.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Comma-separated initial state.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long)]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub dt_sim: Option<f64>,
    /// `feedback` or `constant:<u1,...>`.
    #[arg(long, allow_hyphen_values = true)]
    pub control: Option<String>,
    /// `worst`, `random` or `constant:<d1,...>`.
    #[arg(long, allow_hyphen_values = true)]
    pub disturbance: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trajectory CSV path (default: trajectory.csv in the configured output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Lower value file.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Upper value file.
    #[arg(long)]
    pub upper_field: Option<PathBuf>,
    /// Skip the closed-loop simulations.
    #[arg(long)]
    pub quick: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_backend(s: &str) -> std::result::Result<Backend, String> {
    match s {
        "fd" => Ok(Backend::Fd),
        "sl" => Ok(Backend::Sl),
        _ => Err(format!("unknown backend `{s}` (expected fd or sl)")),
    }
}

/// Entry point used by the binary.
pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .write_style(if color_enabled() {
            env_logger::WriteStyle::Auto
        } else {
            env_logger::WriteStyle::Never
        })
        .try_init();
    run(std::env::args_os())
}

fn color_enabled() -> bool {
    std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty()) && std::io::stderr().is_terminal()
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(&cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn dispatch(command: &Command) -> Result<i32> {
    match command {
        Command::Solve(a) => cmd_solve(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn out_dir(flag: &Option<PathBuf>, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    let dir = flag
        .clone()
        .or_else(|| cfg.and_then(|c| c.paths.out.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_solve(a: &SolveArgs) -> Result<i32> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(v) = a.value {
        cfg.solve.value = v;
    }
    if let Some(b) = a.backend {
        cfg.solve.backend = b;
    }
    if let Some(n) = a.max_iters {
        cfg.solve.max_iters = n;
    }
    if let Some(t) = a.tol {
        cfg.solve.tol = t;
    }
    if let Some(g) = a.gamma {
        cfg.solve.gamma = g;
    }
    let (model, grid) = cfg.model_and_grid()?;
    let dir = out_dir(&a.out, Some(&cfg))?;

    let mut reports: Vec<SolveReport> = Vec::new();
    let mut text = String::new();
    match cfg.solve.value {
        ValueSelection::Both => {
            let both = solve_both_values(&model, &grid, &cfg.solve.solve_config(ValueKind::Lower))?;
            write_value_field(&dir.join("value_lower.txt"), &both.lower)?;
            write_value_field(&dir.join("value_upper.txt"), &both.upper)?;
            text.push_str(&format!(
                "isaacs_gap_max = {:e}\nisaacs_gap_min = {:e}\nminimax_excess = {:e}\n\n",
                both.gap.max, both.gap.min, both.minimax_excess
            ));
            reports.push(both.lower_report);
            reports.push(both.upper_report);
        }
        ValueSelection::Lower | ValueSelection::Upper => {
            let kind = if cfg.solve.value == ValueSelection::Lower {
                ValueKind::Lower
            } else {
                ValueKind::Upper
            };
            let (field, report) = solve(&model, &grid, &cfg.solve.solve_config(kind))?;
            write_value_field(&dir.join(format!("value_{}.txt", kind.as_str())), &field)?;
            reports.push(report);
        }
    }
    for r in &reports {
        text.push_str(&format!("[{}]\n{}\n", r.kind.as_str(), r.to_text(false)));
    }
    write_text(&dir.join("solve_report.txt"), &text)?;
    print!("{text}");
    for r in &reports {
        eprintln!("{} value: {:.3} s", r.kind.as_str(), r.wall_time.as_secs_f64());
    }
    if reports.iter().all(|r| r.converged) {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: solver did not reach tol {:e}", cfg.solve.tol);
        Ok(EXIT_NOT_CONVERGED)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Outputs {
    mask: bool,
    contour: bool,
    vtk: bool,
}

fn parse_formats(list: &str, dim: usize) -> Result<Outputs> {
    let mut o = Outputs {
        mask: false,
        contour: false,
        vtk: false,
    };
    for item in list.split(',').map(str::trim) {
        match item {
            "mask" => o.mask = true,
            "contour" => {
                if dim != 2 {
                    return Err(Error::UnsupportedDimension(format!(
                        "contours need a 2-D field, got dimension {dim}"
                    )));
                }
                o.contour = true;
            }
            "vtk" => o.vtk = true,
            "all" => {
                o.mask = true;
                o.contour = dim == 2;
                o.vtk = true;
            }
            other => return Err(Error::Config(format!("unknown output format `{other}`"))),
        }
    }
    Ok(o)
}

fn cmd_extract(a: &ExtractArgs) -> Result<i32> {
    let cfg = a.config.as_deref().map(RunConfig::load).transpose()?;
    let defaults = cfg.as_ref().map(|c| c.extract.clone()).unwrap_or_default();
    let eps = a.epsilon_set.unwrap_or(defaults.epsilon_set);
    let levels = a.levels.clone().unwrap_or(defaults.levels);
    let field = read_value_field(&a.field)?;
    let outputs = parse_formats(&a.format, field.grid().dim())?;
    let mask = extract_sublevel(&field, eps)?;
    let dir = out_dir(&a.out, cfg.as_ref())?;

    println!(
        "mask: {} of {} nodes with V <= {:e}",
        mask.count(),
        field.grid().len(),
        eps
    );
    if outputs.mask {
        write_text(&dir.join("mask.csv"), &mask.to_csv())?;
    }
    if outputs.contour {
        let mut csv = String::from("polyline,x,y\n");
        let mut next_id = 0usize;
        for level in &levels {
            let contour = marching_squares(&field, *level)?;
            let first = next_id;
            for line in &contour.polylines {
                for p in line {
                    csv.push_str(&format!("{next_id},{},{}\n", fmt_scalar(p[0]), fmt_scalar(p[1])));
                }
                next_id += 1;
            }
            let closed = contour.polylines.iter().filter(|l| Contour2D::is_closed(l)).count();
            println!(
                "level {:e}: polylines {}..{} ({} closed)",
                level,
                first,
                next_id,
                closed
            );
        }
        write_text(&dir.join("contour.csv"), &csv)?;
    }
    if outputs.vtk {
        write_text(&dir.join("value.vtk"), &field_to_vtk(&field)?)?;
    }
    Ok(EXIT_OK)
}

fn is_field_file(text: &str) -> bool {
    text.lines().next().is_some_and(|l| l.trim_start().starts_with("dim"))
}

fn load_mask(path: &Path, eps: f64) -> Result<GridMask> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    if is_field_file(&text) {
        let field = crate::grid::format::field_from_str(&text, &origin)?;
        extract_sublevel(&field, eps)
    } else {
        GridMask::from_csv(&text, &origin)
    }
}

fn cmd_compare(a: &CompareArgs) -> Result<i32> {
    let first = load_mask(&a.first, a.epsilon_set)?;
    let second = load_mask(&a.second, a.epsilon_set)?;
    let cmp = compare_masks(&first, &second)?;
    let text = cmp.to_text();
    if let Some(path) = &a.out {
        write_text(path, &text)?;
    }
    print!("{text}");
    Ok(EXIT_OK)
}

fn parse_action(text: &str, dim: usize, what: &str) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Config(format!("bad {what} action `{text}`: {e}")))?;
    if values.len() != dim {
        return Err(Error::Config(format!(
            "{what} action needs {dim} components, got {}",
            values.len()
        )));
    }
    Ok(values)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let cfg = RunConfig::load(&a.config)?;
    let model = cfg.build_model()?;
    let sim = &cfg.simulate;
    let x0 = a
        .x0
        .clone()
        .or_else(|| sim.x0.clone())
        .ok_or_else(|| Error::Config("no initial state (use --x0)".into()))?;
    if x0.len() != model.state_dim() {
        return Err(Error::Config(format!(
            "x0 has {} components, model state has {}",
            x0.len(),
            model.state_dim()
        )));
    }
    let t_final = a.t_final.unwrap_or(sim.t_final);
    let dt_sim = a.dt_sim.unwrap_or(sim.dt_sim);
    let seed = a.seed.unwrap_or(sim.seed);
    let control = a.control.clone().unwrap_or_else(|| sim.control.clone());
    let disturbance = a.disturbance.clone().unwrap_or_else(|| sim.disturbance.clone());

    let needs_field = control == "feedback" || disturbance == "worst";
    let field = match (&a.field, needs_field) {
        (Some(path), _) => Some(read_value_field(path)?),
        (None, true) => {
            return Err(Error::Config(
                "feedback control and worst-case disturbance need a value file (use --field)".into(),
            ))
        }
        (None, false) => None,
    };
    let policy = field
        .as_ref()
        .map(|f| FeedbackPolicy::new(&model, f, &cfg.solve.hamiltonian))
        .transpose()?;

    let control = match control.as_str() {
        "feedback" => ControlPolicy::Feedback(policy.as_ref().expect("field loaded")),
        s => match s.strip_prefix("constant:") {
            Some(v) => ControlPolicy::Constant(parse_action(v, model.control_box().dim(), "control")?),
            None => return Err(Error::Config(format!("unknown control policy `{s}`"))),
        },
    };
    let disturbance = match disturbance.as_str() {
        "worst" => DisturbancePolicy::WorstCase(policy.as_ref().expect("field loaded")),
        "random" => DisturbancePolicy::Random { seed },
        s => match s.strip_prefix("constant:") {
            Some(v) => DisturbancePolicy::Constant(parse_action(
                v,
                model.disturbance_box().dim(),
                "disturbance",
            )?),
            None => return Err(Error::Config(format!("unknown disturbance policy `{s}`"))),
        },
    };

    let path = match &a.out {
        Some(p) => p.clone(),
        None => out_dir(&None, Some(&cfg))?.join("trajectory.csv"),
    };
    match simulate(&model, &control, &disturbance, &x0, t_final, dt_sim) {
        Ok(traj) => {
            write_text(&path, &traj.to_csv())?;
            summarize(&traj);
            Ok(EXIT_OK)
        }
        Err(Error::Diverged { time, partial }) => {
            write_text(&path, &partial.to_csv())?;
            Err(Error::Diverged { time, partial })
        }
        Err(e) => Err(e),
    }
}

fn summarize(traj: &Trajectory) {
    println!(
        "steps: {}\nmax_h: {:e}",
        traj.len().saturating_sub(1),
        traj.max_constraint()
    );
    if let Some(x) = traj.final_state() {
        let parts: Vec<String> = x.iter().map(|v| format!("{v:e}")).collect();
        println!("final_state: {}", parts.join(", "));
    }
}

struct CheckLog {
    lines: Vec<String>,
    failed: usize,
}

impl CheckLog {
    fn record(&mut self, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        self.lines
            .push(format!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" }));
    }
}

fn check_field(log: &mut CheckLog, model: &GameModel, field: &ValueField) -> Result<()> {
    let tag = field.kind().as_str();
    let bound = model.bound();
    let (lo, hi) = (field.min(), field.max());
    log.record(
        &format!("{tag} bounds"),
        lo >= -CHECK_SLACK && hi <= bound + CHECK_SLACK,
        format!("min {lo:e}, max {hi:e}, M {bound:e}"),
    );
    let grid = field.grid();
    let mut point = vec![0.0; grid.dim()];
    let mut worst = f64::NEG_INFINITY;
    for (i, v) in field.values().iter().enumerate() {
        grid.point_into(i, &mut point);
        worst = worst.max(model.eval_constraint(&point) - v);
    }
    log.record(
        &format!("{tag} obstacle"),
        worst <= CHECK_SLACK,
        format!("max(h - V) = {worst:e}"),
    );
    Ok(())
}

/// Solve a coarse instance with the SL solver and with plain value iteration
/// on the same discrete game and compare.
fn check_oracle(log: &mut CheckLog, cfg: &RunConfig, model: &GameModel, grid: &Grid) -> Result<()> {
    let n = cfg.verify.oracle_counts;
    let coarse = Grid::new(grid.lower().to_vec(), grid.upper().to_vec(), vec![n; grid.dim()])?;
    let solve_cfg = SolveConfig {
        backend: Backend::Sl,
        tol: cfg.verify.oracle_tol,
        dt: None,
        ..cfg.solve.solve_config(ValueKind::Lower)
    };
    let both = solve_both_values(model, &coarse, &solve_cfg)?;
    let evaluator = HamiltonianEvaluator::new(model, &solve_cfg.hamiltonian)?;
    let game = DiscreteGame::build(
        model,
        coarse.clone(),
        evaluator.controls().to_vec(),
        evaluator.disturbances().to_vec(),
        solve_cfg.gamma,
        both.lower_report.dt,
    )?;
    let mut oracle = Vec::new();
    for (field, kind) in [(&both.lower, ValueKind::Lower), (&both.upper, ValueKind::Upper)] {
        let values = brute_force_value(&game, kind, cfg.verify.oracle_tol)?;
        let diff = values
            .iter()
            .zip(field.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        log.record(
            &format!("oracle {}", kind.as_str()),
            diff <= cfg.verify.oracle_agreement,
            format!("{n}^{} nodes, max |V - V_oracle| = {diff:e}", coarse.dim()),
        );
        oracle.push(values);
    }
    let excess = oracle[0]
        .iter()
        .zip(&oracle[1])
        .map(|(l, u)| l - u)
        .fold(f64::NEG_INFINITY, f64::max);
    log.record(
        "oracle ordering",
        excess <= CHECK_SLACK,
        format!("max(V- - V+) = {excess:e}"),
    );
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> Result<i32> {
    let cfg = RunConfig::load(&a.config)?;
    let (model, grid) = cfg.model_and_grid()?;
    let load = |p: &Option<PathBuf>, kind: ValueKind| -> Result<Option<ValueField>> {
        let Some(path) = p else { return Ok(None) };
        let field = read_value_field(path)?;
        if field.kind() != kind {
            return Err(Error::Config(format!(
                "{} holds a {} value, expected {}",
                path.display(),
                field.kind(),
                kind
            )));
        }
        if field.grid().dim() != model.state_dim() {
            return Err(Error::Shape(format!("{} has the wrong dimension", path.display())));
        }
        Ok(Some(field))
    };
    let lower = load(&a.field, ValueKind::Lower)?;
    let upper = load(&a.upper_field, ValueKind::Upper)?;

    let mut log = CheckLog {
        lines: Vec::new(),
        failed: 0,
    };
    for field in lower.iter().chain(upper.iter()) {
        check_field(&mut log, &model, field)?;
    }
    if let (Some(l), Some(u)) = (&lower, &upper) {
        let excess = l
            .values()
            .iter()
            .zip(u.values())
            .map(|(a, b)| a - b)
            .fold(f64::NEG_INFINITY, f64::max);
        log.record(
            "minimax ordering",
            excess <= CHECK_SLACK,
            format!("max(V- - V+) = {excess:e}"),
        );
        let gap = isaacs_gap(l, u)?;
        log.lines
            .push(format!("INFO isaacs gap: max {:e}, min {:e}", gap.max, gap.min));
    }
    check_oracle(&mut log, &cfg, &model, &grid)?;

    if !a.quick {
        match &lower {
            Some(field) => {
                let mask = extract_sublevel(field, cfg.extract.epsilon_set)?;
                let mut settings = cfg.verify_settings(a.seed.unwrap_or(cfg.simulate.seed));
                if let Some(t) = a.trials {
                    settings.trials = t;
                }
                let report = verify_invariance(&model, field, &mask, &settings)?;
                let ok = !report.empty_interior
                    && report.pass_fraction >= cfg.verify.min_pass_fraction;
                log.record(
                    "closed-loop invariance",
                    ok,
                    format!(
                        "{}/{} runs kept h <= {:e} (need fraction {}), worst sup h {:e}",
                        report.passed,
                        report.runs,
                        report.epsilon,
                        cfg.verify.min_pass_fraction,
                        report.worst_sup_h
                    ),
                );
                log.lines.push(report.to_text().trim_end().to_string());
            }
            None => log
                .lines
                .push("SKIP closed-loop invariance: no lower value file given".into()),
        }
    }

    let mut text = log.lines.join("\n");
    text.push('\n');
    if let Some(path) = &a.out {
        write_text(path, &text)?;
    }
    print!("{text}");
    Ok(if log.failed == 0 { EXIT_OK } else { EXIT_VERIFY_FAILED })
}
