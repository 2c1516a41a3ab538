//! `sl3lab`: solves, validations, winding audits and lift exports.
//!
//! Exit status: 0 on success, 1 on a failed precondition or I/O error, 2 on
//! a usage error, 3 when a solve does not converge, a bound fails or a
//! validation fails.

mod data;

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sl3lab::cauchy_riemann::{cr_residual, pair_from_potential, potential_from_pair, sample_pair, SolutionPair};
use sl3lab::domain_grid::ScalarField;
use sl3lab::elliptic_solver::{solve_dirichlet_f, solve_dirichlet_v, SolverOptions};
use sl3lab::explicit_solutions::{affine_pair, catenoid_pair, harvey_lawson_pair, paraboloid_union_pair};
use sl3lab::io::{field_from_json, pair_from_json};
use sl3lab::sl_geometry::{export_mesh, verify_sl, Coordinate, DEFAULT_PROJECTION};
use sl3lab::validation::{f_solver_ladder, harvey_lawson_fd_ladder, ladder_of, scorecard, v_solver_levels, Ladder};
use sl3lab::winding::{audit_count_morse, audit_count_transverse, find_zeros, CountAudit};

use data::{output_path, write_field, write_json, write_pair, GridArgs, PhiArgs, Target};

const FAILED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "sl3lab", version, about = "Numerical lab for U(1)-invariant special Lagrangian 3-folds in C^3")]
struct Cli {
    /// Directory for outputs that are not given an explicit path.
    #[arg(long, global = true, env = "SL3LAB_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the Dirichlet problem for the potential f.
    SolveF(SolveFArgs),
    /// Solve the Dirichlet problem for v and recover u.
    SolveV(SolveVArgs),
    /// Sample an explicit solution family on a grid.
    EvalFamily(EvalArgs),
    /// Count zeros of the difference of two solution pairs.
    Wind(WindArgs),
    /// Lift a pair to C^3, verify the special Lagrangian conditions and export a mesh.
    Lift(LiftArgs),
    /// Run the invariant suite and write a scorecard.
    Validate(ValidateArgs),
    /// Run an h-refinement ladder and report observed orders.
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Args)]
struct SolveCommon {
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    phi: PhiArgs,
    /// Parameter a; must be nonzero.
    #[arg(long, allow_negative_numbers = true)]
    a: f64,
    #[arg(long)]
    max_newton_iters: Option<usize>,
    #[arg(long)]
    newton_tol: Option<f64>,
    #[arg(long)]
    continuation_steps: Option<usize>,
    /// Solution output (.json or .csv).
    #[arg(long)]
    out: Option<PathBuf>,
    /// SolveReport JSON output.
    #[arg(long)]
    report: Option<PathBuf>,
}

impl SolveCommon {
    fn options(&self) -> Result<SolverOptions> {
        if self.a == 0.0 {
            bail!("zero-a-rejected: the Dirichlet problems need a != 0");
        }
        let d = SolverOptions::default();
        let opts = SolverOptions {
            max_newton_iters: self.max_newton_iters.unwrap_or(d.max_newton_iters),
            newton_tol: self.newton_tol.unwrap_or(d.newton_tol),
            continuation_steps: self.continuation_steps.unwrap_or(d.continuation_steps),
            ..d
        };
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Debug, Args)]
struct SolveFArgs {
    #[command(flatten)]
    common: SolveCommon,
    /// Also write the gradient pair (u, v) = (f_y, f_x).
    #[arg(long)]
    pair_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveVArgs {
    #[command(flatten)]
    common: SolveCommon,
    /// Point x,y whose nearest node carries u = 0 (default: centre).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    anchor: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Family {
    Affine,
    Catenoid,
    Paraboloid,
    Hl,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[command(flatten)]
    grid: GridArgs,
    /// Parameter a for the affine and Harvey-Lawson families; the catenoid
    /// and paraboloid union always use a = 0.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    a: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.0, 0.0], allow_hyphen_values = true)]
    affine: Vec<f64>,
    /// Table output: .csv (i, j, x, y, u, v) or .json pair.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WindArgs {
    #[arg(long)]
    pair1: PathBuf,
    #[arg(long)]
    pair2: PathBuf,
    /// Potentials for the Morse bound; reconstructed from the pairs if absent.
    #[arg(long, requires = "potential2")]
    potential1: Option<PathBuf>,
    #[arg(long, requires = "potential1")]
    potential2: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LiftArgs {
    #[arg(long)]
    pair: PathBuf,
    #[arg(long, default_value_t = 16)]
    theta_samples: usize,
    /// Three of re_z1, im_z1, re_z2, im_z2, re_z3, im_z3.
    #[arg(long, value_delimiter = ',')]
    projection: Option<Vec<String>>,
    /// OBJ mesh output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Coarse grids and few trials.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum LadderKind {
    VSolver,
    FSolver,
    HlResidual,
    SlLift,
}

#[derive(Debug, Args)]
struct ConvergenceArgs {
    #[arg(long, value_enum, default_value = "v-solver")]
    kind: LadderKind,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    a: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [33, 65, 129])]
    sizes: Vec<usize>,
    /// Exit with status 3 when any ladder's worst order is below this.
    #[arg(long)]
    min_order: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Ok(false) marks a completed run whose outcome failed.
fn run(cli: &Cli) -> Result<bool> {
    check_arity(cli)?;
    let dir = &cli.out_dir;
    match &cli.command {
        Command::SolveF(args) => {
            let c = &args.common;
            let opts = c.options()?;
            let grid = c.grid.build()?;
            let phi = c.phi.resolve(&grid, c.a, Target::Potential)?;
            let (f, report) = solve_dirichlet_f(&phi, c.a, &opts)?;
            write_field(&output_path(&c.out, dir, "f.json"), &f)?;
            write_json(&output_path(&c.report, dir, "f_report.json"), &report)?;
            if let Some(path) = &args.pair_out {
                write_pair(path, &pair_from_potential(&f, c.a))?;
            }
            println!("solve-f: converged {} in {} iterations, residual {:.3e}", report.converged, report.iterations, report.final_residual);
            Ok(report.converged)
        }
        Command::SolveV(args) => {
            let c = &args.common;
            let opts = c.options()?;
            let grid = c.grid.build()?;
            let phi = c.phi.resolve(&grid, c.a, Target::V)?;
            let anchor = args.anchor.as_ref().map_or(grid.center_node(), |p| grid.nearest_node(p[0], p[1]));
            let (pair, report) = solve_dirichlet_v(&phi, c.a, anchor, &opts)?;
            write_pair(&output_path(&c.out, dir, "pair.json"), &pair)?;
            write_json(&output_path(&c.report, dir, "pair_report.json"), &report)?;
            println!("solve-v: converged {} in {} iterations, residual {:.3e}", report.converged, report.iterations, report.final_residual);
            Ok(report.converged)
        }
        Command::EvalFamily(args) => eval_family(args, dir),
        Command::Wind(args) => wind(args, dir),
        Command::Lift(args) => lift(args, dir),
        Command::Validate(args) => {
            let card = scorecard(args.quick, args.seed);
            write_json(&output_path(&args.out, dir, "scorecard.json"), &card)?;
            for c in &card.checks {
                println!("{:<34} {} measured {:.3e} threshold {:.3e}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.measured, c.threshold);
            }
            Ok(card.all_passed)
        }
        Command::Convergence(args) => convergence(args, dir),
    }
}

fn arity(name: &str, values: &[f64], n: usize) -> Result<()> {
    if values.len() != n {
        bail!("--{name} takes {n} comma-separated values, got {}", values.len());
    }
    Ok(())
}

fn check_grid(g: &GridArgs) -> Result<()> {
    arity("bounds", &g.bounds, 4)?;
    arity("center", &g.center, 2)
}

fn check_arity(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::SolveF(SolveFArgs { common, .. }) => {
            check_grid(&common.grid)?;
            arity("affine", &common.phi.affine, 3)
        }
        Command::SolveV(args) => {
            check_grid(&args.common.grid)?;
            arity("affine", &args.common.phi.affine, 3)?;
            args.anchor.as_ref().map_or(Ok(()), |p| arity("anchor", p, 2))
        }
        Command::EvalFamily(args) => {
            check_grid(&args.grid)?;
            arity("affine", &args.affine, 3)
        }
        Command::Lift(args) => match &args.projection {
            Some(p) if p.len() != 3 => bail!("--projection takes 3 coordinates, got {}", p.len()),
            _ => Ok(()),
        },
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct FamilyReport {
    family: Family,
    a: f64,
    nodes: usize,
    /// Largest discrete Cauchy-Riemann residual over interior nodes.
    max_fd_residual: f64,
}

fn eval_family(args: &EvalArgs, dir: &std::path::Path) -> Result<bool> {
    let grid = args.grid.build()?;
    let pair = match args.family {
        Family::Affine => affine_pair(args.affine[0], args.affine[1], args.affine[2]),
        Family::Catenoid => catenoid_pair(),
        Family::Paraboloid => paraboloid_union_pair(),
        Family::Hl => harvey_lawson_pair(args.a),
    };
    let a = pair.natural_a().unwrap_or(args.a);
    let sampled = sample_pair(&pair, &grid, a);
    let (r1, r2) = cr_residual(&sampled);
    let report = FamilyReport {
        family: args.family,
        a,
        nodes: grid.node_count(),
        max_fd_residual: r1.max_abs_interior().max(r2.max_abs_interior()),
    };
    write_pair(&output_path(&args.out, dir, "family.csv"), &sampled)?;
    write_json(&output_path(&args.report, dir, "family_report.json"), &report)?;
    println!("eval-family: {} nodes, max FD residual {:.3e}", report.nodes, report.max_fd_residual);
    Ok(true)
}

#[derive(Serialize)]
struct ZeroOut {
    x: f64,
    y: f64,
    k: u32,
}

#[derive(Serialize)]
struct Bounds {
    morse_bound: Option<bool>,
    transverse_bound: Option<bool>,
}

#[derive(Serialize)]
struct Audits {
    morse: Option<CountAudit>,
    transverse: Option<CountAudit>,
}

#[derive(Serialize)]
struct WindOut {
    boundary_winding: Option<i64>,
    zeros: Vec<ZeroOut>,
    m: u32,
    l: Option<usize>,
    bounds: Bounds,
    audits: Audits,
    /// Why a bound is null.
    notes: Vec<String>,
}

fn read_pair(path: &PathBuf) -> Result<SolutionPair> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(pair_from_json(&text)?)
}

fn read_field(path: &PathBuf) -> Result<ScalarField> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(field_from_json(&text)?)
}

fn wind(args: &WindArgs, dir: &std::path::Path) -> Result<bool> {
    let (p1, p2) = (read_pair(&args.pair1)?, read_pair(&args.pair2)?);
    let mut report = find_zeros(&p1, &p2)?;
    let mut notes = Vec::new();
    let potentials = match (&args.potential1, &args.potential2) {
        (Some(a), Some(b)) => Some((read_field(a)?, read_field(b)?)),
        _ => {
            let anchor = p1.domain().center_node();
            match (potential_from_pair(&p1, anchor), potential_from_pair(&p2, anchor)) {
                (Ok(f1), Ok(f2)) => Some((f1, f2)),
                (Err(e), _) | (_, Err(e)) => {
                    notes.push(format!("morse_bound: potential reconstruction failed: {e}"));
                    None
                }
            }
        }
    };
    let morse = potentials.and_then(|(f1, f2)| match audit_count_morse(&f1, &f2, &mut report) {
        Ok(a) => Some(a),
        Err(e) => {
            notes.push(format!("morse_bound: {e}"));
            None
        }
    });
    let transverse = match audit_count_transverse(&p1, &p2, &mut report) {
        Ok(a) => Some(a),
        Err(e) => {
            notes.push(format!("transverse_bound: {e}"));
            None
        }
    };
    let out = WindOut {
        boundary_winding: report.boundary_winding,
        zeros: report.zeros.iter().map(|z| ZeroOut { x: z.x, y: z.y, k: z.k }).collect(),
        m: report.m,
        l: report.l,
        bounds: Bounds { morse_bound: morse.map(|a| a.passed), transverse_bound: transverse.map(|a| a.passed) },
        audits: Audits { morse, transverse },
        notes,
    };
    write_json(&output_path(&args.out, dir, "wind.json"), &out)?;
    println!(
        "wind: {} zeros, interior sum {}, m {}, boundary winding {:?}",
        out.zeros.len(),
        report.interior_sum,
        out.m,
        out.boundary_winding
    );
    Ok(out.bounds.morse_bound != Some(false) && out.bounds.transverse_bound != Some(false))
}

fn lift(args: &LiftArgs, dir: &std::path::Path) -> Result<bool> {
    let pair = read_pair(&args.pair)?;
    let projection = match &args.projection {
        None => DEFAULT_PROJECTION,
        Some(names) => {
            let parse = |s: &String| -> Result<Coordinate> {
                serde_json::from_value(serde_json::Value::String(s.clone())).with_context(|| format!("unknown coordinate {s:?}"))
            };
            [parse(&names[0])?, parse(&names[1])?, parse(&names[2])?]
        }
    };
    let report = verify_sl(&pair, args.theta_samples)?;
    export_mesh(&pair, args.theta_samples, projection, &output_path(&args.out, dir, "lift.obj"))?;
    write_json(&output_path(&args.report, dir, "lift_report.json"), &report)?;
    println!(
        "lift: {} frames, max |ω| {:.3e}, max |Im Ω| {:.3e}, min Re Ω {:.3e}",
        report.frames_checked, report.max_omega, report.max_im_omega, report.min_re_omega
    );
    Ok(true)
}

#[derive(Serialize)]
struct ConvergenceOut {
    kind: LadderKind,
    a: f64,
    ladders: BTreeMap<&'static str, Ladder>,
    newton_iterations: Option<Vec<usize>>,
}

fn convergence(args: &ConvergenceArgs, dir: &std::path::Path) -> Result<bool> {
    if args.sizes.len() < 2 {
        bail!("a refinement ladder needs at least two sizes");
    }
    let opts = SolverOptions::default();
    let mut ladders = BTreeMap::new();
    let mut newton_iterations = None;
    match args.kind {
        LadderKind::HlResidual => {
            ladders.insert("cr_residual", harvey_lawson_fd_ladder(args.a, &args.sizes));
        }
        LadderKind::FSolver | LadderKind::VSolver | LadderKind::SlLift if args.a == 0.0 => {
            bail!("zero-a-rejected: solver ladders need a != 0")
        }
        LadderKind::FSolver => {
            let (ladder, reports) = f_solver_ladder(args.a, &args.sizes, &opts)?;
            ladders.insert("sup_error", ladder);
            newton_iterations = Some(reports.iter().map(|r| r.iterations).collect());
        }
        LadderKind::VSolver | LadderKind::SlLift => {
            let levels = v_solver_levels(args.a, &args.sizes, &opts)?;
            newton_iterations = Some(levels.iter().map(|l| l.report.iterations).collect());
            if matches!(args.kind, LadderKind::VSolver) {
                ladders.insert("sup_error", ladder_of(&levels, |l| l.error));
            } else {
                let reports = levels.iter().map(|l| verify_sl(&l.pair, 4)).collect::<Result<Vec<_>, _>>()?;
                let pick = |f: fn(&sl3lab::sl_geometry::SlReport) -> f64| {
                    Ladder::new(
                        levels.iter().map(|l| l.n).collect(),
                        levels.iter().map(|l| l.h).collect(),
                        reports.iter().map(f).collect(),
                    )
                };
                ladders.insert("max_omega", pick(|r| r.max_omega));
                ladders.insert("max_im_omega", pick(|r| r.max_im_omega));
            }
        }
    }
    for (name, l) in &ladders {
        println!("{name}: errors {:?}, fitted order {:.3}, worst order {:.3}", l.errors, l.fitted_order, l.worst_order());
    }
    let ok = args.min_order.is_none_or(|m| ladders.values().all(|l| l.worst_order() >= m));
    let out = ConvergenceOut { kind: args.kind, a: args.a, ladders, newton_iterations };
    write_json(&output_path(&args.out, dir, "convergence.json"), &out)?;
    Ok(ok)
}
