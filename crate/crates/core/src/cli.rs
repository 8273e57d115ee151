//! Command-line front end: argument parsing, run orchestration and CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, RhoMode, RunConfig};
use crate::coupling::{
    coupling_residuals, epsilon_limit_study, fixed_point_solve, CoupledProblem, CoupledSolution,
    EpsStudyRow, HistoryRecord,
};
use crate::error::{FsiError, Result};
use crate::fluid::{direct_traction_series, FluidState};
use crate::law::certify_constants;
use crate::mms::{fluid_mms_run, observed_orders, solid_mms_run, FluidMms};
use crate::norms::{dual_l2_norm, x_norm, NormReport};
use crate::solid::{recover_traction, solve_lame_dirichlet, SolidState};
use crate::trace::{TraceRole, TraceSeries};
use crate::verify::{coupling_constants, paper_rho, run_full_report, EstimateReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ITERATION: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "fsi", version, about = "Lamé solid / quasi-linear Stokes fluid coupling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides output.out_dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed (overrides output.seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write per-step field CSVs.
    #[arg(long)]
    pub dump_fields: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coupled fixed-point solve along the ε schedule.
    Run(CommonArgs),
    /// Solid Dirichlet-to-traction map on a sample interface displacement.
    Solid(CommonArgs),
    /// Regularized fluid solve with zero interface traction at the final ε.
    Fluid(CommonArgs),
    /// Estimate-verification report.
    Verify(CommonArgs),
    /// Manufactured-solution refinement study and ε-limit study.
    Study(CommonArgs),
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
    seed: u64,
    dump_fields: bool,
}

fn prepare(args: &CommonArgs) -> Result<Context> {
    let cfg = parse_config(&args.config)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.out_dir));
    fs::create_dir_all(&out)?;
    // verbatim copy of the configuration
    fs::copy(&args.config, out.join("config.toml"))?;
    Ok(Context {
        seed: args.seed.unwrap_or(cfg.output.seed),
        dump_fields: args.dump_fields || cfg.output.dump_fields,
        cfg,
        out,
    })
}

fn exit_code(e: &FsiError) -> i32 {
    match e {
        FsiError::Config(_) | FsiError::Geometry(_) => EXIT_CONFIG,
        FsiError::IterationFailure { .. } | FsiError::NonlinearDivergence { .. } => EXIT_ITERATION,
        _ => EXIT_RUNTIME,
    }
}

/// Runs one command and returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    let (args, cmd): (&CommonArgs, fn(&Context) -> Result<i32>) = match &cli.command {
        Command::Run(a) => (a, cmd_run),
        Command::Solid(a) => (a, cmd_solid),
        Command::Fluid(a) => (a, cmd_fluid),
        Command::Verify(a) => (a, cmd_verify),
        Command::Study(a) => (a, cmd_study),
    };
    let ctx = match prepare(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                FsiError::Io(_) => EXIT_RUNTIME,
                _ => EXIT_CONFIG,
            };
        }
    };
    match cmd(&ctx) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let FsiError::IterationFailure { history, .. } = &e {
                if let Err(w) = write_history(&ctx.out, history) {
                    eprintln!("error: could not write history: {w}");
                }
            }
            exit_code(&e)
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_history(out: &Path, history: &[HistoryRecord]) -> Result<()> {
    let mut s = format!("{}\n", HistoryRecord::CSV_HEADER);
    for h in history {
        s.push_str(&h.csv_row());
        s.push('\n');
    }
    write(&out.join("history.csv"), &s)
}

/// `t,arclength,<x>,<y>` rows for every time and interior interface node.
fn trace_csv(series: &TraceSeries, problem: &CoupledProblem, labels: (&str, &str)) -> String {
    let mut s = format!("t,arclength,{},{}\n", labels.0, labels.1);
    for (n, step) in series.steps.iter().enumerate() {
        let t = problem.grid.time(n);
        for (i, arc) in problem.gram.arclength.iter().enumerate() {
            let _ = writeln!(s, "{t},{arc},{},{}", step[2 * i], step[2 * i + 1]);
        }
    }
    s
}

fn picard_csv(state: &FluidState) -> String {
    let mut s = String::from("step,picard_its,final_residual\n");
    for (n, (its, res)) in state.iterations.iter().zip(&state.residuals).enumerate() {
        let _ = writeln!(s, "{},{its},{res:e}", n + 1);
    }
    s
}

fn norms_csv(reports: &[NormReport]) -> String {
    let mut s = format!("{}\n", NormReport::CSV_HEADER);
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

fn dump_fluid(dir: &Path, problem: &CoupledProblem, fluid: &FluidState) -> Result<()> {
    let space = &problem.fluid.space;
    for (n, (v, p)) in fluid.v.iter().zip(&fluid.p).enumerate() {
        let mut s = String::from("node,v_x,v_y,pi\n");
        for i in 0..space.n_vertices {
            let _ = writeln!(s, "{i},{},{},{}", v[2 * i], v[2 * i + 1], p[i]);
        }
        write(&dir.join(format!("fluid_step_{n:04}.csv")), &s)?;
    }
    Ok(())
}

fn dump_solid(dir: &Path, solid: &SolidState) -> Result<()> {
    for (n, u) in solid.u.iter().enumerate() {
        let mut s = String::from("node,u_x,u_y\n");
        for i in 0..u.len() / 2 {
            let _ = writeln!(s, "{i},{},{}", u[2 * i], u[2 * i + 1]);
        }
        write(&dir.join(format!("solid_step_{n:04}.csv")), &s)?;
    }
    Ok(())
}

fn fields_dir(out: &Path) -> Result<PathBuf> {
    let dir = out.join("fields");
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn cmd_run(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.cfg;
    let problem = cfg.build_problem(None)?;
    problem.mesh.write_csv(&ctx.out)?;
    let mut coupling = cfg.coupling_config();
    if cfg.rho_mode()? == RhoMode::Paper {
        let settings = cfg.verify_settings(ctx.seed);
        let (c_s, c_f) = coupling_constants(&problem, cfg.geometry.refinement, &settings)?;
        coupling.rho = paper_rho(c_s, c_f);
        coupling.omega = 1.0;
        eprintln!("paper mode: C_s = {c_s:.6}, C_f = {c_f:.6}, rho = {:.6}", coupling.rho);
    }
    let solution = fixed_point_solve(&problem, &coupling, &problem.zero_trace())?;
    write_run_outputs(ctx, &problem, &solution)?;
    Ok(EXIT_OK)
}

fn write_run_outputs(ctx: &Context, problem: &CoupledProblem, solution: &CoupledSolution) -> Result<()> {
    let out = &ctx.out;
    write_history(out, &solution.history)?;
    write(&out.join("trace.csv"), &trace_csv(&solution.u_star, problem, ("u_x", "u_y")))?;
    write(&out.join("picard.csv"), &picard_csv(&solution.fluid))?;
    let (disp_gap, traction_gap) = coupling_residuals(problem, solution)?;
    let fluid_traction = direct_traction_series(&problem.fluid, &solution.fluid);
    let reports = vec![
        x_norm(&problem.gram, &problem.grid, &solution.u_star)?,
        NormReport::from_components(
            "traction_dual_l2",
            vec![
                ("solid".into(), dual_l2_norm(&problem.gram, &problem.grid, &solution.traction)?),
                ("fluid".into(), dual_l2_norm(&problem.gram, &problem.grid, &fluid_traction)?),
            ],
        ),
        NormReport { name: "displacement_gap".into(), value: disp_gap, components: vec![] },
        NormReport { name: "traction_gap".into(), value: traction_gap, components: vec![] },
    ];
    write(&out.join("norms.csv"), &norms_csv(&reports))?;
    if ctx.dump_fields {
        let dir = fields_dir(out)?;
        dump_fluid(&dir, problem, &solution.fluid)?;
        dump_solid(&dir, &solve_lame_dirichlet(&problem.solid, &solution.u_star, None)?)?;
    }
    Ok(())
}

/// `u(t, s) = (0, 0.01 (t/T)² sin(πs/|Σ|))` on the interior interface nodes.
fn sample_displacement(problem: &CoupledProblem) -> TraceSeries {
    let grid = problem.grid;
    let arc = &problem.gram.arclength;
    let total = problem.mesh.interface_arclength().last().copied().unwrap_or(1.0);
    TraceSeries::from_fn(TraceRole::Displacement, &grid, arc.len(), |n, i| {
        let t = grid.time(n) / grid.t_final;
        [0.0, 0.01 * t * t * (std::f64::consts::PI * arc[i] / total).sin()]
    })
}

fn cmd_solid(ctx: &Context) -> Result<i32> {
    let problem = ctx.cfg.build_problem(None)?;
    problem.mesh.write_csv(&ctx.out)?;
    let u = sample_displacement(&problem);
    let state = solve_lame_dirichlet(&problem.solid, &u, None)?;
    let g = recover_traction(&problem.solid, &state, None)?;
    write(&ctx.out.join("trace.csv"), &trace_csv(&u, &problem, ("u_x", "u_y")))?;
    write(&ctx.out.join("traction.csv"), &trace_csv(&g, &problem, ("g_x", "g_y")))?;
    let reports = vec![
        x_norm(&problem.gram, &problem.grid, &u)?,
        NormReport {
            name: "traction_dual_l2".into(),
            value: dual_l2_norm(&problem.gram, &problem.grid, &g)?,
            components: vec![],
        },
    ];
    write(&ctx.out.join("norms.csv"), &norms_csv(&reports))?;
    if ctx.dump_fields {
        dump_solid(&fields_dir(&ctx.out)?, &state)?;
    }
    Ok(EXIT_OK)
}

fn cmd_fluid(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.cfg;
    let problem = cfg.build_problem(None)?;
    problem.mesh.write_csv(&ctx.out)?;
    let eps = *cfg.coupling.eps_schedule.last().unwrap();
    let g = TraceSeries::zeros(TraceRole::TractionLoad, problem.grid.n_steps + 1, problem.n_interface_nodes());
    let (u, state) = problem.t2eps(&g, eps)?;
    write(&ctx.out.join("trace.csv"), &trace_csv(&u, &problem, ("u_x", "u_y")))?;
    write(&ctx.out.join("picard.csv"), &picard_csv(&state))?;
    let reports = vec![
        x_norm(&problem.gram, &problem.grid, &u)?,
        problem.fluid_velocity_norm(&state)?,
    ];
    write(&ctx.out.join("norms.csv"), &norms_csv(&reports))?;
    if ctx.dump_fields {
        dump_fluid(&fields_dir(&ctx.out)?, &problem, &state)?;
    }
    Ok(EXIT_OK)
}

fn report_summary(report: &EstimateReport) -> String {
    let mut s = String::new();
    for r in &report.records {
        let _ = writeln!(s, "{:<15} r={} constant={:.6e} pass={}", r.id.as_str(), r.refinement, r.constant, r.pass);
    }
    s
}

fn cmd_verify(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.cfg;
    let law = cfg.law()?;
    let settings = cfg.verify_settings(ctx.seed);
    let build = |r: u32| cfg.build_problem(Some(r));
    let (report, _) = run_full_report(&build, &law, &cfg.coupling_config(), &settings)?;
    write(&ctx.out.join("estimate_report.csv"), &report.to_csv())?;
    if let Some(e) = &report.certification_error {
        eprintln!("law certification failed: {e}");
    }
    eprint!("{}", report_summary(&report));
    Ok(if report.all_pass() { EXIT_OK } else { EXIT_VERIFY })
}

fn cmd_study(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.cfg;
    // the law must be admissible before any solver runs
    certify_constants(&cfg.law()?, 10_000, ctx.seed)?;
    let solid = cfg.solid_params()?;
    let levels = [1u32, 2, 3];
    let mut table = String::from("solver,refinement,h,error,order\n");
    mms_rows(&mut table, "solid_l2", &levels, |r| {
        let rep = solid_mms_run(solid, r)?;
        Ok((rep.h, rep.l2_error))
    })?;
    let mms = FluidMms { kappa: 1.0 };
    let opts = cfg.step_options();
    mms_rows(&mut table, "fluid_h1", &levels, |r| {
        let rep = fluid_mms_run(&mms, r, 4 << r, &opts)?;
        Ok((rep.h, rep.h1_error))
    })?;
    write(&ctx.out.join("mms_convergence.csv"), &table)?;

    let problem = cfg.build_problem(None)?;
    let coupling = cfg.coupling_config();
    let (rows, solution) = epsilon_limit_study(&problem, &coupling, &coupling.eps_schedule)?;
    let mut s = format!("{}\n", EpsStudyRow::CSV_HEADER);
    for r in &rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    write(&ctx.out.join("eps_study.csv"), &s)?;
    write_history(&ctx.out, &solution.history)?;
    Ok(EXIT_OK)
}

fn mms_rows(
    table: &mut String,
    name: &str,
    levels: &[u32],
    run: impl Fn(u32) -> Result<(f64, f64)>,
) -> Result<()> {
    let results: Vec<(f64, f64)> = levels.iter().map(|&r| run(r)).collect::<Result<_>>()?;
    let h: Vec<f64> = results.iter().map(|x| x.0).collect();
    let e: Vec<f64> = results.iter().map(|x| x.1).collect();
    let orders = observed_orders(&h, &e);
    for (k, &r) in levels.iter().enumerate() {
        let order = if k == 0 { String::new() } else { format!("{:.4}", orders[k - 1]) };
        let _ = writeln!(table, "{name},{r},{:e},{:e},{order}", h[k], e[k]);
    }
    Ok(())
}
