//! Acceptance suite: one PASS/FAIL line per criterion.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fsi_core::config::RunConfig;
use fsi_core::coupling::{
    coupling_residuals, epsilon_limit_study, fixed_point_solve, log_log_slope, nonincreasing_within,
    CouplingConfig,
};
use fsi_core::fluid::StepOptions;
use fsi_core::fluid::FluidOperators;
use fsi_core::law::{DiffusionLaw, FluidParams, SolidParams};
use fsi_core::mesh::{build_geometry, Preset, TimeGrid};
use fsi_core::mms::{fluid_mms_run, observed_orders, solid_mms_run, FluidMms};
use fsi_core::norms::InterfaceGram;
use fsi_core::verify::{coupling_constants, paper_rho, verify_poincare_time};
use fsi_core::Result;

const SEED: u64 = 42;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fsi(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fsi")).args(args).output().expect("fsi binary runs")
}

fn config_text(preset: Preset) -> String {
    format!("[geometry]\npreset = \"{preset}\"\n")
}

fn sci(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", "))
}

// ---------------------------------------------------------------------------

fn zero_data(preset: Preset) -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let cfg = dir.path().join("zero.toml");
    fs::write(&cfg, config_text(preset))?;
    let out = dir.path().join("out");
    let t = Instant::now();
    let run = fsi(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let elapsed = t.elapsed();
    let history = fs::read_to_string(out.join("history.csv"))?;
    let max_k = history.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap()).max();
    let norms = fs::read_to_string(out.join("norms.csv"))?;
    let x = norms
        .lines()
        .find(|l| l.starts_with("x_norm,"))
        .and_then(|l| l.split(',').nth(1))
        .map(|v| v.parse::<f64>().unwrap())
        .unwrap_or(f64::NAN);
    let pass = run.status.success() && max_k == Some(1) && x <= 1e-12 && elapsed < Duration::from_secs(10);
    Ok(outcome(
        pass,
        format!("exit {:?}, outer iterations per eps {max_k:?}, |u*|_X = {x:e}, {elapsed:.1?}", run.status.code()),
    ))
}

fn solid_mms() -> Result<Outcome> {
    let t = Instant::now();
    let params = SolidParams::new(1.0, 1.0)?;
    let reports = (1..=3).map(|r| solid_mms_run(params, r)).collect::<Result<Vec<_>>>()?;
    let h: Vec<f64> = reports.iter().map(|r| r.h).collect();
    let e: Vec<f64> = reports.iter().map(|r| r.l2_error).collect();
    let orders = observed_orders(&h, &e);
    let elapsed = t.elapsed();
    let pass = orders.iter().all(|o| *o >= 1.9) && elapsed < Duration::from_secs(120);
    Ok(outcome(pass, format!("L2 errors {}, orders {orders:.3?} (need >= 1.9), {elapsed:.1?}", sci(&e))))
}

fn fluid_mms() -> Result<Outcome> {
    let t = Instant::now();
    let opts = StepOptions::default();
    let mms = FluidMms { kappa: 1.0 };
    let reports = (1..=3).map(|r| fluid_mms_run(&mms, r, 4, &opts)).collect::<Result<Vec<_>>>()?;
    let h: Vec<f64> = reports.iter().map(|r| r.h).collect();
    let e: Vec<f64> = reports.iter().map(|r| r.h1_error).collect();
    let orders = observed_orders(&h, &e);
    let div = reports.iter().map(|r| r.max_divergence).fold(0.0, f64::max);
    let elapsed = t.elapsed();
    let pass = orders.iter().all(|o| *o >= 1.7) && div <= 10.0 * opts.tol && elapsed < Duration::from_secs(180);
    Ok(outcome(
        pass,
        format!("H1 errors {}, orders {orders:.3?} (need >= 1.7), max divergence {div:.2e} (<= {:.0e}), {elapsed:.1?}", sci(&e), 10.0 * opts.tol),
    ))
}

fn monotone_step() -> Result<Outcome> {
    let law = DiffusionLaw::saturating(1.0, 1.0)?;
    let (c_m, lip) = (law.c_m(), law.lipschitz());
    let mesh = build_geometry(Preset::FlatChannel, 0.0, 1)?;
    let ops = FluidOperators::new(&mesh, FluidParams::new(law), TimeGrid::new(1.0, 4)?)?;
    let loads = ops.space.body_load(&|p| [10.0 * (3.0 * p[1]).sin(), -10.0]);
    let z = vec![0.0; ops.n_velocity()];
    let step = ops.solve_step(0.0, 0.25, &z, &loads, &StepOptions { tol: 1e-12, ..Default::default() })?;
    let ks: Vec<f64> = (0..step.history.len()).map(|k| k as f64 + 1.0).collect();
    // geometric fit: slope of ln r_k against k
    let n = ks.len() as f64;
    let ys: Vec<f64> = step.history.iter().map(|r| r.ln()).collect();
    let (mx, my) = (ks.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = ks.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = ks.iter().map(|x| (x - mx).powi(2)).sum();
    let factor = (sxy / sxx).exp();
    let bound = 3f64.sqrt() / 2.0 + 0.05;
    let pass = step.history.len() >= 9 && factor <= bound;
    Ok(outcome(
        pass,
        format!(
            "c_m = {c_m}, L = {lip}, {} Picard iterations, fitted factor {factor:.4} (<= {bound:.4})",
            step.iterations
        ),
    ))
}

#[derive(Clone, Copy)]
struct Replay {
    rho_cs_cf: f64,
    max_factor: f64,
    max_iterations: usize,
    displacement_gap: f64,
    traction_gap: f64,
    tol_abs: f64,
    elapsed: Duration,
}

fn replay(preset: Preset, refinement: u32, force: &str) -> Result<Replay> {
    let t = Instant::now();
    let mut cfg = RunConfig::parse_str(&config_text(preset))?;
    cfg.geometry.refinement = refinement;
    cfg.data.body_force = force.into();
    cfg.validate()?;
    let problem = cfg.build_problem(None)?;
    let (c_s, c_f) = coupling_constants(&problem, refinement, &cfg.verify_settings(SEED))?;
    let rho = paper_rho(c_s, c_f);
    let coupling = CouplingConfig { rho, omega: 1.0, ..cfg.coupling_config() };
    let solution = fixed_point_solve(&problem, &coupling, &problem.zero_trace())?;
    let (displacement_gap, traction_gap) = coupling_residuals(&problem, &solution)?;
    Ok(Replay {
        rho_cs_cf: rho * c_s * c_f,
        max_factor: solution
            .history
            .iter()
            .filter(|h| h.k >= 2)
            .filter_map(|h| h.contraction_factor)
            .fold(0.0, f64::max),
        max_iterations: solution.history.iter().map(|h| h.k).max().unwrap_or(0),
        displacement_gap,
        traction_gap,
        tol_abs: coupling.tol_abs,
        elapsed: t.elapsed(),
    })
}

const FORCES: [(&str, &str); 2] = [("downward", "downward unit force"), ("swirl", "rotational unit force")];

fn contraction_replay(preset: Preset, runs: &[(String, Replay)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, r) in runs {
        let ok = r.max_factor <= 0.6 && r.max_iterations <= 30 && r.elapsed < Duration::from_secs(300);
        pass &= ok;
        parts.push(format!(
            "{label}: rho*Cs*Cf = {:.3}, max factor (k>=2) {:.3} (<= 0.6), max iterations {} (<= 30), {:.1?}",
            r.rho_cs_cf, r.max_factor, r.max_iterations, r.elapsed
        ));
    }
    outcome(pass, format!("{preset}, r=1; {}", parts.join("; ")))
}

fn residuals(runs: &[(String, Replay, Replay)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, r1, r2) in runs {
        let disp_ok = r1.displacement_gap <= 10.0 * r1.tol_abs && r2.displacement_gap <= 10.0 * r2.tol_abs;
        let trivial = r1.traction_gap <= 1e-12 && r2.traction_gap <= 1e-12;
        let ratio = r1.traction_gap / r2.traction_gap;
        let ok = disp_ok && (trivial || ratio >= 1.5);
        pass &= ok;
        parts.push(format!(
            "{label}: displacement gap {:.2e}/{:.2e} (<= {:.0e}), traction gap {:.3e} -> {:.3e}{}",
            r1.displacement_gap,
            r2.displacement_gap,
            10.0 * r1.tol_abs,
            r1.traction_gap,
            r2.traction_gap,
            if trivial {
                " (zero fixed point: gaps at round-off)".to_string()
            } else {
                format!(", factor {ratio:.2} (>= 1.5)")
            }
        ));
    }
    outcome(pass, parts.join("; "))
}

fn eps_limit(preset: Preset) -> Result<Outcome> {
    let t = Instant::now();
    let schedule = [1e-1, 1e-2, 1e-3, 1e-4];
    let mut cfg = RunConfig::parse_str(&config_text(preset))?;
    cfg.data.body_force = "swirl".into();
    let coupling = cfg.coupling_config();
    let (rows, _) = epsilon_limit_study(&cfg.build_problem(None)?, &coupling, &schedule)?;
    let col = |f: &dyn Fn(&fsi_core::coupling::EpsStudyRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let (u, g, reg) = (col(&|r| r.u_diff_x), col(&|r| r.grad_diff), col(&|r| r.reg_energy));
    let mono = [
        ("u", nonincreasing_within(&u, 0.1)),
        ("grad", nonincreasing_within(&g, 0.1)),
        ("reg", nonincreasing_within(&reg, 0.1)),
    ];

    cfg.law.id = "linear".into();
    let (lin_rows, _) = epsilon_limit_study(&cfg.build_problem(None)?, &coupling, &schedule)?;
    let n = lin_rows.len() - 1;
    let eps: Vec<f64> = lin_rows[..n].iter().map(|r| r.eps).collect();
    let du: Vec<f64> = lin_rows[..n].iter().map(|r| r.u_diff_x).collect();
    let slope = log_log_slope(&eps, &du).unwrap_or(f64::NAN);
    let elapsed = t.elapsed();

    let pass = mono.iter().all(|m| m.1) && slope >= 0.8 && elapsed < Duration::from_secs(600);
    Ok(outcome(
        pass,
        format!(
            "{preset}, rotational unit force; nonincreasing within 10%: {}; u-column {}; reg column {} \
             (eps=1e-4 / eps=1e-1 = {:.3e}); linear-law slope {slope:.3} (>= 0.8); {elapsed:.1?}",
            mono.iter().map(|(n, ok)| format!("{n}={ok}")).collect::<Vec<_>>().join(" "),
            sci(&u),
            sci(&reg),
            reg[3] / reg[0],
        ),
    ))
}

fn poincare() -> Result<Outcome> {
    let mesh = build_geometry(Preset::FlatChannel, 0.0, 1)?;
    let gram = InterfaceGram::for_mesh(&mesh)?;
    let grid = TimeGrid::new(1.0, 10)?;
    let check = verify_poincare_time(&grid, &gram, 20, &mut ChaCha8Rng::seed_from_u64(SEED))?;
    Ok(outcome(
        check.passes(),
        format!(
            "(2T/pi)^2 = {:.4}, extremal ratio {:.4} ({:+.2}%, within 5%), random max {:.4} over {} samples (<= {:.4})",
            check.bound,
            check.extremal_ratio,
            100.0 * (check.extremal_ratio / check.bound - 1.0),
            check.max_ratio,
            check.samples,
            1.1 * check.bound
        ),
    ))
}

fn read_report(dir: &Path) -> Result<String> {
    Ok(fs::read_to_string(dir.join("estimate_report.csv"))?)
}

fn constant_of(report: &str, id: &str, refinement: u32) -> f64 {
    report
        .lines()
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|f| f[0] == id && f[3] == refinement.to_string())
        .map(|f| f[1].parse().unwrap())
        .unwrap_or(f64::NAN)
}

fn estimate_stability() -> Result<Outcome> {
    let t = Instant::now();
    let dir = tempfile::tempdir()?;
    let cfg = dir.path().join("default.toml");
    fs::write(&cfg, config_text(Preset::FlatChannel))?;
    let mut reports = Vec::new();
    let mut codes = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let run = fsi(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "42"]);
        codes.push(run.status.code());
        reports.push(read_report(&out)?);
    }
    let report = &reports[0];
    let spread = |id: &str| {
        let (a, b) = (constant_of(report, id, 1), constant_of(report, id, 2));
        a.max(b) / a.min(b)
    };
    let (s_cs, s_cf) = (spread("LAME_INVERSE"), spread("T2_LIPSCHITZ"));
    let all_true = report.lines().skip(1).all(|l| l.split(',').nth(4) == Some("true"));
    let identical = reports[0] == reports[1];
    let pass = s_cs <= 2.0 && s_cf <= 2.0 && all_true && codes.iter().all(|c| *c == Some(0)) && identical;
    Ok(outcome(
        pass,
        format!(
            "C_s r1/r2 = {:.4}/{:.4} (spread {s_cs:.3}), C_f r1/r2 = {:.4}/{:.4} (spread {s_cf:.3}); \
             all records pass: {all_true}; exit codes {codes:?}; bitwise identical: {identical}; {:.1?}",
            constant_of(report, "LAME_INVERSE", 1),
            constant_of(report, "LAME_INVERSE", 2),
            constant_of(report, "T2_LIPSCHITZ", 1),
            constant_of(report, "T2_LIPSCHITZ", 2),
            t.elapsed()
        ),
    ))
}

fn coupling_runs(preset: Preset) -> Result<Vec<(String, Replay, Replay)>> {
    FORCES
        .iter()
        .map(|(id, label)| Ok((label.to_string(), replay(preset, 1, id)?, replay(preset, 2, id)?)))
        .collect()
}

fn report(name: &str, result: Result<Outcome>, failures: &mut Vec<String>) {
    let (pass, detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    if !pass {
        failures.push(name.to_string());
    }
}

fn main() {
    // `cargo test -- --list` and filters: nothing to enumerate
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failures = Vec::new();

    report("zero-data fixed point", zero_data(Preset::FlatChannel), &mut failures);
    report("solid MMS order", solid_mms(), &mut failures);
    report("fluid MMS order and divergence", fluid_mms(), &mut failures);
    report("monotone step solver factor", monotone_step(), &mut failures);

    let flat = coupling_runs(Preset::FlatChannel);
    let flat_r1 = |runs: &Vec<(String, Replay, Replay)>| {
        runs.iter().map(|(l, r1, _)| (l.clone(), *r1)).collect::<Vec<_>>()
    };
    report(
        "contraction replay",
        flat.as_ref().map(|runs| contraction_replay(Preset::FlatChannel, &flat_r1(runs))).map_err(clone_err),
        &mut failures,
    );
    report("eps-limit study", eps_limit(Preset::FlatChannel), &mut failures);
    report("Poincare in time", poincare(), &mut failures);
    report("estimate stability and reproducible report", estimate_stability(), &mut failures);
    report("coupling residuals", flat.as_ref().map(|runs| residuals(runs)).map_err(clone_err), &mut failures);

    let curved = (|| -> Result<Outcome> {
        let zero = zero_data(Preset::CurvedInterface)?;
        let runs = coupling_runs(Preset::CurvedInterface)?;
        let rep = contraction_replay(Preset::CurvedInterface, &flat_r1(&runs));
        let res = residuals(&runs);
        let eps = eps_limit(Preset::CurvedInterface)?;
        let pass = zero.pass && rep.pass && res.pass && eps.pass;
        let tag = |o: &Outcome| if o.pass { "pass" } else { "FAIL" };
        Ok(outcome(
            pass,
            format!(
                "amplitude 0.1 | zero data [{}] {} | replay [{}] {} | residuals [{}] {} | eps-limit [{}] {}",
                tag(&zero),
                zero.detail,
                tag(&rep),
                rep.detail,
                tag(&res),
                res.detail,
                tag(&eps),
                eps.detail
            ),
        ))
    })();
    report("curved interface parity", curved, &mut failures);

    println!("acceptance: {} of 10 criteria passed", 10 - failures.len());
    if !failures.is_empty() {
        println!("failed: {}", failures.join(", "));
        std::process::exit(1);
    }
}

fn clone_err(e: &fsi_core::FsiError) -> fsi_core::FsiError {
    fsi_core::FsiError::Numerical(e.to_string())
}
