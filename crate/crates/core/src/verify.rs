//! Empirical constants of the a-priori estimates and their pass rules.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coupling::{
    epsilon_limit_study, initial_velocity, nonincreasing_within, CoupledProblem, CouplingConfig,
    InitialVelocity,
};
use crate::error::{FsiError, Result};
use crate::fem::{compress_mask, CsrMatrix, SparseLu};
use crate::fluid::{solve_stokes_quasilinear, FluidData, FluidOperators};
use crate::law::{certify_constants, DiffusionLaw};
use crate::mesh::TimeGrid;
use crate::norms::{dual_l2_norm, fractional_norm_vec, InterfaceGram};
use crate::solid::operator_t1;
use crate::trace::{trapezoid_accumulate, TraceRole, TraceSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimateId {
    LameInverse,
    FluidEnergy,
    PoincareTime,
    T2Lipschitz,
    TepsLipschitz,
    EpsLimit,
}

impl EstimateId {
    pub const ALL: [EstimateId; 6] = [
        EstimateId::LameInverse,
        EstimateId::FluidEnergy,
        EstimateId::PoincareTime,
        EstimateId::T2Lipschitz,
        EstimateId::TepsLipschitz,
        EstimateId::EpsLimit,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimateId::LameInverse => "LAME_INVERSE",
            EstimateId::FluidEnergy => "FLUID_ENERGY",
            EstimateId::PoincareTime => "POINCARE_TIME",
            EstimateId::T2Lipschitz => "T2_LIPSCHITZ",
            EstimateId::TepsLipschitz => "TEPS_LIPSCHITZ",
            EstimateId::EpsLimit => "EPS_LIMIT",
        }
    }
}

impl fmt::Display for EstimateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassFlag {
    Pass,
    Fail,
    NotEvaluated,
}

impl PassFlag {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            PassFlag::Pass
        } else {
            PassFlag::Fail
        }
    }
}

impl fmt::Display for PassFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PassFlag::Pass => "true",
            PassFlag::Fail => "false",
            PassFlag::NotEvaluated => "not-evaluated",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub id: EstimateId,
    pub constant: f64,
    pub samples: usize,
    pub refinement: u32,
    pub pass: PassFlag,
    pub slack: f64,
}

impl EstimateRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{},{},{},{}",
            self.id, self.constant, self.samples, self.refinement, self.pass, self.slack
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimateReport {
    pub records: Vec<EstimateRecord>,
    /// Set when the diffusion law failed certification; no solver ran.
    pub certification_error: Option<String>,
}

impl EstimateReport {
    pub const CSV_HEADER: &'static str = "estimate_id,constant,samples,refinement,pass,slack";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    /// No record failed (not-evaluated records do not count as failures).
    pub fn all_pass(&self) -> bool {
        self.certification_error.is_none() && self.records.iter().all(|r| r.pass != PassFlag::Fail)
    }

    pub fn get(&self, id: EstimateId, refinement: u32) -> Option<&EstimateRecord> {
        self.records.iter().find(|r| r.id == id && r.refinement == refinement)
    }
}

/// Smooth scalar envelope `Σ_j b_j sin(jπt/(2T))`, zero at `t = 0`.
fn random_envelope(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.random_range(0.5..1.0), rng.random_range(-0.5..0.5), rng.random_range(-0.3..0.3)]
}

fn envelope(b: &[f64; 3], t: f64, t_final: f64) -> f64 {
    b.iter().enumerate().map(|(j, bj)| bj * ((j + 1) as f64 * PI * t / (2.0 * t_final)).sin()).sum()
}

/// Truncated interface-eigenbasis expansion with smooth random time
/// envelopes vanishing at `t = 0`.
pub fn random_displacement(
    gram: &InterfaceGram,
    grid: &TimeGrid,
    rng: &mut ChaCha8Rng,
    n_modes: usize,
    amplitude: f64,
) -> TraceSeries {
    let m = n_modes.min(gram.dim()).max(1);
    let modes: Vec<Vec<f64>> = (0..m).map(|i| gram.eigenvector(i)).collect();
    let terms: Vec<(usize, usize, f64, [f64; 3])> = (0..m)
        .flat_map(|i| (0..2).map(move |c| (i, c)))
        .map(|(i, c)| (i, c, rng.random_range(-1.0..1.0) / (1.0 + i as f64), random_envelope(rng)))
        .collect();
    TraceSeries::from_fn(TraceRole::Displacement, grid, gram.dim(), |n, node| {
        let t = grid.time(n);
        let mut out = [0.0; 2];
        for (i, c, a, b) in &terms {
            out[*c] += amplitude * a * envelope(b, t, grid.t_final) * modes[*i][node];
        }
        out
    })
}

/// Load vectors `M_Σ u` of a nodal series, component-wise.
pub fn to_load(gram: &InterfaceGram, u: &TraceSeries) -> TraceSeries {
    let steps = u
        .steps
        .iter()
        .map(|s| {
            let mut out = vec![0.0; s.len()];
            for c in 0..2 {
                let comp: Vec<f64> = s.iter().skip(c).step_by(2).copied().collect();
                let v = &gram.mass * nalgebra::DVector::from_column_slice(&comp);
                for (i, x) in v.iter().enumerate() {
                    out[2 * i + c] = *x;
                }
            }
            out
        })
        .collect();
    TraceSeries { role: TraceRole::TractionLoad, n_nodes: u.n_nodes, steps }
}

pub fn random_traction(
    gram: &InterfaceGram,
    grid: &TimeGrid,
    rng: &mut ChaCha8Rng,
    n_modes: usize,
    amplitude: f64,
) -> TraceSeries {
    to_load(gram, &random_displacement(gram, grid, rng, n_modes, amplitude))
}

fn trapezoid_l2_sq(gram: &InterfaceGram, grid: &TimeGrid, series: &[Vec<f64>]) -> Result<f64> {
    let dt = grid.dt();
    let last = series.len() - 1;
    let mut acc = 0.0;
    for (n, s) in series.iter().enumerate() {
        let w = if n == 0 || n == last { 0.5 } else { 1.0 };
        acc += w * dt * fractional_norm_vec(gram, 0.0, s)?.powi(2);
    }
    Ok(acc)
}

/// `∫‖u‖² / ∫‖v‖²` over `(0, T) x Σ` with `u = ∫₀ᵗ v`; 0 for `v ≡ 0`.
pub fn poincare_ratio(gram: &InterfaceGram, grid: &TimeGrid, velocity: &[Vec<f64>]) -> Result<f64> {
    let u = trapezoid_accumulate(grid, velocity);
    let den = trapezoid_l2_sq(gram, grid, velocity)?;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(trapezoid_l2_sq(gram, grid, &u)? / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareCheck {
    pub bound: f64,
    pub extremal_ratio: f64,
    pub constant_ratio: f64,
    pub max_ratio: f64,
    pub samples: usize,
}

impl PoincareCheck {
    pub fn passes(&self) -> bool {
        (self.extremal_ratio / self.bound - 1.0).abs() <= 0.05
            && self.max_ratio <= self.bound * 1.1
            && self.constant_ratio <= self.bound * 1.1
    }
}

/// Time Poincaré constant for traces vanishing at `t = 0`, sharp value `(2T/π)²`.
pub fn verify_poincare_time(
    grid: &TimeGrid,
    gram: &InterfaceGram,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PoincareCheck> {
    if samples < 20 {
        return Err(FsiError::Precondition(format!("Poincaré check needs >= 20 samples, got {samples}")));
    }
    let t_final = grid.t_final;
    let bound = (2.0 * t_final / PI).powi(2);
    let w = gram.eigenvector(0);
    let shaped = |f: &dyn Fn(f64) -> f64| -> Vec<Vec<f64>> {
        grid.times()
            .into_iter()
            .map(|t| w.iter().flat_map(|x| [f(t) * x, 0.5 * f(t) * x]).collect())
            .collect()
    };
    let extremal_ratio = poincare_ratio(gram, grid, &shaped(&|t| (PI * t / (2.0 * t_final)).cos()))?;
    let constant_ratio = poincare_ratio(gram, grid, &shaped(&|_| 1.0))?;
    let mut max_ratio = 0.0_f64;
    for _ in 0..samples {
        // time-reversed smooth trace: nonzero at t = 0
        let u = random_displacement(gram, grid, rng, 4, 1.0);
        let v: Vec<Vec<f64>> = u.steps.iter().rev().cloned().collect();
        max_ratio = max_ratio.max(poincare_ratio(gram, grid, &v)?);
    }
    Ok(PoincareCheck { bound, extremal_ratio, constant_ratio, max_ratio, samples: samples + 2 })
}

/// `‖T₁u‖_{L²H^{-1/2}} / ‖u‖_X` over random smooth traces (max), and the
/// same ratio for the top interface mode.
pub fn verify_lame_inverse(problem: &CoupledProblem, samples: usize, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    let ratio = |u: &TraceSeries| -> Result<f64> {
        let g = operator_t1(&problem.solid, u)?;
        Ok(dual_l2_norm(&problem.gram, &problem.grid, &g)? / problem.x_norm(u)?)
    };
    let mut c_s = 0.0_f64;
    for _ in 0..samples {
        c_s = c_s.max(ratio(&random_displacement(&problem.gram, &problem.grid, rng, 6, 1.0))?);
    }
    let top = problem.gram.eigenvector(problem.gram.dim() - 1);
    let grid = problem.grid;
    let high = TraceSeries::from_fn(TraceRole::Displacement, &grid, problem.gram.dim(), |n, i| {
        let e = (PI * grid.time(n) / (2.0 * grid.t_final)).sin();
        [e * top[i], 0.0]
    });
    Ok((c_s, ratio(&high)?))
}

/// Max over random traction pairs and `eps_list` of
/// `‖T₂^ε g¹ - T₂^ε g²‖_X / ‖g¹ - g²‖_{L²H^{-1/2}}`.
pub fn verify_t2_lipschitz(
    problem: &CoupledProblem,
    pairs: usize,
    eps_list: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut c_f = 0.0_f64;
    for _ in 0..pairs {
        let g1 = random_traction(&problem.gram, &problem.grid, rng, 6, 1.0);
        let g2 = random_traction(&problem.gram, &problem.grid, rng, 6, 1.0);
        let den = dual_l2_norm(&problem.gram, &problem.grid, &g1.sub(&g2))?;
        for &eps in eps_list {
            let (u1, _) = problem.t2eps(&g1, eps)?;
            let (u2, _) = problem.t2eps(&g2, eps)?;
            c_f = c_f.max(problem.x_norm(&u1.sub(&u2))? / den);
        }
    }
    Ok(c_f)
}

/// Max Lipschitz ratio of `T^ε` in `X` over random pairs, per `ε`.
pub fn verify_teps_lipschitz(
    problem: &CoupledProblem,
    pairs: usize,
    eps_list: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let inputs: Vec<(TraceSeries, TraceSeries)> = (0..pairs)
        .map(|_| {
            (
                random_displacement(&problem.gram, &problem.grid, rng, 6, 0.1),
                random_displacement(&problem.gram, &problem.grid, rng, 6, 0.1),
            )
        })
        .collect();
    eps_list
        .iter()
        .map(|&eps| {
            let mut best = 0.0_f64;
            for (u1, u2) in &inputs {
                let a = problem.operator_teps(u1, eps)?.image;
                let b = problem.operator_teps(u2, eps)?.image;
                best = best.max(problem.x_norm(&a.sub(&b))? / problem.x_norm(&u1.sub(u2))?);
            }
            Ok(best)
        })
        .collect()
}

/// Discrete `H^{-1}` surrogate: the dual of the `H¹` Gram on the non-wall
/// velocity dofs.
struct DualH1 {
    mass: CsrMatrix,
    map: Vec<Option<usize>>,
    n_free: usize,
    lu: SparseLu,
}

impl DualH1 {
    fn new(ops: &FluidOperators) -> Result<Self> {
        let keep: Vec<bool> = (0..ops.n_velocity()).map(|d| !ops.space.dirichlet[d / 2]).collect();
        let (map, free) = compress_mask(&keep);
        let gram = CsrMatrix::combine(&[(1.0, &ops.mass), (1.0, &ops.lap)]);
        let g_ff = gram.restrict(&map, free.len(), &map, free.len());
        Ok(DualH1 { mass: ops.mass.clone(), map, n_free: free.len(), lu: SparseLu::new(&g_ff)? })
    }

    fn load_norm(&self, load: &[f64]) -> f64 {
        let mut b = vec![0.0; self.n_free];
        for (d, m) in self.map.iter().enumerate() {
            if let Some(i) = m {
                b[*i] = load[d];
            }
        }
        let x = self.lu.solve(&b);
        b.iter().zip(&x).map(|(a, c)| a * c).sum::<f64>().max(0.0).sqrt()
    }

    fn nodal_norm(&self, v: &[f64]) -> f64 {
        self.load_norm(&self.mass.mul_vec(v))
    }
}

/// Max over random `(F, g, v⁰)` of
/// `(‖∂_t v‖_{L²H^{-1}} + ‖v‖_{L²H¹}) / (‖F‖_{L²H^{-1}} + ‖g‖_{L²H^{-1/2}} + ‖v⁰‖_{L²})`.
pub fn verify_fluid_energy(
    problem: &CoupledProblem,
    samples: usize,
    eps: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let ops = &problem.fluid;
    let grid = problem.grid;
    let dt = grid.dt();
    let dual = DualH1::new(ops)?;
    let gram = ops.spatial_gram();
    let mut best = 0.0_f64;
    for k in 0..samples {
        // cycle through: traction only, force only, everything
        let use_g = k % 3 != 1;
        let use_f = k % 3 != 0;
        let g = if use_g {
            random_traction(&problem.gram, &grid, rng, 6, 1.0)
        } else {
            TraceSeries::zeros(TraceRole::TractionLoad, grid.n_steps + 1, problem.gram.dim())
        };
        let (fa, fb, fc) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0));
        let force = move |t: f64, p: [f64; 2]| {
            if !use_f {
                return [0.0, 0.0];
            }
            let s = (fc * t).sin();
            [s * (fa * (PI * p[1]).sin() - (p[1] - 0.5)), s * (fb * (PI * p[0]).cos() + (p[0] - 0.5))]
        };
        let v0 = if k % 3 == 2 {
            initial_velocity(ops, InitialVelocity::Circulation, rng.random_range(0.5..2.0))?
        } else {
            None
        };
        let data = FluidData { force: Some(&force), neumann: None, v0: v0.as_deref() };
        let state = solve_stokes_quasilinear(ops, Some(&g), &data, eps, &problem.step)?;

        let mut lhs_dt = 0.0;
        let mut lhs_v = 0.0;
        let mut rhs_f = 0.0;
        for n in 1..=grid.n_steps {
            let dv: Vec<f64> = state.v[n].iter().zip(&state.v[n - 1]).map(|(a, b)| (a - b) / dt).collect();
            lhs_dt += dt * dual.nodal_norm(&dv).powi(2);
            lhs_v += dt * (gram.mass.quad_form(&state.v[n]) + gram.stiff.quad_form(&state.v[n]));
            let t = grid.time(n);
            rhs_f += dt * dual.load_norm(&ops.space.body_load(&|p| force(t, p))).powi(2);
        }
        let rhs_v0 = v0.as_ref().map_or(0.0, |v| ops.mass.quad_form(v).sqrt());
        let rhs = rhs_f.sqrt() + dual_l2_norm(&problem.gram, &grid, &g)? + rhs_v0;
        if rhs > 0.0 {
            best = best.max((lhs_dt.sqrt() + lhs_v.sqrt()) / rhs);
        }
    }
    Ok(best)
}

/// Harness settings.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifySettings {
    pub samples: usize,
    pub lipschitz_pairs: usize,
    /// One or two refinement levels; stability rules need two.
    pub refinements: Vec<u32>,
    pub seed: u64,
    pub eps_lipschitz: Vec<f64>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            samples: 8,
            lipschitz_pairs: 5,
            refinements: vec![1, 2],
            seed: 42,
            eps_lipschitz: vec![1e-2, 1e-4],
        }
    }
}

/// Raw measurements at one refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelMeasurements {
    pub refinement: u32,
    pub c_s: f64,
    pub c_s_high_frequency: f64,
    pub c_f: f64,
    pub fluid_energy: f64,
    pub teps: Vec<f64>,
    pub poincare: PoincareCheck,
}

impl LevelMeasurements {
    pub fn teps_max(&self) -> f64 {
        self.teps.iter().copied().fold(0.0, f64::max)
    }

    /// `max/min - 1` of the per-ε Lipschitz ratios.
    pub fn teps_spread(&self) -> f64 {
        let min = self.teps.iter().copied().fold(f64::INFINITY, f64::min);
        if min > 0.0 {
            self.teps_max() / min - 1.0
        } else {
            0.0
        }
    }
}

fn level_rng(seed: u64, refinement: u32, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1000 * refinement as u64 + stream);
    rng
}

pub fn measure_level(problem: &CoupledProblem, refinement: u32, settings: &VerifySettings) -> Result<LevelMeasurements> {
    let seed = settings.seed;
    let poincare =
        verify_poincare_time(&problem.grid, &problem.gram, settings.samples.max(20), &mut level_rng(seed, refinement, 1))?;
    let (c_s, c_s_high_frequency) =
        verify_lame_inverse(problem, settings.samples, &mut level_rng(seed, refinement, 2))?;
    let c_f = verify_t2_lipschitz(
        problem,
        settings.lipschitz_pairs,
        &settings.eps_lipschitz,
        &mut level_rng(seed, refinement, 3),
    )?;
    let eps_min = settings.eps_lipschitz.iter().copied().fold(f64::INFINITY, f64::min);
    let fluid_energy = verify_fluid_energy(problem, settings.samples, eps_min, &mut level_rng(seed, refinement, 4))?;
    let teps = verify_teps_lipschitz(
        problem,
        settings.lipschitz_pairs,
        &settings.eps_lipschitz,
        &mut level_rng(seed, refinement, 5),
    )?;
    Ok(LevelMeasurements { refinement, c_s, c_s_high_frequency, c_f, fluid_energy, teps, poincare })
}

/// `(Ĉ_s, Ĉ_f)` at one refinement, drawn from the same random streams as
/// [`measure_level`].
pub fn coupling_constants(problem: &CoupledProblem, refinement: u32, settings: &VerifySettings) -> Result<(f64, f64)> {
    let (c_s, _) = verify_lame_inverse(problem, settings.samples, &mut level_rng(settings.seed, refinement, 2))?;
    let c_f = verify_t2_lipschitz(
        problem,
        settings.lipschitz_pairs,
        &settings.eps_lipschitz,
        &mut level_rng(settings.seed, refinement, 3),
    )?;
    Ok((c_s, c_f))
}

/// Paper-mode scaling `ρ = 0.5 / (Ĉ_s Ĉ_f)`, capped at 1.
pub fn paper_rho(c_s: f64, c_f: f64) -> f64 {
    (0.5 / (c_s * c_f)).min(1.0)
}

fn stability(values: &[f64]) -> PassFlag {
    if values.len() < 2 {
        return PassFlag::NotEvaluated;
    }
    PassFlag::from_bool(values.windows(2).all(|w| w[1] <= 2.0 * w[0] && w[1].is_finite()))
}

/// Runs every verifier at each configured refinement. Sub-verifier errors
/// are recorded as failures so that the report is always complete.
pub fn run_full_report(
    build: &dyn Fn(u32) -> Result<CoupledProblem>,
    law: &DiffusionLaw,
    coupling: &CouplingConfig,
    settings: &VerifySettings,
) -> Result<(EstimateReport, Vec<LevelMeasurements>)> {
    if settings.refinements.is_empty() {
        return Err(FsiError::Config("verify.refinements must not be empty".into()));
    }
    let mut report = EstimateReport::default();
    if let Err(e) = certify_constants(law, 10_000, settings.seed) {
        report.certification_error = Some(e.to_string());
        for r in &settings.refinements {
            for id in EstimateId::ALL {
                report.records.push(EstimateRecord {
                    id,
                    constant: f64::NAN,
                    samples: 0,
                    refinement: *r,
                    pass: PassFlag::Fail,
                    slack: 0.0,
                });
            }
        }
        return Ok((report, Vec::new()));
    }

    let mut levels: Vec<std::result::Result<LevelMeasurements, String>> = Vec::new();
    let mut eps_limit: Option<std::result::Result<f64, String>> = None;
    for (idx, &r) in settings.refinements.iter().enumerate() {
        let problem = match build(r) {
            Ok(p) => p,
            Err(e) => {
                levels.push(Err(e.to_string()));
                continue;
            }
        };
        levels.push(measure_level(&problem, r, settings).map_err(|e| e.to_string()));
        if idx == 0 {
            eps_limit = Some(eps_limit_check(&problem, coupling).map_err(|e| e.to_string()));
        }
    }

    let ok: Vec<&LevelMeasurements> = levels.iter().filter_map(|l| l.as_ref().ok()).collect();
    let all_ok = ok.len() == levels.len();
    let series = |f: &dyn Fn(&LevelMeasurements) -> f64| -> PassFlag {
        if !all_ok {
            return PassFlag::Fail;
        }
        stability(&ok.iter().map(|l| f(l)).collect::<Vec<_>>())
    };
    let lame = series(&|l| l.c_s);
    let energy = series(&|l| l.fluid_energy);
    let t2 = series(&|l| l.c_f);

    for (level, &r) in levels.iter().zip(&settings.refinements) {
        let Ok(l) = level else {
            for id in EstimateId::ALL {
                if id != EstimateId::EpsLimit {
                    report.records.push(EstimateRecord {
                        id,
                        constant: f64::NAN,
                        samples: 0,
                        refinement: r,
                        pass: PassFlag::Fail,
                        slack: 0.0,
                    });
                }
            }
            continue;
        };
        let n = settings.samples;
        let pairs = settings.lipschitz_pairs;
        let teps_ok = l.teps_max() <= l.c_s * l.c_f * 1.1 && l.teps_spread() <= 0.25;
        report.records.extend([
            EstimateRecord { id: EstimateId::LameInverse, constant: l.c_s, samples: n + 1, refinement: r, pass: lame, slack: 2.0 },
            EstimateRecord { id: EstimateId::FluidEnergy, constant: l.fluid_energy, samples: n, refinement: r, pass: energy, slack: 2.0 },
            EstimateRecord {
                id: EstimateId::PoincareTime,
                constant: l.poincare.max_ratio,
                samples: l.poincare.samples,
                refinement: r,
                pass: PassFlag::from_bool(l.poincare.passes()),
                slack: 0.1,
            },
            EstimateRecord { id: EstimateId::T2Lipschitz, constant: l.c_f, samples: pairs, refinement: r, pass: t2, slack: 2.0 },
            EstimateRecord {
                id: EstimateId::TepsLipschitz,
                constant: l.teps_max(),
                samples: pairs * l.teps.len(),
                refinement: r,
                pass: PassFlag::from_bool(teps_ok),
                slack: 0.1,
            },
        ]);
    }
    let r0 = settings.refinements[0];
    report.records.push(match eps_limit {
        Some(Ok(c)) => EstimateRecord {
            id: EstimateId::EpsLimit,
            constant: c.abs(),
            samples: coupling.eps_schedule.len(),
            refinement: r0,
            pass: PassFlag::from_bool(c >= 0.0),
            slack: 0.1,
        },
        _ => EstimateRecord {
            id: EstimateId::EpsLimit,
            constant: f64::NAN,
            samples: 0,
            refinement: r0,
            pass: PassFlag::Fail,
            slack: 0.1,
        },
    });
    Ok((report, ok.into_iter().cloned().collect()))
}

/// ε-study monotonicity: returns `‖u*_{ε_0} - u*_last‖_X`, negated when any
/// column breaks the 10% rule or the law column exceeds `L ×` the gradient column.
fn eps_limit_check(problem: &CoupledProblem, coupling: &CouplingConfig) -> Result<f64> {
    let (rows, _) = epsilon_limit_study(problem, coupling, &coupling.eps_schedule)?;
    let col = |f: fn(&crate::coupling::EpsStudyRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let lip = problem.fluid.params.law.lipschitz();
    let ok = nonincreasing_within(&col(|r| r.u_diff_x), 0.1)
        && nonincreasing_within(&col(|r| r.grad_diff), 0.1)
        && nonincreasing_within(&col(|r| r.law_diff), 0.1)
        && nonincreasing_within(&col(|r| r.reg_energy), 0.1)
        && rows.iter().all(|r| r.law_diff <= lip * r.grad_diff * (1.0 + 1e-9) + 1e-14);
    let c = rows.first().map_or(0.0, |r| r.u_diff_x);
    Ok(if ok { c } else { -c.max(f64::MIN_POSITIVE) })
}
