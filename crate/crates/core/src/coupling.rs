//! The coupled map `T^ε = T₂^ε ∘ T₁`, its relaxed fixed-point iteration with
//! ε-continuation, and the ε-limit study.

use std::fmt;
use std::str::FromStr;

use crate::error::{FsiError, Result};
use crate::fluid::{
    direct_traction_series, operator_t2eps, regularization_energy, FluidData, FluidOperators,
    FluidState, StepOptions,
};
use crate::law::{FluidParams, SolidParams};
use crate::mesh::{CoupledMesh, TimeGrid};
use crate::norms::{
    bochner_norm, dual_l2_norm, fractional_norm_vec, x_norm, BochnerKind, InterfaceGram, NormReport,
};
use crate::solid::{operator_t1, SolidOperators};
use crate::trace::{TraceRole, TraceSeries};

/// One outer fixed-point iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub eps: f64,
    pub k: usize,
    pub update_norm_x: f64,
    /// `‖Δu^k‖ / ‖Δu^{k-1}‖`, absent for the first iteration at each `ε`.
    pub contraction_factor: Option<f64>,
    pub picard_total: usize,
}

impl HistoryRecord {
    pub const CSV_HEADER: &'static str = "eps,k,update_norm_X,contraction_factor,picard_total";

    pub fn csv_row(&self) -> String {
        let factor = self.contraction_factor.map_or(String::new(), |f| format!("{f:e}"));
        format!("{:e},{},{:e},{factor},{}", self.eps, self.k, self.update_norm_x, self.picard_total)
    }
}

/// Fluid body-force presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BodyForce {
    Zero,
    /// `(0, -m)`
    Downward(f64),
    /// Rigid-rotation field `m·(-(y - ½), x - ½)`; not a gradient.
    Swirl(f64),
}

impl BodyForce {
    pub fn eval(&self, _t: f64, p: [f64; 2]) -> [f64; 2] {
        match *self {
            BodyForce::Zero => [0.0, 0.0],
            BodyForce::Downward(m) => [0.0, -m],
            BodyForce::Swirl(m) => {
                let (x, y) = (p[0] - 0.5, p[1] - 0.5);
                [-m * y, m * x]
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, BodyForce::Zero) || matches!(*self, BodyForce::Downward(m) | BodyForce::Swirl(m) if m == 0.0)
    }
}

/// Initial fluid velocity presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialVelocity {
    Zero,
    /// Stream-function field `curl(sin²(πx)(1-y)²) / 10`, zero on the walls.
    Circulation,
}

impl FromStr for InitialVelocity {
    type Err = FsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(InitialVelocity::Zero),
            "circulation" => Ok(InitialVelocity::Circulation),
            other => Err(FsiError::Config(format!(
                "unknown data.v0 {other:?} (expected zero or circulation)"
            ))),
        }
    }
}

impl fmt::Display for InitialVelocity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitialVelocity::Zero => "zero",
            InitialVelocity::Circulation => "circulation",
        })
    }
}

/// Nodal initial velocity for a preset, scaled by `scale`; `None` for zero.
pub fn initial_velocity(ops: &FluidOperators, preset: InitialVelocity, scale: f64) -> Result<Option<Vec<f64>>> {
    match preset {
        InitialVelocity::Zero => Ok(None),
        InitialVelocity::Circulation => {
            let pi = std::f64::consts::PI;
            let mut v = ops.space.interpolate(&|p| {
                let s = (pi * p[0]).sin();
                [
                    -0.2 * scale * s * s * (1.0 - p[1]),
                    -0.1 * scale * pi * (2.0 * pi * p[0]).sin() * (1.0 - p[1]).powi(2),
                ]
            });
            for (d, x) in v.iter_mut().enumerate() {
                if ops.space.dirichlet[d / 2] {
                    *x = 0.0;
                }
            }
            Ok(Some(ops.project_divergence_free(&v)?))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConfig {
    pub eps_schedule: Vec<f64>,
    /// Relaxation `ω ∈ (0, 1]`.
    pub omega: f64,
    /// Scaling `ρ ∈ (0, 1]` of the iterated map `ρT^ε`.
    pub rho: f64,
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub max_outer: usize,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig {
            eps_schedule: vec![1e-1, 1e-2, 1e-3, 1e-4],
            omega: 0.7,
            rho: 1.0,
            tol_rel: 1e-8,
            tol_abs: 1e-10,
            max_outer: 50,
        }
    }
}

impl CouplingConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.eps_schedule;
        if s.is_empty() {
            return Err(FsiError::Config("coupling.eps_schedule must not be empty".into()));
        }
        if s.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(FsiError::Config("coupling.eps_schedule entries must be >= 0".into()));
        }
        if s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(FsiError::Config(format!(
                "coupling.eps_schedule {s:?} violates the CouplingConfig invariant: it must be strictly decreasing"
            )));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(FsiError::Config(format!("coupling.omega = {} must lie in (0, 1]", self.omega)));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(FsiError::Config(format!("coupling.rho = {} must lie in (0, 1]", self.rho)));
        }
        if !(self.tol_rel >= 0.0 && self.tol_abs >= 0.0 && self.tol_rel + self.tol_abs > 0.0) {
            return Err(FsiError::Config("coupling tolerances must be nonnegative and not both zero".into()));
        }
        if self.max_outer == 0 {
            return Err(FsiError::Config("coupling.max_outer must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything needed to evaluate the coupled map on one mesh.
#[derive(Debug)]
pub struct CoupledProblem {
    pub mesh: CoupledMesh,
    pub grid: TimeGrid,
    pub solid: SolidOperators,
    pub fluid: FluidOperators,
    pub gram: InterfaceGram,
    pub body_force: BodyForce,
    pub v0: Option<Vec<f64>>,
    pub step: StepOptions,
}

/// Result of one evaluation of `T^ε`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// `T₁(u)`
    pub traction: TraceSeries,
    /// `T^ε(u)` (unscaled)
    pub image: TraceSeries,
    pub fluid: FluidState,
}

impl CoupledProblem {
    pub fn new(
        mesh: CoupledMesh,
        grid: TimeGrid,
        solid: SolidParams,
        fluid: FluidParams,
        body_force: BodyForce,
        v0: InitialVelocity,
        step: StepOptions,
    ) -> Result<Self> {
        let solid_ops = SolidOperators::new(&mesh, solid, grid)?;
        let fluid_ops = FluidOperators::new(&mesh, fluid, grid)?;
        let gram = InterfaceGram::for_mesh(&mesh)?;
        let v0 = initial_velocity(&fluid_ops, v0, 1.0)?;
        Ok(CoupledProblem { mesh, grid, solid: solid_ops, fluid: fluid_ops, gram, body_force, v0, step })
    }

    pub fn n_interface_nodes(&self) -> usize {
        self.gram.dim()
    }

    pub fn zero_trace(&self) -> TraceSeries {
        TraceSeries::zeros(TraceRole::Displacement, self.grid.n_steps + 1, self.n_interface_nodes())
    }

    pub fn has_zero_data(&self) -> bool {
        self.body_force.is_zero() && self.v0.is_none()
    }

    pub fn x_norm(&self, u: &TraceSeries) -> Result<f64> {
        Ok(x_norm(&self.gram, &self.grid, u)?.value)
    }

    /// `T^ε(u) = T₂^ε(T₁(u))`. The solid traction load is applied to the fluid
    /// as is: both sides use the normal pointing out of Ω_f.
    pub fn operator_teps(&self, u: &TraceSeries, eps: f64) -> Result<Evaluation> {
        let traction = operator_t1(&self.solid, u)?;
        let (image, fluid) = self.t2eps(&traction, eps)?;
        Ok(Evaluation { traction, image, fluid })
    }

    /// `‖v‖_{L²(0,T; H¹(Ω_f))}` of a fluid state.
    pub fn fluid_velocity_norm(&self, state: &FluidState) -> Result<NormReport> {
        let value = bochner_norm(BochnerKind::L2H1, &self.grid, &self.fluid.spatial_gram(), &state.v)?;
        Ok(NormReport { name: "fluid_velocity_l2h1".into(), value, components: vec![] })
    }

    pub fn t2eps(&self, traction: &TraceSeries, eps: f64) -> Result<(TraceSeries, FluidState)> {
        let force = |t: f64, p: [f64; 2]| self.body_force.eval(t, p);
        let data = FluidData {
            force: (!self.body_force.is_zero()).then_some(&force as &dyn Fn(f64, [f64; 2]) -> [f64; 2]),
            neumann: None,
            v0: self.v0.as_deref(),
        };
        operator_t2eps(&self.fluid, traction, &data, eps, &self.step)
    }
}

#[derive(Debug, Clone)]
pub struct CoupledSolution {
    pub u_star: TraceSeries,
    /// Converged iterate for every `ε` of the schedule.
    pub per_eps: Vec<(f64, TraceSeries)>,
    /// `T₁(u*)`
    pub traction: TraceSeries,
    /// `ρT^ε(u*)`
    pub image: TraceSeries,
    pub fluid: FluidState,
    pub history: Vec<HistoryRecord>,
    pub rho: f64,
    pub eps_final: f64,
}

/// Relaxed iteration `u ← (1-ω)u + ωρT^ε(u)` for each `ε` of the schedule,
/// warm-started along it.
pub fn fixed_point_solve(
    problem: &CoupledProblem,
    config: &CouplingConfig,
    initial: &TraceSeries,
) -> Result<CoupledSolution> {
    config.validate()?;
    initial.check_shape(&problem.grid, problem.n_interface_nodes())?;
    let mut u = initial.clone();
    problem.x_norm(&u)?; // enforces u(0) = 0
    let mut history: Vec<HistoryRecord> = Vec::new();
    let mut per_eps = Vec::with_capacity(config.eps_schedule.len());

    for &eps in &config.eps_schedule {
        let mut previous: Option<f64> = None;
        let mut k = 0;
        loop {
            k += 1;
            let eval = problem.operator_teps(&u, eps).map_err(|e| match e {
                FsiError::NonlinearDivergence { .. } | FsiError::Numerical(_) => FsiError::IterationFailure {
                    eps,
                    reason: e.to_string(),
                    history: history.clone(),
                },
                other => other,
            })?;
            let next = u.lin_comb(1.0 - config.omega, &eval.image, config.omega * config.rho);
            let update = problem.x_norm(&next.sub(&u))?;
            let size = problem.x_norm(&u)?;
            if !update.is_finite() || !size.is_finite() {
                return Err(FsiError::Numerical(format!("non-finite iterate norm at eps = {eps:e}, k = {k}")));
            }
            history.push(HistoryRecord {
                eps,
                k,
                update_norm_x: update,
                contraction_factor: previous.map(|p| if p > 0.0 { update / p } else { 0.0 }),
                picard_total: eval.fluid.picard_total(),
            });
            previous = Some(update);
            u = next;
            if update <= config.tol_abs + config.tol_rel * size {
                break;
            }
            if k >= config.max_outer {
                return Err(FsiError::IterationFailure {
                    eps,
                    reason: format!("no convergence in {k} iterations (last update {update:e})"),
                    history,
                });
            }
        }
        per_eps.push((eps, u.clone()));
    }

    let eps_final = *config.eps_schedule.last().unwrap();
    let eval = problem.operator_teps(&u, eps_final)?;
    Ok(CoupledSolution {
        image: eval.image.scaled(config.rho),
        traction: eval.traction,
        fluid: eval.fluid,
        u_star: u,
        per_eps,
        history,
        rho: config.rho,
        eps_final,
    })
}

/// `(displacement gap, traction gap)` of a converged solution.
///
/// The displacement gap is `sup_n ‖ρT^ε(u*)(t_n) - u*(t_n)‖_{L²(Σ)}`; the
/// traction gap is the `L²(0,T; H^{-1/2})` distance between the solid
/// traction `T₁(u*)` and the fluid stress evaluated directly on Σ.
pub fn coupling_residuals(problem: &CoupledProblem, solution: &CoupledSolution) -> Result<(f64, f64)> {
    let gap = solution.image.sub(&solution.u_star);
    let mut displacement = 0.0_f64;
    for step in &gap.steps {
        displacement = displacement.max(fractional_norm_vec(&problem.gram, 0.0, step)?);
    }
    let fluid_traction = direct_traction_series(&problem.fluid, &solution.fluid);
    let traction = dual_l2_norm(&problem.gram, &problem.grid, &solution.traction.sub(&fluid_traction))?;
    Ok((displacement, traction))
}

/// One row of the ε-limit table; differences are taken against the last `ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsStudyRow {
    pub eps: f64,
    pub u_diff_x: f64,
    pub grad_diff: f64,
    pub law_diff: f64,
    pub reg_energy: f64,
}

impl EpsStudyRow {
    pub const CSV_HEADER: &'static str = "eps,u_diff_X,grad_diff_L2L2,law_diff_L2L2,reg_energy";

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e}",
            self.eps, self.u_diff_x, self.grad_diff, self.law_diff, self.reg_energy
        )
    }
}

/// `‖∇v - ∇w‖_{L²L²}` and `‖a(·,∇v) - a(·,∇w)‖_{L²L²}` by rectangle rule.
fn gradient_distances(ops: &FluidOperators, v: &FluidState, w: &FluidState) -> (f64, f64) {
    let law = &ops.params.law;
    let dt = ops.grid.dt();
    let (mut g_acc, mut a_acc) = (0.0, 0.0);
    for n in 1..v.v.len() {
        let t = ops.grid.time(n);
        for el in &ops.space.elements {
            for qp in &el.qps {
                for c in 0..2 {
                    let (mut gv, mut gw) = ([0.0; 2], [0.0; 2]);
                    for a in 0..6 {
                        let dof = 2 * el.dofs[a] + c;
                        for d in 0..2 {
                            gv[d] += qp.grads[a][d] * v.v[n][dof];
                            gw[d] += qp.grads[a][d] * w.v[n][dof];
                        }
                    }
                    let (av, aw) = (law.value(t, gv), law.value(t, gw));
                    g_acc += dt * qp.weight * ((gv[0] - gw[0]).powi(2) + (gv[1] - gw[1]).powi(2));
                    a_acc += dt * qp.weight * ((av[0] - aw[0]).powi(2) + (av[1] - aw[1]).powi(2));
                }
            }
        }
    }
    (g_acc.sqrt(), a_acc.sqrt())
}

/// Converges the coupled problem along `eps_list` (warm-started) and
/// tabulates the distances to the last entry.
pub fn epsilon_limit_study(
    problem: &CoupledProblem,
    config: &CouplingConfig,
    eps_list: &[f64],
) -> Result<(Vec<EpsStudyRow>, CoupledSolution)> {
    let cfg = CouplingConfig { eps_schedule: eps_list.to_vec(), ..config.clone() };
    let solution = fixed_point_solve(problem, &cfg, &problem.zero_trace())?;
    let mut states = Vec::with_capacity(eps_list.len());
    for (eps, u) in &solution.per_eps {
        let eval = problem.operator_teps(u, *eps)?;
        states.push(eval.fluid);
    }
    let (last_u, last_state) = (&solution.per_eps.last().unwrap().1, states.last().unwrap());
    let mut rows = Vec::with_capacity(eps_list.len());
    for ((eps, u), state) in solution.per_eps.iter().zip(&states) {
        let (grad_diff, law_diff) = gradient_distances(&problem.fluid, state, last_state);
        rows.push(EpsStudyRow {
            eps: *eps,
            u_diff_x: problem.x_norm(&u.sub(last_u))?,
            grad_diff,
            law_diff,
            reg_energy: regularization_energy(&problem.fluid, state, *eps),
        });
    }
    Ok((rows, solution))
}

/// True if `col` is nonincreasing up to a relative slack.
pub fn nonincreasing_within(col: &[f64], slack: f64) -> bool {
    col.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack) + f64::MIN_POSITIVE)
}

/// Least-squares slope of `ln y` against `ln x` over the positive pairs.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
