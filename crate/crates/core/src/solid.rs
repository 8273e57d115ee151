//! Linear elastodynamics on Ω_s with Dirichlet interface data, and the
//! interface Dirichlet-to-Neumann map T₁.

use crate::error::{FsiError, Result};
use crate::fem::{compress_mask, CsrMatrix, P2Space, SparseLu};
use crate::law::SolidParams;
use crate::mesh::{CoupledMesh, Side, TimeGrid};
use crate::trace::{TraceRole, TraceSeries};

/// Vector field of time and position.
pub type FieldFn<'a> = &'a dyn Fn(f64, [f64; 2]) -> [f64; 2];

/// Newmark (β = 1/4, γ = 1/2) integrator for `M ü + K u = F` with some dofs
/// prescribed by substitution.
#[derive(Debug)]
pub struct Newmark {
    pub dt: f64,
    mass: CsrMatrix,
    stiff: CsrMatrix,
    free: Vec<usize>,
    prescribed: Vec<usize>,
    free_map: Vec<Option<usize>>,
    m_fp: CsrMatrix,
    effective: SparseLu,
    mass_ff: SparseLu,
}

/// Displacement, velocity and acceleration at every grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct SolidState {
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
}

impl Newmark {
    pub fn new(mass: CsrMatrix, stiff: CsrMatrix, prescribed_mask: &[bool], dt: f64) -> Result<Self> {
        let n = mass.nrows;
        if stiff.nrows != n || prescribed_mask.len() != n {
            return Err(FsiError::Shape("mass, stiffness and mask sizes differ".into()));
        }
        let keep: Vec<bool> = prescribed_mask.iter().map(|p| !p).collect();
        let (free_map, free) = compress_mask(&keep);
        let (pres_map, prescribed) = compress_mask(prescribed_mask);
        let nf = free.len();
        let m_ff = mass.restrict(&free_map, nf, &free_map, nf);
        let k_ff = stiff.restrict(&free_map, nf, &free_map, nf);
        let m_fp = mass.restrict(&free_map, nf, &pres_map, prescribed.len());
        let eff = CsrMatrix::combine(&[(1.0, &m_ff), (0.25 * dt * dt, &k_ff)]);
        Ok(Newmark {
            dt,
            effective: SparseLu::new(&eff)?,
            mass_ff: SparseLu::new(&m_ff)?,
            mass,
            stiff,
            free,
            prescribed,
            free_map,
            m_fp,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.mass.nrows
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiff
    }

    fn free_part(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }

    /// Solves the free rows of `M a = rhs_full` given the prescribed part of `a`.
    fn free_solve(&self, lu: &SparseLu, rhs: &[f64], a: &mut [f64]) {
        let a_p: Vec<f64> = self.prescribed.iter().map(|&i| a[i]).collect();
        let coupling = self.m_fp.mul_vec(&a_p);
        let b: Vec<f64> = self.free_part(rhs).iter().zip(&coupling).map(|(r, c)| r - c).collect();
        for (k, x) in lu.solve(&b).into_iter().enumerate() {
            a[self.free[k]] = x;
        }
    }

    /// Advances `n_steps` from `(u0, v0)`. `prescribed(n)` gives the full-length
    /// vector whose prescribed entries are imposed at step `n`; `loads(n)` the
    /// assembled force. The starting prescribed acceleration is the constant
    /// one matching `u_p(t_1)`.
    pub fn run(
        &self,
        n_steps: usize,
        u0: &[f64],
        v0: &[f64],
        prescribed: &dyn Fn(usize) -> Vec<f64>,
        loads: &dyn Fn(usize) -> Vec<f64>,
    ) -> SolidState {
        let n = self.n_dofs();
        let dt = self.dt;
        let mut u = u0.to_vec();
        let mut v = v0.to_vec();
        let mut a = vec![0.0; n];
        let next = prescribed(1.min(n_steps));
        for &i in &self.prescribed {
            u[i] = prescribed(0)[i];
            a[i] = if n_steps == 0 { 0.0 } else { 2.0 * (next[i] - u[i] - dt * v[i]) / (dt * dt) };
        }
        let ku = self.stiff.mul_vec(&u);
        let rhs: Vec<f64> = loads(0).iter().zip(&ku).map(|(f, k)| f - k).collect();
        self.free_solve(&self.mass_ff, &rhs, &mut a);

        let mut state = SolidState {
            u: Vec::with_capacity(n_steps + 1),
            v: Vec::with_capacity(n_steps + 1),
            a: Vec::with_capacity(n_steps + 1),
        };
        state.u.push(u.clone());
        state.v.push(v.clone());
        state.a.push(a.clone());

        for step in 1..=n_steps {
            let target = prescribed(step);
            let mut u_pred: Vec<f64> =
                (0..n).map(|i| u[i] + dt * v[i] + 0.25 * dt * dt * a[i]).collect();
            let v_pred: Vec<f64> = (0..n).map(|i| v[i] + 0.5 * dt * a[i]).collect();
            let mut a_new = vec![0.0; n];
            for &i in &self.prescribed {
                a_new[i] = (target[i] - u_pred[i]) * 4.0 / (dt * dt);
                u_pred[i] = target[i];
            }
            let ku = self.stiff.mul_vec(&u_pred);
            let rhs: Vec<f64> = loads(step).iter().zip(&ku).map(|(f, k)| f - k).collect();
            self.free_solve(&self.effective, &rhs, &mut a_new);
            for &i in &self.free {
                u_pred[i] += 0.25 * dt * dt * a_new[i];
            }
            u = u_pred;
            for i in 0..n {
                v[i] = v_pred[i] + 0.5 * dt * a_new[i];
            }
            a = a_new;
            state.u.push(u.clone());
            state.v.push(v.clone());
            state.a.push(a.clone());
        }
        state
    }

    /// `½ vᵀ M v + ½ uᵀ K u`
    pub fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        0.5 * self.mass.quad_form(v) + 0.5 * self.stiff.quad_form(u)
    }

    pub fn is_free(&self, dof: usize) -> bool {
        self.free_map[dof].is_some()
    }
}

/// Assembled solid operators for one mesh, parameter set and time step.
#[derive(Debug)]
pub struct SolidOperators {
    pub space: P2Space,
    pub params: SolidParams,
    pub grid: TimeGrid,
    pub newmark: Newmark,
    /// Interleaved dofs of the interior interface nodes, canonical order.
    pub interface_dofs: Vec<usize>,
}

impl SolidOperators {
    pub fn new(mesh: &CoupledMesh, params: SolidParams, grid: TimeGrid) -> Result<Self> {
        let space = P2Space::new(&mesh.solid, &mesh.interface_nodes(Side::Solid))?;
        let mass = space.vector_mass();
        let stiff = space.elasticity(params.mu, params.lambda);
        let mut mask = vec![false; 2 * space.n_nodes()];
        for (i, &d) in space.dirichlet.iter().enumerate() {
            if d {
                mask[2 * i] = true;
                mask[2 * i + 1] = true;
            }
        }
        let mut interface_dofs = Vec::with_capacity(2 * space.interface_interior().len());
        for &node in space.interface_interior() {
            for c in 0..2 {
                mask[2 * node + c] = true;
                interface_dofs.push(2 * node + c);
            }
        }
        let newmark = Newmark::new(mass, stiff, &mask, grid.dt())?;
        Ok(SolidOperators { space, params, grid, newmark, interface_dofs })
    }

    pub fn n_interface_nodes(&self) -> usize {
        self.interface_dofs.len() / 2
    }

    /// Volume vector equal to `values` on the interface dofs and zero elsewhere.
    pub fn lift(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.space.n_nodes()];
        for (&d, &x) in self.interface_dofs.iter().zip(values) {
            out[d] = x;
        }
        out
    }

    pub fn body_loads(&self, force: FieldFn) -> Vec<Vec<f64>> {
        self.grid
            .times()
            .into_iter()
            .map(|t| self.space.body_load(&|x| force(t, x)))
            .collect()
    }
}

fn check_compatible(u_d: &TraceSeries) -> Result<()> {
    let scale = u_d.max_abs().max(f64::MIN_POSITIVE);
    if u_d.steps[0].iter().any(|x| x.abs() > 1e-13 * scale) {
        return Err(FsiError::Precondition(
            "interface displacement must vanish at t = 0 (zero initial solid state)".into(),
        ));
    }
    Ok(())
}

/// Solves the Lamé system with interface data `u_d`, homogeneous Dirichlet
/// data on the outer walls and optional body force, from rest.
pub fn solve_lame_dirichlet(
    ops: &SolidOperators,
    u_d: &TraceSeries,
    force: Option<FieldFn>,
) -> Result<SolidState> {
    solve_lame_general(ops, u_d, None, force)
}

/// As [`solve_lame_dirichlet`], with optional nonzero outer Dirichlet data.
pub fn solve_lame_general(
    ops: &SolidOperators,
    u_d: &TraceSeries,
    outer: Option<FieldFn>,
    force: Option<FieldFn>,
) -> Result<SolidState> {
    let grid = ops.grid;
    u_d.check_shape(&grid, ops.n_interface_nodes())?;
    if u_d.role != TraceRole::Displacement {
        return Err(FsiError::Precondition("Dirichlet data must be a displacement trace".into()));
    }
    check_compatible(u_d)?;
    let n = 2 * ops.space.n_nodes();
    let prescribed = |step: usize| {
        let mut full = vec![0.0; n];
        if let Some(g) = outer {
            let t = grid.time(step);
            for (i, d) in ops.space.dirichlet.iter().enumerate() {
                if *d {
                    let val = g(t, ops.space.nodes[i]);
                    full[2 * i] = val[0];
                    full[2 * i + 1] = val[1];
                }
            }
        }
        for (&d, &x) in ops.interface_dofs.iter().zip(&u_d.steps[step]) {
            full[d] = x;
        }
        full
    };
    let loads: Vec<Vec<f64>> = match force {
        Some(f) => ops.body_loads(f),
        None => vec![vec![0.0; n]; grid.n_steps + 1],
    };
    let zero = vec![0.0; n];
    let state = ops.newmark.run(grid.n_steps, &zero, &zero, &prescribed, &|k| loads[k].clone());
    if state.u.iter().flatten().any(|x| !x.is_finite()) {
        return Err(FsiError::Numerical("non-finite solid displacement".into()));
    }
    Ok(state)
}

/// Consistent-flux interface traction `⟨σ(u)·n, φ⟩_Σ` with `n` the unit
/// normal pointing out of Ω_f: `g[φ] = -φ_liftᵀ (M ü + K u - F)`.
pub fn recover_traction(
    ops: &SolidOperators,
    state: &SolidState,
    loads: Option<&[Vec<f64>]>,
) -> Result<TraceSeries> {
    let n_times = ops.grid.n_steps + 1;
    if state.u.len() != n_times || state.a.len() != n_times {
        return Err(FsiError::Shape(format!(
            "solid state has {} steps, grid has {n_times}",
            state.u.len()
        )));
    }
    if loads.is_some_and(|l| l.len() != n_times) {
        return Err(FsiError::Shape("load series length differs from the grid".into()));
    }
    let mut steps = Vec::with_capacity(n_times);
    for k in 0..n_times {
        let mut r = ops.newmark.mass().mul_vec(&state.a[k]);
        let ku = ops.newmark.stiffness().mul_vec(&state.u[k]);
        for (ri, ki) in r.iter_mut().zip(&ku) {
            *ri += ki;
        }
        if let Some(l) = loads {
            for (ri, fi) in r.iter_mut().zip(&l[k]) {
                *ri -= fi;
            }
        }
        steps.push(ops.interface_dofs.iter().map(|&d| -r[d]).collect());
    }
    Ok(TraceSeries { role: TraceRole::TractionLoad, n_nodes: ops.n_interface_nodes(), steps })
}

/// T₁: interface displacement → interface traction load of the unforced solid.
pub fn operator_t1(ops: &SolidOperators, u_s: &TraceSeries) -> Result<TraceSeries> {
    let state = solve_lame_dirichlet(ops, u_s, None)?;
    recover_traction(ops, &state, None)
}
