//! Quasi-linear Stokes flow on Ω_f with traction data on the interface:
//! backward Euler in time, a preconditioned damped Picard (Zarantonello)
//! solve per step, optional broken-H² regularization, and the
//! traction-to-displacement map T₂^ε.

use std::cell::RefCell;
use std::rc::Rc;

use nalgebra::DMatrix;

use crate::error::{FsiError, Result};
use crate::fem::{compress_mask, dot, p2_gradients, CsrMatrix, P2Space, SparseLu};
use crate::law::FluidParams;
use crate::mesh::{CoupledMesh, Side, TimeGrid};
use crate::norms::SpatialGram;
use crate::solid::FieldFn;
use crate::trace::{trapezoid_accumulate, TraceRole, TraceSeries};

/// Prescribed traction `g(t, x, n)` on the interface.
pub type NeumannFn<'a> = &'a dyn Fn(f64, [f64; 2], [f64; 2]) -> [f64; 2];

/// Three-point Gauss–Legendre rule on `[0, 1]`.
const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub tol: f64,
    pub max_it: usize,
    /// Newton steps with Picard fallback.
    pub newton: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions { tol: 1e-10, max_it: 500, newton: false }
    }
}

/// Body force, prescribed interface traction and initial velocity.
#[derive(Clone, Copy, Default)]
pub struct FluidData<'a> {
    pub force: Option<FieldFn<'a>>,
    pub neumann: Option<NeumannFn<'a>>,
    pub v0: Option<&'a [f64]>,
}

#[derive(Debug, Clone)]
struct InterfaceFacet {
    element: usize,
    /// Local vertex slots of the facet's left and right endpoints.
    slots: [usize; 2],
    /// Chain nodes: left vertex, midpoint, right vertex.
    nodes: [usize; 3],
    ends: [[f64; 2]; 2],
    normal: [f64; 2],
    length: f64,
}

/// Assembled fluid operators on one mesh and time grid.
#[derive(Debug)]
pub struct FluidOperators {
    pub space: P2Space,
    pub grid: TimeGrid,
    pub params: FluidParams,
    pub mass: CsrMatrix,
    /// `∫ ε(u) : ε(v)`
    pub visc: CsrMatrix,
    pub lap: CsrMatrix,
    /// Broken second-derivative Gram.
    pub reg: CsrMatrix,
    /// Pressure-by-velocity divergence operator.
    pub div: CsrMatrix,
    pub pressure_mass: CsrMatrix,
    /// Interleaved dofs of the interior interface nodes, canonical order.
    pub interface_dofs: Vec<usize>,
    free: Vec<usize>,
    free_map: Vec<Option<usize>>,
    p_kept: Vec<usize>,
    p_map: Vec<Option<usize>>,
    m_ff: CsrMatrix,
    visc_ff: CsrMatrix,
    lap_ff: CsrMatrix,
    reg_ff: CsrMatrix,
    b_f: CsrMatrix,
    facets: Vec<InterfaceFacet>,
    saddle_cache: RefCell<Vec<(f64, Rc<(CsrMatrix, SparseLu)>)>>,
}

/// Velocity/pressure at every grid time plus per-step solver statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub v: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    /// Picard iterations of steps `1..=N`.
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
}

impl FluidState {
    pub fn picard_total(&self) -> usize {
        self.iterations.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Preconditioned residual norm before each update and after the last.
    pub history: Vec<f64>,
}

impl FluidOperators {
    pub fn new(mesh: &CoupledMesh, params: FluidParams, grid: TimeGrid) -> Result<Self> {
        let space = P2Space::new(&mesh.fluid, &mesh.interface_nodes(Side::Fluid))?;
        let mass = space.vector_mass();
        let visc = space.sym_grad();
        let lap = space.vector_laplace();
        let reg = space.hessian_gram();
        let div = space.divergence();
        let pressure_mass = space.pressure_mass();

        let keep: Vec<bool> = (0..2 * space.n_nodes()).map(|d| !space.dirichlet[d / 2]).collect();
        let (free_map, free) = compress_mask(&keep);
        let nf = free.len();
        let restrict = |m: &CsrMatrix| m.restrict(&free_map, nf, &free_map, nf);

        // traction data fixes the pressure level; pin a vertex only without an interface
        let has_interface = space.interface_chain.len() >= 2;
        let p_keep: Vec<bool> = (0..space.n_vertices).map(|q| has_interface || q != 0).collect();
        let (p_map, p_kept) = compress_mask(&p_keep);
        let ident: Vec<Option<usize>> = (0..space.n_vertices).map(Some).collect();
        let b_f = div
            .restrict(&ident, space.n_vertices, &free_map, nf)
            .restrict(&p_map, p_kept.len(), &(0..nf).map(Some).collect::<Vec<_>>(), nf);

        let interface_dofs: Vec<usize> = space
            .interface_interior()
            .iter()
            .flat_map(|&node| [2 * node, 2 * node + 1])
            .collect();

        let mut by_edge = std::collections::HashMap::new();
        for (e, el) in space.elements.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        by_edge.insert((el.vertices[i], el.vertices[j]), (e, i, j));
                    }
                }
            }
        }
        let chain = &space.interface_chain;
        let mut facets = Vec::with_capacity(chain.len() / 2);
        for k in 0..chain.len() / 2 {
            let (a, m, b) = (chain[2 * k], chain[2 * k + 1], chain[2 * k + 2]);
            let &(element, sa, sb) = by_edge
                .get(&(a, b))
                .ok_or_else(|| FsiError::Assembly("interface facet without a fluid element".into()))?;
            let ends = [space.nodes[a], space.nodes[b]];
            facets.push(InterfaceFacet {
                element,
                slots: [sa, sb],
                nodes: [a, m, b],
                ends,
                normal: mesh.interface_normals[k],
                length: crate::mesh::dist(ends[0], ends[1]),
            });
        }

        Ok(FluidOperators {
            m_ff: restrict(&mass),
            visc_ff: restrict(&visc),
            lap_ff: restrict(&lap),
            reg_ff: restrict(&reg),
            b_f,
            space,
            grid,
            params,
            mass,
            visc,
            lap,
            reg,
            div,
            pressure_mass,
            interface_dofs,
            free,
            free_map,
            p_kept,
            p_map,
            facets,
            saddle_cache: RefCell::new(Vec::new()),
        })
    }

    pub fn n_interface_nodes(&self) -> usize {
        self.interface_dofs.len() / 2
    }

    pub fn n_velocity(&self) -> usize {
        2 * self.space.n_nodes()
    }

    pub fn spatial_gram(&self) -> SpatialGram {
        SpatialGram { mass: self.mass.clone(), stiff: self.lap.clone() }
    }

    fn free_part(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }

    fn expand(&self, free: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_velocity()];
        for (k, &i) in self.free.iter().enumerate() {
            out[i] = free[k];
        }
        out
    }

    fn expand_pressure(&self, kept: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.space.n_vertices];
        for (k, &q) in self.p_kept.iter().enumerate() {
            out[q] = kept[k];
        }
        out
    }

    /// `P = M/dt + c_m Lap + A_visc + εR` on the free dofs.
    fn preconditioner(&self, eps: f64) -> CsrMatrix {
        CsrMatrix::combine(&[
            (1.0 / self.grid.dt(), &self.m_ff),
            (self.params.law.c_m(), &self.lap_ff),
            (1.0, &self.visc_ff),
            (eps, &self.reg_ff),
        ])
    }

    fn saddle_matrix(&self, block: &CsrMatrix) -> CsrMatrix {
        let nf = self.free.len();
        let np = self.p_kept.len();
        let mut trip: Vec<(usize, usize, f64)> = block.triplets().collect();
        for (q, j, v) in self.b_f.triplets() {
            trip.push((nf + q, j, v));
            trip.push((j, nf + q, v));
        }
        CsrMatrix::from_triplets(nf + np, nf + np, trip)
    }

    /// `P` and the LU factors of its saddle system, cached per `eps`.
    fn preconditioner_lu(&self, eps: f64) -> Result<Rc<(CsrMatrix, SparseLu)>> {
        if let Some((_, entry)) = self.saddle_cache.borrow().iter().find(|(e, _)| *e == eps) {
            return Ok(entry.clone());
        }
        let p = self.preconditioner(eps);
        let lu = SparseLu::new(&self.saddle_matrix(&p))?;
        let entry = Rc::new((p, lu));
        let mut cache = self.saddle_cache.borrow_mut();
        if cache.len() >= 8 {
            cache.remove(0);
        }
        cache.push((eps, entry.clone()));
        Ok(entry)
    }

    /// Solves `[[P, Bᵀ], [B, 0]] [w; q] = [f; g]` on free / kept dofs.
    fn saddle_solve(lu: &SparseLu, nf: usize, f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut rhs = f.to_vec();
        rhs.extend_from_slice(g);
        let mut x = lu.solve(&rhs);
        let q = x.split_off(nf);
        (x, q)
    }

    /// Velocity gradient rows `∇v_c` at quadrature point `qp` of element `el`.
    fn grad_at(el: &crate::fem::ElementData, grads: &[[f64; 2]; 6], v: &[f64]) -> [[f64; 2]; 2] {
        let mut g = [[0.0; 2]; 2];
        for a in 0..6 {
            for c in 0..2 {
                let x = v[2 * el.dofs[a] + c];
                g[c][0] += grads[a][0] * x;
                g[c][1] += grads[a][1] * x;
            }
        }
        g
    }

    /// `N(v) = Σ_c ∫ a(t, ∇v_c)·∇φ_c + ∫ ε(v):ε(φ)` on full vectors.
    pub fn apply_nonlinear(&self, t: f64, v: &[f64]) -> Vec<f64> {
        let law = &self.params.law;
        let mut out = self.visc.mul_vec(v);
        for el in &self.space.elements {
            for qp in &el.qps {
                let g = Self::grad_at(el, &qp.grads, v);
                for c in 0..2 {
                    let a = law.value(t, g[c]);
                    for b in 0..6 {
                        out[2 * el.dofs[b] + c] +=
                            qp.weight * (a[0] * qp.grads[b][0] + a[1] * qp.grads[b][1]);
                    }
                }
            }
        }
        out
    }

    /// Exact Jacobian of [`apply_nonlinear`] on the free dofs.
    fn jacobian_ff(&self, t: f64, v: &[f64]) -> CsrMatrix {
        let law = &self.params.law;
        let nf = self.free.len();
        let mut trip = Vec::with_capacity(self.space.elements.len() * 72);
        for el in &self.space.elements {
            let mut ke = [[[0.0; 6]; 6]; 2];
            for qp in &el.qps {
                let g = Self::grad_at(el, &qp.grads, v);
                for c in 0..2 {
                    let j = law.jacobian(t, g[c]);
                    for a in 0..6 {
                        let ga = qp.grads[a];
                        for b in 0..6 {
                            let gb = qp.grads[b];
                            let jg = [j[0][0] * gb[0] + j[0][1] * gb[1], j[1][0] * gb[0] + j[1][1] * gb[1]];
                            ke[c][a][b] += qp.weight * (ga[0] * jg[0] + ga[1] * jg[1]);
                        }
                    }
                }
            }
            for c in 0..2 {
                for a in 0..6 {
                    let Some(r) = self.free_map[2 * el.dofs[a] + c] else { continue };
                    for b in 0..6 {
                        if let Some(s) = self.free_map[2 * el.dofs[b] + c] {
                            trip.push((r, s, ke[c][a][b]));
                        }
                    }
                }
            }
        }
        let law_part = CsrMatrix::from_triplets(nf, nf, trip);
        CsrMatrix::combine(&[(1.0, &law_part), (1.0, &self.visc_ff)])
    }

    /// Step residual `M(v - v_prev)/dt + N(v) + εRv - loads` on the free dofs.
    fn step_residual(&self, eps: f64, t: f64, v: &[f64], v_prev: &[f64], loads: &[f64]) -> Vec<f64> {
        let dt = self.grid.dt();
        let dv: Vec<f64> = v.iter().zip(v_prev).map(|(a, b)| (a - b) / dt).collect();
        let mut r = self.mass.mul_vec(&dv);
        for (ri, ni) in r.iter_mut().zip(self.apply_nonlinear(t, v)) {
            *ri += ni;
        }
        if eps != 0.0 {
            for (ri, x) in r.iter_mut().zip(self.reg.mul_vec(v)) {
                *ri += eps * x;
            }
        }
        for (ri, l) in r.iter_mut().zip(loads) {
            *ri -= l;
        }
        self.free_part(&r)
    }

    /// One backward-Euler step: find `(v, π)` with
    /// `M(v - v_prev)/dt + N(v) + εRv + Bᵀπ = loads`, `Bv = 0`.
    pub fn solve_step(
        &self,
        eps: f64,
        t: f64,
        v_prev: &[f64],
        loads: &[f64],
        opts: &StepOptions,
    ) -> Result<StepResult> {
        if !(opts.tol > 0.0) {
            return Err(FsiError::Precondition("step tolerance must be positive".into()));
        }
        if !(eps >= 0.0) {
            return Err(FsiError::Precondition(format!("regularization eps = {eps} must be >= 0")));
        }
        if v_prev.len() != self.n_velocity() || loads.len() != self.n_velocity() {
            return Err(FsiError::Shape("velocity or load vector of wrong length".into()));
        }
        self.params.law.check_time(t)?;
        let law = &self.params.law;
        let tau = (law.c_m() / law.lipschitz()).powi(2);
        let nf = self.free.len();
        let np = self.p_kept.len();
        let cached = self.preconditioner_lu(eps)?;
        let (pmat, lu) = (&cached.0, &cached.1);
        let zero_p = vec![0.0; np];

        let mut x = self.free_part(v_prev);
        let scale = crate::fem::norm2(&x).max(1.0);
        if crate::fem::norm2(&self.b_f.mul_vec(&x)) > 1e-13 * scale {
            // P-orthogonal projection onto the discretely divergence-free space
            let px = pmat.mul_vec(&x);
            x = Self::saddle_solve(lu, nf, &px, &zero_p).0;
        }

        let eval = |x: &[f64]| {
            let v = self.expand(x);
            let r = self.step_residual(eps, t, &v, v_prev, loads);
            let (w, q) = Self::saddle_solve(lu, nf, &r, &zero_p);
            // ‖w‖_P; equal to sqrt(wᵀr) but free of cancellation near convergence
            let res = pmat.quad_form(&w).max(0.0).sqrt();
            (w, q, r, res)
        };

        let (mut w, mut q, mut r, mut res) = eval(&x);
        let mut history = vec![res];
        let mut its = 0;
        loop {
            let mut stepped = false;
            if opts.newton && res > 0.0 {
                let jac = CsrMatrix::combine(&[
                    (1.0 / self.grid.dt(), &self.m_ff),
                    (1.0, &self.jacobian_ff(t, &self.expand(&x))),
                    (eps, &self.reg_ff),
                ]);
                if let Ok(jlu) = SparseLu::new(&self.saddle_matrix(&jac)) {
                    let (d, _) = Self::saddle_solve(&jlu, nf, &r, &zero_p);
                    let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a - b).collect();
                    let next = eval(&trial);
                    if next.3 < res {
                        x = trial;
                        (w, q, r, res) = next;
                        stepped = true;
                    }
                }
            }
            if !stepped {
                for (xi, wi) in x.iter_mut().zip(&w) {
                    *xi -= tau * wi;
                }
                (w, q, r, res) = eval(&x);
            }
            its += 1;
            history.push(res);
            if !res.is_finite() {
                return Err(FsiError::Numerical("non-finite residual in the step solver".into()));
            }
            if res <= opts.tol {
                break;
            }
            if its >= opts.max_it {
                return Err(FsiError::NonlinearDivergence { iterations: its, residual: res });
            }
        }
        let p: Vec<f64> = q.iter().map(|x| -x).collect();
        Ok(StepResult {
            v: self.expand(&x),
            p: self.expand_pressure(&p),
            iterations: its,
            residual: res,
            history,
        })
    }

    /// Direct saddle solve of a linear-law step, for cross-checking.
    pub fn solve_linear_step_direct(
        &self,
        eps: f64,
        t: f64,
        v_prev: &[f64],
        loads: &[f64],
    ) -> Result<Vec<f64>> {
        let law = &self.params.law;
        let k = law.coefficient(t);
        let block = CsrMatrix::combine(&[
            (1.0 / self.grid.dt(), &self.m_ff),
            (k, &self.lap_ff),
            (1.0, &self.visc_ff),
            (eps, &self.reg_ff),
        ]);
        let lu = SparseLu::new(&self.saddle_matrix(&block))?;
        let mv = self.mass.mul_vec(v_prev);
        let rhs: Vec<f64> =
            self.free_part(&loads.iter().zip(&mv).map(|(l, m)| l + m / self.grid.dt()).collect::<Vec<_>>());
        let (x, _) = Self::saddle_solve(&lu, self.free.len(), &rhs, &vec![0.0; self.p_kept.len()]);
        Ok(self.expand(&x))
    }

    /// `∫_Σ g(t, x, n)·φ` with quadratic interface shape functions.
    pub fn neumann_load(&self, t: f64, g: NeumannFn) -> Vec<f64> {
        let mut out = vec![0.0; self.n_velocity()];
        for f in &self.facets {
            for &(s, w) in &GAUSS3 {
                let x = [
                    (1.0 - s) * f.ends[0][0] + s * f.ends[1][0],
                    (1.0 - s) * f.ends[0][1] + s * f.ends[1][1],
                ];
                let val = g(t, x, f.normal);
                let shape = [(1.0 - s) * (1.0 - 2.0 * s), 4.0 * s * (1.0 - s), s * (2.0 * s - 1.0)];
                for (node, phi) in f.nodes.iter().zip(shape) {
                    for c in 0..2 {
                        out[2 * node + c] += w * f.length * val[c] * phi;
                    }
                }
            }
        }
        for (i, d) in self.space.dirichlet.iter().enumerate() {
            if *d {
                out[2 * i] = 0.0;
                out[2 * i + 1] = 0.0;
            }
        }
        out
    }

    /// Assembled right-hand side of step `n`.
    pub fn step_loads(&self, traction: Option<&TraceSeries>, data: &FluidData, n: usize) -> Vec<f64> {
        let t = self.grid.time(n);
        let mut loads = match data.force {
            Some(f) => self.space.body_load(&|x| f(t, x)),
            None => vec![0.0; self.n_velocity()],
        };
        if let Some(g) = data.neumann {
            for (l, x) in loads.iter_mut().zip(self.neumann_load(t, g)) {
                *l += x;
            }
        }
        if let Some(tr) = traction {
            for (&d, &x) in self.interface_dofs.iter().zip(&tr.steps[n]) {
                loads[d] += x;
            }
        }
        loads
    }

    /// Interface load of the stress `(a(t,∇v) + ε(v) - πI)n` evaluated
    /// directly from the discrete fields on the adjacent elements.
    pub fn direct_traction(&self, t: f64, v: &[f64], p: &[f64]) -> Vec<f64> {
        let law = &self.params.law;
        let chain = &self.space.interface_chain;
        let mut full = vec![0.0; 2 * chain.len()];
        for (k, f) in self.facets.iter().enumerate() {
            let el = &self.space.elements[f.element];
            for &(s, w) in &GAUSS3 {
                let mut l = [0.0; 3];
                l[f.slots[0]] = 1.0 - s;
                l[f.slots[1]] = s;
                let grads = p2_gradients(l, &el.bary_grads);
                let g = Self::grad_at(el, &grads, v);
                let pres: f64 = (0..3).map(|i| l[i] * p[el.vertices[i]]).sum();
                let mut stress = [[0.0; 2]; 2];
                for c in 0..2 {
                    let a = law.value(t, g[c]);
                    for d in 0..2 {
                        stress[c][d] = a[d] + 0.5 * (g[c][d] + g[d][c]);
                    }
                    stress[c][c] -= pres;
                }
                let n = f.normal;
                let traction = [
                    stress[0][0] * n[0] + stress[0][1] * n[1],
                    stress[1][0] * n[0] + stress[1][1] * n[1],
                ];
                let shape = [(1.0 - s) * (1.0 - 2.0 * s), 4.0 * s * (1.0 - s), s * (2.0 * s - 1.0)];
                for (j, phi) in shape.iter().enumerate() {
                    for c in 0..2 {
                        full[2 * (2 * k + j) + c] += w * f.length * traction[c] * phi;
                    }
                }
            }
        }
        full[2..full.len() - 2].to_vec()
    }

    /// Interface velocity values of a full velocity vector.
    pub fn interface_trace(&self, v: &[f64]) -> Vec<f64> {
        self.interface_dofs.iter().map(|&d| v[d]).collect()
    }

    /// `‖B v‖` restricted to the pressure dofs.
    pub fn divergence_residual(&self, v: &[f64]) -> f64 {
        let b = self.div.mul_vec(v);
        self.p_kept.iter().map(|&q| b[q] * b[q]).sum::<f64>().sqrt()
    }

    /// Convex step functional whose minimizer over divergence-free fields is
    /// the step solution (for laws with a potential).
    pub fn step_functional(&self, eps: f64, t: f64, v: &[f64], v_prev: &[f64], loads: &[f64]) -> f64 {
        let law = &self.params.law;
        let dv: Vec<f64> = v.iter().zip(v_prev).map(|(a, b)| a - b).collect();
        let mut j = 0.5 / self.grid.dt() * self.mass.quad_form(&dv);
        for el in &self.space.elements {
            for qp in &el.qps {
                let g = Self::grad_at(el, &qp.grads, v);
                j += qp.weight * (law.potential(t, g[0]) + law.potential(t, g[1]));
            }
        }
        j + 0.5 * self.visc.quad_form(v) + 0.5 * eps * self.reg.quad_form(v) - dot(loads, v)
    }

    /// Projects a free-dof direction onto the discretely divergence-free space.
    pub fn project_divergence_free(&self, v: &[f64]) -> Result<Vec<f64>> {
        let cached = self.preconditioner_lu(0.0)?;
        let px = cached.0.mul_vec(&self.free_part(v));
        let (x, _) = Self::saddle_solve(&cached.1, self.free.len(), &px, &vec![0.0; self.p_kept.len()]);
        Ok(self.expand(&x))
    }

    /// Smallest inf-sup value `min_q sup_v (Bv, q) / (‖v‖_{H¹} ‖q‖_{L²})`.
    pub fn inf_sup_constant(&self) -> Result<f64> {
        let nf = self.free.len();
        let np = self.p_kept.len();
        let h1 = SparseLu::new(&CsrMatrix::combine(&[(1.0, &self.m_ff), (1.0, &self.lap_ff)]))?;
        let bt = self.b_f.to_dense().transpose();
        let mut schur = DMatrix::zeros(np, np);
        for q in 0..np {
            let col: Vec<f64> = (0..nf).map(|i| bt[(i, q)]).collect();
            let y = h1.solve(&col);
            for (r, val) in self.b_f.mul_vec(&y).into_iter().enumerate() {
                schur[(r, q)] = val;
            }
        }
        let mp = self.pressure_mass.restrict(&self.p_map, np, &self.p_map, np).to_dense();
        let chol = mp
            .cholesky()
            .ok_or_else(|| FsiError::Assembly("pressure mass is not positive definite".into()))?;
        let linv = chol.l().try_inverse().ok_or_else(|| FsiError::Assembly("singular pressure mass".into()))?;
        let c = &linv * schur * linv.transpose();
        let c = 0.5 * (&c + c.transpose());
        let min = c.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        Ok(min.max(0.0).sqrt())
    }
}

/// Backward-Euler sweep over the grid with traction loads on the interface.
pub fn solve_stokes_quasilinear(
    ops: &FluidOperators,
    traction: Option<&TraceSeries>,
    data: &FluidData,
    eps: f64,
    opts: &StepOptions,
) -> Result<FluidState> {
    let grid = ops.grid;
    if let Some(g) = traction {
        g.check_shape(&grid, ops.n_interface_nodes())?;
        if g.role != TraceRole::TractionLoad {
            return Err(FsiError::Precondition("fluid interface data must be a traction load".into()));
        }
    }
    let v0 = match data.v0 {
        Some(v) => {
            if v.len() != ops.n_velocity() {
                return Err(FsiError::Shape("initial velocity of wrong length".into()));
            }
            let wall = (0..v.len()).filter(|&d| ops.space.dirichlet[d / 2]).map(|d| v[d].abs());
            if wall.fold(0.0, f64::max) > 1e-12 {
                return Err(FsiError::Precondition("initial velocity must vanish on the walls".into()));
            }
            v.to_vec()
        }
        None => vec![0.0; ops.n_velocity()],
    };
    let mut state = FluidState {
        v: vec![v0],
        p: vec![vec![0.0; ops.space.n_vertices]],
        iterations: Vec::with_capacity(grid.n_steps),
        residuals: Vec::with_capacity(grid.n_steps),
    };
    for n in 1..=grid.n_steps {
        let loads = ops.step_loads(traction, data, n);
        let step = ops.solve_step(eps, grid.time(n), &state.v[n - 1], &loads, opts)?;
        state.v.push(step.v);
        state.p.push(step.p);
        state.iterations.push(step.iterations);
        state.residuals.push(step.residual);
    }
    Ok(state)
}

/// Interface displacement `u(t_n) = ∫₀^{t_n} v` by the trapezoid rule.
pub fn accumulate_displacement(ops: &FluidOperators, state: &FluidState) -> TraceSeries {
    let traces: Vec<Vec<f64>> = state.v.iter().map(|v| ops.interface_trace(v)).collect();
    TraceSeries {
        role: TraceRole::Displacement,
        n_nodes: ops.n_interface_nodes(),
        steps: trapezoid_accumulate(&ops.grid, &traces),
    }
}

/// T₂^ε: interface traction load → interface displacement trace.
pub fn operator_t2eps(
    ops: &FluidOperators,
    traction: &TraceSeries,
    data: &FluidData,
    eps: f64,
    opts: &StepOptions,
) -> Result<(TraceSeries, FluidState)> {
    let state = solve_stokes_quasilinear(ops, Some(traction), data, eps, opts)?;
    Ok((accumulate_displacement(ops, &state), state))
}

/// Directly evaluated interface traction loads at every step.
pub fn direct_traction_series(ops: &FluidOperators, state: &FluidState) -> TraceSeries {
    let steps = (0..state.v.len())
        .map(|n| ops.direct_traction(ops.grid.time(n), &state.v[n], &state.p[n]))
        .collect();
    TraceSeries { role: TraceRole::TractionLoad, n_nodes: ops.n_interface_nodes(), steps }
}

/// `ε Σ_n dt v_nᵀ R v_n`
pub fn regularization_energy(ops: &FluidOperators, state: &FluidState, eps: f64) -> f64 {
    let dt = ops.grid.dt();
    eps * state.v.iter().skip(1).map(|v| dt * ops.reg.quad_form(v)).sum::<f64>()
}

/// Per-step `(lhs, rhs)` of the discrete energy inequality
/// `½|v_n|²_M + dt c_m |∇v_n|² + dt |ε(v_n)|² ≤ ½|v_{n-1}|²_M + dt loads·v_n`.
pub fn energy_balance(
    ops: &FluidOperators,
    state: &FluidState,
    traction: Option<&TraceSeries>,
    data: &FluidData,
) -> Vec<(f64, f64)> {
    let dt = ops.grid.dt();
    let c_m = ops.params.law.c_m();
    (1..state.v.len())
        .map(|n| {
            let v = &state.v[n];
            let lhs = 0.5 * ops.mass.quad_form(v)
                + dt * c_m * ops.lap.quad_form(v)
                + dt * ops.visc.quad_form(v);
            let rhs = 0.5 * ops.mass.quad_form(&state.v[n - 1])
                + dt * dot(&ops.step_loads(traction, data, n), v);
            (lhs, rhs)
        })
        .collect()
}
