//! Manufactured solutions for the solid and fluid solvers.

use std::f64::consts::PI;

use crate::error::Result;
use crate::fluid::{
    direct_traction_series, solve_stokes_quasilinear, FluidData, FluidOperators, StepOptions,
};
use crate::law::{DiffusionLaw, FluidParams, SolidParams};
use crate::mesh::{build_geometry, Preset, TimeGrid};
use crate::norms::{dual_l2_norm, InterfaceGram};
use crate::solid::{solve_lame_general, SolidOperators};
use crate::trace::{TraceRole, TraceSeries};

/// `u(t, x) = t² (sin πx, 0)`
pub fn solid_exact(t: f64, p: [f64; 2]) -> [f64; 2] {
    [t * t * (PI * p[0]).sin(), 0.0]
}

/// `∂_tt u - div σ(u)` for [`solid_exact`].
pub fn solid_force(params: SolidParams, t: f64, p: [f64; 2]) -> [f64; 2] {
    let s = (PI * p[0]).sin();
    [2.0 * s + (2.0 * params.mu + params.lambda) * PI * PI * t * t * s, 0.0]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolidMmsReport {
    pub refinement: u32,
    pub h: f64,
    pub l2_error: f64,
}

/// Solves the solid manufactured problem on the flat preset with
/// `4·2^r` time steps and returns the `L²(Ω_s)` error at `T = 1`.
pub fn solid_mms_run(params: SolidParams, refinement: u32) -> Result<SolidMmsReport> {
    let mesh = build_geometry(Preset::FlatChannel, 0.0, refinement)?;
    let n_steps = 4 << refinement;
    let grid = TimeGrid::new(1.0, n_steps)?;
    let ops = SolidOperators::new(&mesh, params, grid)?;
    let iface = ops.space.interface_interior().to_vec();
    let u_d = TraceSeries::from_fn(TraceRole::Displacement, &grid, iface.len(), |n, i| {
        solid_exact(grid.time(n), ops.space.nodes[iface[i]])
    });
    let force = |t: f64, p: [f64; 2]| solid_force(params, t, p);
    let state = solve_lame_general(&ops, &u_d, Some(&solid_exact), Some(&force))?;
    Ok(SolidMmsReport {
        refinement,
        h: mesh.h,
        l2_error: ops.space.l2_error(&state.u[n_steps], &|p| solid_exact(1.0, p)),
    })
}

/// Stream-function flow `v = t·curl(sin²(πx)(1-y)²)`, pressure `π = t cos(πx) y`,
/// for the linear law `a = κξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidMms {
    pub kappa: f64,
}

impl FluidMms {
    fn w(p: [f64; 2]) -> [f64; 2] {
        let (x, y) = (p[0], p[1]);
        let s = (PI * x).sin();
        [-2.0 * s * s * (1.0 - y), -PI * (2.0 * PI * x).sin() * (1.0 - y).powi(2)]
    }

    fn grad_w(p: [f64; 2]) -> [[f64; 2]; 2] {
        let (x, y) = (p[0], p[1]);
        let s = (PI * x).sin();
        let s2 = (2.0 * PI * x).sin();
        let c2 = (2.0 * PI * x).cos();
        [
            [-2.0 * PI * s2 * (1.0 - y), 2.0 * s * s],
            [-2.0 * PI * PI * c2 * (1.0 - y).powi(2), 2.0 * PI * s2 * (1.0 - y)],
        ]
    }

    pub fn velocity(&self, t: f64, p: [f64; 2]) -> [f64; 2] {
        let w = Self::w(p);
        [t * w[0], t * w[1]]
    }

    /// `g[c][d] = ∂_d v_c`
    pub fn velocity_gradient(&self, t: f64, p: [f64; 2]) -> [[f64; 2]; 2] {
        let g = Self::grad_w(p);
        [[t * g[0][0], t * g[0][1]], [t * g[1][0], t * g[1][1]]]
    }

    pub fn pressure(&self, t: f64, p: [f64; 2]) -> f64 {
        t * (PI * p[0]).cos() * p[1]
    }

    /// `∂_t v - (κ + ½)Δv + ∇π`
    pub fn force(&self, t: f64, p: [f64; 2]) -> [f64; 2] {
        let (x, y) = (p[0], p[1]);
        let w = Self::w(p);
        let lap = [
            -4.0 * PI * PI * (2.0 * PI * x).cos() * (1.0 - y),
            4.0 * PI.powi(3) * (2.0 * PI * x).sin() * (1.0 - y).powi(2) - 2.0 * PI * (2.0 * PI * x).sin(),
        ];
        let grad_p = [-PI * (PI * x).sin() * y, (PI * x).cos()];
        let k = self.kappa + 0.5;
        [w[0] - k * t * lap[0] + t * grad_p[0], w[1] - k * t * lap[1] + t * grad_p[1]]
    }

    /// `(κ∇v + ε(v) - πI) n`
    pub fn traction(&self, t: f64, p: [f64; 2], n: [f64; 2]) -> [f64; 2] {
        let g = self.velocity_gradient(t, p);
        let pr = self.pressure(t, p);
        let mut out = [0.0; 2];
        for c in 0..2 {
            for d in 0..2 {
                let mut s = self.kappa * g[c][d] + 0.5 * (g[c][d] + g[d][c]);
                if c == d {
                    s -= pr;
                }
                out[c] += s * n[d];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidMmsReport {
    pub refinement: u32,
    pub h: f64,
    /// `‖∇(v_h - v)‖` at the final time.
    pub h1_error: f64,
    pub l2_error: f64,
    pub max_divergence: f64,
    /// `L²(0,T; H^{-1/2})` distance between the directly evaluated discrete
    /// traction and the prescribed one.
    pub traction_gap: f64,
}

pub fn fluid_mms_run(
    mms: &FluidMms,
    refinement: u32,
    n_steps: usize,
    opts: &StepOptions,
) -> Result<FluidMmsReport> {
    let mesh = build_geometry(Preset::FlatChannel, 0.0, refinement)?;
    let grid = TimeGrid::new(1.0, n_steps)?;
    let law = DiffusionLaw::linear(mms.kappa)?;
    let ops = FluidOperators::new(&mesh, FluidParams::new(law), grid)?;
    let force = |t: f64, p: [f64; 2]| mms.force(t, p);
    let neumann = |t: f64, p: [f64; 2], n: [f64; 2]| mms.traction(t, p, n);
    let data = FluidData { force: Some(&force), neumann: Some(&neumann), v0: None };
    let state = solve_stokes_quasilinear(&ops, None, &data, 0.0, opts)?;

    let vn = &state.v[n_steps];
    let h1_error = ops.space.h1_semi_error(vn, &|p| mms.velocity_gradient(1.0, p));
    let l2_error = ops.space.l2_error(vn, &|p| mms.velocity(1.0, p));
    let max_divergence = state.v.iter().map(|v| ops.divergence_residual(v)).fold(0.0, f64::max);

    let gram = InterfaceGram::for_mesh(&mesh)?;
    let direct = direct_traction_series(&ops, &state);
    let prescribed = TraceSeries {
        role: TraceRole::TractionLoad,
        n_nodes: ops.n_interface_nodes(),
        steps: (0..=n_steps)
            .map(|n| ops.interface_trace(&ops.neumann_load(grid.time(n), &neumann)))
            .collect(),
    };
    let traction_gap = dual_l2_norm(&gram, &grid, &direct.sub(&prescribed))?;
    Ok(FluidMmsReport { refinement, h: mesh.h, h1_error, l2_error, max_divergence, traction_gap })
}

/// Observed orders `log(e_k / e_{k+1}) / log(h_k / h_{k+1})`.
pub fn observed_orders(h: &[f64], e: &[f64]) -> Vec<f64> {
    h.windows(2)
        .zip(e.windows(2))
        .map(|(hw, ew)| (ew[0] / ew[1]).ln() / (hw[0] / hw[1]).ln())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fluid_solution_is_divergence_free_and_consistent() {
        let mms = FluidMms { kappa: 1.3 };
        let h = 1e-5;
        for p in [[0.3, 0.2], [0.71, 0.55]] {
            let g = mms.velocity_gradient(0.7, p);
            assert!((g[0][0] + g[1][1]).abs() < 1e-12);
            for d in 0..2 {
                let mut a = p;
                let mut b = p;
                a[d] += h;
                b[d] -= h;
                for c in 0..2 {
                    let fd = (mms.velocity(0.7, a)[c] - mms.velocity(0.7, b)[c]) / (2.0 * h);
                    assert!((fd - g[c][d]).abs() < 1e-7);
                }
            }
        }
        // velocity vanishes on the walls
        for s in [0.0, 0.25, 0.6, 1.0] {
            for p in [[0.0, s], [1.0, s], [s, 1.0]] {
                let v = mms.velocity(1.0, p);
                assert!(v[0].abs() < 1e-14 && v[1].abs() < 1e-14);
            }
        }
    }

    #[test]
    fn fluid_force_matches_finite_differences() {
        let mms = FluidMms { kappa: 0.8 };
        let h = 1e-4;
        let p = [0.37, 0.42];
        let t = 0.6;
        let mut lap = [0.0; 2];
        for d in 0..2 {
            let mut a = p;
            let mut b = p;
            a[d] += h;
            b[d] -= h;
            for c in 0..2 {
                lap[c] += (mms.velocity(t, a)[c] - 2.0 * mms.velocity(t, p)[c] + mms.velocity(t, b)[c]) / (h * h);
            }
        }
        let dp = [
            (mms.pressure(t, [p[0] + h, p[1]]) - mms.pressure(t, [p[0] - h, p[1]])) / (2.0 * h),
            (mms.pressure(t, [p[0], p[1] + h]) - mms.pressure(t, [p[0], p[1] - h])) / (2.0 * h),
        ];
        let w = mms.velocity(1.0, p);
        let f = mms.force(t, p);
        for c in 0..2 {
            let expected = w[c] - (mms.kappa + 0.5) * lap[c] + dp[c];
            assert!((f[c] - expected).abs() < 1e-4, "{} vs {expected}", f[c]);
        }
    }

    #[test]
    fn observed_orders_of_exact_powers() {
        let h = [0.4, 0.2, 0.1];
        let e: Vec<f64> = h.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        for o in observed_orders(&h, &e) {
            assert!((o - 2.0).abs() < 1e-12);
        }
    }
}
