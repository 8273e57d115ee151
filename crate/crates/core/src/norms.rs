//! Discrete norms on the interface and on space-time series.
//!
//! Fractional interface norms are spectral: with the generalized eigenpairs
//! `K φ_i = λ_i M φ_i` of the zero-endpoint interface Laplacian,
//! `‖v‖_s² = Σ (1 + λ_i)^s (φ_iᵀ M v)²`. The dual `H^{-1/2}` norm acts on load
//! vectors, never on nodal vectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{FsiError, Result};
use crate::fem::CsrMatrix;
use crate::mesh::{dist, CoupledMesh, TimeGrid};
use crate::trace::{TraceRole, TraceSeries};

/// Mass/stiffness Gram pair of the interior interface nodes and its
/// mass-orthonormal eigenbasis.
#[derive(Debug, Clone)]
pub struct InterfaceGram {
    pub mass: DMatrix<f64>,
    pub stiff: DMatrix<f64>,
    /// Nondecreasing.
    pub eigenvalues: Vec<f64>,
    /// Column `i` is `φ_i`.
    pub eigenvectors: DMatrix<f64>,
    /// Arclength of each interior node.
    pub arclength: Vec<f64>,
}

impl InterfaceGram {
    /// Quadratic elements on a polyline given by its vertices (endpoints
    /// included); unknowns are the `2m - 1` interior P2 nodes of `m` segments.
    pub fn p2_polyline(vertices: &[[f64; 2]]) -> Result<Self> {
        let m = vertices.len().saturating_sub(1);
        if m < 1 {
            return Err(FsiError::Shape("interface polyline needs two vertices".into()));
        }
        let n_full = 2 * m + 1;
        let mut mass = DMatrix::zeros(n_full, n_full);
        let mut stiff = DMatrix::zeros(n_full, n_full);
        let local_m = [[4.0, 2.0, -1.0], [2.0, 16.0, 2.0], [-1.0, 2.0, 4.0]];
        let local_k = [[7.0, -8.0, 1.0], [-8.0, 16.0, -8.0], [1.0, -8.0, 7.0]];
        let mut s_full = vec![0.0; n_full];
        for k in 0..m {
            let h = dist(vertices[k], vertices[k + 1]);
            let ids = [2 * k, 2 * k + 1, 2 * k + 2];
            for a in 0..3 {
                for b in 0..3 {
                    mass[(ids[a], ids[b])] += h / 30.0 * local_m[a][b];
                    stiff[(ids[a], ids[b])] += local_k[a][b] / (3.0 * h);
                }
            }
            s_full[2 * k + 1] = s_full[2 * k] + 0.5 * h;
            s_full[2 * k + 2] = s_full[2 * k] + h;
        }
        let inner = 1..n_full - 1;
        Self::from_matrices(
            mass.view((1, 1), (n_full - 2, n_full - 2)).into_owned(),
            stiff.view((1, 1), (n_full - 2, n_full - 2)).into_owned(),
            s_full[inner].to_vec(),
        )
    }

    /// Linear elements on a polyline, unknowns at the interior vertices.
    pub fn p1_polyline(vertices: &[[f64; 2]]) -> Result<Self> {
        let m = vertices.len().saturating_sub(1);
        if m < 2 {
            return Err(FsiError::Shape("P1 interface needs an interior vertex".into()));
        }
        let n_full = m + 1;
        let mut mass = DMatrix::zeros(n_full, n_full);
        let mut stiff = DMatrix::zeros(n_full, n_full);
        let mut s_full = vec![0.0; n_full];
        for k in 0..m {
            let h = dist(vertices[k], vertices[k + 1]);
            let ids = [k, k + 1];
            for a in 0..2 {
                for b in 0..2 {
                    mass[(ids[a], ids[b])] += h / 6.0 * if a == b { 2.0 } else { 1.0 };
                    stiff[(ids[a], ids[b])] += if a == b { 1.0 } else { -1.0 } / h;
                }
            }
            s_full[k + 1] = s_full[k] + h;
        }
        Self::from_matrices(
            mass.view((1, 1), (n_full - 2, n_full - 2)).into_owned(),
            stiff.view((1, 1), (n_full - 2, n_full - 2)).into_owned(),
            s_full[1..n_full - 1].to_vec(),
        )
    }

    pub fn for_mesh(mesh: &CoupledMesh) -> Result<Self> {
        Self::p2_polyline(&mesh.interface_points())
    }

    pub fn from_matrices(
        mass: DMatrix<f64>,
        stiff: DMatrix<f64>,
        arclength: Vec<f64>,
    ) -> Result<Self> {
        let n = mass.nrows();
        let chol = mass
            .clone()
            .cholesky()
            .ok_or_else(|| FsiError::Assembly("interface mass is not positive definite".into()))?;
        let l = chol.l();
        let l_inv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| FsiError::Assembly("singular interface mass factor".into()))?;
        let c = &l_inv * &stiff * l_inv.transpose();
        let c = 0.5 * (&c + c.transpose());
        let eig = c.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let q = DMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
        let mut eigenvectors = l_inv.transpose() * q;
        // fix the sign so each eigenvector has a positive first nonzero entry
        for k in 0..n {
            let mut col = eigenvectors.column_mut(k);
            if let Some(&first) = col.iter().find(|x| x.abs() > 1e-12) {
                if first < 0.0 {
                    col.neg_mut();
                }
            }
        }
        Ok(InterfaceGram { mass, stiff, eigenvalues, eigenvectors, arclength })
    }

    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    /// Mass-orthonormal coefficients `c_i = φ_iᵀ M v`.
    pub fn coefficients(&self, v: &[f64]) -> Vec<f64> {
        let mv = &self.mass * DVector::from_column_slice(v);
        (self.eigenvectors.transpose() * mv).iter().copied().collect()
    }

    /// Dual coefficients `φ_iᵀ g` of a load vector.
    pub fn dual_coefficients(&self, g: &[f64]) -> Vec<f64> {
        (self.eigenvectors.transpose() * DVector::from_column_slice(g)).iter().copied().collect()
    }

    pub fn eigenvector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i).iter().copied().collect()
    }

    /// Riesz image of `v` in `H^{1/2}`: the load `g` with `gᵀw = (v, w)_{1/2}`.
    pub fn riesz_half(&self, v: &[f64]) -> Vec<f64> {
        let c = self.coefficients(v);
        let weighted = DVector::from_iterator(
            c.len(),
            c.iter().zip(&self.eigenvalues).map(|(ci, l)| (1.0 + l).sqrt() * ci),
        );
        let mphi = &self.mass * &self.eigenvectors;
        (mphi * weighted).iter().copied().collect()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(FsiError::Shape(format!(
                "interface vector of length {len}, expected {}",
                self.dim()
            )));
        }
        Ok(())
    }

    fn split(&self, v: &[f64]) -> Result<[Vec<f64>; 2]> {
        if v.len() != 2 * self.dim() {
            return Err(FsiError::Shape(format!(
                "vector interface field of length {}, expected {}",
                v.len(),
                2 * self.dim()
            )));
        }
        Ok([
            v.iter().step_by(2).copied().collect(),
            v.iter().skip(1).step_by(2).copied().collect(),
        ])
    }
}

/// `(Σ (1 + λ_i)^s c_i²)^{1/2}` for a scalar nodal vector.
pub fn fractional_norm(gram: &InterfaceGram, s: f64, v: &[f64]) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(FsiError::Domain(format!("fractional order s = {s} is outside [0, 1]")));
    }
    gram.check_len(v.len())?;
    let c = gram.coefficients(v);
    Ok(c.iter()
        .zip(&gram.eigenvalues)
        .map(|(ci, l)| (1.0 + l).powf(s) * ci * ci)
        .sum::<f64>()
        .sqrt())
}

/// Closed-form `sup_v gᵀv / ‖v‖_{1/2}` for a scalar load vector.
pub fn dual_half_norm(gram: &InterfaceGram, g: &[f64]) -> Result<f64> {
    gram.check_len(g.len())?;
    let d = gram.dual_coefficients(g);
    Ok(d.iter()
        .zip(&gram.eigenvalues)
        .map(|(di, l)| di * di / (1.0 + l).sqrt())
        .sum::<f64>()
        .sqrt())
}

/// Vector (two interleaved components) variant of [`fractional_norm`].
pub fn fractional_norm_vec(gram: &InterfaceGram, s: f64, v: &[f64]) -> Result<f64> {
    let [a, b] = gram.split(v)?;
    Ok(fractional_norm(gram, s, &a)?.hypot(fractional_norm(gram, s, &b)?))
}

/// Vector variant of [`dual_half_norm`].
pub fn dual_half_norm_vec(gram: &InterfaceGram, g: &[f64]) -> Result<f64> {
    let [a, b] = gram.split(g)?;
    Ok(dual_half_norm(gram, &a)?.hypot(dual_half_norm(gram, &b)?))
}

/// A norm value with its squared-sum decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub name: String,
    pub value: f64,
    /// `value² = Σ component²`.
    pub components: Vec<(String, f64)>,
}

impl NormReport {
    pub fn from_components(name: &str, components: Vec<(String, f64)>) -> Self {
        let value = components.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
        NormReport { name: name.to_string(), value, components }
    }

    pub const CSV_HEADER: &'static str = "name,value,component1,component2,component3";

    pub fn csv_row(&self) -> String {
        let mut row = format!("{},{:e}", self.name, self.value);
        for k in 0..3 {
            match self.components.get(k) {
                Some((_, c)) => row.push_str(&format!(",{c:e}")),
                None => row.push(','),
            }
        }
        row
    }
}

/// Per-step eigen-coefficients of both components.
fn coefficient_series(gram: &InterfaceGram, u: &TraceSeries) -> Result<Vec<[Vec<f64>; 2]>> {
    u.steps
        .iter()
        .map(|s| {
            let [a, b] = gram.split(s)?;
            Ok([gram.coefficients(&a), gram.coefficients(&b)])
        })
        .collect()
}

/// The intersection norm of `H^{1/2}(0,T; L²(Σ)) ∩ L²(0,T; H^{1/2}_0(Σ))`.
///
/// Components: time Gagliardo double sum over pairs `m ≠ n` (ascending
/// order), rectangle-rule `L²(L²)`, rectangle-rule `L²(H^{1/2})`.
pub fn x_norm(gram: &InterfaceGram, grid: &TimeGrid, u: &TraceSeries) -> Result<NormReport> {
    u.check_shape(grid, gram.dim())?;
    if u.role != TraceRole::Displacement {
        return Err(FsiError::Precondition("x_norm expects a displacement trace".into()));
    }
    let scale = u.max_abs().max(f64::MIN_POSITIVE);
    if u.steps[0].iter().any(|x| x.abs() > 1e-13 * scale) {
        return Err(FsiError::Precondition(
            "displacement trace must vanish at t = 0".into(),
        ));
    }
    let dt = grid.dt();
    let coeffs = coefficient_series(gram, u)?;
    let n_times = coeffs.len();

    let mut gagliardo = 0.0;
    for m in 0..n_times {
        for n in 0..n_times {
            if m == n {
                continue;
            }
            let mut d2 = 0.0;
            for c in 0..2 {
                for (a, b) in coeffs[m][c].iter().zip(&coeffs[n][c]) {
                    d2 += (a - b) * (a - b);
                }
            }
            // dt² / |t_m - t_n|² = 1 / (m - n)²
            let k = (m as f64 - n as f64).powi(2);
            gagliardo += d2 / k;
        }
    }

    let mut l2 = 0.0;
    let mut half = 0.0;
    for step in coeffs.iter().skip(1) {
        for comp in step {
            for (ci, l) in comp.iter().zip(&gram.eigenvalues) {
                l2 += dt * ci * ci;
                half += dt * (1.0 + l).sqrt() * ci * ci;
            }
        }
    }
    Ok(NormReport::from_components(
        "x_norm",
        vec![
            ("time_gagliardo".into(), gagliardo.sqrt()),
            ("l2_l2".into(), l2.sqrt()),
            ("l2_h12".into(), half.sqrt()),
        ],
    ))
}

/// `‖g‖_{L²(0,T; H^{-1/2}(Σ))}` of a traction-load series (rectangle rule).
pub fn dual_l2_norm(gram: &InterfaceGram, grid: &TimeGrid, g: &TraceSeries) -> Result<f64> {
    g.check_shape(grid, gram.dim())?;
    let dt = grid.dt();
    let mut acc = 0.0;
    for step in g.steps.iter().skip(1) {
        acc += dt * dual_half_norm_vec(gram, step)?.powi(2);
    }
    Ok(acc.sqrt())
}

/// Discrete `H¹((0,T) x Σ)` norm of a displacement trace: rectangle-rule
/// `L²(H¹)` plus backward-difference `H¹(L²)` seminorm.
pub fn h1_space_time_norm(gram: &InterfaceGram, grid: &TimeGrid, u: &TraceSeries) -> Result<f64> {
    u.check_shape(grid, gram.dim())?;
    let dt = grid.dt();
    let mut acc = 0.0;
    for n in 1..u.steps.len() {
        acc += dt * fractional_norm_vec(gram, 1.0, &u.steps[n])?.powi(2);
        let diff: Vec<f64> =
            u.steps[n].iter().zip(&u.steps[n - 1]).map(|(a, b)| (a - b) / dt).collect();
        acc += dt * fractional_norm_vec(gram, 0.0, &diff)?.powi(2);
    }
    Ok(acc.sqrt())
}

/// Rectangle-rule `L²(0,T; L²(Σ))` norm.
pub fn l2_l2_trace_norm(gram: &InterfaceGram, grid: &TimeGrid, u: &TraceSeries) -> Result<f64> {
    u.check_shape(grid, gram.dim())?;
    let dt = grid.dt();
    let mut acc = 0.0;
    for step in u.steps.iter().skip(1) {
        acc += dt * fractional_norm_vec(gram, 0.0, step)?.powi(2);
    }
    Ok(acc.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BochnerKind {
    L2H1,
    L2L2,
    /// Backward-difference time seminorm of `H¹(0,T; L²)`.
    H1L2,
}

/// Volume Gram pair for Bochner norms on one subdomain.
#[derive(Debug, Clone)]
pub struct SpatialGram {
    pub mass: CsrMatrix,
    pub stiff: CsrMatrix,
}

/// Rectangle-rule Bochner norm of a field series `series[0..=N]`.
pub fn bochner_norm(
    kind: BochnerKind,
    grid: &TimeGrid,
    gram: &SpatialGram,
    series: &[Vec<f64>],
) -> Result<f64> {
    if series.len() != grid.n_steps + 1 {
        return Err(FsiError::Shape(format!(
            "series has {} times, grid has {}",
            series.len(),
            grid.n_steps + 1
        )));
    }
    if let Some(bad) = series.iter().find(|s| s.len() != gram.mass.ncols) {
        return Err(FsiError::Shape(format!(
            "field of length {}, expected {}",
            bad.len(),
            gram.mass.ncols
        )));
    }
    let dt = grid.dt();
    let mut acc = 0.0;
    for n in 1..series.len() {
        acc += dt
            * match kind {
                BochnerKind::L2L2 => gram.mass.quad_form(&series[n]),
                BochnerKind::L2H1 => {
                    gram.mass.quad_form(&series[n]) + gram.stiff.quad_form(&series[n])
                }
                BochnerKind::H1L2 => {
                    let d: Vec<f64> = series[n]
                        .iter()
                        .zip(&series[n - 1])
                        .map(|(a, b)| (a - b) / dt)
                        .collect();
                    gram.mass.quad_form(&d)
                }
            };
    }
    Ok(acc.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::P2Space;
    use crate::mesh::{build_geometry, Preset, Side};
    use proptest::{prop_assert, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat_polyline(segments: usize) -> Vec<[f64; 2]> {
        (0..=segments).map(|k| [k as f64 / segments as f64, 0.0]).collect()
    }

    /// 3 quadratic segments: 5 interior nodes.
    fn gram5() -> InterfaceGram {
        InterfaceGram::p2_polyline(&flat_polyline(3)).unwrap()
    }

    /// Independent route: `‖v‖²_{1/2} = wᵀ (I + M^{-1/2} K M^{-1/2})^{1/2} w`,
    /// `w = M^{1/2} v`, with all matrix functions by symmetric eigensolves.
    fn dense_half_norm(gram: &InterfaceGram, v: &[f64]) -> f64 {
        let m_eig = gram.mass.clone().symmetric_eigen();
        let sqrt_m = &m_eig.eigenvectors
            * DMatrix::from_diagonal(&m_eig.eigenvalues.map(f64::sqrt))
            * m_eig.eigenvectors.transpose();
        let inv_sqrt_m = &m_eig.eigenvectors
            * DMatrix::from_diagonal(&m_eig.eigenvalues.map(|x| 1.0 / x.sqrt()))
            * m_eig.eigenvectors.transpose();
        let n = gram.dim();
        let a = DMatrix::identity(n, n) + &inv_sqrt_m * &gram.stiff * &inv_sqrt_m;
        let a_eig = a.symmetric_eigen();
        let sqrt_a = &a_eig.eigenvectors
            * DMatrix::from_diagonal(&a_eig.eigenvalues.map(f64::sqrt))
            * a_eig.eigenvectors.transpose();
        let w = &sqrt_m * DVector::from_column_slice(v);
        (w.transpose() * sqrt_a * w)[(0, 0)].sqrt()
    }

    #[test]
    fn gram_invariants() {
        let mesh = build_geometry(Preset::CurvedInterface, 0.1, 1).unwrap();
        let gram = InterfaceGram::for_mesh(&mesh).unwrap();
        assert_eq!(gram.dim(), 15);
        assert!(gram.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        assert!(gram.eigenvalues[0] >= 0.0);
        let phi = &gram.eigenvectors;
        let gram_m = phi.transpose() * &gram.mass * phi;
        let id = DMatrix::<f64>::identity(15, 15);
        assert!((gram_m - id).abs().max() <= 1e-10);
        let lambda = DMatrix::from_diagonal(&DVector::from_vec(gram.eigenvalues.clone()));
        let recon = &gram.mass * phi * lambda * phi.transpose() * &gram.mass;
        assert!((&recon - &gram.stiff).norm() <= 1e-8 * gram.stiff.norm());
    }

    #[test]
    fn interface_gram_matches_fluid_p2_nodes() {
        let mesh = build_geometry(Preset::CurvedInterface, 0.1, 1).unwrap();
        let gram = InterfaceGram::for_mesh(&mesh).unwrap();
        let space = P2Space::new(&mesh.fluid, &mesh.interface_nodes(Side::Fluid)).unwrap();
        assert_eq!(space.interface_interior().len(), gram.dim());
        // lowest eigenvalue of the flat unit interval is close to π²
        let flat = InterfaceGram::p2_polyline(&flat_polyline(16)).unwrap();
        assert!((flat.eigenvalues[0] - std::f64::consts::PI.powi(2)).abs() < 1e-4);
    }

    #[test]
    fn fractional_norm_examples() {
        let gram = gram5();
        assert_eq!(gram.dim(), 5);
        assert_eq!(fractional_norm(&gram, 0.3, &[0.0; 5]).unwrap(), 0.0);
        let phi0 = gram.eigenvector(0);
        assert!((fractional_norm(&gram, 0.0, &phi0).unwrap() - 1.0).abs() < 1e-12);
        let expected = (1.0 + gram.eigenvalues[0]).powf(0.25);
        let got = fractional_norm(&gram, 0.5, &phi0).unwrap();
        assert!((got - expected).abs() < 1e-10);
        assert!((dense_half_norm(&gram, &phi0) - expected).abs() < 1e-10);
        // s = 1 is the full H¹ norm
        let v = [0.3, -0.1, 0.7, 0.2, -0.5];
        let h1 = (gram.mass.clone() + gram.stiff.clone()).clone();
        let vv = DVector::from_column_slice(&v);
        let direct = (vv.transpose() * h1 * &vv)[(0, 0)].sqrt();
        assert!((fractional_norm(&gram, 1.0, &v).unwrap() - direct).abs() < 1e-10);
        assert!((fractional_norm(&gram, 0.5, &v).unwrap() - dense_half_norm(&gram, &v)).abs() < 1e-10);
        assert!(matches!(fractional_norm(&gram, 1.5, &v), Err(FsiError::Domain(_))));
        assert!(matches!(fractional_norm(&gram, 0.5, &v[..3]), Err(FsiError::Shape(_))));
    }

    #[test]
    fn dual_norm_riesz_identity() {
        let gram = gram5();
        assert_eq!(dual_half_norm(&gram, &[0.0; 5]).unwrap(), 0.0);
        let phi0 = gram.eigenvector(0);
        let g = gram.riesz_half(&phi0);
        let primal = fractional_norm(&gram, 0.5, &phi0).unwrap();
        assert!((dual_half_norm(&gram, &g).unwrap() - primal).abs() < 1e-12);
        // mass-weighted eigenvector load: dual norm is (1+λ0)^{1/2} (1+λ0)^{-1/4}
        let l0 = gram.eigenvalues[0];
        let scaled: Vec<f64> = (&gram.mass * DVector::from_column_slice(&phi0))
            .iter()
            .map(|x| x * (1.0 + l0).sqrt())
            .collect();
        assert!((dual_half_norm(&gram, &scaled).unwrap() - (1.0 + l0).powf(0.25)).abs() < 1e-12);
        assert!((dual_half_norm(&gram, &scaled).unwrap() - primal).abs() < 1e-12);
    }

    #[test]
    fn dual_norm_matches_random_sampling_sup() {
        let gram = gram5();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let closed = dual_half_norm(&gram, &g).unwrap();
        let mut best = 0.0_f64;
        for _ in 0..100_000 {
            let v: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let v: Vec<f64> = v.iter().map(|x| x / len).collect();
            let num: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
            best = best.max(num.abs() / fractional_norm(&gram, 0.5, &v).unwrap());
        }
        assert!(best <= closed * (1.0 + 1e-12));
        assert!(best >= 0.98 * closed, "sampled {best}, closed form {closed}");
    }

    fn ramp_trace(grid: &TimeGrid, gram: &InterfaceGram) -> TraceSeries {
        let phi0 = gram.eigenvector(0);
        TraceSeries::from_fn(TraceRole::Displacement, grid, gram.dim(), |n, i| {
            [grid.time(n) * phi0[i], 0.0]
        })
    }

    #[test]
    fn x_norm_matches_direct_double_loop() {
        let gram = gram5();
        let grid = TimeGrid::new(1.0, 6).unwrap();
        let zero = TraceSeries::zeros(TraceRole::Displacement, 7, 5);
        assert_eq!(x_norm(&gram, &grid, &zero).unwrap().value, 0.0);

        let u = ramp_trace(&grid, &gram);
        let report = x_norm(&gram, &grid, &u).unwrap();
        // oracle: direct double loop with explicit mass products
        let dt = grid.dt();
        let l2sq = |v: &[f64]| {
            let x = DVector::from_column_slice(v);
            (x.transpose() * &gram.mass * &x)[(0, 0)]
        };
        let mut gag = 0.0;
        for m in 0..=6 {
            for n in 0..=6 {
                if m != n {
                    let d: Vec<f64> =
                        u.component(m, 0).iter().zip(u.component(n, 0)).map(|(a, b)| a - b).collect();
                    let tm = grid.time(m);
                    let tn = grid.time(n);
                    gag += dt * dt * l2sq(&d) / (tm - tn).powi(2);
                }
            }
        }
        let mut l2 = 0.0;
        let mut half = 0.0;
        for n in 1..=6 {
            l2 += dt * l2sq(&u.component(n, 0));
            half += dt * dense_half_norm(&gram, &u.component(n, 0)).powi(2);
        }
        assert!((report.components[0].1.powi(2) - gag).abs() <= 1e-12 * gag);
        assert!((report.components[1].1.powi(2) - l2).abs() <= 1e-12 * l2.max(1.0));
        assert!((report.components[2].1.powi(2) - half).abs() <= 1e-11 * half.max(1.0));
        let sum_sq: f64 = report.components.iter().map(|(_, c)| c * c).sum();
        assert!((report.value.powi(2) - sum_sq).abs() <= 1e-10 * sum_sq);
        // time-Gagliardo part for t·φ0: Σ_{m≠n} dt² · ‖φ0‖² = N(N+1) dt²
        assert!((gag - 42.0 * dt * dt).abs() < 1e-12);
    }

    #[test]
    fn x_norm_rejects_nonzero_start() {
        let gram = gram5();
        let grid = TimeGrid::new(1.0, 3).unwrap();
        let u = TraceSeries::from_fn(TraceRole::Displacement, &grid, 5, |_, _| [1.0, 0.0]);
        assert!(matches!(x_norm(&gram, &grid, &u), Err(FsiError::Precondition(_))));
    }

    #[test]
    fn x_norm_mesh_independent_for_smooth_trace() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let value = |segments: usize| {
            let gram = InterfaceGram::p2_polyline(&flat_polyline(segments)).unwrap();
            let u = TraceSeries::from_fn(TraceRole::Displacement, &grid, gram.dim(), |n, i| {
                let s = gram.arclength[i];
                let t = grid.time(n);
                [t * t * (std::f64::consts::PI * s).sin(), t * s * (1.0 - s)]
            });
            x_norm(&gram, &grid, &u).unwrap().value
        };
        let (a, b) = (value(8), value(16));
        assert!((a - b).abs() <= 0.05 * b, "{a} vs {b}");
    }

    #[test]
    fn bochner_examples() {
        let mesh = build_geometry(Preset::FlatChannel, 0.0, 0).unwrap();
        let space = P2Space::new(&mesh.fluid, &mesh.interface_nodes(Side::Fluid)).unwrap();
        let gram = SpatialGram { mass: space.vector_mass(), stiff: space.vector_laplace() };
        let grid = TimeGrid::new(2.0, 5).unwrap();
        let zeros = vec![vec![0.0; 2 * space.n_nodes()]; 6];
        for kind in [BochnerKind::L2H1, BochnerKind::L2L2, BochnerKind::H1L2] {
            assert_eq!(bochner_norm(kind, &grid, &gram, &zeros).unwrap(), 0.0);
        }
        let w = space.interpolate(&|p| [p[0] * (1.0 - p[0]), p[1]]);
        let w_l2 = gram.mass.quad_form(&w).sqrt();
        let w_h1 = (gram.mass.quad_form(&w) + gram.stiff.quad_form(&w)).sqrt();
        let c = 1.7;
        let constant: Vec<Vec<f64>> = (0..=5).map(|_| w.iter().map(|x| c * x).collect()).collect();
        let got = bochner_norm(BochnerKind::L2L2, &grid, &gram, &constant).unwrap();
        assert!((got - w_l2 * 2.0_f64.sqrt() * c).abs() < 1e-12);
        let got = bochner_norm(BochnerKind::L2H1, &grid, &gram, &constant).unwrap();
        assert!((got - w_h1 * 2.0_f64.sqrt() * c).abs() < 1e-12);
        // hand quadrature: backward differences of t·w are exactly w
        let ramp: Vec<Vec<f64>> =
            (0..=5).map(|n| w.iter().map(|x| grid.time(n) * x).collect()).collect();
        let got = bochner_norm(BochnerKind::H1L2, &grid, &gram, &ramp).unwrap();
        assert!((got - 2.0_f64.sqrt() * w_l2).abs() < 1e-12);
        assert!(bochner_norm(BochnerKind::L2L2, &grid, &gram, &ramp[..3]).is_err());
    }

    #[test]
    fn norm_report_csv_row() {
        let r = NormReport::from_components("x", vec![("a".into(), 3.0), ("b".into(), 4.0)]);
        assert_eq!(r.value, 5.0);
        assert_eq!(r.csv_row(), "x,5e0,3e0,4e0,");
    }

    proptest! {
        #[test]
        fn fractional_norm_monotone_in_s(v in proptest::collection::vec(-5.0f64..5.0, 5), s in 0.0f64..0.9) {
            let gram = gram5();
            let a = fractional_norm(&gram, s, &v).unwrap();
            let b = fractional_norm(&gram, s + 0.1, &v).unwrap();
            prop_assert!(b >= a * (1.0 - 1e-14));
        }

        #[test]
        fn duality_inequality(v in proptest::collection::vec(-5.0f64..5.0, 5), g in proptest::collection::vec(-5.0f64..5.0, 5)) {
            let gram = gram5();
            let pairing: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
            let bound = dual_half_norm(&gram, &g).unwrap() * fractional_norm(&gram, 0.5, &v).unwrap();
            prop_assert!(pairing <= bound + 1e-10 * (1.0 + bound));
            let riesz = gram.riesz_half(&v);
            let pr: f64 = riesz.iter().zip(&v).map(|(a, b)| a * b).sum();
            let eq = dual_half_norm(&gram, &riesz).unwrap() * fractional_norm(&gram, 0.5, &v).unwrap();
            prop_assert!((pr - eq).abs() <= 1e-10 * (1.0 + eq));
        }

        #[test]
        fn x_norm_is_a_norm(seed in 0u64..1000, alpha in -3.0f64..3.0) {
            let gram = gram5();
            let grid = TimeGrid::new(1.0, 5).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut random = || TraceSeries::from_fn(TraceRole::Displacement, &grid, 5, |n, _| {
                if n == 0 { [0.0, 0.0] } else { [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)] }
            });
            let (u, w) = (random(), random());
            let nu = x_norm(&gram, &grid, &u).unwrap().value;
            let nw = x_norm(&gram, &grid, &w).unwrap().value;
            let scaled = x_norm(&gram, &grid, &u.scaled(alpha)).unwrap().value;
            prop_assert!((scaled - alpha.abs() * nu).abs() <= 1e-12 * (1.0 + nu));
            let sum = x_norm(&gram, &grid, &u.lin_comb(1.0, &w, 1.0)).unwrap().value;
            prop_assert!(sum <= nu + nw + 1e-10);
        }
    }
}
