//! Quadratic (P2) Lagrange spaces on straight-sided triangles, sparse
//! assembly, and a thin wrapper around faer's sparse LU.
//!
//! Vector fields use interleaved dofs: component `c` of node `i` is dof
//! `2 * i + c`. Local element ordering is `[v0, v1, v2, m01, m12, m20]`.

use std::collections::HashMap;

use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{FsiError, Result};
use crate::mesh::{BoundaryTag, TriMesh};

/// Degree-5, 7-point rule in barycentric coordinates; weights sum to one.
const TRI7: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_770;
    const B1: f64 = 0.470_142_064_105_115;
    const W1: f64 = 0.132_394_152_788_506;
    const A2: f64 = 0.797_426_985_353_087;
    const B2: f64 = 0.101_286_507_323_456;
    const W2: f64 = 0.125_939_180_544_827;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

const EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

pub fn p2_values(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

pub fn p2_gradients(l: [f64; 3], gl: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut out = [[0.0; 2]; 6];
    for i in 0..3 {
        for d in 0..2 {
            out[i][d] = (4.0 * l[i] - 1.0) * gl[i][d];
        }
    }
    for (k, &(i, j)) in EDGES.iter().enumerate() {
        for d in 0..2 {
            out[3 + k][d] = 4.0 * (l[j] * gl[i][d] + l[i] * gl[j][d]);
        }
    }
    out
}

/// Hessians are element-wise constant on affine elements.
pub fn p2_hessians(gl: &[[f64; 2]; 3]) -> [[[f64; 2]; 2]; 6] {
    let mut out = [[[0.0; 2]; 2]; 6];
    for i in 0..3 {
        for a in 0..2 {
            for b in 0..2 {
                out[i][a][b] = 4.0 * gl[i][a] * gl[i][b];
            }
        }
    }
    for (k, &(i, j)) in EDGES.iter().enumerate() {
        for a in 0..2 {
            for b in 0..2 {
                out[3 + k][a][b] = 4.0 * (gl[i][a] * gl[j][b] + gl[j][a] * gl[i][b]);
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct QuadPoint {
    /// Quadrature weight times element area.
    pub weight: f64,
    pub x: [f64; 2],
    pub bary: [f64; 3],
    pub values: [f64; 6],
    pub grads: [[f64; 2]; 6],
}

#[derive(Debug, Clone)]
pub struct ElementData {
    pub dofs: [usize; 6],
    pub vertices: [usize; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates.
    pub bary_grads: [[f64; 2]; 3],
    pub hessians: [[[f64; 2]; 2]; 6],
    pub qps: Vec<QuadPoint>,
}

/// P2 node layout over a vertex mesh: vertices first, then edge midpoints.
#[derive(Debug, Clone)]
pub struct P2Space {
    pub nodes: Vec<[f64; 2]>,
    pub n_vertices: usize,
    pub elements: Vec<ElementData>,
    /// Nodes lying on a Dirichlet-tagged facet.
    pub dirichlet: Vec<bool>,
    /// P2 nodes along the interface, canonical order, endpoints included.
    pub interface_chain: Vec<usize>,
}

impl P2Space {
    /// `interface_vertices` lists the interface vertex ids in canonical order.
    pub fn new(mesh: &TriMesh, interface_vertices: &[usize]) -> Result<Self> {
        let n_vertices = mesh.nodes.len();
        let mut nodes = mesh.nodes.clone();
        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut elements = Vec::with_capacity(mesh.elements.len());

        for el in &mesh.elements {
            let mut dofs = [el[0], el[1], el[2], 0, 0, 0];
            for (k, &(i, j)) in EDGES.iter().enumerate() {
                let (a, b) = (el[i], el[j]);
                let key = (a.min(b), a.max(b));
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
                    nodes.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                    nodes.len() - 1
                });
                dofs[3 + k] = id;
            }
            let p = [mesh.nodes[el[0]], mesh.nodes[el[1]], mesh.nodes[el[2]]];
            let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            if det <= 0.0 {
                return Err(FsiError::Assembly("element with non-positive area".into()));
            }
            let area = 0.5 * det;
            // gradients of barycentric coordinates
            let gl = [
                [(p[1][1] - p[2][1]) / det, (p[2][0] - p[1][0]) / det],
                [(p[2][1] - p[0][1]) / det, (p[0][0] - p[2][0]) / det],
                [(p[0][1] - p[1][1]) / det, (p[1][0] - p[0][0]) / det],
            ];
            let qps = TRI7
                .iter()
                .map(|&(l, w)| QuadPoint {
                    weight: w * area,
                    x: [
                        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
                    ],
                    bary: l,
                    values: p2_values(l),
                    grads: p2_gradients(l, &gl),
                })
                .collect();
            elements.push(ElementData {
                dofs,
                vertices: *el,
                area,
                bary_grads: gl,
                hessians: p2_hessians(&gl),
                qps,
            });
        }

        let mut dirichlet = vec![false; nodes.len()];
        for f in &mesh.boundary {
            if f.tag != BoundaryTag::Interface {
                let mid = edge_ids[&(f.a.min(f.b), f.a.max(f.b))];
                dirichlet[f.a] = true;
                dirichlet[f.b] = true;
                dirichlet[mid] = true;
            }
        }

        let mut interface_chain = Vec::with_capacity(2 * interface_vertices.len());
        for w in interface_vertices.windows(2) {
            let key = (w[0].min(w[1]), w[0].max(w[1]));
            let mid = *edge_ids
                .get(&key)
                .ok_or_else(|| FsiError::Assembly("interface vertices are not adjacent".into()))?;
            interface_chain.push(w[0]);
            interface_chain.push(mid);
        }
        if let Some(&last) = interface_vertices.last() {
            interface_chain.push(last);
        }

        Ok(P2Space { nodes, n_vertices, elements, dirichlet, interface_chain })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Interface nodes carrying unknowns: the chain without its two corner
    /// endpoints, which sit on the Dirichlet walls.
    pub fn interface_interior(&self) -> &[usize] {
        let n = self.interface_chain.len();
        &self.interface_chain[1..n - 1]
    }

    /// Assembled vector load `∫ f · φ` for a body force `f(x)`.
    pub fn body_load(&self, f: &dyn Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.n_nodes()];
        for el in &self.elements {
            for qp in &el.qps {
                let fx = f(qp.x);
                for a in 0..6 {
                    for c in 0..2 {
                        out[2 * el.dofs[a] + c] += qp.weight * fx[c] * qp.values[a];
                    }
                }
            }
        }
        out
    }

    /// Nodal interpolant of a vector function.
    pub fn interpolate(&self, f: &dyn Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.n_nodes());
        for &p in &self.nodes {
            out.extend_from_slice(&f(p));
        }
        out
    }

    /// `‖u_h - f‖_{L²}` by element quadrature.
    pub fn l2_error(&self, coeffs: &[f64], f: &dyn Fn([f64; 2]) -> [f64; 2]) -> f64 {
        let mut acc = 0.0;
        for el in &self.elements {
            for qp in &el.qps {
                let fx = f(qp.x);
                for c in 0..2 {
                    let uh: f64 = (0..6).map(|a| qp.values[a] * coeffs[2 * el.dofs[a] + c]).sum();
                    acc += qp.weight * (uh - fx[c]).powi(2);
                }
            }
        }
        acc.sqrt()
    }

    /// `‖∇(u_h - f)‖_{L²}` given the exact gradient `g[c][d] = ∂_d f_c`.
    pub fn h1_semi_error(&self, coeffs: &[f64], g: &dyn Fn([f64; 2]) -> [[f64; 2]; 2]) -> f64 {
        let mut acc = 0.0;
        for el in &self.elements {
            for qp in &el.qps {
                let gx = g(qp.x);
                for c in 0..2 {
                    for d in 0..2 {
                        let gh: f64 =
                            (0..6).map(|a| qp.grads[a][d] * coeffs[2 * el.dofs[a] + c]).sum();
                        acc += qp.weight * (gh - gx[c][d]).powi(2);
                    }
                }
            }
        }
        acc.sqrt()
    }

    fn assemble_vector_form(
        &self,
        local: impl Fn(&ElementData, &mut [[f64; 12]; 12]),
    ) -> CsrMatrix {
        let n = 2 * self.n_nodes();
        let mut trip = Vec::with_capacity(self.elements.len() * 144);
        let mut ke = [[0.0; 12]; 12];
        for el in &self.elements {
            for row in ke.iter_mut() {
                row.fill(0.0);
            }
            local(el, &mut ke);
            for i in 0..12 {
                let gi = 2 * el.dofs[i / 2] + i % 2;
                for j in 0..12 {
                    if ke[i][j] != 0.0 {
                        trip.push((gi, 2 * el.dofs[j / 2] + j % 2, ke[i][j]));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(n, n, trip)
    }

    /// `∫ u · v`
    pub fn vector_mass(&self) -> CsrMatrix {
        self.assemble_vector_form(|el, ke| {
            for qp in &el.qps {
                for a in 0..6 {
                    for b in 0..6 {
                        let m = qp.weight * qp.values[a] * qp.values[b];
                        ke[2 * a][2 * b] += m;
                        ke[2 * a + 1][2 * b + 1] += m;
                    }
                }
            }
        })
    }

    /// `Σ_c ∫ ∇u_c · ∇v_c`
    pub fn vector_laplace(&self) -> CsrMatrix {
        self.assemble_vector_form(|el, ke| {
            for qp in &el.qps {
                for a in 0..6 {
                    for b in 0..6 {
                        let g = qp.grads[a];
                        let h = qp.grads[b];
                        let k = qp.weight * (g[0] * h[0] + g[1] * h[1]);
                        ke[2 * a][2 * b] += k;
                        ke[2 * a + 1][2 * b + 1] += k;
                    }
                }
            }
        })
    }

    /// `∫ ε(u) : ε(v)`
    pub fn sym_grad(&self) -> CsrMatrix {
        self.assemble_vector_form(|el, ke| {
            for qp in &el.qps {
                for a in 0..6 {
                    for b in 0..6 {
                        let g = qp.grads[a];
                        let h = qp.grads[b];
                        let dot = g[0] * h[0] + g[1] * h[1];
                        for c in 0..2 {
                            for d in 0..2 {
                                let delta = if c == d { dot } else { 0.0 };
                                ke[2 * a + c][2 * b + d] += qp.weight * 0.5 * (delta + g[d] * h[c]);
                            }
                        }
                    }
                }
            }
        })
    }

    /// `∫ 2μ ε(u) : ε(v) + λ div u div v`
    pub fn elasticity(&self, mu: f64, lambda: f64) -> CsrMatrix {
        self.assemble_vector_form(|el, ke| {
            for qp in &el.qps {
                for a in 0..6 {
                    for b in 0..6 {
                        let g = qp.grads[a];
                        let h = qp.grads[b];
                        let dot = g[0] * h[0] + g[1] * h[1];
                        for c in 0..2 {
                            for d in 0..2 {
                                let delta = if c == d { dot } else { 0.0 };
                                ke[2 * a + c][2 * b + d] += qp.weight
                                    * (mu * (delta + g[d] * h[c]) + lambda * g[c] * h[d]);
                            }
                        }
                    }
                }
            }
        })
    }

    /// Broken second-derivative Gram `Σ_T ∫_T D²u : D²v`, zero on affine fields.
    pub fn hessian_gram(&self) -> CsrMatrix {
        self.assemble_vector_form(|el, ke| {
            for a in 0..6 {
                for b in 0..6 {
                    let ha = el.hessians[a];
                    let hb = el.hessians[b];
                    let mut s = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            s += ha[i][j] * hb[i][j];
                        }
                    }
                    ke[2 * a][2 * b] += el.area * s;
                    ke[2 * a + 1][2 * b + 1] += el.area * s;
                }
            }
        })
    }

    /// Discrete divergence, `B[q, (b, d)] = -∫ ψ_q ∂_d φ_b` with P1 pressure
    /// functions `ψ_q` on the vertices.
    pub fn divergence(&self) -> CsrMatrix {
        let mut trip = Vec::with_capacity(self.elements.len() * 36);
        for el in &self.elements {
            let mut be = [[0.0; 12]; 3];
            for qp in &el.qps {
                for q in 0..3 {
                    for b in 0..6 {
                        for d in 0..2 {
                            be[q][2 * b + d] -= qp.weight * qp.bary[q] * qp.grads[b][d];
                        }
                    }
                }
            }
            for q in 0..3 {
                for j in 0..12 {
                    trip.push((el.vertices[q], 2 * el.dofs[j / 2] + j % 2, be[q][j]));
                }
            }
        }
        CsrMatrix::from_triplets(self.n_vertices, 2 * self.n_nodes(), trip)
    }

    /// P1 mass matrix on the vertices.
    pub fn pressure_mass(&self) -> CsrMatrix {
        let mut trip = Vec::with_capacity(self.elements.len() * 9);
        for el in &self.elements {
            for qp in &el.qps {
                for p in 0..3 {
                    for q in 0..3 {
                        trip.push((
                            el.vertices[p],
                            el.vertices[q],
                            qp.weight * qp.bary[p] * qp.bary[q],
                        ));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(self.n_vertices, self.n_vertices, trip)
    }
}

/// Compressed sparse row matrix with summed duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicates are summed in insertion order.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut data: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix { nrows, ncols, indptr, indices, data }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.data[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn transpose_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                out[c] += v * y[r];
            }
        }
        out
    }

    /// `xᵀ A x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    /// Linear combination `Σ s_k A_k` of equally shaped matrices.
    pub fn combine(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let trip = terms
            .iter()
            .filter(|(s, _)| *s != 0.0)
            .flat_map(|&(s, m)| {
                assert_eq!((m.nrows, m.ncols), (nrows, ncols));
                m.triplets().map(move |(r, c, v)| (r, c, s * v))
            })
            .collect();
        CsrMatrix::from_triplets(nrows, ncols, trip)
    }

    /// Keeps entries whose row and column both map to a new index.
    pub fn restrict(
        &self,
        row_map: &[Option<usize>],
        nrows: usize,
        col_map: &[Option<usize>],
        ncols: usize,
    ) -> CsrMatrix {
        let trip = self
            .triplets()
            .filter_map(|(r, c, v)| Some((row_map[r]?, col_map[c]?, v)))
            .collect();
        CsrMatrix::from_triplets(nrows, ncols, trip)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }
}

/// Sparse LU factorization of a square matrix.
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu").field("n", &self.n).finish()
    }
}

impl SparseLu {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(FsiError::Assembly(format!(
                "cannot factor a {}x{} matrix",
                a.nrows, a.ncols
            )));
        }
        let trip: Vec<Triplet<usize, usize, f64>> =
            a.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let csc = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &trip)
            .map_err(|e| FsiError::Assembly(format!("sparse matrix construction: {e:?}")))?;
        let lu = csc
            .sp_lu()
            .map_err(|e| FsiError::Assembly(format!("sparse LU failed: {e:?}")))?;
        let this = SparseLu { n: a.nrows, lu };
        // a singular pivot surfaces as a non-finite solve
        let probe = this.solve(&vec![1.0; this.n]);
        if probe.iter().any(|v| !v.is_finite()) {
            return Err(FsiError::Assembly("singular system matrix".into()));
        }
        Ok(this)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        use faer::linalg::solvers::Solve;
        assert_eq!(b.len(), self.n);
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += s * x`
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// Index map from a boolean "keep" mask: kept entries get consecutive ids.
pub fn compress_mask(keep: &[bool]) -> (Vec<Option<usize>>, Vec<usize>) {
    let mut map = vec![None; keep.len()];
    let mut inverse = Vec::new();
    for (i, &k) in keep.iter().enumerate() {
        if k {
            map[i] = Some(inverse.len());
            inverse.push(i);
        }
    }
    (map, inverse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_geometry, Preset, Side};

    fn fluid_space(r: u32) -> P2Space {
        let mesh = build_geometry(Preset::CurvedInterface, 0.1, r).unwrap();
        P2Space::new(&mesh.fluid, &mesh.interface_nodes(Side::Fluid)).unwrap()
    }

    #[test]
    fn quadrature_integrates_quartics() {
        // ∫_T L0^2 L1^2 = 2! 2! 2! / (2+2+2)! · |T| = 8/720 |T|, weights sum to one
        let s: f64 = TRI7.iter().map(|(l, w)| w * l[0].powi(2) * l[1].powi(2)).sum();
        assert!((s - 8.0 / 720.0).abs() < 1e-12);
    }

    #[test]
    fn p2_partition_of_unity_and_nodality() {
        let s: f64 = p2_values([0.2, 0.3, 0.5]).iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
        let v = p2_values([0.5, 0.5, 0.0]);
        assert!((v[3] - 1.0).abs() < 1e-14);
        assert!(v.iter().enumerate().all(|(i, &x)| i == 3 || x.abs() < 1e-14));
    }

    #[test]
    fn mass_integrates_area() {
        let space = fluid_space(1);
        let m = space.vector_mass();
        let ones: Vec<f64> = (0..space.n_nodes()).flat_map(|_| [1.0, 0.0]).collect();
        // area of the fluid layer is exactly 1 (shear preserves area column-wise)
        assert!((m.quad_form(&ones) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn stiffness_kernels() {
        let space = fluid_space(1);
        let translation = space.interpolate(&|_| [1.0, -2.0]);
        let rotation = space.interpolate(&|p| [-p[1], p[0]]);
        let affine = space.interpolate(&|p| [0.3 * p[0] - p[1], 2.0 * p[1] + 1.0]);
        let scale = |m: &CsrMatrix| m.triplets().map(|(_, _, v)| v.abs()).fold(0.0, f64::max);
        let k = space.elasticity(1.0, 2.0);
        assert!(norm2(&k.mul_vec(&translation)) <= 1e-10 * scale(&k));
        assert!(norm2(&k.mul_vec(&rotation)) <= 1e-10 * scale(&k));
        let r = space.hessian_gram();
        assert!(norm2(&r.mul_vec(&affine)) <= 1e-10 * scale(&r));
        let quad = space.interpolate(&|p| [p[0] * p[0], 0.0]);
        // ∫ |∂xx u|² = 4 · area
        assert!((r.quad_form(&quad) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn divergence_vanishes_on_solenoidal_quadratics() {
        let space = fluid_space(1);
        let b = space.divergence();
        let v = space.interpolate(&|p| [p[0] * p[0], -2.0 * p[0] * p[1]]);
        assert!(norm2(&b.mul_vec(&v)) < 1e-12);
        let w = space.interpolate(&|p| [p[0], 0.0]);
        // Σ_q B[q] · w = -∫ div w = -area
        let s: f64 = b.mul_vec(&w).iter().sum();
        assert!((s + 1.0).abs() < 1e-10);
    }

    #[test]
    fn interface_chain_layout() {
        let mesh = build_geometry(Preset::FlatChannel, 0.0, 0).unwrap();
        let space = P2Space::new(&mesh.solid, &mesh.interface_nodes(Side::Solid)).unwrap();
        assert_eq!(space.interface_chain.len(), 9);
        let xs: Vec<f64> = space.interface_chain.iter().map(|&i| space.nodes[i][0]).collect();
        for (k, x) in xs.iter().enumerate() {
            assert!((x - k as f64 / 8.0).abs() < 1e-14);
        }
        let first = space.interface_chain[0];
        let last = *space.interface_chain.last().unwrap();
        assert!(space.dirichlet[first] && space.dirichlet[last]);
        assert!(space.interface_interior().iter().all(|&i| !space.dirichlet[i]));
    }

    #[test]
    fn lu_solves_and_detects_singularity() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            vec![(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, 2.0), (0, 0, 1.0)],
        );
        let lu = SparseLu::new(&a).unwrap();
        let x = lu.solve(&[1.0, 2.0, 3.0]);
        let r = a.mul_vec(&x);
        assert!((r[0] - 1.0).abs() < 1e-14 && (r[1] - 2.0).abs() < 1e-14 && (r[2] - 3.0).abs() < 1e-14);
        let singular = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, 1.0)]);
        assert!(SparseLu::new(&singular).is_err());
    }
}
