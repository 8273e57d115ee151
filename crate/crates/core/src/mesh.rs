//! Matched fluid/solid triangulations of the two-layer channel.
//!
//! The fluid occupies the upper unit square, the solid the lower one, and the
//! two share the interface `y = 0` (flat preset) or `y = A sin(2πx)` (curved
//! preset). Both meshes are generated from the same structured grid, so the
//! interface vertices coincide exactly and no mortar projection is needed.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{FsiError, Result};

/// Cells per side of the coarsest grid.
pub const BASE_RESOLUTION: usize = 4;

/// Largest refinement level accepted by [`build_geometry`].
pub const MAX_REFINEMENT: u32 = 8;

/// Smallest interior angle tolerated anywhere in the mesh, in degrees.
pub const MIN_ANGLE_DEG: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    FlatChannel,
    CurvedInterface,
}

impl FromStr for Preset {
    type Err = FsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat-channel" => Ok(Preset::FlatChannel),
            "curved-interface" => Ok(Preset::CurvedInterface),
            other => Err(FsiError::Config(format!(
                "unknown geometry preset '{other}' (expected flat-channel | curved-interface)"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::FlatChannel => write!(f, "flat-channel"),
            Preset::CurvedInterface => write!(f, "curved-interface"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Interface,
    FluidDirichlet,
    SolidDirichlet,
}

impl BoundaryTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryTag::Interface => "INTERFACE",
            BoundaryTag::FluidDirichlet => "FLUID_DIRICHLET",
            BoundaryTag::SolidDirichlet => "SOLID_DIRICHLET",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Fluid,
    Solid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFacet {
    pub a: usize,
    pub b: usize,
    pub tag: BoundaryTag,
}

/// A conforming linear triangulation of one subdomain.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub elements: Vec<[usize; 3]>,
    pub boundary: Vec<BoundaryFacet>,
}

impl TriMesh {
    pub fn signed_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.elements[e];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Largest edge length over all elements.
    pub fn max_diameter(&self) -> f64 {
        self.elements
            .iter()
            .flat_map(|el| {
                (0..3).map(move |k| (el[k], el[(k + 1) % 3]))
            })
            .map(|(a, b)| dist(self.nodes[a], self.nodes[b]))
            .fold(0.0, f64::max)
    }

    /// Smallest interior angle in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        let mut min = 180.0_f64;
        for el in &self.elements {
            for k in 0..3 {
                let p = self.nodes[el[k]];
                let q = self.nodes[el[(k + 1) % 3]];
                let r = self.nodes[el[(k + 2) % 3]];
                let u = [q[0] - p[0], q[1] - p[1]];
                let v = [r[0] - p[0], r[1] - p[1]];
                let cos = (u[0] * v[0] + u[1] * v[1])
                    / ((u[0] * u[0] + u[1] * u[1]).sqrt() * (v[0] * v[0] + v[1] * v[1]).sqrt());
                min = min.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        min
    }
}

/// Fluid and solid meshes sharing the interface Σ.
#[derive(Debug, Clone)]
pub struct CoupledMesh {
    pub preset: Preset,
    pub amplitude: f64,
    pub refinement: u32,
    pub fluid: TriMesh,
    pub solid: TriMesh,
    /// (fluid node, solid node) for each interface vertex, in ascending arclength.
    pub interface_pairs: Vec<(usize, usize)>,
    /// Unit normal of each interface facet pointing out of Ω_f (into Ω_s),
    /// facet `k` joining pairs `k` and `k + 1`.
    pub interface_normals: Vec<[f64; 2]>,
    pub h: f64,
}

impl CoupledMesh {
    pub fn side(&self, side: Side) -> &TriMesh {
        match side {
            Side::Fluid => &self.fluid,
            Side::Solid => &self.solid,
        }
    }

    /// Interface vertex ids on the given side, canonical order.
    pub fn interface_nodes(&self, side: Side) -> Vec<usize> {
        self.interface_pairs
            .iter()
            .map(|&(f, s)| match side {
                Side::Fluid => f,
                Side::Solid => s,
            })
            .collect()
    }

    /// Cumulative chord length of the interface vertices, starting at 0.
    pub fn interface_arclength(&self) -> Vec<f64> {
        let pts: Vec<[f64; 2]> = self
            .interface_pairs
            .iter()
            .map(|&(f, _)| self.fluid.nodes[f])
            .collect();
        let mut s = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        s.push(0.0);
        for w in pts.windows(2) {
            acc += dist(w[0], w[1]);
            s.push(acc);
        }
        s
    }

    pub fn interface_points(&self) -> Vec<[f64; 2]> {
        self.interface_pairs
            .iter()
            .map(|&(f, _)| self.fluid.nodes[f])
            .collect()
    }

    /// Writes nodes/elements/boundary CSVs for both subdomains into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        for (name, mesh) in [("fluid", &self.fluid), ("solid", &self.solid)] {
            let mut w = BufWriter::new(File::create(dir.join(format!("mesh_{name}_nodes.csv")))?);
            writeln!(w, "id,x,y")?;
            for (i, p) in mesh.nodes.iter().enumerate() {
                writeln!(w, "{i},{},{}", p[0], p[1])?;
            }
            w.flush()?;

            let mut w =
                BufWriter::new(File::create(dir.join(format!("mesh_{name}_elements.csv")))?);
            writeln!(w, "id,n0,n1,n2")?;
            for (i, el) in mesh.elements.iter().enumerate() {
                writeln!(w, "{i},{},{},{}", el[0], el[1], el[2])?;
            }
            w.flush()?;

            let mut w =
                BufWriter::new(File::create(dir.join(format!("mesh_{name}_boundary.csv")))?);
            writeln!(w, "facet,a,b,tag")?;
            for (i, f) in mesh.boundary.iter().enumerate() {
                writeln!(w, "{i},{},{},{}", f.a, f.b, f.tag.as_str())?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

/// Uniform time grid on `[0, t_final]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(FsiError::Config(format!("time.t_final must be positive, got {t_final}")));
        }
        if n_steps == 0 {
            return Err(FsiError::Config("time.n_steps must be at least 1".into()));
        }
        Ok(TimeGrid { t_final, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.t_final
        } else {
            n as f64 * self.dt()
        }
    }

    /// All `n_steps + 1` grid times including `t_0 = 0`.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|n| self.time(n)).collect()
    }
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn interface_height(preset: Preset, amplitude: f64, x: f64) -> f64 {
    match preset {
        Preset::FlatChannel => 0.0,
        Preset::CurvedInterface => amplitude * (2.0 * std::f64::consts::PI * x).sin(),
    }
}

/// Structured `n x n` grid on a unit square whose interface row is sheared
/// vertically onto the interface curve; the shear decays linearly to zero at
/// the opposite wall.
fn build_layer(
    n: usize,
    preset: Preset,
    amplitude: f64,
    side: Side,
) -> (TriMesh, Vec<usize>) {
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = i as f64 / n as f64;
            let (y, weight) = match side {
                // y runs 0 -> 1, interface at j = 0
                Side::Fluid => {
                    let y = j as f64 / n as f64;
                    (y, 1.0 - y)
                }
                // y runs -1 -> 0, interface at j = n
                Side::Solid => {
                    let y = -1.0 + j as f64 / n as f64;
                    (y, 1.0 + y)
                }
            };
            nodes.push([x, y + weight * interface_height(preset, amplitude, x)]);
        }
    }

    let mut elements = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let p00 = idx(i, j);
            let p10 = idx(i + 1, j);
            let p01 = idx(i, j + 1);
            let p11 = idx(i + 1, j + 1);
            let d_main = dist(nodes[p00], nodes[p11]);
            let d_anti = dist(nodes[p10], nodes[p01]);
            // ties (the flat case) keep the p00-p11 diagonal
            if d_anti < d_main * (1.0 - 1e-10) {
                elements.push([p00, p10, p01]);
                elements.push([p10, p11, p01]);
            } else {
                elements.push([p00, p10, p11]);
                elements.push([p00, p11, p01]);
            }
        }
    }

    let (interface_row, outer_row, wall_tag) = match side {
        Side::Fluid => (0, n, BoundaryTag::FluidDirichlet),
        Side::Solid => (n, 0, BoundaryTag::SolidDirichlet),
    };
    let mut boundary = Vec::with_capacity(4 * n);
    for i in 0..n {
        boundary.push(BoundaryFacet {
            a: idx(i, interface_row),
            b: idx(i + 1, interface_row),
            tag: BoundaryTag::Interface,
        });
    }
    for i in 0..n {
        boundary.push(BoundaryFacet {
            a: idx(i, outer_row),
            b: idx(i + 1, outer_row),
            tag: wall_tag,
        });
    }
    for j in 0..n {
        boundary.push(BoundaryFacet { a: idx(0, j), b: idx(0, j + 1), tag: wall_tag });
        boundary.push(BoundaryFacet { a: idx(n, j), b: idx(n, j + 1), tag: wall_tag });
    }

    let interface: Vec<usize> = (0..=n).map(|i| idx(i, interface_row)).collect();
    (TriMesh { nodes, elements, boundary }, interface)
}

/// Builds the matched fluid/solid meshes for a preset geometry.
///
/// Refinement `r` uses `4 * 2^r` cells per side. `amplitude` is ignored for
/// the flat preset.
pub fn build_geometry(preset: Preset, amplitude: f64, refinement: u32) -> Result<CoupledMesh> {
    if refinement > MAX_REFINEMENT {
        return Err(FsiError::Config(format!(
            "geometry.refinement = {refinement} exceeds the maximum {MAX_REFINEMENT}"
        )));
    }
    let amplitude = match preset {
        Preset::FlatChannel => 0.0,
        Preset::CurvedInterface => amplitude,
    };
    // interface spans x in [0, 1]
    if !amplitude.is_finite() || amplitude.abs() >= 0.25 {
        return Err(FsiError::Geometry(format!(
            "interface amplitude {amplitude} must be below 0.25 x interface length"
        )));
    }
    let n = BASE_RESOLUTION << refinement;
    let (fluid, fluid_iface) = build_layer(n, preset, amplitude, Side::Fluid);
    let (solid, solid_iface) = build_layer(n, preset, amplitude, Side::Solid);

    for (name, mesh) in [("fluid", &fluid), ("solid", &solid)] {
        for e in 0..mesh.elements.len() {
            if mesh.signed_area(e) <= 0.0 {
                return Err(FsiError::Geometry(format!("{name} element {e} is inverted")));
            }
        }
        let angle = mesh.min_angle_deg();
        if angle < MIN_ANGLE_DEG {
            return Err(FsiError::Geometry(format!(
                "{name} mesh minimum angle {angle:.2} deg is below {MIN_ANGLE_DEG} deg"
            )));
        }
    }

    let interface_pairs: Vec<(usize, usize)> =
        fluid_iface.iter().copied().zip(solid_iface.iter().copied()).collect();
    let interface_normals = interface_pairs
        .windows(2)
        .map(|w| {
            let a = fluid.nodes[w[0].0];
            let b = fluid.nodes[w[1].0];
            let len = dist(a, b);
            let t = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
            // fluid lies to the left of the left-to-right tangent
            [t[1], -t[0]]
        })
        .collect();

    let h = fluid.max_diameter().max(solid.max_diameter());
    Ok(CoupledMesh {
        preset,
        amplitude,
        refinement,
        fluid,
        solid,
        interface_pairs,
        interface_normals,
        h,
    })
}

/// Restricts a nodal field on one side's vertices to the interface vertices,
/// in canonical order. The component count is inferred from the length.
pub fn interface_restriction(mesh: &CoupledMesh, side: Side, field: &[f64]) -> Result<Vec<f64>> {
    let n_nodes = mesh.side(side).nodes.len();
    if field.is_empty() || field.len() % n_nodes != 0 {
        return Err(FsiError::Shape(format!(
            "field of length {} is not a multiple of the {n_nodes} {side:?} nodes",
            field.len()
        )));
    }
    let comps = field.len() / n_nodes;
    let mut out = Vec::with_capacity(mesh.interface_pairs.len() * comps);
    for node in mesh.interface_nodes(side) {
        out.extend_from_slice(&field[node * comps..(node + 1) * comps]);
    }
    Ok(out)
}

/// Inverse of [`interface_restriction`]: extends interface values by zero.
pub fn interface_extension(
    mesh: &CoupledMesh,
    side: Side,
    values: &[f64],
    comps: usize,
) -> Result<Vec<f64>> {
    let nodes = mesh.interface_nodes(side);
    if comps == 0 || values.len() != nodes.len() * comps {
        return Err(FsiError::Shape(format!(
            "interface vector of length {} does not match {} nodes x {comps} components",
            values.len(),
            nodes.len()
        )));
    }
    let mut out = vec![0.0; mesh.side(side).nodes.len() * comps];
    for (k, node) in nodes.into_iter().enumerate() {
        out[node * comps..(node + 1) * comps].copy_from_slice(&values[k * comps..(k + 1) * comps]);
    }
    Ok(out)
}
