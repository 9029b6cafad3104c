//! Pancake-coil geometry in the meridian (r, z) half-plane and its structured
//! quadrilateral mesh.
//!
//! The model covers z ≥ 0 only; the plane z = 0 is a symmetry plane on which
//! the tangential (radial) magnetic field vanishes. Every quantity reported
//! elsewhere in the crate (currents, circulations, losses) refers to the whole
//! coil, i.e. the half model is mirrored through z = 0.
//!
//! The mesh is a tensor product of r-lines and z-lines. The coil block is a
//! uniformly divided `n_alpha × n_beta` sub-grid; the surrounding air is
//! geometrically graded away from it out to a rectangular box.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::scalar::{gauss_unit, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct CoilGeometry<T> {
    pub inner_radius: T,
    pub n_turns: usize,
    /// Radial extent of one turn [m].
    pub cc_thickness: T,
    /// Axial extent of the tape [m].
    pub cc_width: T,
    /// Air box size relative to the outer coil radius.
    pub air_radius_factor: T,
    /// One bulk annulus (foil conductor model) instead of `n_turns` annuli.
    pub homogenized: bool,
}

impl<T: Real> CoilGeometry<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("inner_radius", self.inner_radius),
            ("cc_thickness", self.cc_thickness),
            ("cc_width", self.cc_width),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Geometry(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_turns == 0 {
            return Err(Error::Geometry("n_turns must be at least 1".into()));
        }
        if !(self.air_radius_factor > T::one()) || !self.air_radius_factor.is_finite() {
            return Err(Error::Geometry(format!(
                "air_radius_factor must exceed 1, got {}",
                self.air_radius_factor
            )));
        }
        Ok(())
    }

    /// Stack thickness L_α.
    pub fn stack_thickness(&self) -> T {
        T::from_usize_lossy(self.n_turns) * self.cc_thickness
    }

    pub fn outer_radius(&self) -> T {
        self.inner_radius + self.stack_thickness()
    }

    pub fn half_width(&self) -> T {
        self.cc_width * T::lit(0.5)
    }

    /// Volume of the whole (mirrored) coil annulus.
    pub fn coil_volume(&self) -> T {
        let r_mid = T::lit(0.5) * (self.inner_radius + self.outer_radius());
        T::TAU() * r_mid * self.stack_thickness() * self.cc_width
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect<T> {
    pub r_min: T,
    pub r_max: T,
    pub z_min: T,
    pub z_max: T,
}

impl<T: Real> Rect<T> {
    pub fn area(&self) -> T {
        (self.r_max - self.r_min) * (self.z_max - self.z_min)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometryDescription<T> {
    pub params: CoilGeometry<T>,
    /// Turn rectangles (detailed) or the single bulk rectangle, ordered by radius.
    pub conductors: Vec<Rect<T>>,
    pub coil: Rect<T>,
    pub air_box: Rect<T>,
}

pub fn build_geometry<T: Real>(params: &CoilGeometry<T>) -> Result<GeometryDescription<T>> {
    params.validate()?;
    let half = params.half_width();
    let r_out = params.outer_radius();
    let coil = Rect { r_min: params.inner_radius, r_max: r_out, z_min: T::zero(), z_max: half };
    let conductors = if params.homogenized {
        vec![coil]
    } else {
        (0..params.n_turns)
            .map(|i| {
                let r0 = params.inner_radius + T::from_usize_lossy(i) * params.cc_thickness;
                let r1 = if i + 1 == params.n_turns {
                    r_out
                } else {
                    params.inner_radius + T::from_usize_lossy(i + 1) * params.cc_thickness
                };
                Rect { r_min: r0, r_max: r1, z_min: T::zero(), z_max: half }
            })
            .collect()
    };
    let extent = params.air_radius_factor * r_out;
    let air_box = Rect { r_min: T::zero(), r_max: extent, z_min: T::zero(), z_max: extent };
    Ok(GeometryDescription { params: params.clone(), conductors, coil, air_box })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    Air,
    /// Homogenized coil bulk.
    Coil,
    /// Turn of the detailed geometry (0-based, innermost first).
    Turn(usize),
}

impl Region {
    pub fn is_conducting(self) -> bool {
        !matches!(self, Region::Air)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Air-box boundary r = R or z = Z.
    Outer,
    /// Symmetry axis r = 0.
    AxisSide,
    /// Mid-plane z = 0.
    Symmetry,
}

/// Local coil frame: α across the tape stack, β along the tape width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalFrame<T> {
    pub alpha_dir: [T; 2],
    pub beta_dir: [T; 2],
    /// Normalized position of the quad centroid across L_α, in [0, 1].
    pub alpha_coord: T,
}

/// Local edge slots of a quad.
pub const BOTTOM: usize = 0;
pub const RIGHT: usize = 1;
pub const TOP: usize = 2;
pub const LEFT: usize = 3;

#[derive(Clone, Debug)]
pub struct Mesh<T> {
    pub geometry: GeometryDescription<T>,
    pub r_lines: Vec<T>,
    pub z_lines: Vec<T>,
    pub nodes: Vec<[T; 2]>,
    /// Counter-clockwise node ids: (i,j), (i+1,j), (i+1,j+1), (i,j+1).
    pub quads: Vec<[usize; 4]>,
    /// Edge ids in slot order bottom, right, top, left.
    pub quad_edges: Vec<[usize; 4]>,
    /// Oriented from the lower to the higher node id (+r or +z).
    pub edges: Vec<[usize; 2]>,
    pub regions: Vec<Region>,
    pub edge_boundary: Vec<Option<Boundary>>,
    /// Grid cell columns and rows occupied by the coil block.
    pub coil_cols: Range<usize>,
    pub coil_rows: Range<usize>,
    /// Radial cell columns per turn (detailed geometry) or `n_alpha` (bulk).
    pub cols_per_conductor: usize,
}

impl<T: Real> Mesh<T> {
    pub fn n_cols(&self) -> usize {
        self.r_lines.len() - 1
    }

    pub fn n_rows(&self) -> usize {
        self.z_lines.len() - 1
    }

    pub fn n_alpha(&self) -> usize {
        self.coil_cols.len()
    }

    pub fn n_beta(&self) -> usize {
        self.coil_rows.len()
    }

    pub fn node_id(&self, i: usize, j: usize) -> usize {
        i + j * (self.n_cols() + 1)
    }

    pub fn node_ij(&self, n: usize) -> (usize, usize) {
        (n % (self.n_cols() + 1), n / (self.n_cols() + 1))
    }

    pub fn quad_id(&self, i: usize, j: usize) -> usize {
        i + j * self.n_cols()
    }

    pub fn quad_ij(&self, q: usize) -> (usize, usize) {
        (q % self.n_cols(), q / self.n_cols())
    }

    /// Edge from node (i,j) to (i+1,j).
    pub fn radial_edge(&self, i: usize, j: usize) -> usize {
        i + j * self.n_cols()
    }

    /// Edge from node (i,j) to (i,j+1).
    pub fn axial_edge(&self, i: usize, j: usize) -> usize {
        self.n_cols() * (self.n_rows() + 1) + i + j * (self.n_cols() + 1)
    }

    pub fn is_radial(&self, e: usize) -> bool {
        e < self.n_cols() * (self.n_rows() + 1)
    }

    /// `(r_min, r_max, z_min, z_max)` of a quad.
    pub fn quad_bounds(&self, q: usize) -> (T, T, T, T) {
        let (i, j) = self.quad_ij(q);
        (self.r_lines[i], self.r_lines[i + 1], self.z_lines[j], self.z_lines[j + 1])
    }

    pub fn quad_area(&self, q: usize) -> T {
        let (r0, r1, z0, z1) = self.quad_bounds(q);
        (r1 - r0) * (z1 - z0)
    }

    pub fn quad_centroid(&self, q: usize) -> [T; 2] {
        let (r0, r1, z0, z1) = self.quad_bounds(q);
        let h = T::lit(0.5);
        [h * (r0 + r1), h * (z0 + z1)]
    }

    /// Quads adjacent to an edge (one or two).
    pub fn edge_quads(&self, e: usize) -> Vec<usize> {
        let (nc, nr) = (self.n_cols(), self.n_rows());
        let mut out = Vec::with_capacity(2);
        if self.is_radial(e) {
            let (i, j) = (e % nc, e / nc);
            if j > 0 {
                out.push(self.quad_id(i, j - 1));
            }
            if j < nr {
                out.push(self.quad_id(i, j));
            }
        } else {
            let k = e - nc * (nr + 1);
            let (i, j) = (k % (nc + 1), k / (nc + 1));
            if i > 0 {
                out.push(self.quad_id(i - 1, j));
            }
            if i < nc {
                out.push(self.quad_id(i, j));
            }
        }
        out
    }

    pub fn coil_quads(&self) -> impl Iterator<Item = usize> + '_ {
        self.coil_rows
            .clone()
            .flat_map(move |j| self.coil_cols.clone().map(move |i| self.quad_id(i, j)))
    }

    /// Structured (α, β) index of a coil quad.
    pub fn structured_index(&self, q: usize) -> Option<(usize, usize)> {
        let (i, j) = self.quad_ij(q);
        (self.coil_cols.contains(&i) && self.coil_rows.contains(&j))
            .then(|| (i - self.coil_cols.start, j - self.coil_rows.start))
    }

    /// Coil quad at structured index (α, β).
    pub fn coil_quad(&self, alpha: usize, beta: usize) -> usize {
        self.quad_id(self.coil_cols.start + alpha, self.coil_rows.start + beta)
    }

    /// Nodes on the boundary where the tangential field is prescribed to zero.
    pub fn is_essential_node(&self, n: usize) -> bool {
        let (i, j) = self.node_ij(n);
        j == 0 || i == self.n_cols() || j == self.n_rows()
    }

    pub fn is_essential_edge(&self, e: usize) -> bool {
        matches!(self.edge_boundary[e], Some(Boundary::Symmetry) | Some(Boundary::Outer))
    }

    pub fn local_frame(&self, q: usize) -> Result<LocalFrame<T>> {
        local_frame(self, q)
    }

    /// Checks the structural invariants: positive Jacobians at the 2×2 Gauss
    /// points, conformity, edge orientation and region partition.
    pub fn check_invariants(&self) -> Result<()> {
        let gauss = gauss_unit::<T>(2);
        for (q, nodes) in self.quads.iter().enumerate() {
            let p = nodes.map(|n| self.nodes[n]);
            for &(xi, _) in &gauss {
                for &(eta, _) in &gauss {
                    // bilinear map derivatives
                    let (one_xi, one_eta) = (T::one() - xi, T::one() - eta);
                    let dxi = [
                        one_eta * (p[1][0] - p[0][0]) + eta * (p[2][0] - p[3][0]),
                        one_eta * (p[1][1] - p[0][1]) + eta * (p[2][1] - p[3][1]),
                    ];
                    let deta = [
                        one_xi * (p[3][0] - p[0][0]) + xi * (p[2][0] - p[1][0]),
                        one_xi * (p[3][1] - p[0][1]) + xi * (p[2][1] - p[1][1]),
                    ];
                    let det = dxi[0] * deta[1] - dxi[1] * deta[0];
                    if !(det > T::zero()) {
                        return Err(Error::Mesh(format!("quad {q} has non-positive Jacobian")));
                    }
                }
            }
        }
        let mut uses = vec![0usize; self.edges.len()];
        for qe in &self.quad_edges {
            for &e in qe {
                uses[e] += 1;
            }
        }
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            if a >= b {
                return Err(Error::Mesh(format!("edge {e} not oriented low to high")));
            }
            let on_boundary = self.edge_boundary[e].is_some();
            let expected = if on_boundary { 1 } else { 2 };
            if uses[e] != expected {
                return Err(Error::Mesh(format!("edge {e} shared by {} quads", uses[e])));
            }
        }
        for q in 0..self.quads.len() {
            let in_block = self.structured_index(q).is_some();
            if in_block != self.regions[q].is_conducting() {
                return Err(Error::Mesh(format!("region tag of quad {q} inconsistent")));
            }
        }
        Ok(())
    }
}

/// Cell sizes covering `distance`, starting at `first` next to the coil and
/// growing by `ratio` (≥ 1); rescaled to fit exactly.
fn graded_sizes<T: Real>(first: T, distance: T, ratio: T) -> Vec<T> {
    if !(distance > T::zero()) {
        return Vec::new();
    }
    let n = if ratio > T::one() + T::lit(1e-12) {
        let arg = T::one() + distance * (ratio - T::one()) / first;
        (arg.ln() / ratio.ln()).ceil()
    } else {
        (distance / first - T::lit(1e-9)).ceil()
    };
    let n = n.to_usize().unwrap_or(1).max(1);
    let mut sizes: Vec<T> = (0..n).map(|k| first * ratio.powi(k as i32)).collect();
    let total: T = sizes.iter().copied().sum();
    let scale = distance / total;
    for s in &mut sizes {
        *s *= scale;
    }
    sizes
}

pub fn mesh_structured<T: Real>(
    geom: &GeometryDescription<T>,
    n_alpha: usize,
    n_beta: usize,
    air_grading: T,
) -> Result<Mesh<T>> {
    let params = &geom.params;
    if n_alpha == 0 || n_beta == 0 {
        return Err(Error::Mesh("n_alpha and n_beta must be at least 1".into()));
    }
    if !params.homogenized && n_alpha % params.n_turns != 0 {
        return Err(Error::Mesh(format!(
            "n_alpha = {n_alpha} is not a multiple of the {} turns",
            params.n_turns
        )));
    }
    if !(air_grading >= T::one()) {
        return Err(Error::Mesh(format!("air grading must be >= 1, got {air_grading}")));
    }
    let coil = geom.coil;
    let h_alpha = (coil.r_max - coil.r_min) / T::from_usize_lossy(n_alpha);
    let h_beta = (coil.z_max - coil.z_min) / T::from_usize_lossy(n_beta);

    let mut r_lines = Vec::new();
    let left = graded_sizes(h_alpha, coil.r_min - geom.air_box.r_min, air_grading);
    let mut r = coil.r_min;
    let mut stack = vec![r];
    for s in &left {
        r -= *s;
        stack.push(r);
    }
    if let Some(last) = stack.last_mut() {
        *last = geom.air_box.r_min;
    }
    stack.reverse();
    r_lines.extend(stack);
    let coil_col_start = r_lines.len() - 1;
    for i in 1..=n_alpha {
        let x = if i == n_alpha {
            coil.r_max
        } else {
            coil.r_min + T::from_usize_lossy(i) * h_alpha
        };
        r_lines.push(x);
    }
    let right = graded_sizes(h_alpha, geom.air_box.r_max - coil.r_max, air_grading);
    let mut r = coil.r_max;
    for (k, s) in right.iter().enumerate() {
        r = if k + 1 == right.len() { geom.air_box.r_max } else { r + *s };
        r_lines.push(r);
    }

    let mut z_lines = vec![coil.z_min];
    for j in 1..=n_beta {
        let z = if j == n_beta {
            coil.z_max
        } else {
            coil.z_min + T::from_usize_lossy(j) * h_beta
        };
        z_lines.push(z);
    }
    let top = graded_sizes(h_beta, geom.air_box.z_max - coil.z_max, air_grading);
    let mut z = coil.z_max;
    for (k, s) in top.iter().enumerate() {
        z = if k + 1 == top.len() { geom.air_box.z_max } else { z + *s };
        z_lines.push(z);
    }

    for w in r_lines.windows(2).chain(z_lines.windows(2)) {
        if !(w[1] > w[0]) {
            return Err(Error::Mesh("degenerate (zero-area) cell in grid".into()));
        }
    }

    let coil_cols = coil_col_start..coil_col_start + n_alpha;
    let coil_rows = 0..n_beta;
    let cols_per_conductor = n_alpha / geom.conductors.len();
    let (nc, nr) = (r_lines.len() - 1, z_lines.len() - 1);

    let mut nodes = Vec::with_capacity((nc + 1) * (nr + 1));
    for &z in &z_lines {
        for &r in &r_lines {
            nodes.push([r, z]);
        }
    }
    let node = |i: usize, j: usize| i + j * (nc + 1);
    let mut edges = Vec::with_capacity(nc * (nr + 1) + (nc + 1) * nr);
    let mut edge_boundary = Vec::with_capacity(edges.capacity());
    for j in 0..=nr {
        for i in 0..nc {
            edges.push([node(i, j), node(i + 1, j)]);
            edge_boundary.push(if j == 0 {
                Some(Boundary::Symmetry)
            } else if j == nr {
                Some(Boundary::Outer)
            } else {
                None
            });
        }
    }
    for j in 0..nr {
        for i in 0..=nc {
            edges.push([node(i, j), node(i, j + 1)]);
            edge_boundary.push(if i == 0 {
                Some(Boundary::AxisSide)
            } else if i == nc {
                Some(Boundary::Outer)
            } else {
                None
            });
        }
    }
    let radial = |i: usize, j: usize| i + j * nc;
    let axial = |i: usize, j: usize| nc * (nr + 1) + i + j * (nc + 1);
    let mut quads = Vec::with_capacity(nc * nr);
    let mut quad_edges = Vec::with_capacity(nc * nr);
    let mut regions = Vec::with_capacity(nc * nr);
    for j in 0..nr {
        for i in 0..nc {
            quads.push([node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)]);
            quad_edges.push([radial(i, j), axial(i + 1, j), radial(i, j + 1), axial(i, j)]);
            let region = if coil_cols.contains(&i) && coil_rows.contains(&j) {
                if params.homogenized {
                    Region::Coil
                } else {
                    Region::Turn((i - coil_cols.start) / cols_per_conductor)
                }
            } else {
                Region::Air
            };
            regions.push(region);
        }
    }

    let mesh = Mesh {
        geometry: geom.clone(),
        r_lines,
        z_lines,
        nodes,
        quads,
        quad_edges,
        edges,
        regions,
        edge_boundary,
        coil_cols,
        coil_rows,
        cols_per_conductor,
    };
    mesh.check_invariants()?;
    Ok(mesh)
}

pub fn local_frame<T: Real>(mesh: &Mesh<T>, quad_id: usize) -> Result<LocalFrame<T>> {
    if quad_id >= mesh.quads.len() {
        return Err(Error::Argument(format!("quad {quad_id} out of range")));
    }
    if !mesh.regions[quad_id].is_conducting() {
        return Err(Error::Argument(format!("quad {quad_id} lies in the air region")));
    }
    let params = &mesh.geometry.params;
    let [rc, _] = mesh.quad_centroid(quad_id);
    Ok(LocalFrame {
        alpha_dir: [T::one(), T::zero()],
        beta_dir: [T::zero(), T::one()],
        alpha_coord: (rc - params.inner_radius) / params.stack_thickness(),
    })
}
