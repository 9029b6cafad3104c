//! Discrete h-conforming spaces: Whitney edge functions, nodal gradients,
//! cohomology (cut) functions and the Legendre voltage basis.
//!
//! Every magnetic DoF is expanded onto the lowest-order edge functions of the
//! mesh, so assembly only ever works with edge element matrices.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::formulation::FormulationVariant;
use crate::geometry::{Mesh, Region};
use crate::scalar::{gauss_unit, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofKind {
    /// Edge function of a mesh edge.
    Edge(usize),
    /// Negative gradient of the hat function of a mesh node.
    Node(usize),
    /// Cohomology function of hole `k`.
    Cut(usize),
    /// Edge step along the symmetry plane at interior coil grid column `i`.
    CutLike(usize),
    /// Voltage unknown: per-turn voltage or Legendre coefficient.
    Voltage(usize),
}

/// A hole of the non-conducting domain: the coil rows under a range of grid
/// columns (one turn, or the whole coil).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hole {
    pub cols: Range<usize>,
}

#[derive(Clone, Debug)]
pub struct CutBasis<T> {
    pub holes: Vec<Hole>,
    /// Edge expansion of each cut function.
    pub functions: Vec<Vec<(usize, T)>>,
}

/// DoFs touching one quad, with their coefficients on the quad's four edges
/// in slot order bottom, right, top, left.
#[derive(Clone, Debug, Default)]
pub struct QuadDofs<T> {
    pub dofs: Vec<usize>,
    pub maps: Vec<[T; 4]>,
}

#[derive(Clone, Debug)]
pub struct DofLayout<T> {
    pub variant: FormulationVariant,
    pub kinds: Vec<DofKind>,
    pub n_edge_dofs: usize,
    pub n_nodal_dofs: usize,
    /// Cut and cut-like DoFs.
    pub n_cut_dofs: usize,
    pub n_voltage_dofs: usize,
    pub cuts: CutBasis<T>,
    /// Global DoF of the cut function of each hole.
    pub cut_dofs: Vec<usize>,
    /// DoFs with prescribed values (strongly imposed turn currents).
    pub fixed: Vec<usize>,
    pub edge_map: Vec<Vec<(usize, T)>>,
    pub quad_dofs: Vec<QuadDofs<T>>,
    /// Column lines of the interior cut-like functions (t-ω only).
    pub cut_like_lines: Vec<usize>,
}

impl<T: Real> DofLayout<T> {
    pub fn n_dofs(&self) -> usize {
        self.kinds.len()
    }

    /// Magnetic DoFs (all but the voltages).
    pub fn n_h_dofs(&self) -> usize {
        self.n_edge_dofs + self.n_nodal_dofs + self.n_cut_dofs
    }

    pub fn h_range(&self) -> Range<usize> {
        0..self.n_h_dofs()
    }

    pub fn voltage_range(&self) -> Range<usize> {
        self.n_h_dofs()..self.n_dofs()
    }

    /// Value of every edge function coefficient for a DoF vector.
    pub fn edge_values(&self, u: &[T]) -> Vec<T> {
        self.edge_map
            .iter()
            .map(|terms| terms.iter().map(|&(d, c)| c * u[d]).sum())
            .collect()
    }

    /// Edge coefficients on the four edges of a quad.
    pub fn quad_edge_values(&self, u: &[T], q: usize) -> [T; 4] {
        let qd = &self.quad_dofs[q];
        let mut out = [T::zero(); 4];
        for (&d, m) in qd.dofs.iter().zip(&qd.maps) {
            for s in 0..4 {
                out[s] += m[s] * u[d];
            }
        }
        out
    }

    /// Edge expansion of a single DoF.
    pub fn dof_expansion(&self, dof: usize) -> Vec<(usize, T)> {
        let mut out = Vec::new();
        for (e, terms) in self.edge_map.iter().enumerate() {
            for &(d, c) in terms {
                if d == dof {
                    out.push((e, c));
                }
            }
        }
        out
    }
}

/// Holes used by a formulation: one per turn for the reference model, a
/// single coil hole for the φ-based FCM variants and t-ω, none for h-full.
pub fn holes_for<T: Real>(mesh: &Mesh<T>, variant: FormulationVariant) -> Vec<Hole> {
    match variant {
        FormulationVariant::RefHPhi => {
            let c = mesh.cols_per_conductor;
            let n = mesh.n_alpha() / c;
            (0..n)
                .map(|k| {
                    let s = mesh.coil_cols.start + k * c;
                    Hole { cols: s..s + c }
                })
                .collect()
        }
        FormulationVariant::FcmHFull => Vec::new(),
        FormulationVariant::FcmHPhi | FormulationVariant::FcmTOmega => {
            vec![Hole { cols: mesh.coil_cols.clone() }]
        }
    }
}

fn validate_holes<T: Real>(mesh: &Mesh<T>, holes: &[Hole]) -> Result<()> {
    let mut prev_end = mesh.coil_cols.start;
    for (k, h) in holes.iter().enumerate() {
        if h.cols.is_empty() || h.cols.start < mesh.coil_cols.start || h.cols.end > mesh.coil_cols.end {
            return Err(Error::Layout(format!("hole {k} lies outside the coil block")));
        }
        if h.cols.start < prev_end {
            return Err(Error::Layout(format!("cut of hole {k} intersects another hole")));
        }
        prev_end = h.cols.end;
    }
    Ok(())
}

/// Edges where the field is curl-free: edges of air quads and the axial edges
/// separating two adjacent holes (the turn insulation).
pub fn non_conducting_edges<T: Real>(mesh: &Mesh<T>, holes: &[Hole]) -> Vec<bool> {
    let mut nc = vec![false; mesh.edges.len()];
    for (q, qe) in mesh.quad_edges.iter().enumerate() {
        if mesh.regions[q] == Region::Air {
            for &e in qe {
                nc[e] = true;
            }
        }
    }
    for w in holes.windows(2) {
        if w[0].cols.end == w[1].cols.start {
            for j in mesh.coil_rows.clone() {
                nc[mesh.axial_edge(w[0].cols.end, j)] = true;
            }
        }
    }
    nc
}

/// Cohomology basis functions, one per hole.
///
/// The function of a hole is the jump of the indicator of the symmetry-plane
/// nodes between the axis and the hole's left side, restricted to the
/// non-conducting edges. Its circulation around its own hole is one and zero
/// around every other hole.
pub fn build_cut_basis<T: Real>(mesh: &Mesh<T>, holes: &[Hole]) -> Result<CutBasis<T>> {
    validate_holes(mesh, holes)?;
    let nc = non_conducting_edges(mesh, holes);
    let half = T::lit(0.5);
    let functions = holes
        .iter()
        .map(|h| {
            (0..=h.cols.start)
                .map(|i| mesh.axial_edge(i, 0))
                .filter(|&e| nc[e])
                .map(|e| (e, half))
                .collect()
        })
        .collect();
    Ok(CutBasis { holes: holes.to_vec(), functions })
}

/// Builds the DoF layout of a formulation on a mesh.
///
/// Ordering is edges, nodes, cuts (then cut-like functions), voltages.
pub fn build_dof_layout<T: Real>(
    mesh: &Mesh<T>,
    variant: FormulationVariant,
    voltage_order: usize,
) -> Result<DofLayout<T>> {
    let homogenized = mesh.geometry.params.homogenized;
    if variant == FormulationVariant::RefHPhi && homogenized && mesh.geometry.params.n_turns > 1 {
        return Err(Error::Layout("the reference model needs the detailed turn geometry".into()));
    }
    if variant != FormulationVariant::RefHPhi && !homogenized && mesh.geometry.params.n_turns > 1 {
        return Err(Error::Layout("foil conductor variants need the homogenized geometry".into()));
    }
    let holes = holes_for(mesh, variant);
    let cuts = build_cut_basis(mesh, &holes)?;
    let nc = non_conducting_edges(mesh, &holes);
    let n_edges = mesh.edges.len();

    let conducting_both = |e: usize| {
        let qs = mesh.edge_quads(e);
        qs.len() == 2 && qs.iter().all(|&q| mesh.regions[q].is_conducting())
    };

    let mut kinds = Vec::new();
    let mut edge_map: Vec<Vec<(usize, T)>> = vec![Vec::new(); n_edges];

    for e in 0..n_edges {
        let keep = match variant {
            FormulationVariant::FcmHFull => !mesh.is_essential_edge(e),
            FormulationVariant::RefHPhi | FormulationVariant::FcmHPhi => {
                !mesh.is_essential_edge(e) && !nc[e]
            }
            FormulationVariant::FcmTOmega => mesh.is_radial(e) && conducting_both(e),
        };
        if keep {
            edge_map[e].push((kinds.len(), T::one()));
            kinds.push(DofKind::Edge(e));
        }
    }
    let n_edge_dofs = kinds.len();

    let mut nodal = vec![false; mesh.nodes.len()];
    match variant {
        FormulationVariant::FcmHFull => {}
        FormulationVariant::RefHPhi | FormulationVariant::FcmHPhi => {
            for (e, &[a, b]) in mesh.edges.iter().enumerate() {
                if nc[e] {
                    nodal[a] = true;
                    nodal[b] = true;
                }
            }
        }
        FormulationVariant::FcmTOmega => nodal.iter_mut().for_each(|x| *x = true),
    }
    let mut node_incident: Vec<Vec<usize>> = vec![Vec::new(); mesh.nodes.len()];
    for (e, &[a, b]) in mesh.edges.iter().enumerate() {
        node_incident[a].push(e);
        node_incident[b].push(e);
    }
    for n in 0..mesh.nodes.len() {
        if !nodal[n] || mesh.is_essential_node(n) {
            continue;
        }
        let d = kinds.len();
        kinds.push(DofKind::Node(n));
        for &e in &node_incident[n] {
            if mesh.is_essential_edge(e) {
                continue;
            }
            // h = -grad φ: the tail node of the edge contributes +1
            let c = if mesh.edges[e][0] == n { T::one() } else { -T::one() };
            edge_map[e].push((d, c));
        }
    }
    let n_nodal_dofs = kinds.len() - n_edge_dofs;

    let mut cut_dofs = Vec::with_capacity(holes.len());
    for (k, f) in cuts.functions.iter().enumerate() {
        let d = kinds.len();
        cut_dofs.push(d);
        kinds.push(DofKind::Cut(k));
        for &(e, c) in f {
            edge_map[e].push((d, c));
        }
    }
    let mut cut_like_lines = Vec::new();
    if variant == FormulationVariant::FcmTOmega {
        let half = T::lit(0.5);
        for i in mesh.coil_cols.start + 1..mesh.coil_cols.end {
            let d = kinds.len();
            kinds.push(DofKind::CutLike(i));
            edge_map[mesh.axial_edge(i, 0)].push((d, half));
            cut_like_lines.push(i);
        }
    }
    let n_cut_dofs = kinds.len() - n_edge_dofs - n_nodal_dofs;

    let n_voltage_dofs = match variant {
        FormulationVariant::RefHPhi => holes.len(),
        _ => voltage_order + 1,
    };
    for k in 0..n_voltage_dofs {
        kinds.push(DofKind::Voltage(k));
    }

    let fixed = if variant == FormulationVariant::RefHPhi { cut_dofs.clone() } else { Vec::new() };

    let mut quad_dofs = Vec::with_capacity(mesh.quads.len());
    for qe in &mesh.quad_edges {
        let mut qd = QuadDofs::<T>::default();
        for (slot, &e) in qe.iter().enumerate() {
            for &(d, c) in &edge_map[e] {
                let pos = match qd.dofs.iter().position(|&x| x == d) {
                    Some(p) => p,
                    None => {
                        qd.dofs.push(d);
                        qd.maps.push([T::zero(); 4]);
                        qd.dofs.len() - 1
                    }
                };
                qd.maps[pos][slot] += c;
            }
        }
        quad_dofs.push(qd);
    }

    log::debug!(
        "{variant:?} layout: {n_edge_dofs} edge, {n_nodal_dofs} nodal, {n_cut_dofs} cut, {n_voltage_dofs} voltage DoFs"
    );
    Ok(DofLayout {
        variant,
        kinds,
        n_edge_dofs,
        n_nodal_dofs,
        n_cut_dofs,
        n_voltage_dofs,
        cuts,
        cut_dofs,
        fixed,
        edge_map,
        quad_dofs,
        cut_like_lines,
    })
}

/// Lowest-order edge functions on an axis-aligned rectangle of size `a × b`
/// in local coordinates (ξ, η) ∈ [0,1]². Each function has unit line integral
/// along its own edge, in the +r or +z direction.
pub mod whitney {
    use crate::scalar::Real;

    /// Values `[h_r, h_z]` of the four functions in slot order bottom, right, top, left.
    pub fn values<T: Real>(a: T, b: T, xi: T, eta: T) -> [[T; 2]; 4] {
        let z = T::zero();
        let one = T::one();
        [
            [(one - eta) / a, z],
            [z, xi / b],
            [eta / a, z],
            [z, (one - xi) / b],
        ]
    }

    /// Azimuthal curl `∂h_r/∂z - ∂h_z/∂r` of the four functions (constant).
    pub fn curls<T: Real>(a: T, b: T) -> [T; 4] {
        let s = T::one() / (a * b);
        [-s, -s, s, s]
    }
}

/// Field and current density at a local point of a quad.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample<T> {
    pub h: [T; 2],
    pub curl_h: T,
}

pub fn eval_field<T: Real>(
    layout: &DofLayout<T>,
    mesh: &Mesh<T>,
    coeffs: &[T],
    quad_id: usize,
    local_point: (T, T),
) -> Result<FieldSample<T>> {
    if quad_id >= mesh.quads.len() {
        return Err(Error::Argument(format!("quad {quad_id} out of range")));
    }
    if coeffs.len() != layout.n_dofs() {
        return Err(Error::Argument(format!(
            "coefficient vector has length {}, expected {}",
            coeffs.len(),
            layout.n_dofs()
        )));
    }
    let (xi, eta) = local_point;
    let (r0, r1, z0, z1) = mesh.quad_bounds(quad_id);
    let (a, b) = (r1 - r0, z1 - z0);
    let ev = layout.quad_edge_values(coeffs, quad_id);
    let w = whitney::values(a, b, xi, eta);
    let c = whitney::curls(a, b);
    let mut h = [T::zero(); 2];
    let mut curl_h = T::zero();
    for s in 0..4 {
        h[0] += ev[s] * w[s][0];
        h[1] += ev[s] * w[s][1];
        curl_h += ev[s] * c[s];
    }
    Ok(FieldSample { h, curl_h })
}

/// Piecewise constant current density `curl h` of a quad.
pub fn quad_current_density<T: Real>(mesh: &Mesh<T>, edge_vals: &[T; 4], q: usize) -> T {
    let (r0, r1, z0, z1) = mesh.quad_bounds(q);
    let c = whitney::curls(r1 - r0, z1 - z0);
    (0..4).map(|s| c[s] * edge_vals[s]).sum()
}

/// Oriented edge path running up column line `left` from the symmetry plane
/// to row line `top`, along it to column line `right` and back down. Closed by
/// its mirror image, so the full-coil circulation is twice its line integral.
pub fn half_loop<T: Real>(mesh: &Mesh<T>, left: usize, right: usize, top: usize) -> Vec<(usize, T)> {
    let mut path = Vec::new();
    for j in 0..top {
        path.push((mesh.axial_edge(left, j), T::one()));
    }
    for i in left..right {
        path.push((mesh.radial_edge(i, top), T::one()));
    }
    for j in 0..top {
        path.push((mesh.axial_edge(right, j), -T::one()));
    }
    path
}

/// Full-coil circulation of the field along a mirrored half loop.
pub fn loop_circulation<T: Real>(edge_values: &[T], path: &[(usize, T)]) -> T {
    T::lit(2.0) * path.iter().map(|&(e, s)| s * edge_values[e]).sum::<T>()
}

/// Shifted Legendre polynomials on [0, 1], the voltage basis of the foil
/// conductor model.
#[derive(Clone, Debug)]
pub struct VoltageBasis<T> {
    pub order: usize,
    pub gram: Vec<Vec<T>>,
    pub integrals: Vec<T>,
}

impl<T: Real> VoltageBasis<T> {
    pub fn n_functions(&self) -> usize {
        self.order + 1
    }

    /// Values of all basis functions at `x ∈ [0, 1]`.
    pub fn eval_all(&self, x: T) -> Vec<T> {
        shifted_legendre(self.order, x)
    }

    pub fn eval(&self, k: usize, x: T) -> T {
        self.eval_all(x)[k]
    }

    /// Ratio of extreme eigenvalues of the Gram matrix.
    pub fn gram_condition(&self) -> T {
        let eig = crate::linalg::symmetric_eigenvalues(&self.gram);
        let max = eig.iter().copied().fold(T::zero(), T::max);
        let min = eig.iter().copied().fold(T::infinity(), T::min);
        max / min
    }
}

pub fn shifted_legendre<T: Real>(order: usize, x: T) -> Vec<T> {
    let s = T::lit(2.0) * x - T::one();
    let mut p = Vec::with_capacity(order + 1);
    p.push(T::one());
    if order >= 1 {
        p.push(s);
    }
    for k in 1..order {
        let kf = T::from_usize_lossy(k);
        let next = ((T::lit(2.0) * kf + T::one()) * s * p[k] - kf * p[k - 1]) / (kf + T::one());
        p.push(next);
    }
    p
}

pub fn build_voltage_basis<T: Real>(order: i64) -> Result<VoltageBasis<T>> {
    if order < 0 {
        return Err(Error::Argument(format!("voltage order must be non-negative, got {order}")));
    }
    let order = order as usize;
    let n = order + 1;
    let rule = gauss_unit::<T>(n + 1);
    let mut gram = vec![vec![T::zero(); n]; n];
    let mut integrals = vec![T::zero(); n];
    for &(x, w) in &rule {
        let p = shifted_legendre(order, x);
        for i in 0..n {
            integrals[i] += w * p[i];
            for j in 0..n {
                gram[i][j] += w * p[i] * p[j];
            }
        }
    }
    Ok(VoltageBasis { order, gram, integrals })
}
