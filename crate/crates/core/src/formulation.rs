//! Residual and Jacobian assembly for the detailed h-φ model and the foil
//! conductor model in its h-full, h-φ and t-ω discretizations.
//!
//! All integrals are taken over the z ≥ 0 half of the meridian plane with the
//! axisymmetric weight 2πr and multiplied by two, so residuals, currents and
//! powers are those of the whole coil.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mesh, Region};
use crate::linalg::CsrMatrix;
use crate::materials::{coil_resistivity_tensor, power_law_unchecked, MaterialParams};
use crate::scalar::{gauss_unit, mu0, Real};
use crate::spaces::{whitney, DofLayout, VoltageBasis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulationVariant {
    RefHPhi,
    FcmHFull,
    FcmHPhi,
    FcmTOmega,
}

impl FormulationVariant {
    pub const ALL: [FormulationVariant; 4] = [
        FormulationVariant::RefHPhi,
        FormulationVariant::FcmHFull,
        FormulationVariant::FcmHPhi,
        FormulationVariant::FcmTOmega,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FormulationVariant::RefHPhi => "ref_h_phi",
            FormulationVariant::FcmHFull => "fcm_h_full",
            FormulationVariant::FcmHPhi => "fcm_h_phi",
            FormulationVariant::FcmTOmega => "fcm_t_omega",
        }
    }

    pub fn is_fcm(self) -> bool {
        self != FormulationVariant::RefHPhi
    }

    /// Whether the air is discretized with edge functions and a spurious resistivity.
    pub fn conducting_air(self) -> bool {
        self == FormulationVariant::FcmHFull
    }
}

impl fmt::Display for FormulationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FormulationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FormulationVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown formulation variant `{s}`")))
    }
}

/// Sinusoidal transport current per turn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Excitation<T> {
    pub amplitude: T,
    pub frequency: T,
}

impl<T: Real> Excitation<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency > T::zero()) || !self.frequency.is_finite() {
            return Err(Error::Argument(format!("frequency must be positive, got {}", self.frequency)));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Argument("current amplitude must be finite".into()));
        }
        Ok(())
    }

    pub fn period(&self) -> T {
        T::one() / self.frequency
    }

    pub fn current(&self, t: T) -> T {
        // reduce the phase first so that t and t + 1/f give identical values
        let cycles = t * self.frequency;
        let phase = cycles - cycles.floor();
        self.amplitude * (T::lit(2.0) * T::PI() * phase).sin()
    }
}

/// A net current prescribed through a hole of the non-conducting domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurrentConstraint<T> {
    /// Cut DoF carrying the current, if the layout has one.
    pub cut_dof: Option<usize>,
    pub value: T,
    /// Set directly on the cut DoF, as opposed to enforced through the
    /// voltage equations.
    pub strong: bool,
}

/// Per-turn cut values for the detailed model, the total coil current for
/// the foil conductor model.
pub fn impose_excitation<T: Real>(
    layout: &DofLayout<T>,
    excitation: &Excitation<T>,
    n_turns: usize,
    t: T,
) -> Vec<CurrentConstraint<T>> {
    let it = excitation.current(t);
    match layout.variant {
        FormulationVariant::RefHPhi => layout
            .cut_dofs
            .iter()
            .map(|&d| CurrentConstraint { cut_dof: Some(d), value: it, strong: true })
            .collect(),
        _ => vec![CurrentConstraint {
            cut_dof: layout.cut_dofs.first().copied(),
            value: T::from_usize_lossy(n_turns) * it,
            strong: false,
        }],
    }
}

#[derive(Clone, Debug)]
pub struct AssembledSystem<T> {
    pub residual: Vec<T>,
    /// Sum of the magnitudes entering each residual row; times the machine
    /// epsilon it bounds the rounding error of the row.
    pub magnitude: Vec<T>,
    pub jacobian: CsrMatrix<T>,
    pub edge: Range<usize>,
    pub nodal: Range<usize>,
    pub cut: Range<usize>,
    pub voltage: Range<usize>,
}

/// Contributions of the converged step tested with the solution itself.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerBalance<T> {
    pub resistive: T,
    pub voltage: T,
    pub magnetic: T,
}

impl<T: Real> PowerBalance<T> {
    pub fn imbalance(&self) -> T {
        self.resistive + self.voltage + self.magnetic
    }
}

#[derive(Clone, Debug)]
struct ElementData<T> {
    mass: [[T; 4]; 4],
    curl: [T; 4],
    /// 2·∫ 2πr dA
    weight: T,
    /// Coupling of each voltage unknown with the quad current.
    coupling: Vec<(usize, T)>,
    conducting: bool,
}

/// Everything needed to assemble one formulation on one mesh.
#[derive(Clone, Debug)]
pub struct Discretization<T> {
    pub mesh: Mesh<T>,
    pub layout: DofLayout<T>,
    pub materials: MaterialParams<T>,
    pub excitation: Excitation<T>,
    pub voltage_basis: Option<VoltageBasis<T>>,
    elements: Vec<ElementData<T>>,
    /// Right-hand side of the voltage rows per unit turn current.
    voltage_rhs: Vec<T>,
    template: CsrMatrix<T>,
}

impl<T: Real> Discretization<T> {
    pub fn new(
        mesh: Mesh<T>,
        layout: DofLayout<T>,
        materials: MaterialParams<T>,
        excitation: Excitation<T>,
        voltage_basis: Option<VoltageBasis<T>>,
    ) -> Result<Self> {
        materials.validate()?;
        excitation.validate()?;
        let variant = layout.variant;
        if variant.is_fcm() {
            match &voltage_basis {
                None => return Err(Error::Argument("foil conductor model needs a voltage basis".into())),
                Some(vb) if vb.n_functions() != layout.n_voltage_dofs => {
                    return Err(Error::Layout("voltage basis does not match the layout".into()))
                }
                _ => {}
            }
        }
        if layout.edge_map.len() != mesh.edges.len() {
            return Err(Error::Layout("layout was built for another mesh".into()));
        }
        let n_turns = mesh.geometry.params.n_turns;
        let l_alpha = mesh.geometry.params.stack_thickness();
        let r_in = mesh.geometry.params.inner_radius;
        let two = T::lit(2.0);
        let two_pi = two * T::PI();
        let gauss = gauss_unit::<T>(2);
        let vgauss = gauss_unit::<T>(voltage_basis.as_ref().map_or(1, |v| v.order + 1));

        let mut elements = Vec::with_capacity(mesh.quads.len());
        for q in 0..mesh.quads.len() {
            let (r0, r1, z0, z1) = mesh.quad_bounds(q);
            let (a, b) = (r1 - r0, z1 - z0);
            let mut mass = [[T::zero(); 4]; 4];
            for &(xi, wx) in &gauss {
                for &(eta, wy) in &gauss {
                    let r = r0 + xi * a;
                    let w = whitney::values(a, b, xi, eta);
                    let f = two * mu0::<T>() * two_pi * r * a * b * wx * wy;
                    for s in 0..4 {
                        for t in 0..4 {
                            mass[s][t] += f * (w[s][0] * w[t][0] + w[s][1] * w[t][1]);
                        }
                    }
                }
            }
            let region = mesh.regions[q];
            let conducting = region.is_conducting() || variant.conducting_air();
            let mut coupling = Vec::new();
            match (region, variant) {
                (Region::Turn(i), FormulationVariant::RefHPhi) => {
                    coupling.push((layout.n_h_dofs() + i, two * a * b));
                }
                (Region::Coil, v) if v.is_fcm() => {
                    let vb = voltage_basis.as_ref().expect("checked above");
                    let mut c = vec![T::zero(); vb.n_functions()];
                    for &(xi, w) in &vgauss {
                        let alpha = (r0 + xi * a - r_in) / l_alpha;
                        for (k, p) in vb.eval_all(alpha).into_iter().enumerate() {
                            c[k] += two * a * b * w * p;
                        }
                    }
                    coupling.extend(c.into_iter().enumerate().map(|(k, v)| (layout.n_h_dofs() + k, v)));
                }
                (Region::Air, _) => {}
                (r, v) => {
                    return Err(Error::Layout(format!("region {r:?} does not belong to a {v} mesh")));
                }
            }
            elements.push(ElementData {
                mass,
                curl: whitney::curls(a, b),
                weight: two * two_pi * T::lit(0.5) * (r0 + r1) * a * b,
                coupling,
                conducting,
            });
        }

        let voltage_rhs = match &voltage_basis {
            Some(vb) if variant.is_fcm() => {
                vb.integrals.iter().map(|&i| T::from_usize_lossy(n_turns) * i).collect()
            }
            _ => vec![T::one(); layout.n_voltage_dofs],
        };

        let n = layout.n_dofs();
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for (q, qd) in layout.quad_dofs.iter().enumerate() {
            for &d in &qd.dofs {
                rows[d].extend_from_slice(&qd.dofs);
                for &(v, _) in &elements[q].coupling {
                    rows[d].push(v);
                    rows[v].push(d);
                }
            }
        }
        let template = CsrMatrix::from_pattern(rows);
        Ok(Discretization { mesh, layout, materials, excitation, voltage_basis, elements, voltage_rhs, template })
    }

    pub fn variant(&self) -> FormulationVariant {
        self.layout.variant
    }

    pub fn n_dofs(&self) -> usize {
        self.layout.n_dofs()
    }

    pub fn n_turns(&self) -> usize {
        self.mesh.geometry.params.n_turns
    }

    pub fn constraints(&self, t: T) -> Vec<CurrentConstraint<T>> {
        impose_excitation(&self.layout, &self.excitation, self.n_turns(), t)
    }

    /// Sets the strongly imposed DoFs of `u` to their values at time `t`.
    pub fn apply_constraints(&self, u: &mut [T], t: T) {
        for c in self.constraints(t) {
            if let (true, Some(d)) = (c.strong, c.cut_dof) {
                u[d] = c.value;
            }
        }
    }

    /// Target of each voltage row at time `t`.
    pub fn voltage_targets(&self, t: T) -> Vec<T> {
        let it = self.excitation.current(t);
        self.voltage_rhs.iter().map(|&c| c * it).collect()
    }

    pub fn is_conducting(&self, q: usize) -> bool {
        self.elements[q].conducting
    }

    /// Resistivity of a quad given its current density and edge values.
    fn resistivity(&self, q: usize, j: T, ev: &[T; 4]) -> (T, T) {
        if self.mesh.regions[q] == Region::Air {
            return (self.materials.rho_spurious_air, T::zero());
        }
        let jc = if self.materials.field_dependent() {
            let (r0, r1, z0, z1) = self.mesh.quad_bounds(q);
            let h = T::lit(0.5);
            let hr = h * (ev[0] + ev[2]) / (r1 - r0);
            let hz = h * (ev[1] + ev[3]) / (z1 - z0);
            // tape wide face is normal to r
            self.materials.jc_eng(mu0::<T>() * hz, mu0::<T>() * hr)
        } else {
            self.materials.jc_eng(T::zero(), T::zero())
        };
        let e = power_law_unchecked(j, jc, self.materials.e_c, self.materials.n_exponent);
        (e.rho, e.drho_dj2)
    }

    /// Azimuthal resistivity assembled for a coil quad (the HTS resistivity in
    /// every variant; the stack-normal entry never meets a current).
    fn coil_rho(&self, q: usize, rho_hts: T) -> T {
        match self.mesh.local_frame(q) {
            Ok(frame) => {
                coil_resistivity_tensor(rho_hts, &frame, self.variant(), self.materials.rho_spurious_alpha).azimuthal
            }
            Err(_) => rho_hts,
        }
    }

    /// Backward Euler residual and consistent Jacobian at `u` for the step
    /// from `u_prev` over `dt` ending at time `t`.
    pub fn assemble(&self, u: &[T], u_prev: &[T], t: T, dt: T) -> Result<AssembledSystem<T>> {
        let n = self.n_dofs();
        if u.len() != n || u_prev.len() != n {
            return Err(Error::Argument(format!("state length {} / {}, expected {n}", u.len(), u_prev.len())));
        }
        if !(dt > T::zero()) {
            return Err(Error::Argument(format!("time step must be positive, got {dt}")));
        }
        let mut residual = vec![T::zero(); n];
        let mut magnitude = vec![T::zero(); n];
        let mut jacobian = self.template.clone();
        let inv_dt = T::one() / dt;
        let nh = self.layout.n_h_dofs();
        for (q, el) in self.elements.iter().enumerate() {
            let qd = &self.layout.quad_dofs[q];
            if qd.dofs.is_empty() {
                continue;
            }
            let ev = self.layout.quad_edge_values(u, q);
            let ev0 = self.layout.quad_edge_values(u_prev, q);
            let mut r_loc = [T::zero(); 4];
            let mut m_loc = [T::zero(); 4];
            let mut k_loc = [[T::zero(); 4]; 4];
            for s in 0..4 {
                for t2 in 0..4 {
                    r_loc[s] += el.mass[s][t2] * (ev[t2] - ev0[t2]) * inv_dt;
                    m_loc[s] += el.mass[s][t2].abs() * (ev[t2].abs() + ev0[t2].abs()) * inv_dt;
                    k_loc[s][t2] = el.mass[s][t2] * inv_dt;
                }
            }
            let j: T = (0..4).map(|s| el.curl[s] * ev[s]).sum();
            let j_mag: T = (0..4).map(|s| (el.curl[s] * ev[s]).abs()).sum();
            if el.conducting {
                let (rho, drho) = self.resistivity(q, j, &ev);
                let rho_az = if self.mesh.regions[q] == Region::Air { rho } else { self.coil_rho(q, rho) };
                let tangent = rho_az + T::lit(2.0) * drho * j * j;
                for s in 0..4 {
                    r_loc[s] += el.weight * rho_az * j * el.curl[s];
                    m_loc[s] += el.weight * tangent * j_mag * el.curl[s].abs();
                    for t2 in 0..4 {
                        k_loc[s][t2] += el.weight * tangent * el.curl[s] * el.curl[t2];
                    }
                }
            }
            // voltage coupling: ⟨grad v, curl h'⟩ and its transpose
            let mut vterm = T::zero();
            let mut vmag = T::zero();
            for &(v, b) in &el.coupling {
                vterm += b * u[v];
                vmag += (b * u[v]).abs();
                residual[v] += b * j;
                magnitude[v] += b.abs() * j_mag;
            }
            for (a_idx, &da) in qd.dofs.iter().enumerate() {
                let ma = &qd.maps[a_idx];
                let mut ra = T::zero();
                let mut ma_mag = T::zero();
                let mut ca = T::zero();
                for s in 0..4 {
                    ra += ma[s] * r_loc[s];
                    ma_mag += ma[s].abs() * m_loc[s];
                    ca += ma[s] * el.curl[s];
                }
                residual[da] += ra + vterm * ca;
                magnitude[da] += ma_mag + vmag * ca.abs();
                for &(v, b) in &el.coupling {
                    if ca != T::zero() {
                        jacobian.add(da, v, b * ca);
                        jacobian.add(v, da, b * ca);
                    }
                }
                for (b_idx, &db) in qd.dofs.iter().enumerate() {
                    let mb = &qd.maps[b_idx];
                    let mut kab = T::zero();
                    for s in 0..4 {
                        if ma[s] == T::zero() {
                            continue;
                        }
                        for t2 in 0..4 {
                            kab += ma[s] * k_loc[s][t2] * mb[t2];
                        }
                    }
                    if kab != T::zero() {
                        jacobian.add(da, db, kab);
                    }
                }
            }
        }
        for (k, target) in self.voltage_targets(t).into_iter().enumerate() {
            residual[nh + k] -= target;
            magnitude[nh + k] += target.abs();
        }
        let l = &self.layout;
        let e_end = l.n_edge_dofs;
        let n_end = e_end + l.n_nodal_dofs;
        Ok(AssembledSystem {
            residual,
            magnitude,
            jacobian,
            edge: 0..e_end,
            nodal: e_end..n_end,
            cut: n_end..nh,
            voltage: nh..n,
        })
    }

    /// Full-coil instantaneous losses `∫ ρ_HTS j² dV` over the coil.
    pub fn instantaneous_losses(&self, u: &[T]) -> T {
        let mut p = T::zero();
        for q in 0..self.mesh.quads.len() {
            if !self.mesh.regions[q].is_conducting() {
                continue;
            }
            let ev = self.layout.quad_edge_values(u, q);
            let el = &self.elements[q];
            let j: T = (0..4).map(|s| el.curl[s] * ev[s]).sum();
            let (rho, _) = self.resistivity(q, j, &ev);
            p += el.weight * rho * j * j;
        }
        p
    }

    /// Current density of every quad.
    pub fn current_density(&self, u: &[T]) -> Vec<T> {
        (0..self.mesh.quads.len())
            .map(|q| {
                let ev = self.layout.quad_edge_values(u, q);
                (0..4).map(|s| self.elements[q].curl[s] * ev[s]).sum()
            })
            .collect()
    }

    /// Critical current density used in a quad (engineering value).
    pub fn quad_jc(&self, u: &[T], q: usize) -> T {
        if !self.materials.field_dependent() {
            return self.materials.jc_eng(T::zero(), T::zero());
        }
        let ev = self.layout.quad_edge_values(u, q);
        let (r0, r1, z0, z1) = self.mesh.quad_bounds(q);
        let h = T::lit(0.5);
        let hr = h * (ev[0] + ev[2]) / (r1 - r0);
        let hz = h * (ev[1] + ev[3]) / (z1 - z0);
        self.materials.jc_eng(mu0::<T>() * hz, mu0::<T>() * hr)
    }

    /// Terms of the magnetic rows tested with `u` itself.
    pub fn power_balance(&self, u: &[T], u_prev: &[T], dt: T) -> PowerBalance<T> {
        let mut pb = PowerBalance { resistive: T::zero(), voltage: T::zero(), magnetic: T::zero() };
        for (q, el) in self.elements.iter().enumerate() {
            let ev = self.layout.quad_edge_values(u, q);
            let ev0 = self.layout.quad_edge_values(u_prev, q);
            for s in 0..4 {
                for t2 in 0..4 {
                    pb.magnetic += ev[s] * el.mass[s][t2] * (ev[t2] - ev0[t2]) / dt;
                }
            }
            let j: T = (0..4).map(|s| el.curl[s] * ev[s]).sum();
            if el.conducting {
                let (rho, _) = self.resistivity(q, j, &ev);
                pb.resistive += el.weight * rho * j * j;
            }
            for &(v, b) in &el.coupling {
                pb.voltage += b * u[v] * j;
            }
        }
        pb
    }

    /// Contribution of the spurious air resistivity to the Jacobian.
    pub fn spurious_air_term(&self) -> Result<CsrMatrix<T>> {
        spurious_air_term(&self.mesh, &self.layout, self.materials.rho_spurious_air)
    }
}

/// `⟨ρ_air curl h, curl h'⟩` over the air quads, for the edge-only variant.
pub fn spurious_air_term<T: Real>(mesh: &Mesh<T>, layout: &DofLayout<T>, rho_air: T) -> Result<CsrMatrix<T>> {
    if !layout.variant.conducting_air() {
        return Err(Error::Argument(format!(
            "{} uses a scalar potential in the air; no spurious resistivity applies",
            layout.variant
        )));
    }
    let n = layout.n_dofs();
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    let air: Vec<usize> = (0..mesh.quads.len()).filter(|&q| mesh.regions[q] == Region::Air).collect();
    for &q in &air {
        let qd = &layout.quad_dofs[q];
        for &d in &qd.dofs {
            rows[d].extend_from_slice(&qd.dofs);
        }
    }
    let mut m = CsrMatrix::from_pattern(rows);
    let two = T::lit(2.0);
    for &q in &air {
        let (r0, r1, z0, z1) = mesh.quad_bounds(q);
        let c = whitney::curls(r1 - r0, z1 - z0);
        let weight = two * two * T::PI() * T::lit(0.5) * (r0 + r1) * (r1 - r0) * (z1 - z0);
        let qd = &layout.quad_dofs[q];
        for (a, &da) in qd.dofs.iter().enumerate() {
            let ca: T = (0..4).map(|s| qd.maps[a][s] * c[s]).sum();
            for (b, &db) in qd.dofs.iter().enumerate() {
                let cb: T = (0..4).map(|s| qd.maps[b][s] * c[s]).sum();
                let v = weight * rho_air * ca * cb;
                if v != T::zero() {
                    m.add(da, db, v);
                }
            }
        }
    }
    Ok(m)
}

/// Assembles the detailed model.
pub fn assemble_reference<T: Real>(disc: &Discretization<T>, u: &[T], u_prev: &[T], t: T, dt: T) -> Result<AssembledSystem<T>> {
    if disc.variant() != FormulationVariant::RefHPhi {
        return Err(Error::Layout(format!("layout built for {}, not the reference model", disc.variant())));
    }
    disc.assemble(u, u_prev, t, dt)
}

/// Assembles one of the foil conductor variants.
pub fn assemble_fcm<T: Real>(disc: &Discretization<T>, u: &[T], u_prev: &[T], t: T, dt: T) -> Result<AssembledSystem<T>> {
    if !disc.variant().is_fcm() {
        return Err(Error::Layout("layout built for the reference model".into()));
    }
    if disc.voltage_basis.is_none() {
        return Err(Error::Argument("missing voltage basis".into()));
    }
    disc.assemble(u, u_prev, t, dt)
}
