//! Constitutive laws: power-law resistivity of the HTS layer, coil resistivity
//! tensor, and critical current density models.

use crate::error::{Error, Result};
use crate::formulation::FormulationVariant;
use crate::geometry::LocalFrame;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JcModel<T> {
    Constant { jc: T },
    /// Kim-type field dependence jc0·b0 / (b0 + |b|).
    Kim { jc0: T, b0: T },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaterialParams<T> {
    pub e_c: T,
    pub n_exponent: T,
    pub lambda_fill: T,
    /// Resistivity of the air when it is meshed with edge elements [Ω·m].
    pub rho_spurious_air: T,
    /// Resistivity across the tape stack (α direction) [Ω·m].
    pub rho_spurious_alpha: T,
    pub jc_model: JcModel<T>,
}

impl<T: Real> MaterialParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_c > T::zero()) {
            return Err(Error::Material(format!("e_c must be positive, got {}", self.e_c)));
        }
        if !(self.n_exponent >= T::one()) {
            return Err(Error::Material(format!("n must be >= 1, got {}", self.n_exponent)));
        }
        if !(self.lambda_fill > T::zero() && self.lambda_fill <= T::one()) {
            return Err(Error::Material(format!(
                "fill factor must lie in (0, 1], got {}",
                self.lambda_fill
            )));
        }
        if !(self.rho_spurious_air > T::zero() && self.rho_spurious_alpha > T::zero()) {
            return Err(Error::Material("spurious resistivities must be positive".into()));
        }
        match self.jc_model {
            JcModel::Constant { jc } if !(jc > T::zero()) => {
                Err(Error::Material(format!("jc must be positive, got {jc}")))
            }
            JcModel::Kim { jc0, b0 } if !(jc0 > T::zero() && b0 > T::zero()) => {
                Err(Error::Material("Kim model needs positive jc0 and b0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Engineering critical current density at a given flux density.
    pub fn jc_eng(&self, b_parallel: T, b_perp: T) -> T {
        engineering_jc(jc_eval(&self.jc_model, b_parallel, b_perp), self.lambda_fill)
    }

    pub fn field_dependent(&self) -> bool {
        matches!(self.jc_model, JcModel::Kim { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResistivityEval<T> {
    pub rho: T,
    /// dρ / d(‖j‖²)
    pub drho_dj2: T,
}

impl<T: Real> ResistivityEval<T> {
    /// d(ρ(|j|)·j)/dj for a scalar current density j.
    pub fn tangent(&self, j: T) -> T {
        self.rho + T::lit(2.0) * self.drho_dj2 * j * j
    }
}

/// Relative floor on ‖j‖ inside the tangent.
pub const TANGENT_FLOOR: f64 = 1e-6;

pub fn power_law<T: Real>(j_norm: T, jc_eff: T, params: &MaterialParams<T>) -> Result<ResistivityEval<T>> {
    if !(jc_eff > T::zero()) {
        return Err(Error::Material(format!("effective jc must be positive, got {jc_eff}")));
    }
    Ok(power_law_unchecked(j_norm, jc_eff, params.e_c, params.n_exponent))
}

#[inline]
pub(crate) fn power_law_unchecked<T: Real>(j_norm: T, jc_eff: T, e_c: T, n: T) -> ResistivityEval<T> {
    let j = j_norm.abs();
    let ratio = j / jc_eff;
    let nm1 = n - T::one();
    let rho = if nm1 == T::zero() {
        e_c / jc_eff
    } else if j == T::zero() {
        T::zero()
    } else {
        e_c / jc_eff * ratio.powf(nm1)
    };
    let floor = T::lit(TANGENT_FLOOR) * jc_eff;
    let j2 = (j * j).max(floor * floor);
    ResistivityEval { rho, drho_dj2: rho * nm1 / (T::lit(2.0) * j2) }
}

/// Resistivity tensor of the coil in (r, z) plus the azimuthal entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResistivityTensor<T> {
    pub in_plane: [[T; 2]; 2],
    /// Component along the conductor (γ = φ). The meridian-plane field only
    /// drives azimuthal current, so this is the entry every variant assembles.
    pub azimuthal: T,
    pub anisotropic: bool,
}

pub fn coil_resistivity_tensor<T: Real>(
    rho_hts: T,
    frame: &LocalFrame<T>,
    variant: FormulationVariant,
    rho0: T,
) -> ResistivityTensor<T> {
    let anisotropic = matches!(variant, FormulationVariant::FcmHFull | FormulationVariant::FcmHPhi);
    let (a, b) = (frame.alpha_dir, frame.beta_dir);
    let (d_alpha, d_beta) = if anisotropic { (rho0, rho_hts) } else { (rho_hts, rho_hts) };
    // R diag(dα, dβ) Rᵀ with the columns of R the frame directions.
    let mut in_plane = [[T::zero(); 2]; 2];
    for (row, out) in in_plane.iter_mut().enumerate() {
        for (col, v) in out.iter_mut().enumerate() {
            *v = d_alpha * a[row] * a[col] + d_beta * b[row] * b[col];
        }
    }
    ResistivityTensor { in_plane, azimuthal: rho_hts, anisotropic }
}

pub fn jc_eval<T: Real>(model: &JcModel<T>, b_parallel: T, b_perp: T) -> T {
    match *model {
        JcModel::Constant { jc } => jc,
        JcModel::Kim { jc0, b0 } => {
            let b = (b_parallel * b_parallel + b_perp * b_perp).sqrt();
            jc0 * b0 / (b0 + b)
        }
    }
}

pub fn engineering_jc<T: Real>(j_c: T, lambda_fill: T) -> T {
    lambda_fill * j_c
}
