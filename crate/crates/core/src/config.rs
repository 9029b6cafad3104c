//! Run configuration: a strict TOML file (`[section]` headers with one
//! `key = value` per line) and the built-in presets of the pancake study.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulation::{Excitation, FormulationVariant};
use crate::geometry::CoilGeometry;
use crate::materials::{JcModel, MaterialParams};
use crate::solver::SolverConfig;

/// Bumped whenever a preset changes; recorded in every run summary.
pub const PRESET_VERSION: u32 = 1;

pub const PRESETS: [&str; 4] = ["pancake2d_ref", "pancake2d_fcm_hfull", "pancake2d_fcm_hphi", "pancake2d_fcm_tw"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub inner_radius: f64,
    pub n_turns: usize,
    pub cc_thickness: f64,
    pub cc_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// Radial coil cells (a multiple of the turn count for the detailed model).
    pub n_alpha: usize,
    /// Axial coil cells over the half width.
    pub n_beta: usize,
    pub grading: f64,
    pub air_radius_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsConfig {
    pub e_c: f64,
    pub n: f64,
    pub jc: f64,
    pub lambda: f64,
    pub rho_air: f64,
    pub rho0: f64,
    /// Kim field scale [T]; a constant jc when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kim_b0: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormulationConfig {
    pub variant: FormulationVariant,
    pub voltage_order: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    /// Write a field snapshot at the current peak of the last period.
    pub vtk: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub mesh: MeshConfig,
    pub materials: MaterialsConfig,
    pub formulation: FormulationConfig,
    pub excitation: Excitation<f64>,
    pub solver: SolverConfig<f64>,
    pub output: OutputConfig,
}

/// Keys that may be omitted from a config file.
const OPTIONAL_KEYS: [&str; 1] = ["materials.kim_b0"];

impl RunConfig {
    pub fn coil_geometry(&self) -> CoilGeometry<f64> {
        CoilGeometry {
            inner_radius: self.geometry.inner_radius,
            n_turns: self.geometry.n_turns,
            cc_thickness: self.geometry.cc_thickness,
            cc_width: self.geometry.cc_width,
            air_radius_factor: self.mesh.air_radius_factor,
            homogenized: self.formulation.variant.is_fcm(),
        }
    }

    pub fn material_params(&self) -> MaterialParams<f64> {
        let m = &self.materials;
        MaterialParams {
            e_c: m.e_c,
            n_exponent: m.n,
            lambda_fill: m.lambda,
            rho_spurious_air: m.rho_air,
            rho_spurious_alpha: m.rho0,
            jc_model: match m.kim_b0 {
                Some(b0) => JcModel::Kim { jc0: m.jc, b0 },
                None => JcModel::Constant { jc: m.jc },
            },
        }
    }

    /// Critical current of one conductor at zero field [A].
    pub fn critical_current(&self) -> f64 {
        self.materials.lambda * self.materials.jc * self.geometry.cc_thickness * self.geometry.cc_width
    }

    pub fn validate(&self) -> Result<()> {
        self.coil_geometry().validate()?;
        self.material_params().validate()?;
        self.excitation.validate()?;
        self.solver.validate()?;
        let m = &self.mesh;
        if m.n_alpha == 0 || m.n_beta == 0 {
            return Err(Error::Config("mesh.n_alpha and mesh.n_beta must be positive".into()));
        }
        if !(m.grading >= 1.0) {
            return Err(Error::Config(format!("mesh.grading must be at least 1, got {}", m.grading)));
        }
        if self.formulation.variant == FormulationVariant::RefHPhi && m.n_alpha % self.geometry.n_turns != 0 {
            return Err(Error::Config(format!(
                "mesh.n_alpha = {} is not a multiple of geometry.n_turns = {}",
                m.n_alpha, self.geometry.n_turns
            )));
        }
        if self.formulation.variant.is_fcm() && m.n_alpha <= self.formulation.voltage_order {
            return Err(Error::Config(format!(
                "mesh.n_alpha = {} cannot resolve a voltage polynomial of order {}; use at least {} cells",
                m.n_alpha,
                self.formulation.voltage_order,
                self.formulation.voltage_order + 1
            )));
        }
        if self.formulation.variant == FormulationVariant::FcmTOmega {
            log::warn!("materials.rho0 is not used by the t-omega variant");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses a config, rejecting unknown keys and naming missing ones.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut expected = Vec::new();
        let template: toml::Table = toml::from_str(&preset("pancake2d_fcm_hphi")?.to_toml()?)
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for (section, value) in &template {
            if let Some(inner) = value.as_table() {
                for key in inner.keys() {
                    expected.push(format!("{section}.{key}"));
                }
            }
        }
        for key in &expected {
            let (section, name) = key.split_once('.').expect("dotted key");
            let present = table.get(section).and_then(|s| s.as_table()).is_some_and(|s| s.contains_key(name));
            if !present && !OPTIONAL_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("missing required key `{key}`")));
            }
        }
        let cfg: RunConfig = toml::from_str(text).map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Sets a swept parameter by name.
    pub fn set_parameter(&mut self, name: &str, value: f64) -> Result<()> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Argument(format!("{name} needs a non-negative integer, got {v}")))
            }
        };
        match name {
            "n_turns" => {
                let n = as_count(value)?;
                if self.formulation.variant == FormulationVariant::RefHPhi {
                    let per_turn = (self.mesh.n_alpha / self.geometry.n_turns).max(1);
                    self.mesh.n_alpha = per_turn * n;
                }
                self.geometry.n_turns = n;
            }
            "n_alpha" => self.mesh.n_alpha = as_count(value)?,
            "voltage_order" => self.formulation.voltage_order = as_count(value)?,
            "rho0" => self.materials.rho0 = value,
            other => {
                return Err(Error::Argument(format!(
                    "unknown sweep parameter `{other}` (expected n_turns, n_alpha, voltage_order or rho0)"
                )))
            }
        }
        Ok(())
    }
}

/// Built-in configurations of the pancake coil study.
pub fn preset(name: &str) -> Result<RunConfig> {
    let variant = match name {
        "pancake2d_ref" => FormulationVariant::RefHPhi,
        "pancake2d_fcm_hfull" => FormulationVariant::FcmHFull,
        "pancake2d_fcm_hphi" => FormulationVariant::FcmHPhi,
        "pancake2d_fcm_tw" => FormulationVariant::FcmTOmega,
        other => {
            return Err(Error::Config(format!("unknown preset `{other}` (available: {})", PRESETS.join(", "))))
        }
    };
    let frequency = 50.0;
    let geometry = GeometryConfig { inner_radius: 25e-3, n_turns: 20, cc_thickness: 100e-6, cc_width: 12e-3 };
    let materials = MaterialsConfig {
        e_c: 1e-4,
        n: 25.0,
        jc: 1e10,
        lambda: 0.01,
        rho_air: 1e-3,
        rho0: 1e-3,
        kim_b0: None,
    };
    let ic = materials.lambda * materials.jc * geometry.cc_thickness * geometry.cc_width;
    let n_alpha = if variant == FormulationVariant::RefHPhi { 20 } else { 10 };
    let mut solver = SolverConfig::for_period(1.0 / frequency);
    solver.periods = 1.5;
    Ok(RunConfig {
        geometry,
        mesh: MeshConfig { n_alpha, n_beta: 12, grading: 1.3, air_radius_factor: 5.0 },
        materials,
        formulation: FormulationConfig { variant, voltage_order: 3 },
        excitation: Excitation { amplitude: 0.8 * ic, frequency },
        solver,
        output: OutputConfig { dir: format!("out/{name}"), vtk: true },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_round_trip() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            let text = cfg.to_toml().unwrap();
            let back = RunConfig::from_toml(&text).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
        assert!((preset("pancake2d_ref").unwrap().excitation.amplitude - 96.0).abs() < 1e-9);
        assert_eq!(preset("pancake2d_fcm_tw").unwrap().formulation.voltage_order, 3);
        assert!(preset("nope").is_err());
    }

    #[test]
    fn missing_key_is_named() {
        let text = preset("pancake2d_fcm_hphi").unwrap().to_toml().unwrap();
        let cut: String = text.lines().filter(|l| !l.starts_with("frequency")).map(|l| format!("{l}\n")).collect();
        let err = RunConfig::from_toml(&cut).unwrap_err().to_string();
        assert!(err.contains("excitation.frequency"), "{err}");
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let mut text = preset("pancake2d_fcm_hphi").unwrap().to_toml().unwrap();
        text = text.replacen("[mesh]\n", "[mesh]\nn_gamma = 3\n", 1);
        let err = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("n_gamma"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn sweep_parameters() {
        let mut cfg = preset("pancake2d_ref").unwrap();
        cfg.set_parameter("n_turns", 30.0).unwrap();
        assert_eq!(cfg.mesh.n_alpha, 30);
        cfg.set_parameter("rho0", 1e-2).unwrap();
        assert_eq!(cfg.materials.rho0, 1e-2);
        assert!(cfg.set_parameter("n_alpha", 2.5).is_err());
        assert!(cfg.set_parameter("colour", 1.0).is_err());

        let mut fcm = preset("pancake2d_fcm_tw").unwrap();
        fcm.set_parameter("n_alpha", 3.0).unwrap();
        assert!(fcm.validate().is_err());
        fcm.set_parameter("voltage_order", 2.0).unwrap();
        assert!(fcm.validate().is_ok());
    }
}
