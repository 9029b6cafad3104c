//! Glue from a run configuration to a finished simulation.

use std::path::Path;

use serde::Serialize;

use crate::config::{RunConfig, PRESET_VERSION};
use crate::error::Result;
use crate::formulation::{Discretization, Excitation};
use crate::geometry::{build_geometry, mesh_structured, CoilGeometry};
use crate::materials::{JcModel, MaterialParams};
use crate::postprocess::{self, LossSeries};
use crate::scalar::Real;
use crate::solver::{run_transient, SolutionTrace, SolverConfig};
use crate::spaces::{build_dof_layout, build_voltage_basis};

/// Scalar-generic copy of the physical parameters of a config.
fn convert_geometry<T: Real>(g: &CoilGeometry<f64>) -> CoilGeometry<T> {
    CoilGeometry {
        inner_radius: T::lit(g.inner_radius),
        n_turns: g.n_turns,
        cc_thickness: T::lit(g.cc_thickness),
        cc_width: T::lit(g.cc_width),
        air_radius_factor: T::lit(g.air_radius_factor),
        homogenized: g.homogenized,
    }
}

fn convert_materials<T: Real>(m: &MaterialParams<f64>) -> MaterialParams<T> {
    MaterialParams {
        e_c: T::lit(m.e_c),
        n_exponent: T::lit(m.n_exponent),
        lambda_fill: T::lit(m.lambda_fill),
        rho_spurious_air: T::lit(m.rho_spurious_air),
        rho_spurious_alpha: T::lit(m.rho_spurious_alpha),
        jc_model: match m.jc_model {
            JcModel::Constant { jc } => JcModel::Constant { jc: T::lit(jc) },
            JcModel::Kim { jc0, b0 } => JcModel::Kim { jc0: T::lit(jc0), b0: T::lit(b0) },
        },
    }
}

pub fn solver_config<T: Real>(c: &SolverConfig<f64>) -> SolverConfig<T> {
    SolverConfig {
        newton_tol_rel: T::lit(c.newton_tol_rel),
        newton_tol_abs: T::lit(c.newton_tol_abs),
        max_newton_iters: c.max_newton_iters,
        dt_init: T::lit(c.dt_init),
        dt_min: T::lit(c.dt_min),
        dt_max: T::lit(c.dt_max),
        periods: T::lit(c.periods),
        damping: T::lit(c.damping),
    }
}

/// Geometry, mesh, DoF layout and assembly data for a config.
pub fn discretize<T: Real>(cfg: &RunConfig) -> Result<Discretization<T>> {
    cfg.validate()?;
    let geom = build_geometry(&convert_geometry::<T>(&cfg.coil_geometry()))?;
    let mesh = mesh_structured(&geom, cfg.mesh.n_alpha, cfg.mesh.n_beta, T::lit(cfg.mesh.grading))?;
    let variant = cfg.formulation.variant;
    let layout = build_dof_layout(&mesh, variant, cfg.formulation.voltage_order)?;
    let vb = if variant.is_fcm() { Some(build_voltage_basis(cfg.formulation.voltage_order as i64)?) } else { None };
    let excitation = Excitation { amplitude: T::lit(cfg.excitation.amplitude), frequency: T::lit(cfg.excitation.frequency) };
    Discretization::new(mesh, layout, convert_materials(&cfg.material_params()), excitation, vb)
}

/// Runs the transient simulation of a config.
pub fn simulate<T: Real>(cfg: &RunConfig) -> Result<(Discretization<T>, SolutionTrace<T>)> {
    let disc = discretize::<T>(cfg)?;
    let trace = run_transient(&disc, &solver_config(&cfg.solver), false)?;
    Ok((disc, trace))
}

/// Machine-readable summary of a finished run.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub preset_version: u32,
    pub variant: String,
    pub n_dofs: usize,
    pub n_edge_dofs: usize,
    pub n_nodal_dofs: usize,
    pub n_cut_dofs: usize,
    pub n_voltage_dofs: usize,
    pub n_turns: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
    pub steps: usize,
    pub linsys_count: usize,
    pub rejected_steps: usize,
    pub wall_seconds: f64,
    pub mean_losses: f64,
    pub peak_losses: f64,
    pub max_j_ratio: f64,
    pub max_ampere_error: f64,
    pub max_slice_error: f64,
    pub frequency: f64,
    pub amplitude: f64,
}

pub struct RunOutput {
    pub config: RunConfig,
    pub disc: Discretization<f64>,
    pub trace: SolutionTrace<f64>,
    pub summary: RunSummary,
}

impl RunOutput {
    pub fn series(&self) -> LossSeries<f64> {
        LossSeries::from_trace(&self.trace, &self.disc)
    }
}

pub fn summarize(cfg: &RunConfig, disc: &Discretization<f64>, trace: &SolutionTrace<f64>) -> Result<RunSummary> {
    let series = LossSeries::from_trace(trace, disc);
    let l = &disc.layout;
    let n_turns = disc.n_turns() as f64;
    let amp = cfg.excitation.amplitude.abs().max(f64::MIN_POSITIVE);
    let mut max_ampere = 0.0f64;
    let mut max_slice = 0.0f64;
    for k in 0..trace.len() {
        let it = trace.currents[k];
        max_ampere = max_ampere.max((trace.circulation[k] - n_turns * it).abs() / (n_turns * amp));
        for &s in &trace.slice_currents[k] {
            max_slice = max_slice.max((s - it).abs() / amp);
        }
    }
    Ok(RunSummary {
        preset_version: PRESET_VERSION,
        variant: disc.variant().to_string(),
        n_dofs: l.n_dofs(),
        n_edge_dofs: l.n_edge_dofs,
        n_nodal_dofs: l.n_nodal_dofs,
        n_cut_dofs: l.n_cut_dofs,
        n_voltage_dofs: l.n_voltage_dofs,
        n_turns: disc.n_turns(),
        n_alpha: disc.mesh.n_alpha(),
        n_beta: disc.mesh.n_beta(),
        steps: trace.len().saturating_sub(1),
        linsys_count: trace.linsys_count,
        rejected_steps: trace.rejected_steps,
        wall_seconds: trace.wall_seconds,
        mean_losses: postprocess::mean_losses(&series)?,
        peak_losses: trace.losses.iter().copied().fold(0.0, f64::max),
        max_j_ratio: trace.max_j_ratio.iter().copied().fold(0.0, f64::max),
        max_ampere_error: max_ampere,
        max_slice_error: max_slice,
        frequency: cfg.excitation.frequency,
        amplitude: cfg.excitation.amplitude,
    })
}

/// Runs a config in double precision and summarizes it.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let (disc, trace) = simulate::<f64>(cfg)?;
    let summary = summarize(cfg, &disc, &trace)?;
    Ok(RunOutput { config: cfg.clone(), disc, trace, summary })
}

/// Writes the trace CSVs, the effective config and the VTK snapshot.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    postprocess::write_trace_csv(&dir.join("trace.csv"), &out.trace)?;
    postprocess::write_slice_csv(&dir.join("slices.csv"), &out.trace)?;
    postprocess::write_text(&dir.join("config.toml"), &out.config.to_toml()?)?;
    if out.config.output.vtk {
        if let Some((t, u)) = &out.trace.peak_snapshot {
            let title = format!("{} t={t:e}", out.disc.variant());
            postprocess::write_vtk_snapshot(&dir.join("peak.vtk"), &out.disc, u, &title)?;
        }
    }
    Ok(())
}
