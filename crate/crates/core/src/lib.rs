//! Axisymmetric finite element models of AC losses in insulated HTS pancake
//! coils: a detailed h-φ model resolving every turn, and the foil conductor
//! model in h-full, h-φ and t-ω discretizations.

pub mod config;
pub mod error;
pub mod formulation;
pub mod geometry;
pub mod linalg;
pub mod materials;
pub mod postprocess;
pub mod scalar;
pub mod solver;
pub mod spaces;
pub mod study;
pub mod vtk;

pub use error::{Error, Result};
pub use formulation::{Discretization, Excitation, FormulationVariant};
pub use geometry::{CoilGeometry, Mesh};
pub use materials::{JcModel, MaterialParams};
pub use scalar::Real;
pub use spaces::{DofLayout, VoltageBasis};
pub use solver::{SolutionTrace, SolverConfig};

pub type Mesh64 = Mesh<f64>;
pub type Mesh32 = Mesh<f32>;
pub type DofLayout64 = DofLayout<f64>;
pub type DofLayout32 = DofLayout<f32>;
pub type Discretization64 = Discretization<f64>;
pub type Discretization32 = Discretization<f32>;
pub type MaterialParams64 = MaterialParams<f64>;
pub type SolutionTrace64 = SolutionTrace<f64>;
pub type SolutionTrace32 = SolutionTrace<f32>;
