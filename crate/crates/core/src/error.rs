use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("invalid dof layout: {0}")]
    Layout(String),
    #[error("invalid material parameters: {0}")]
    Material(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("matrix is singular or not positive definite (pivot {pivot} of {size})")]
    SingularMatrix { pivot: usize, size: usize },
    #[error("newton did not converge in {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("time step underflow at t = {t:.6e} s: dt = {dt:.3e} s below dt_min = {dt_min:.3e} s")]
    DtUnderflow { t: f64, dt: f64, dt_min: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
