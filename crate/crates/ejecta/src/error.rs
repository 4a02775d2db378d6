//! Error type shared by all solver modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("degenerate cell: area {area:e} below threshold")]
    DegenerateCell { area: f64 },

    #[error("edge between vertices {v0} and {v1} referenced by more than two cells or with inconsistent orientation")]
    NonManifoldEdge { v0: usize, v1: usize },

    #[error("vertex {vertex} is not referenced by any cell")]
    DanglingVertex { vertex: usize },

    #[error("mesh motion tangled cell {cell} (area {area:e})")]
    TangledMesh { cell: usize, area: f64 },

    #[error("non-physical state: {detail}")]
    NonPhysicalState { detail: String },

    #[error("degenerate wave fan: {detail}")]
    DegenerateFan { detail: String },

    #[error("singular nodal matrix at vertex {vertex}")]
    SingularNodalMatrix { vertex: usize },

    #[error("zero gas viscosity is incompatible with the Reynolds-number drag path")]
    ZeroViscosity,

    #[error("lost particle: {detail}")]
    LostParticle { detail: String },

    #[error("iteration failed to converge: {what}")]
    NoConvergence { what: String },

    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub fn validation(key: &str, message: impl Into<String>) -> Self {
        SimError::Validation { key: key.to_string(), message: message.into() }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        SimError::Io { path: path.into(), source }
    }
}

pub type SimResult<T> = Result<T, SimError>;
