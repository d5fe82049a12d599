use thiserror::Error;

use crate::mesh::ElementId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid macro mesh: {0}")]
    InvalidMacroMesh(String),

    #[error("element {0} is not a leaf of the mesh")]
    UnknownElement(ElementId),

    #[error("meshes are not derived from the same macro mesh")]
    MacroMismatch,

    #[error("refinement depth limit ({0} levels) exceeded")]
    DepthLimit(u8),

    #[error("point {x} lies outside the domain [{a}, {b}]")]
    OutsideDomain { x: f64, a: f64, b: f64 },

    #[error("invalid spline space: {0}")]
    InvalidSpace(String),

    #[error("coefficient length {got} does not match space dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is singular to working precision at pivot {pivot}")]
    Singular { pivot: usize },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("estimator steps supplied out of order: step {got} after step {last}")]
    OutOfOrder { last: usize, got: usize },

    #[error("time step {k:e} fell below the floor {k_min:e} at t = {t}")]
    StepUnderflow { k: f64, k_min: f64, t: f64 },

    #[error("adaptive loop exceeded {iters} iterations at t = {t} (zeta_T = {zeta_t:e}, zeta_S = {zeta_s:e})")]
    MaxIterations {
        iters: usize,
        t: f64,
        zeta_t: f64,
        zeta_s: f64,
    },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("nonpositive value {0} in EOC series")]
    NonPositive(f64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
