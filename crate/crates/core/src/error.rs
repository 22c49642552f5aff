use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A row handed to batch normalization has (near) zero norm.
    #[error("degenerate row {row}: norm {norm:e} is below 1e-12")]
    DegenerateRow { row: usize, norm: f64 },

    #[error("column {col} is zero")]
    ZeroColumn { col: usize },

    #[error("matrix is zero")]
    ZeroMatrix,

    #[error("expected unit Frobenius norm, got {norm}")]
    NotUnitNorm { norm: f64 },

    #[error("singular value decomposition did not converge after {sweeps} sweeps")]
    SvdConvergence { sweeps: usize },

    #[error("effective rank {rank} is below the required {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("adaptive quadrature did not reach tolerance {tol:e} (estimate {estimate:e})")]
    Quadrature { tol: f64, estimate: f64 },

    #[error("chain of {len} layers is too short: need at least {required}")]
    ChainTooShort { len: usize, required: usize },

    #[error("layer {layer}: {source}")]
    Layer { layer: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn at_layer(self, layer: usize) -> Self {
        Error::Layer { layer, source: Box::new(self) }
    }
}
