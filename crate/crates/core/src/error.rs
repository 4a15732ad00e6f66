use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix of odd dimension {0} has no Pfaffian")]
    OddDimension(usize),

    #[error("matrix is not skew-symmetric (defect {0:.3e})")]
    NotSkew(f64),

    #[error("matrix is not symmetric (defect {0:.3e})")]
    NotSymmetric(f64),

    #[error("degenerate form: |det J_mu| = {det:.3e} below tolerance")]
    DegenerateForm { det: f64 },

    #[error("degenerate generator: |det S| = {det:.3e}")]
    DegenerateGenerator { det: f64 },

    #[error("time {t} outside the kernel domain (kappa = {kappa})")]
    OutsideDomain { t: f64, kappa: f64 },

    #[error("sinh is singular: coth undefined")]
    SingularSinh,

    #[error("matrix logarithm undefined: eigenvalue {0} on the branch cut")]
    BranchFailure(String),

    #[error("square-root branch tracking failed: {0}")]
    BranchTrackingFailed(String),

    #[error("damped composition did not stabilise (spread {spread:.3e})")]
    NonConvergent { spread: f64 },

    #[error("coordinate identity failed: {0}")]
    IdentityCheck(String),

    #[error("linear substitution is not invertible")]
    NonInvertibleMap,

    #[error("grids differ")]
    GridMismatch,

    #[error("grid has {nodes} nodes, above the cap of {cap}")]
    CapExceeded { nodes: usize, cap: usize },

    #[error("delta * a = {0} >= 1: the lifted envelope is undefined, shrink delta")]
    EnvelopeTransfer(f64),

    #[error("empty mu-grid")]
    EmptyMuGrid,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("slice mu = {mu:?}: {source}")]
    Slice {
        mu: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
