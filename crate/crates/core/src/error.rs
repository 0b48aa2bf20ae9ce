use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("matrix market parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported matrix market header: {0}")]
    UnsupportedFormat(String),

    #[error("index ({row}, {col}) out of bounds for a {n}x{n} matrix")]
    IndexOutOfBounds { row: usize, col: usize, n: usize },

    #[error("row {0} has a missing or zero diagonal entry")]
    SingularDiagonal(usize),

    #[error("invalid matrix structure: {0}")]
    InvalidStructure(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("not a permutation: {0}")]
    InvalidPermutation(String),

    #[error("permutation is not topological: entry ({row}, {col}) lands above the diagonal")]
    NotLowerTriangular { row: usize, col: usize },

    #[error("graph contains a cycle through {} vertices", .0.len())]
    Cycle(Vec<usize>),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
