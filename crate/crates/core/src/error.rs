use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },

    #[error("line {line}: branch target {label} is not defined in the listing")]
    UnresolvedLabel { label: String, line: usize },

    #[error("unknown instruction class {0:?}")]
    UnknownClass(String),

    #[error("profile line {line}: {reason}")]
    Profile { line: usize, reason: String },

    #[error("profile is for kernel {profile} but the graph is {cfg}")]
    KernelMismatch { cfg: String, profile: String },

    #[error("graph has no basic blocks")]
    EmptyGraph,

    #[error("interpolation target {target} is smaller than source dimension {source_n}")]
    BadTarget { source_n: usize, target: usize },

    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),

    #[error("Minkowski order must be >= 1, got {0}")]
    BadOrder(f64),

    #[error("IsoRank damping must lie in [0, 1), got {0}")]
    BadAlpha(f64),

    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),

    #[error("execution time must be positive, got {0} ns")]
    BadTime(i64),

    #[error("cluster count {k} out of range 1..={n}")]
    BadK { k: usize, n: usize },

    #[error("duplicate kernel id {0}")]
    DuplicateKernel(String),

    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::InFile {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
