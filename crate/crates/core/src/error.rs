use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Error, Debug)]
pub enum Error {
    /// Paired contraction modes disagree in length.
    #[error("dimension mismatch: mode {a_mode} of A has length {a_len}, mode {b_mode} of B has length {b_len}")]
    Dimension {
        a_mode: usize,
        b_mode: usize,
        a_len: usize,
        b_len: usize,
    },

    #[error("size mismatch for {what}: expected {expected}, got {actual}")]
    Size {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("index error: {0}")]
    Index(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("oracle too large: {entries} dense entries exceeds cap {cap}")]
    OracleTooLarge { entries: u128, cap: u128 },

    #[error("training error in parameter block '{block}': {message}")]
    Training { block: String, message: String },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Failures while decoding a model or checkpoint stream.
#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("bad magic bytes: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error("stream truncated while reading {what}")]
    Truncated { what: &'static str },

    #[error("shape inconsistency: {0}")]
    ShapeInconsistent(String),
}

impl Error {
    /// Short stable name used in single-line command errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Size { .. } => "size",
            Error::Index(_) => "index",
            Error::Config(_) => "config",
            Error::Argument(_) => "argument",
            Error::OracleTooLarge { .. } => "oracle-too-large",
            Error::Training { .. } => "training",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }

    /// `1` for rejected input, `2` for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) | Error::OracleTooLarge { .. } => 1,
            _ => 2,
        }
    }
}
