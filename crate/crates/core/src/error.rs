use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("Grassmann configurations are incompatible")]
    ConfigMismatch,
    #[error("generator index {0} outside the configured algebra")]
    GeneratorOutOfRange(usize),
    #[error("no free Grassmann generators left for a fresh direction")]
    GeneratorsExhausted,
    #[error("grade mismatch: {0}")]
    GradeMismatch(String),
    #[error("derivative scheme `{scheme}` unsupported on axis {axis}")]
    SchemeUnsupported { scheme: String, axis: usize },
    #[error("dimension d = {0} unsupported (the boundary reduction needs d >= 2)")]
    DimensionUnsupported(usize),
    #[error("singular metric: {0}")]
    SingularMetric(String),
    #[error("normal jets required but unavailable: {0}")]
    MissingJets(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
