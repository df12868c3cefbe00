use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("too few points in cell: {got} < {min}")]
    TooFewPoints { got: usize, min: usize },
    #[error("singular system in GP solve (NaN input?)")]
    SingularSystem,
    #[error("degenerate face (collinear vertices)")]
    DegenerateFace,
    #[error("vertex has no valid incident face")]
    NoValidFace,
    #[error("no overlap between scan and map")]
    NoOverlap,
    #[error("degenerate registration problem: {0}")]
    DegenerateProblem(String),
    #[error("layer grid mismatch: {0}")]
    GridMismatch(String),
    #[error("trajectory mismatch: {0}")]
    TrajectoryMismatch(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
