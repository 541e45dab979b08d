use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("mask has no interior cell")]
    EmptyShape,
    #[error("mask has {0} 4-connected components")]
    MultipleComponents(usize),
    #[error("mask has {0} hole(s)")]
    HasHoles(usize),
    #[error("diffusion did not converge: {0}")]
    NonConvergence(String),
    #[error("no symmetry branch survived pruning")]
    DegenerateSkeleton,
    #[error("no negative branch adjacent to branch {0}")]
    NoNeighbors(usize),
    #[error("need two negative major branches, found {0}")]
    NoMajorNegative(usize),
    #[error("section basis is singular (det {0:e})")]
    SingularBasis(f64),
    #[error("branch {0} has no section quad")]
    MissingQuad(usize),
    #[error("degenerate landmark set: {0}")]
    DegenerateSet(String),
    #[error("singular spline system: {0}")]
    SingularSystem(String),
    #[error("no shapes found in {}", .0.display())]
    NoShapes(PathBuf),
    #[error("entry {0} has no category label")]
    UnlabeledEntry(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than a defect or I/O failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
