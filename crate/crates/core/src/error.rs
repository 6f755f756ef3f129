use std::path::PathBuf;

/// Errors raised anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("graph must have at least one node")]
    EmptyGraph,
    #[error("node index {index} out of range for n = {n}")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("generated graph has no edges")]
    NoEdges,
    #[error("graph is still disconnected after {attempts} attempts")]
    Disconnected { attempts: usize },
    #[error("homophily needs at least two classes, found {0}")]
    SingleClass(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("empty index set passed to {0}")]
    EmptyIndexSet(&'static str),

    #[error("node {0} is isolated; FAGCN normalization divides by its degree")]
    IsolatedNode(usize),
    #[error("unknown model kind `{0}`")]
    UnknownKind(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),

    #[error("layer index {k} out of range 0..={k_max}")]
    LayerOutOfRange { k: usize, k_max: usize },
    #[error("graph has {n} nodes, above the dense diagnostics cap of {cap}")]
    OverCap { n: usize, cap: usize },
    #[error("smoothness needs at least two rows, got {0}")]
    TooFewRows(usize),
    #[error("walk enumeration budget of {0} exceeded")]
    BudgetExceeded(usize),
    #[error("walks of different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no coordinate distinguishes any two nodes; hop attention cannot separate them")]
    NoDistinguishingCoordinate,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("dimension mismatch in dataset: {0}")]
    DimensionMismatch(String),
    #[error("label {label} at node {node} is outside [0, {d_c})")]
    LabelOutOfRange { node: usize, label: usize, d_c: usize },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
