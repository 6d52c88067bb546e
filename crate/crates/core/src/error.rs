use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: self-loop on node {node}")]
    SelfLoop { line: usize, node: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("community {0} is empty")]
    EmptyCommunity(usize),

    #[error("membership has {labels} labels but graph has {nodes} nodes")]
    LengthMismatch { labels: usize, nodes: usize },

    #[error("community {0} has a single node; within-block probability undefined")]
    SingletonBlock(usize),

    #[error("augmentation infeasible: {0}")]
    AugmentationInfeasible(String),

    #[error("graph empty; B undefined")]
    EmptyGraph,

    #[error("eigensolver did not converge after {iterations} iterations (max residual {residual:e})")]
    EigenNoConvergence { iterations: usize, residual: f64 },

    #[error("k-means left a cluster empty after {0} restarts")]
    KMeansEmptyCluster(usize),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("Gumbel fit did not converge after {iterations} iterations (residual {residual:e})")]
    GumbelNoConvergence { iterations: usize, residual: f64 },

    /// The bootstrap statistics could not be fitted; they are kept for inspection.
    #[error("bootstrap Gumbel fit failed: {source}")]
    BootstrapFit {
        statistics: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("disparity is not well defined: {0}")]
    DisparityAmbiguous(String),

    #[error("replicate {replicate} of cell (K0={k0}, K={k}) failed: {source}")]
    Replicate {
        k0: usize,
        k: usize,
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
