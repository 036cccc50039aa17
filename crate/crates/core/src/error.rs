use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too coarse: h = {h} exceeds {limit}")]
    GridTooCoarse { h: f64, limit: f64 },

    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("inconsistent chain input: {0}")]
    InconsistentChain(String),

    #[error("chain start out of range: {0}")]
    ChainStartOutOfRange(String),

    #[error("drift too singular for layer split (tried up to {max_layers} layers)")]
    LayerSplitFailed { max_layers: usize },

    #[error("ellipticity violated: {0}")]
    EllipticityViolated(String),

    #[error("test family intersects singular set near {0:?}")]
    SingularTestSupport(Vec<f64>),

    #[error("inadmissible exponents: {0}")]
    InadmissibleExponents(String),

    #[error("empty region")]
    EmptyRegion,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value at {what} (node {node}, position {position:?})")]
    NonFinite {
        what: &'static str,
        node: usize,
        position: Vec<f64>,
    },

    #[error("monotone stencil unavailable at node {node}: axis weight {weight:e} < 0 (tensor not diagonally dominant)")]
    NotDiagonallyDominant { node: usize, weight: f64 },

    #[error(
        "linear solve did not converge in {iterations} iterations (relative residual {residual:e})"
    )]
    NoConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("time slab {slab}: {source}")]
    SlabSolve {
        slab: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("hypothesis never satisfied: {0}")]
    HypothesisNeverSatisfied(String),

    #[error("node budget exceeded: {nodes} nodes > budget {budget}")]
    NodeBudget { nodes: usize, budget: usize },

    #[error("rejected test function: {0}")]
    RejectedTestFunction(String),

    #[error("divergence certification failed: {0}")]
    DivergenceCertification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
