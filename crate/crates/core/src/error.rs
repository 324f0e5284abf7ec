use thiserror::Error;

/// Errors raised by the probability engine, the measure tools and the
/// selection procedures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("space mismatch")]
    SpaceMismatch,

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("horizon {requested} exceeds path length {available}")]
    HorizonTooLong { requested: usize, available: usize },

    #[error("grid insufficient: need a multiple of {required} cells, got {grid}")]
    GridInsufficient { required: u64, grid: u64 },

    #[error("space budget exceeded: realization needs {required} atoms, budget is {budget}")]
    BudgetExceeded { required: u128, budget: usize },

    #[error("weak-nullity exhausted at stage {stage}")]
    WeakNullityExhausted { stage: usize },

    #[error("Egorov budget exceeded: exceptional mass {mass} above {budget}")]
    EgorovBudgetExceeded { mass: f64, budget: f64 },

    #[error("overlapping supports: spikes {first} and {second} share an atom")]
    OverlappingSupports { first: usize, second: usize },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("unattainable bounds: {0}")]
    Unattainable(String),

    #[error("block {block} has zero mass")]
    ZeroMassBlock { block: usize },

    #[error("negative sample {value} at position {index}")]
    NegativeSample { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
}

pub type Result<T> = std::result::Result<T, Error>;
