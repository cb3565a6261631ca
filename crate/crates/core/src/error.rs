use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid dataset: {0}")]
    Data(String),

    #[error("row subset is empty")]
    EmptySubset,

    #[error("row index {row} out of range for {n} rows")]
    RowOutOfRange { row: usize, n: usize },

    #[error("invalid missingness spec: {0}")]
    MissingSpec(String),

    #[error("feature `{feature}` already has missing cells")]
    AlreadyMissing { feature: String },

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("window {index} out of range for a plan of {count} windows")]
    WindowOutOfRange { index: usize, count: usize },

    #[error("mask vector marks the CLS token as missing")]
    ClsMasked,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("feature `{0}` is not registered in the model")]
    UnregisteredFeature(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("labels contain a single class")]
    SingleClass,

    #[error("class {class} has {count} rows, fewer than {folds} folds")]
    TooFewForFolds {
        class: usize,
        count: usize,
        folds: usize,
    },

    #[error("incomplete result grid: {0}")]
    IncompleteGrid(String),

    #[error("missing reference result: {0}")]
    MissingReference(String),
}
