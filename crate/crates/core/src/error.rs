use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label index {index} out of range for {classes} classes")]
    LabelOutOfRange { index: usize, classes: usize },

    #[error("empty corpus: no label statistics can be computed")]
    EmptyCorpus,

    #[error("missing tokens in embedding file: {0:?}")]
    MissingToken(Vec<String>),

    #[error("format error: {0}")]
    Format(String),

    #[error("unknown node {0} in differentiation graph")]
    UnknownNode(usize),

    #[error("embedding dimension mismatch: semantic width {semantic} vs insertion stage {stage}")]
    DimensionMismatch { semantic: usize, stage: usize },

    #[error("label {0:?} has no instances in the synthetic spec")]
    UnusedLabel(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("empty {0} split")]
    EmptySplit(&'static str),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }
}
