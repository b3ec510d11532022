use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch on axis {axis}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{op}: expected rank {expected}, got shape {got:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        got: Vec<usize>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Value(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite loss {loss} at step {step} (sample {sample})")]
    NonFinite { step: usize, sample: usize, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
