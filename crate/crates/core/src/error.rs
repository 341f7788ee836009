use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] mixerbench_tensor::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input to {op}: {detail}")]
    Invalid { op: &'static str, detail: String },

    #[error("non-finite loss {value} at step {step}")]
    NonFiniteLoss { step: usize, value: f64 },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid {
            op,
            detail: detail.into(),
        }
    }

    pub fn config(detail: impl Into<String>) -> Self {
        Error::Config(detail.into())
    }

    pub fn is_out_of_memory(&self) -> bool {
        matches!(self, Error::Tensor(e) if e.is_out_of_memory())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
