use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty training data")]
    EmptyData,
    #[error("non-finite input")]
    NonFinite,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: String,
    },
    #[error("cannot split {m} trajectories into {k} subsets")]
    InvalidSplit { k: usize, m: usize },
    #[error("degenerate action range in dimension {0}")]
    DegenerateActionRange(usize),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("monte-carlo targets need complete trajectories; trajectory {0} is truncated")]
    TruncatedTrajectory(u32),
    #[error("cosine distance undefined for a zero vector")]
    CosineUndefined,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample has zero variance")]
    ZeroVariance,
    #[error("fingerprints belong to different trajectories ({0} vs {1})")]
    MixedTrajectories(u32, u32),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
