use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("missing column `{0}` in the history at this stage")]
    MissingColumn(String),

    #[error("invalid specification: {0}")]
    Specification(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rank-deficient design: column(s) {columns:?} are linearly dependent on the others")]
    RankDeficient { columns: Vec<String> },

    #[error(
        "logistic model shows (quasi-)complete separation ({detail}); \
         revise the treatment model, e.g. drop or coarsen the offending terms"
    )]
    Separation { detail: String },

    #[error("positivity violation: {0}")]
    Positivity(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("empty tailoring cell {0}")]
    EmptyCell(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("inference failed: {0}")]
    Inference(String),

    #[error("m-out-of-n tuning failed: {0}")]
    Tuning(String),
}

impl Error {
    pub(crate) fn at_stage(self, stage: usize) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the statistical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::RankDeficient { .. }
                | Error::Separation { .. }
                | Error::Positivity(_)
                | Error::EmptyCell(_)
                | Error::Inference(_)
                | Error::Tuning(_)
        )
    }
}
