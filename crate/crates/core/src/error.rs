use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("ill-conditioned moment: eigenvalue {index} has magnitude {magnitude:.3e}, below floor {floor:.3e}")]
    IllConditionedMoment {
        index: usize,
        magnitude: f64,
        floor: f64,
    },

    #[error("degenerate power iterate: |T(I,v,v)| = {norm:.3e}")]
    DegenerateIterate { norm: f64 },

    #[error("degenerate coefficient {value:.3e} for component {index}")]
    DegenerateCoefficient { index: usize, value: f64 },

    #[error("component {index}: {source}")]
    Component {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate dimension: {0}")]
    DegenerateDimension(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular design matrix at lambda = {lambda}; use a positive ridge penalty")]
    SingularDesign { lambda: f64 },

    #[error("moment accumulator is empty")]
    EmptyAccumulator,

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Training stages, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Moments,
    Decomposition,
    Fourier,
    Regression,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Moments => "moments",
            Stage::Decomposition => "decomposition",
            Stage::Fourier => "fourier",
            Stage::Regression => "regression",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl Error {
    pub fn at(self, stage: Stage) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Stage of a stage-labelled error.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
