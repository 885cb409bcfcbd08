use thiserror::Error;

pub type Result<T, E = PuclError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PuclError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("need at least k = {k} reference points, found {available}")]
    InsufficientNeighbors { k: usize, available: usize },

    #[error("classifier training diverged at epoch {epoch} (loss = {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("rollout with start index {0} has no paired demonstration")]
    UnpairedRollout(usize),

    #[error(
        "expert failed to produce an acceptable demonstration after {attempts} attempts: {reason}"
    )]
    ExpertExhausted { attempts: usize, reason: String },

    #[error("metric `{0}` is undefined on this evaluation set")]
    MissingMetric(&'static str),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<PuclError>,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl PuclError {
    pub fn at_iteration(self, iteration: usize) -> Self {
        PuclError::Iteration {
            iteration,
            source: Box::new(self),
        }
    }
}

pub(crate) fn ensure_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(PuclError::DimensionMismatch { expected, found })
    }
}
