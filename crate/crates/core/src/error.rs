use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} index {index} out of range (bound {bound})")]
    Index {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// A shard reported a zero posterior SD for an item that must be
    /// precision-weighted against other shards.
    #[error(
        "degenerate precision for item {item} in shard {shard}: posterior sd is zero; \
         increase the number of stored draws"
    )]
    DegeneratePrecision { item: usize, shard: usize },

    #[error("matrix factorization diverged at epoch {epoch} (objective {objective})")]
    Diverged { epoch: usize, objective: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
