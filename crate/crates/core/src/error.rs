use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid chain parameter {name}={value}: {reason}")]
    InvalidChain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// Two or more streams agree on their first `max_depth` bits.
    #[error("streams {indices:?} agree on their first {max_depth} bits{}", replicate_suffix(*.replicate))]
    DepthExceeded {
        indices: Vec<usize>,
        max_depth: usize,
        replicate: Option<usize>,
    },

    #[error("the symmetric Bernoulli chain (all p_ij = 1/2) is excluded: sigma^2 = 0")]
    SymmetricChain,

    #[error("exponent s={0} outside (2, 3]")]
    BadExponent(f64),

    #[error("horizon {requested} exceeds the configured budget {budget}")]
    HorizonTooLarge { requested: usize, budget: usize },

    #[error("evaluation needs moments up to n={needed}, table horizon is {horizon}")]
    HorizonTooSmall { needed: usize, horizon: usize },

    #[error("scale must be positive and finite, got {0}")]
    BadScale(f64),

    #[error("empirical cloud is empty")]
    EmptyCloud,

    #[error("least-squares design is rank deficient ({points} points)")]
    SingularFit { points: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn replicate_suffix(replicate: Option<usize>) -> String {
    match replicate {
        Some(r) => format!(" (replicate {r})"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a replicate index to a `DepthExceeded` error.
    pub fn in_replicate(self, r: usize) -> Self {
        match self {
            Error::DepthExceeded {
                indices, max_depth, ..
            } => Error::DepthExceeded {
                indices,
                max_depth,
                replicate: Some(r),
            },
            other => other,
        }
    }
}
