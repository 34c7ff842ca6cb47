use thiserror::Error;

pub type Result<T> = std::result::Result<T, NtkError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NtkError {
    /// Rejected network or sweep configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("layer index {layer} out of range 1..={max}")]
    LayerIndex { layer: usize, max: usize },

    /// Input outside the domain of a closed-form expression.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular kernel system (condition estimate {condition:e}); enable jitter to regularize")]
    Singular { condition: f64 },

    /// A pseudo-network row whose masked activation norm is zero.
    #[error("degenerate mask: layer {layer}, row {row} has zero masked activation norm")]
    DegenerateMask { layer: usize, row: usize },

    #[error("keep-probability {alpha} needs width {width}, above the limit of {limit}")]
    Resource {
        alpha: f64,
        width: usize,
        limit: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl NtkError {
    /// True for errors produced by numerical evaluation rather than bad arguments.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            NtkError::Domain(_) | NtkError::Singular { .. } | NtkError::DegenerateMask { .. }
        )
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(NtkError::Shape {
            context,
            expected,
            found,
        })
    }
}
