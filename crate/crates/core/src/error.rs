use thiserror::Error;

pub type Result<T> = std::result::Result<T, FormationError>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FormationError {
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("transform is singular (inverse residual {residual:.3e})")]
    SingularTransform { residual: f64 },

    #[error("closed-form inverse is degenerate: {which} has magnitude {magnitude:.3e}")]
    DegenerateTransform { which: &'static str, magnitude: f64 },

    #[error("leading principal minor {index} has magnitude {magnitude:.3e}, below the stabilizability threshold")]
    NonstabilizableMinor { index: usize, magnitude: f64 },

    #[error("no candidate gain placed the spectrum in the required half-plane at step {step} (best margin {best_margin:.3e})")]
    SearchExhausted { step: usize, best_margin: f64 },

    #[error("partitioned block is singular (|det| = {magnitude:.3e})")]
    SingularBlock { magnitude: f64 },

    #[error("stability condition is degenerate for sigma = {re} + {im}i")]
    DegenerateCondition { re: f64, im: f64 },

    #[error("agents coincide (distance {distance:.3e})")]
    CoincidentAgents { distance: f64 },

    #[error("distance {distance} sits on the avoidance radius where the potential is unbounded")]
    SingularBand { distance: f64 },

    #[error("agents {i} and {j}: {source}")]
    Pair {
        i: usize,
        j: usize,
        #[source]
        source: Box<FormationError>,
    },

    #[error("eigenvalue iteration did not converge for a {dim}x{dim} matrix")]
    EigenNoConvergence { dim: usize },

    #[error("state component {component} blew up to {magnitude:.3e}")]
    NumericalBlowup { component: usize, magnitude: f64 },

    #[error("at t = {t}: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<FormationError>,
    },
}

impl FormationError {
    /// Strips `Pair` / `AtTime` wrappers.
    pub fn root(&self) -> &FormationError {
        match self {
            FormationError::Pair { source, .. } | FormationError::AtTime { source, .. } => {
                source.root()
            }
            other => other,
        }
    }

    pub(crate) fn at(self, t: f64) -> Self {
        FormationError::AtTime {
            t,
            source: Box::new(self),
        }
    }
}
