use alloc::string::String;
use alloc::vec::Vec;

/// Failures raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A state or derivative became NaN/Inf during integration.
    #[error("integration blow-up at t = {t}: state {state:?}")]
    IntegrationBlowup { t: f64, state: Vec<f64> },

    /// Invalid dimensions, gains or structural choices.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the model's domain (e.g. duty cycle outside (0,1)).
    #[error("domain error: {0}")]
    Domain(String),

    /// A mapping evaluated to a non-finite value.
    #[error("non-finite evaluation of {what} at {at:?}")]
    NonFinite { what: String, at: Vec<f64> },

    /// The rank condition on the manifold Jacobian failed.
    #[error("singular manifold Jacobian (rank {rank} < {required}) at y = {y:?}, chi = {chi:?}")]
    SingularManifold {
        rank: usize,
        required: usize,
        y: Vec<f64>,
        chi: Vec<f64>,
    },

    /// Division by a quantity that is too close to zero.
    #[error("division guard tripped: {0}")]
    DivisionGuard(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// `true` for failures that come from the numerics rather than from the setup.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IntegrationBlowup { .. }
                | Error::NonFinite { .. }
                | Error::SingularManifold { .. }
                | Error::DivisionGuard(_)
        )
    }
}
