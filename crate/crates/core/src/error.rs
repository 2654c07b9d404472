use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Jacobian determinant `cos(theta)` within the singular threshold.
    #[error("singular Euler-angle pose (cos theta = {cos_theta:e})")]
    SingularPose { cos_theta: f64 },

    /// The obstacle function fell to (or below) the positivity floor, so the
    /// potential is undefined.
    #[error("agent {agent}: potential blow-up (beta = {beta:e}, nu = {nu})")]
    PotentialBlowUp { agent: usize, beta: f64, nu: f64 },

    #[error("inertia matrix is not positive definite for agent {agent}")]
    NotPositiveDefinite { agent: usize },

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("scenario failed validation:\n{0}")]
    Invalid(ValidationReport),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
