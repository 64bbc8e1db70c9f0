use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular kinetics: {0}")]
    SingularKinetics(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("transfer function evaluation overflowed at s = {0}")]
    TfEvaluation(Complex64),

    #[error("moment extraction disagrees: {0}")]
    Precision(String),

    #[error("infeasible reduction: beta_e = {beta} from moments {moments:?}")]
    InfeasibleReduction { beta: f64, moments: [f64; 3] },

    #[error("configuration enumeration for {0} cells exceeds the 20-cell limit")]
    Size(usize),

    #[error("current solver did not converge for cells {first}..={last}: residual {residual:e} after {iterations} iterations")]
    Solver {
        first: usize,
        last: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("covariance still indefinite after jitter {jitter:e}")]
    CovarianceCollapse { jitter: f64 },

    #[error("innovation covariance is singular; consider a larger measurement noise")]
    SingularInnovation,

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("calibration failed: no candidate satisfied the consistency bound (best margin {best_margin:e} at alpha {best_alpha})")]
    Calibration { best_alpha: f64, best_margin: f64 },

    #[error("filter diverged: {0}")]
    Divergence(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// True for input/validation problems, false for numerical failures.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation(_)
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Parameter(_)
            | Error::Size(_)
            | Error::Protocol(_) => true,
            Error::AtStep { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
