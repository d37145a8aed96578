use num_complex::Complex64;
use thiserror::Error;

/// Every failure mode of the solvers, the oracle and the I/O layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("evaluation point {z} lies on or too close to the spectral support")]
    PoleProximity { z: Complex64 },
    #[error("measure has no atoms and no absolutely continuous part")]
    EmptyMeasure,
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("Stieltjes inversion did not converge at x = {x} (extrapolation spread {spread:e})")]
    NonConvergedInversion { x: f64, spread: f64 },
    #[error("inverted density is negative at x = {x}: {value:e}")]
    NegativeDensity { x: f64, value: f64 },
    #[error("grid too coarse for the requested moment (estimated error {estimate:e})")]
    QuadratureAccuracy { estimate: f64 },
    #[error("no grid value exceeds the support threshold")]
    EmptySupport,
    #[error("leading polynomial coefficient vanishes")]
    DegenerateLeadingCoefficient,
    #[error("no root in the Herglotz half-plane at z = {z}")]
    BranchAmbiguity { z: Complex64 },
    #[error("Newton continuation stalled; last converged point z = {last_z}")]
    ContinuationStall { last_z: Complex64 },
    #[error("Newton derivative vanishes at z = {z}")]
    SingularJacobian { z: Complex64 },
    #[error("characteristic time coefficient vanishes at z = {z}")]
    CharacteristicDegenerate { z: Complex64 },
    #[error("characteristic diverged (|z| or |g| above 1e12) at beta = {beta}")]
    CharacteristicBlowup { beta: f64 },
    #[error("shooting did not reach z = {target} (remaining miss {miss:e})")]
    ShootingFailure { target: Complex64, miss: f64 },
    #[error("characteristics cross near z = {z}; the single-valued solution breaks down")]
    CausticEncountered { z: Complex64 },
    #[error("Raney parameters need 0 < r <= p and p > 1 (got p = {p}, r = {r})")]
    InvalidRaneyParams { p: u64, r: u64 },
    #[error("invalid initial data: {0}")]
    InvalidInitialData(String),
    #[error("atom weights do not round to integer multiplicities for dimension {n}")]
    AtomRoundingError { n: usize },
    #[error("chiral sampling needs n >= m (got m = {m}, n = {n})")]
    DimensionOrder { m: usize, n: usize },
    #[error("{steps} unitary increments are too few for tau_hat = {tau_hat}")]
    DiscretizationTooCoarse { steps: usize, tau_hat: f64 },
    #[error("histogram and density curve live on incompatible domains: {0}")]
    DomainMismatch(String),
    #[error("trajectory mass drifts by {drift:e} between time slices")]
    MassDrift { drift: f64 },
    #[error("the 1/p term of the chiral action is singular on a grid containing p = 0")]
    SingularIntegrand,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl FlowError {
    /// Stable identifier used in CLI diagnostics and reports.
    pub fn name(&self) -> &'static str {
        match self {
            FlowError::PoleProximity { .. } => "PoleProximity",
            FlowError::EmptyMeasure => "EmptyMeasure",
            FlowError::InvalidMeasure(_) => "InvalidMeasure",
            FlowError::NonConvergedInversion { .. } => "NonConvergedInversion",
            FlowError::NegativeDensity { .. } => "NegativeDensity",
            FlowError::QuadratureAccuracy { .. } => "QuadratureAccuracy",
            FlowError::EmptySupport => "EmptySupport",
            FlowError::DegenerateLeadingCoefficient => "DegenerateLeadingCoefficient",
            FlowError::BranchAmbiguity { .. } => "BranchAmbiguity",
            FlowError::ContinuationStall { .. } => "ContinuationStall",
            FlowError::SingularJacobian { .. } => "SingularJacobian",
            FlowError::CharacteristicDegenerate { .. } => "CharacteristicDegenerate",
            FlowError::CharacteristicBlowup { .. } => "CharacteristicBlowup",
            FlowError::ShootingFailure { .. } => "ShootingFailure",
            FlowError::CausticEncountered { .. } => "CausticEncountered",
            FlowError::InvalidRaneyParams { .. } => "InvalidRaneyParams",
            FlowError::InvalidInitialData(_) => "InvalidInitialData",
            FlowError::AtomRoundingError { .. } => "AtomRoundingError",
            FlowError::DimensionOrder { .. } => "DimensionOrder",
            FlowError::DiscretizationTooCoarse { .. } => "DiscretizationTooCoarse",
            FlowError::DomainMismatch(_) => "DomainMismatch",
            FlowError::MassDrift { .. } => "MassDrift",
            FlowError::SingularIntegrand => "SingularIntegrand",
            FlowError::InvalidArgument(_) => "InvalidArgument",
            FlowError::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for FlowError {
    fn from(e: std::io::Error) -> Self {
        FlowError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FlowError>;
