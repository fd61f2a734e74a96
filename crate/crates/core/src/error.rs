use thiserror::Error;

/// Everything that can go wrong inside the laboratory.
///
/// Variants are grouped loosely by the layer that raises them. Estimator
/// quality failures (`InsufficientScaling`, `BinsTooSparse`, `EstimatorUnstable`,
/// `DepthInsufficient`, `NotConverged`) are distinguished from input errors by
/// [`Error::is_quality_failure`], which the command-line harness maps to its
/// exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular input: pivot {pivot:.3e} below threshold")]
    SingularInput { pivot: f64 },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("ill-conditioned intersection: singular value {value:.3e} within a decade of tolerance {tol:.1e}")]
    IllConditioned { value: f64, tol: f64 },
    #[error("dimension {d} too large (max {max})")]
    DimensionTooLarge { d: usize, max: usize },
    #[error("topologies are not comparable")]
    NotComparable,
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("flags are not in general position (margin {margin:.3e})")]
    NotGeneralPosition { margin: f64 },
    #[error("configurations live on different topologies")]
    TopologyMismatch,
    #[error("degenerate chart angle {theta:.3e}")]
    DegenerateAngle { theta: f64 },
    #[error("configurations do not lie in the same fiber (base distance {distance:.3e})")]
    NotSameFiber { distance: f64 },
    #[error("not a one-step arrow")]
    NotOneStep,
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("Oseledets frames did not converge (residual {residual:.3e})")]
    NotConverged { residual: f64 },
    #[error("spectrum is not simple: gap {gap:.3e} vs stderr {stderr:.3e}")]
    SpectrumNotSimple { gap: f64, stderr: f64 },
    #[error("sampling depth insufficient: doubling moved a point by {displacement:.3e}")]
    DepthInsufficient { displacement: f64 },
    #[error("insufficient scaling: regression R^2 = {r2:.3} (estimate {estimate:.4})")]
    InsufficientScaling { r2: f64, estimate: f64 },
    #[error("too few points: {got} < {need}")]
    TooFewPoints { got: usize, need: usize },
    #[error("no bin reached {need} points (largest bin {largest})")]
    BinsTooSparse { largest: usize, need: usize },
    #[error("support exploded beyond {limit} elements at n = {n}")]
    StateExplosion { n: usize, limit: usize, partial: Vec<f64> },
    #[error("estimator unstable: subsample spread {spread:.3} exceeds 25%")]
    EstimatorUnstable { spread: f64, estimates: Vec<f64> },
    #[error("entropy {h:.4} exceeds Furstenberg bound {bound:.4}")]
    EntropyExceedsBound { h: f64, bound: f64 },
    #[error("chain exponents are not nondecreasing")]
    ChainMismatch,
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::SingularInput { .. } => "singular_input",
            Error::NonFinite(_) => "non_finite",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::DimensionTooLarge { .. } => "dimension_too_large",
            Error::NotComparable => "not_comparable",
            Error::InvalidTopology(_) => "invalid_topology",
            Error::InvalidPartition(_) => "invalid_partition",
            Error::NotGeneralPosition { .. } => "not_general_position",
            Error::TopologyMismatch => "topology_mismatch",
            Error::DegenerateAngle { .. } => "degenerate_angle",
            Error::NotSameFiber { .. } => "not_same_fiber",
            Error::NotOneStep => "not_one_step",
            Error::InvalidMeasure(_) => "invalid_measure",
            Error::NotConverged { .. } => "not_converged",
            Error::SpectrumNotSimple { .. } => "spectrum_not_simple",
            Error::DepthInsufficient { .. } => "depth_insufficient",
            Error::InsufficientScaling { .. } => "insufficient_scaling",
            Error::TooFewPoints { .. } => "too_few_points",
            Error::BinsTooSparse { .. } => "bins_too_sparse",
            Error::StateExplosion { .. } => "state_explosion",
            Error::EstimatorUnstable { .. } => "estimator_unstable",
            Error::EntropyExceedsBound { .. } => "entropy_exceeds_bound",
            Error::ChainMismatch => "chain_mismatch",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Exit code of the harness: 2 for quality failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.is_quality_failure() {
            2
        } else {
            1
        }
    }

    /// True for failures of an estimator's quality gate rather than bad input.
    pub fn is_quality_failure(&self) -> bool {
        matches!(
            self,
            Error::InsufficientScaling { .. }
                | Error::BinsTooSparse { .. }
                | Error::EstimatorUnstable { .. }
                | Error::DepthInsufficient { .. }
                | Error::NotConverged { .. }
                | Error::SpectrumNotSimple { .. }
                | Error::StateExplosion { .. }
                | Error::EntropyExceedsBound { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
