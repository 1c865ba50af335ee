use num_complex::Complex64;
use thiserror::Error;

use crate::limitcycle::FixedPointResult;
use crate::thermo::LimitCycleReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("partial trace needs a nonempty set of kept factors")]
    EmptyKeep,

    #[error("factor index {index} out of range for {factors} factors")]
    FactorOutOfRange { index: usize, factors: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("trace {trace:.15} is not 1")]
    TraceNotUnit { trace: f64 },

    #[error("state is rank deficient: effective rank {rank} of {dim}")]
    RankDeficient { rank: usize, dim: usize },

    #[error("inverse temperature must be non-negative, got {0}")]
    NegativeBeta(f64),

    #[error("site {site} out of range 1..={n}")]
    SiteOutOfRange { site: usize, n: usize },

    #[error("{field}: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("no convergence after {} iterations (last delta {:.3e})", .0.iterations, .0.final_delta)]
    NoConvergence(Box<FixedPointResult>),

    #[error("eigenvalue solver failed on a {0}x{0} matrix")]
    EigenSolverFailed(usize),

    #[error("degenerate fixed point: {} eigenvalues on the unit circle", .near_unit.len())]
    DegenerateFixedPoint {
        near_unit: Vec<Complex64>,
        candidate: Box<FixedPointResult>,
    },

    #[error("limit cycle does not close (trace distance {distance:.3e}, allowed {allowed:.3e})")]
    ClosureViolation { distance: f64, allowed: f64 },

    #[error("channel is not completely positive (Choi eigenvalue {min_eigenvalue:.3e})")]
    NotCompletelyPositive { min_eigenvalue: f64 },

    #[error("Kraus outcome has vanishing probability {0:.3e}")]
    ZeroProbability(f64),

    #[error("state is not a fixed point of the channel (residual {residual:.3e}, allowed {allowed:.3e})")]
    NotFixedPoint { residual: f64, allowed: f64 },

    #[error("Kraus and superoperator reversals disagree by {0:.3e}")]
    ReversalMismatch(f64),

    #[error("hot-bath heat {} is zero; efficiency undefined", .0.q_h_star)]
    ZeroHeat(Box<LimitCycleReport>),

    #[error("ansatz requires beta1*E1 == beta2*E_N, got {lhs} vs {rhs}")]
    CriteriaViolated { lhs: f64, rhs: f64 },
}
