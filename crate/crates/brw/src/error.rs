use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// The requested family cannot be normalized to the boundary case.
    #[error("no boundary normalization: {0}")]
    NoSolution(String),

    /// The log-Laplace transform is infinite on the whole critical window.
    #[error("log-Laplace transform infinite on (0, 1+delta)")]
    Unbounded,

    /// The particle budget was hit before reaching the target generation.
    /// Carries the deepest fully built generation.
    #[error("particle cap exceeded after generation {depth_reached}")]
    ParticleCapExceeded { depth_reached: usize },

    /// Rejection sampling for survival gave up.
    #[error("all replicates extinct after {0} consecutive rejections")]
    AllExtinct(u64),

    /// A (generation, index) pair does not address a particle.
    #[error("invalid node reference")]
    InvalidNode,

    /// Inverse temperature outside the model's finite-Laplace domain.
    #[error("beta {0} outside model domain")]
    BetaOutsideDomain(f64),

    /// Operation requires a forest surviving to its target depth.
    #[error("forest extinct before target depth")]
    ExtinctForest,

    /// Renewal estimation did not converge in the given horizon: the
    /// half-horizon and full-horizon estimates disagree beyond noise.
    #[error("renewal horizon too small: max |h(H) - h(H/2)| z-score {max_z:.2} at u = {at_u}")]
    HorizonTooSmall { max_z: f64, at_u: f64 },

    /// Every candidate weight in an importance-resampling batch was zero,
    /// even after the configured number of batch doublings.
    #[error("importance weights collapsed to zero")]
    WeightCollapse,

    /// Argument outside a function's mathematical domain.
    #[error("domain error: {0}")]
    DomainError(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
