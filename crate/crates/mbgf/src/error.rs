use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("sector dimension {dim} exceeds the configured cap {cap}")]
    SectorTooLarge { dim: usize, cap: usize },

    #[error("frequency {omega} collides with a pole at {pole}")]
    PoleCollision { omega: f64, pole: f64 },

    #[error("matrix is singular at omega = {omega} (condition estimate {cond:.3e})")]
    Singular { omega: f64, cond: f64 },

    #[error("frequency {omega} hits a denominator of magnitude {denominator:.3e}")]
    SingularFrequency { omega: f64, denominator: f64 },

    #[error("stencil fit is ill-conditioned (condition number {cond:.3e}); try max_order <= {suggested}")]
    IllConditioned { cond: f64, suggested: usize },

    #[error("projected pole count {projected} exceeds the cap {cap}")]
    PoleCap { projected: usize, cap: usize },

    #[error("did not converge: {0}")]
    NoConvergence(String),

    #[error("ground state is degenerate (gap {gap:.3e})")]
    DegenerateGround { gap: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
