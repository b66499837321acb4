use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("polytope description: {0}")]
    Parse(String),

    #[error("facet {facet} has non-primitive normal {normal:?}")]
    NonPrimitiveNormal { facet: usize, normal: Vec<i64> },

    #[error("polytope is empty or contains a line (no vertices)")]
    EmptyOrUnbounded,

    #[error("polytope is unbounded along {direction:?}")]
    Unbounded { direction: Vec<String> },

    #[error("polytope is not full-dimensional")]
    NotFullDimensional,

    #[error("facet {facet} is redundant")]
    RedundantFacet { facet: usize },

    #[error("vertex {vertex:?} is not Delzant: {reason}")]
    NonDelzant { vertex: Vec<String>, reason: String },

    #[error("tensor power must be positive, got {0}")]
    InvalidPower(i64),

    #[error("polynomial of degree {0} is not supported (max 2)")]
    DegreeUnsupported(u32),

    #[error("singular Gram matrix in extremal affine solve")]
    SingularGram,

    #[error("invalid Hermitian weights: {0}")]
    InvalidWeights(String),

    #[error("NaN or infinite evaluation point")]
    NanInput,

    #[error("quadrature grid validation failed: relative volume error {rel_err:.3e} > {tol:.1e}; increase the radius or the resolution")]
    GridValidation { rel_err: f64, tol: f64 },

    #[error("lattice point sets do not match: {0}")]
    LatticeMismatch(String),

    #[error("Hessian of the potential is not positive definite at u = {0:?}")]
    HessianNotPd(Vec<f64>),

    #[error("grid resolution {resolution} too coarse for k = {k} (need at least {needed})")]
    Nyquist { resolution: usize, k: u32, needed: usize },

    #[error("finite-difference evaluation failed: {0}")]
    FiniteDifference(String),

    #[error("weight Hessian is numerically singular (lattice does not span)")]
    SingularWeightHessian,

    #[error("Newton iteration did not converge within {0} steps")]
    IterationCap(usize),

    #[error("not a product polytope: {0}")]
    NotProduct(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
