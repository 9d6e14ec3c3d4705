use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("exact Gromov-Hausdorff computation limited to {limit} points, got {got}")]
    SizeLimit { limit: usize, got: usize },
    #[error("grid too coarse: need at least 3 samples, got {0}")]
    GridTooCoarse(usize),
    #[error("warping function vanishes identically")]
    ZeroFunction,
    #[error("mollification failed to stay FK-concave after {retries} retries (worst violation {violation:e})")]
    MollifyFailed { retries: usize, violation: f64 },
    #[error("resource limit exceeded: {work} > budget {budget}")]
    ResourceLimit { work: u64, budget: u64 },
    #[error("points are not causally related")]
    NotCausallyRelated,
    #[error("model points belong to different curvatures ({0} vs {1})")]
    MixedModels(f64, f64),
    #[error("comparison configuration not realizable: {0}")]
    Unrealizable(String),
    #[error("domain violation: {0}")]
    DomainViolation(String),
    #[error("insufficient samples: {got} valid configurations, need {need}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("measures admit no causal coupling (max flow {flow:.6})")]
    NotCausallyCouplable { flow: f64 },
    #[error("no grid maximizer between ({0},{1}) and ({2},{3})")]
    NoMaximizer(usize, usize, usize, usize),
    #[error("reference cell with zero weight at time index {0}, fiber index {1}")]
    ZeroReferenceCell(usize, usize),
    #[error("no strictly timelike optimal coupling")]
    NotTimelikeDualizable,
    #[error("atoms not in the timelike past of the target: {0:?}")]
    AtomNotInPast(Vec<usize>),
    #[error("empty level set {{l >= {0}}}")]
    EmptyLevelSet(f64),
    #[error("log-slope bound violated in profile {index} at t = {t} (excess {excess:e})")]
    SlopeBoundViolated { index: usize, t: f64, excess: f64 },
    #[error("profile {index} is not FK-concave at t = {t} (violation {violation:e})")]
    NotFkConcave { index: usize, t: f64, violation: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("point lies on the boundary of the base interval")]
    BoundaryPoint,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "INVALID_INPUT",
            Error::SizeLimit { .. } => "SIZE_LIMIT",
            Error::GridTooCoarse(_) => "GRID_TOO_COARSE",
            Error::ZeroFunction => "ZERO_FUNCTION",
            Error::MollifyFailed { .. } => "MOLLIFY_FAILED",
            Error::ResourceLimit { .. } => "RESOURCE_LIMIT",
            Error::NotCausallyRelated => "NOT_CAUSALLY_RELATED",
            Error::MixedModels(..) => "MIXED_MODELS",
            Error::Unrealizable(_) => "UNREALIZABLE",
            Error::DomainViolation(_) => "DOMAIN_VIOLATION",
            Error::InsufficientSamples { .. } => "INSUFFICIENT_SAMPLES",
            Error::NotCausallyCouplable { .. } => "NOT_CAUSALLY_COUPLABLE",
            Error::NoMaximizer(..) => "NO_MAXIMIZER",
            Error::ZeroReferenceCell(..) => "ZERO_REFERENCE_CELL",
            Error::NotTimelikeDualizable => "NOT_TIMELIKE_DUALIZABLE",
            Error::AtomNotInPast(_) => "ATOM_NOT_IN_PAST",
            Error::EmptyLevelSet(_) => "EMPTY_LEVEL_SET",
            Error::SlopeBoundViolated { .. } => "SLOPE_BOUND_VIOLATED",
            Error::NotFkConcave { .. } => "NOT_FK_CONCAVE",
            Error::Precondition(_) => "PRECONDITION",
            Error::BoundaryPoint => "BOUNDARY_POINT",
            Error::Io(_) => "IO",
            Error::Json(_) => "JSON",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
