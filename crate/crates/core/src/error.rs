use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {0} unsupported (need 3 <= d <= 6)")]
    InvalidDimension(usize),
    #[error("set is not strictly inside the box [-{m},{m}]^d")]
    SetNotInsideBox { m: f64 },
    #[error("tolerance not reached: {0}")]
    ToleranceNotReached(String),
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("Monte Carlo budget exhausted after {used} samples")]
    BudgetExhausted { used: u64 },
    #[error("support exceeds Green table radius ({needed} > {radius})")]
    SupportExceedsTable { needed: i32, radius: i32 },
    #[error("potential is not admissible: ||G|V|||_inf = {norm} >= 1")]
    InadmissiblePotential { norm: f64 },
    #[error("method unavailable: {0}")]
    MethodUnavailable(String),
    #[error("truncation radius {rho} too small (need > {needed})")]
    RhoTooSmall { rho: f64, needed: f64 },
    #[error("level {u} out of range (0, {max}]")]
    LevelOutOfRange { u: f64, max: f64 },
    #[error("region escapes the sampling window")]
    RegionEscapesWindow,
    #[error("conditioning event too rare: {hits} hits in {tries} tries")]
    ConditioningTooRare { hits: u64, tries: u64 },
    #[error("measures have unequal total mass ({a} vs {b})")]
    UnbalancedMasses { a: f64, b: f64 },
    #[error("epsilon {0} outside (0, 1)")]
    EpsilonOutOfRange(f64),
    #[error("degenerate scale: {0}")]
    DegenerateScale(String),
    #[error("window too small: {0}")]
    WindowTooSmall(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
