use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("parameter {0} must be finite")]
    NotFinite(&'static str),
    #[error("invariant `{0}` violated: {1}")]
    Violation(&'static str, String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Io(String, String),
    #[error("malformed config: {0}")]
    Parse(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("invalid run setting: {0}")]
    Settings(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoolError {
    #[error("pool reserves must be positive and finite (x = {x}, y = {y})")]
    InvalidReserves { x: f64, y: f64 },
    #[error("swap input must be finite and nonnegative, got {0}")]
    InvalidInput(f64),
    #[error("swap would deplete the output reserve ({amount_out} >= {reserve})")]
    ReserveDepleted { amount_out: f64, reserve: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("no price feeds supplied")]
    NoFeeds,
    #[error("every feed is older than the staleness limit at t = {now}")]
    AllStale { now: f64 },
    #[error("message {id} received at {receipt} before source finality at {finalized}")]
    NegativeLatency { id: u64, finalized: f64, receipt: f64 },
    #[error("no price for collateral asset `{0}`")]
    MissingPrice(String),
    #[error("invalid price {price} from source `{source_id}`")]
    InvalidPrice { source_id: String, price: f64 },
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("invalid record at line {line}: {message}")]
    Invalid { line: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("no fresh price available at t = {at} (data gap)")]
    DataGap { at: f64 },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("invalid simulation config: {0}")]
    Config(String),
}
