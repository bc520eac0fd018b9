//! Simulation library for a latency-aware, risk-adjusted cross-chain AMM.

pub mod engine;
pub mod error;
pub mod experiments;
pub mod oracle;
pub mod params;
pub mod pricing;
pub mod relayer;
pub mod report;
pub mod statemachine;
pub mod types;

pub use error::{ConfigError, EngineError, IngestError, OracleError, ParamError, PoolError};
pub use params::{ConfigFile, ProtocolParams, RunSettings};
pub use types::*;
