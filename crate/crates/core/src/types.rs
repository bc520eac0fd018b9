//! Domain value types shared by every module.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::PoolError;

/// Destination AMM reserves. `k` is always recomputed from the reserves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPool")]
pub struct PoolState {
    reserve_x: f64,
    reserve_y: f64,
    k: f64,
}

#[derive(Deserialize)]
struct RawPool {
    reserve_x: f64,
    reserve_y: f64,
}

impl TryFrom<RawPool> for PoolState {
    type Error = PoolError;

    fn try_from(raw: RawPool) -> Result<Self, Self::Error> {
        PoolState::new(raw.reserve_x, raw.reserve_y)
    }
}

impl PoolState {
    pub fn new(reserve_x: f64, reserve_y: f64) -> Result<Self, PoolError> {
        let valid = |v: f64| v.is_finite() && v > 0.0;
        if !(valid(reserve_x) && valid(reserve_y)) {
            return Err(PoolError::InvalidReserves { x: reserve_x, y: reserve_y });
        }
        Ok(Self { reserve_x, reserve_y, k: reserve_x * reserve_y })
    }

    /// Bridged-asset reserve.
    pub fn reserve_x(&self) -> f64 {
        self.reserve_x
    }

    /// Native-asset reserve.
    pub fn reserve_y(&self) -> f64 {
        self.reserve_y
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Spot price of the bridged asset in native units.
    pub fn spot_price(&self) -> f64 {
        self.reserve_y / self.reserve_x
    }

    /// Pool value in quote units at an external mark price.
    pub fn value_at(&self, price: f64) -> f64 {
        self.reserve_x * price + self.reserve_y
    }

    /// Moves the reserves along the current invariant until the spot price equals `price`.
    pub fn rebalanced_to(&self, price: f64) -> Result<Self, PoolError> {
        Self::new((self.k / price).sqrt(), (self.k * price).sqrt())
    }

    /// Scales both reserves, as when liquidity providers add or withdraw pro rata.
    pub fn scaled(&self, factor: f64) -> Result<Self, PoolError> {
        Self::new(self.reserve_x * factor, self.reserve_y * factor)
    }
}

/// Which side of the pool a swap enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Bridged asset in, native asset out. Risk-adjusted by the haircut.
    #[default]
    BridgedToNative,
    /// Native asset in, bridged asset out. Never haircut.
    NativeToBridged,
}

/// A cross-chain settlement request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeMessage {
    pub id: u64,
    /// Source-chain finality time.
    pub t_finalized_src: f64,
    /// Destination receipt time; absent until delivered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_receipt_dest: Option<f64>,
    /// Bridged amount swapped on arrival.
    pub swap_in: f64,
    /// User slippage floor on the native output.
    #[serde(default)]
    pub min_out: f64,
}

impl BridgeMessage {
    pub fn new(id: u64, t_finalized_src: f64, swap_in: f64) -> Self {
        Self { id, t_finalized_src, t_receipt_dest: None, swap_in, min_out: 0.0 }
    }

    pub fn with_min_out(mut self, min_out: f64) -> Self {
        self.min_out = min_out;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollateralEntry {
    pub asset: String,
    /// Locked quantity `L_i`.
    pub locked: f64,
    /// Asset volatility. Recorded but not used by the haircut.
    pub volatility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollateralLedger {
    pub entries: Vec<CollateralEntry>,
    /// Outstanding synthetic obligations in quote units.
    pub debt: f64,
}

impl CollateralLedger {
    pub fn single(asset: &str, locked: f64, volatility: f64, debt: f64) -> Self {
        Self { entries: vec![CollateralEntry { asset: asset.to_string(), locked, volatility }], debt }
    }

    pub fn is_valid(&self) -> bool {
        self.debt >= 0.0 && self.entries.iter().all(|e| e.locked >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    Normal,
    Restricted,
    Halted,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Normal => "Normal",
            Mode::Restricted => "Restricted",
            Mode::Halted => "Halted",
        })
    }
}

/// Why the circuit breaker tripped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CbReason {
    PriceDeviation,
    LatencyTimeout,
    HealthCritical,
}

/// Collateral health ratio. Zero debt yields the unbounded sentinel.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct HealthIndex(f64);

impl HealthIndex {
    pub const UNBOUNDED: HealthIndex = HealthIndex(f64::INFINITY);

    pub fn new(value: f64) -> Self {
        debug_assert!(value >= 0.0 && !value.is_nan());
        Self(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_unbounded(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for HealthIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_unbounded() {
            f.write_str("unbounded")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for HealthIndex {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.is_unbounded() {
            s.serialize_str("unbounded")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for HealthIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(HealthIndex(v)),
            Repr::Text(t) if t == "unbounded" => Ok(HealthIndex::UNBOUNDED),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("invalid health index `{t}`"))),
        }
    }
}

/// Operational mode plus the observables that drove the last transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub mode: Mode,
    pub last_tau: f64,
    pub last_deviation: f64,
    pub health: HealthIndex,
    pub cb_reason: Option<CbReason>,
}

impl Default for SystemState {
    fn default() -> Self {
        Self {
            mode: Mode::Normal,
            last_tau: 0.0,
            last_deviation: 0.0,
            health: HealthIndex::UNBOUNDED,
            cb_reason: None,
        }
    }
}

impl SystemState {
    /// Halted exactly when a breaker reason is recorded.
    pub fn is_consistent(&self) -> bool {
        (self.mode == Mode::Halted) == self.cb_reason.is_some()
    }
}

/// Bad-debt bookkeeping for one settlement epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochAccount {
    pub epoch_index: u64,
    pub bad_debt: f64,
    /// Pool value at the oracle mark when the epoch opened.
    pub collateral_start: f64,
    pub swaps_settled: u64,
}

impl EpochAccount {
    pub fn bad_debt_fraction(&self) -> f64 {
        if self.collateral_start > 0.0 {
            self.bad_debt / self.collateral_start
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pool_rejects_nonpositive_reserves() {
        assert!(PoolState::new(0.0, 1.0).is_err());
        assert!(PoolState::new(1.0, -1.0).is_err());
        assert!(PoolState::new(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn rebalance_preserves_k_and_hits_price() {
        let pool = PoolState::new(10.0, 420_000.0).unwrap();
        let moved = pool.rebalanced_to(31_500.0).unwrap();
        assert!((moved.k() - pool.k()).abs() / pool.k() < 1e-12);
        assert!((moved.spot_price() - 31_500.0).abs() < 1e-6);
    }

    #[test]
    fn health_index_serializes_sentinel() {
        assert_eq!(serde_json::to_string(&HealthIndex::UNBOUNDED).unwrap(), "\"unbounded\"");
        assert_eq!(serde_json::to_string(&HealthIndex::new(1.5)).unwrap(), "1.5");
        let back: HealthIndex = serde_json::from_str("\"unbounded\"").unwrap();
        assert!(back.is_unbounded());
    }

    #[test]
    fn pool_deserialization_recomputes_k() {
        let pool: PoolState = serde_json::from_str(r#"{"reserve_x": 4.0, "reserve_y": 5.0, "k": 1.0}"#).unwrap();
        assert_eq!(pool.k(), 20.0);
        assert!(serde_json::from_str::<PoolState>(r#"{"reserve_x": 0.0, "reserve_y": 5.0}"#).is_err());
    }

    proptest! {
        #[test]
        fn pool_k_is_product(x in 1e-6f64..1e9, y in 1e-6f64..1e12) {
            let pool = PoolState::new(x, y).unwrap();
            prop_assert!(((pool.k() - x * y) / (x * y)).abs() <= 1e-9);
        }
    }
}
