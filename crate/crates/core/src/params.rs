//! Protocol parameters and the flat `key = value` configuration format.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ConfigError, ParamError};

/// Every tunable constant of the protocol in one immutable bundle.
///
/// Durations are seconds, fractions are dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    /// Haircut floor, charged at zero latency.
    pub h_min: f64,
    /// Haircut ceiling.
    pub h_max: f64,
    /// Latency at which the haircut ramp starts.
    pub tau_min: f64,
    /// Latency at which the haircut reaches `h_max`.
    pub tau_max: f64,
    /// Oracle deviation that trips the circuit breaker.
    pub theta_price: f64,
    /// Latency that trips the circuit breaker.
    pub tau_crit: f64,
    /// Latency above which the protocol runs in Restricted mode.
    pub tau_restrict: f64,
    /// Health floor of the Normal band.
    pub h_safe: f64,
    /// Health below which the circuit breaker trips.
    pub h_crit: f64,
    /// Maximum slippage a settled swap may incur.
    pub s_max: f64,
    /// Maximum swap size as a fraction of the input-side reserve.
    pub w_max_frac: f64,
    /// Age after which an oracle observation is discarded.
    pub oracle_staleness: f64,
    /// Haircut multiplier applied in Restricted mode.
    pub restricted_multiplier: f64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            h_min: 0.003,
            h_max: 0.05,
            tau_min: 0.0,
            tau_max: 1800.0,
            theta_price: 0.50,
            tau_crit: 3600.0,
            tau_restrict: 900.0,
            h_safe: 1.15,
            h_crit: 1.05,
            s_max: 0.10,
            w_max_frac: 0.10,
            oracle_staleness: 60.0,
            restricted_multiplier: 2.0,
        }
    }
}

impl ProtocolParams {
    /// Checks every ordering and range constraint, reporting the first violation.
    pub fn validate(&self) -> Result<(), ParamError> {
        validate_params(self)
    }

    /// Parses a flat `key = value` document containing only parameter keys.
    pub fn from_kv_str(text: &str) -> Result<Self, ConfigError> {
        let params: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn to_kv_string(&self) -> String {
        toml::to_string(self).expect("flat struct of floats always serializes")
    }
}

pub fn validate_params(p: &ProtocolParams) -> Result<(), ParamError> {
    let fields = [
        ("h_min", p.h_min),
        ("h_max", p.h_max),
        ("tau_min", p.tau_min),
        ("tau_max", p.tau_max),
        ("theta_price", p.theta_price),
        ("tau_crit", p.tau_crit),
        ("tau_restrict", p.tau_restrict),
        ("h_safe", p.h_safe),
        ("h_crit", p.h_crit),
        ("s_max", p.s_max),
        ("w_max_frac", p.w_max_frac),
        ("oracle_staleness", p.oracle_staleness),
        ("restricted_multiplier", p.restricted_multiplier),
    ];
    if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
        return Err(ParamError::NotFinite(name));
    }
    if p.h_min < 0.0 {
        return Err(ParamError::Violation("0 <= h_min", format!("h_min = {}", p.h_min)));
    }
    if p.h_min > p.h_max {
        return Err(ParamError::Violation(
            "h_min <= h_max",
            format!("h_min = {} > h_max = {}", p.h_min, p.h_max),
        ));
    }
    if p.h_max >= 1.0 {
        return Err(ParamError::Violation("h_max < 1", format!("h_max = {}", p.h_max)));
    }
    if p.tau_min < 0.0 {
        return Err(ParamError::Violation("0 <= tau_min", format!("tau_min = {}", p.tau_min)));
    }
    if p.tau_min >= p.tau_max {
        return Err(ParamError::Violation(
            "tau_min < tau_max",
            format!("tau_min = {} >= tau_max = {}", p.tau_min, p.tau_max),
        ));
    }
    if p.tau_max > p.tau_crit {
        return Err(ParamError::Violation(
            "tau_max <= tau_crit",
            format!("tau_max = {} > tau_crit = {}", p.tau_max, p.tau_crit),
        ));
    }
    if p.h_crit <= 1.0 {
        return Err(ParamError::Violation("1 < h_crit", format!("h_crit = {}", p.h_crit)));
    }
    if p.h_crit >= p.h_safe {
        return Err(ParamError::Violation(
            "h_crit < h_safe",
            format!("h_crit = {} >= h_safe = {}", p.h_crit, p.h_safe),
        ));
    }
    if !(p.s_max > 0.0 && p.s_max < 1.0) {
        return Err(ParamError::Violation("0 < s_max < 1", format!("s_max = {}", p.s_max)));
    }
    if !(p.w_max_frac > 0.0 && p.w_max_frac <= 1.0) {
        return Err(ParamError::Violation(
            "0 < w_max_frac <= 1",
            format!("w_max_frac = {}", p.w_max_frac),
        ));
    }
    if p.theta_price <= 0.0 {
        return Err(ParamError::Violation("0 < theta_price", format!("theta_price = {}", p.theta_price)));
    }
    if p.tau_restrict < 0.0 || p.oracle_staleness < 0.0 {
        return Err(ParamError::Violation(
            "durations are nonnegative",
            format!("tau_restrict = {}, oracle_staleness = {}", p.tau_restrict, p.oracle_staleness),
        ));
    }
    if p.restricted_multiplier < 1.0 {
        return Err(ParamError::Violation(
            "restricted_multiplier >= 1",
            format!("restricted_multiplier = {}", p.restricted_multiplier),
        ));
    }
    Ok(())
}

/// Simulation settings that live next to the protocol parameters in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub seed: u64,
    /// Settlement epoch length in seconds.
    pub epoch_length: f64,
    /// Bridged-asset reserve of the destination pool.
    pub reserve_x: f64,
    /// Native-asset reserve of the destination pool.
    pub reserve_y: f64,
    /// Locked source collateral per unit of outstanding bridged supply.
    pub collateral_ratio: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            seed: 42,
            epoch_length: 86_400.0,
            reserve_x: 10.0,
            reserve_y: 420_000.0,
            collateral_ratio: 1.25,
        }
    }
}

const SETTING_KEYS: [&str; 5] = ["seed", "epoch_length", "reserve_x", "reserve_y", "collateral_ratio"];

/// A parsed configuration file: protocol parameters plus run settings.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigFile {
    pub params: ProtocolParams,
    pub settings: RunSettings,
}

impl ConfigFile {
    /// Parses flat `key = value` text. Missing keys take defaults, unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let mut settings = RunSettings::default();
        for key in SETTING_KEYS {
            let Some(value) = table.remove(key) else { continue };
            let num = match &value {
                toml::Value::Integer(i) => *i as f64,
                toml::Value::Float(f) => *f,
                other => {
                    return Err(ConfigError::Parse(format!("{key}: expected a number, found {}", other.type_str())))
                }
            };
            match key {
                "seed" => {
                    let toml::Value::Integer(i) = value else {
                        return Err(ConfigError::Parse("seed: expected an integer".into()));
                    };
                    settings.seed = u64::try_from(i).map_err(|_| ConfigError::Parse("seed: must be >= 0".into()))?;
                }
                "epoch_length" => settings.epoch_length = num,
                "reserve_x" => settings.reserve_x = num,
                "reserve_y" => settings.reserve_y = num,
                "collateral_ratio" => settings.collateral_ratio = num,
                _ => unreachable!(),
            }
        }
        let params: ProtocolParams = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        params.validate()?;
        if !(settings.epoch_length.is_finite() && settings.epoch_length > 0.0) {
            return Err(ConfigError::Settings(format!("epoch_length must be > 0, got {}", settings.epoch_length)));
        }
        if !(settings.reserve_x > 0.0 && settings.reserve_y > 0.0) {
            return Err(ConfigError::Settings("pool reserves must be positive".into()));
        }
        if !(settings.collateral_ratio.is_finite() && settings.collateral_ratio > 0.0) {
            return Err(ConfigError::Settings("collateral_ratio must be positive".into()));
        }
        Ok(Self { params, settings })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e.to_string()))?;
        Self::parse(&text)
    }

    /// Canonical flat rendering; parsing it back yields the same config.
    pub fn to_kv_string(&self) -> String {
        let s = &self.settings;
        format!(
            "seed = {}\nepoch_length = {:?}\nreserve_x = {:?}\nreserve_y = {:?}\ncollateral_ratio = {:?}\n{}",
            s.seed,
            s.epoch_length,
            s.reserve_x,
            s.reserve_y,
            s.collateral_ratio,
            self.params.to_kv_string()
        )
    }

    /// Hex SHA-256 of the canonical rendering, used in report provenance.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_kv_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let p = ProtocolParams::default();
        assert_eq!(p.h_min, 0.003);
        assert_eq!(p.h_max, 0.05);
        assert_eq!(p.tau_max, 1800.0);
        assert_eq!(p.theta_price, 0.5);
        assert!(validate_params(&p).is_ok());
    }

    #[test]
    fn h_min_above_h_max_is_rejected() {
        let p = ProtocolParams { h_min: 0.06, h_max: 0.05, ..Default::default() };
        let err = validate_params(&p).unwrap_err();
        assert!(err.to_string().contains("h_min <= h_max"), "{err}");
    }

    #[test]
    fn h_crit_at_or_above_h_safe_is_rejected() {
        let p = ProtocolParams { h_crit: 1.2, h_safe: 1.15, ..Default::default() };
        let err = validate_params(&p).unwrap_err();
        assert!(err.to_string().contains("h_crit < h_safe"), "{err}");
    }

    #[test]
    fn tau_ordering_and_ranges() {
        let bad = [
            ProtocolParams { tau_min: 1800.0, ..Default::default() },
            ProtocolParams { tau_max: 4000.0, ..Default::default() },
            ProtocolParams { h_crit: 1.0, ..Default::default() },
            ProtocolParams { s_max: 1.0, ..Default::default() },
            ProtocolParams { w_max_frac: 0.0, ..Default::default() },
            ProtocolParams { h_max: 1.0, h_min: 0.0, ..Default::default() },
            ProtocolParams { h_min: f64::NAN, ..Default::default() },
        ];
        for p in bad {
            assert!(validate_params(&p).is_err(), "{p:?}");
        }
    }

    #[test]
    fn config_file_missing_keys_take_defaults() {
        let cfg = ConfigFile::parse("h_max = 0.07\nseed = 7\n").unwrap();
        assert_eq!(cfg.params.h_max, 0.07);
        assert_eq!(cfg.params.h_min, 0.003);
        assert_eq!(cfg.settings.seed, 7);
        assert_eq!(cfg.settings.reserve_x, 10.0);
    }

    #[test]
    fn config_file_unknown_key_is_an_error() {
        let err = ConfigFile::parse("h_max = 0.05\nfee = 0.003\n").unwrap_err();
        assert!(err.to_string().contains("fee"), "{err}");
    }

    #[test]
    fn config_file_integer_values_are_accepted() {
        let cfg = ConfigFile::parse("tau_max = 2400\ntau_crit = 3600\n").unwrap();
        assert_eq!(cfg.params.tau_max, 2400.0);
    }

    #[test]
    fn config_file_rejects_invalid_params() {
        assert!(matches!(ConfigFile::parse("h_min = 0.06\nh_max = 0.05"), Err(ConfigError::Params(_))));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ConfigFile::default();
        let mut b = a;
        assert_eq!(a.hash(), b.hash());
        b.params.h_max = 0.06;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn kv_roundtrip_is_exact() {
        let cfg = ConfigFile::parse("h_max = 0.0625\nseed = 99\ntheta_price = 0.45\n").unwrap();
        assert_eq!(ConfigFile::parse(&cfg.to_kv_string()).unwrap(), cfg);
    }
}
