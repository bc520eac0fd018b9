//! Seeded synthetic minute-level price paths with injected stress events.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::oracle::PriceFeed;

pub const MINUTE: f64 = 60.0;
pub const DAY: f64 = 86_400.0;
const MINUTES_PER_DAY: u64 = 1440;

/// A drawdown (and optional rebound) plus a relayer latency spike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressEvent {
    /// Start, in seconds from the series origin.
    pub at: f64,
    /// Fractional drop, e.g. 0.3 for -30%.
    pub crash: f64,
    /// Seconds over which the drop unfolds; 0 for a gap.
    #[serde(default)]
    pub duration: f64,
    /// Seconds over which the price climbs back after the drop; absent keeps the new level.
    #[serde(default)]
    pub recovery: Option<f64>,
    /// Extra relayer latency while the event is active.
    #[serde(default)]
    pub latency_spike: f64,
    /// How long the latency spike lasts, from `at`.
    #[serde(default)]
    pub spike_duration: f64,
}

impl StressEvent {
    /// Log-price offset contributed at time `t`.
    fn log_offset(&self, t: f64) -> f64 {
        if t < self.at {
            return 0.0;
        }
        let depth = (1.0 - self.crash).ln();
        let into = t - self.at;
        let fall = if self.duration > 0.0 { (into / self.duration).min(1.0) } else { 1.0 };
        let Some(recovery) = self.recovery else {
            return depth * fall;
        };
        let after = into - self.duration;
        if after <= 0.0 {
            depth * fall
        } else if recovery > 0.0 {
            depth * (1.0 - (after / recovery).min(1.0))
        } else {
            0.0
        }
    }

    pub fn spike_active(&self, t: f64) -> bool {
        self.latency_spike > 0.0 && t >= self.at && t < self.at + self.spike_duration
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StressSpec {
    pub initial_price: f64,
    /// Daily volatility of log returns.
    pub daily_vol: f64,
    /// Daily drift of log returns before the Ito correction.
    pub daily_drift: f64,
    pub source: String,
    pub events: Vec<StressEvent>,
}

impl Default for StressSpec {
    fn default() -> Self {
        Self { initial_price: 42_000.0, daily_vol: 0.02, daily_drift: 0.0, source: "synthetic".into(), events: Vec::new() }
    }
}

impl StressSpec {
    /// Extra latency a message finalized at `t` suffers.
    pub fn latency_spike(&self, t: f64) -> f64 {
        self.events.iter().filter(|e| e.spike_active(t)).map(|e| e.latency_spike).fold(0.0, f64::max)
    }
}

/// Geometric Brownian motion sampled every minute for `days` days, with the
/// stress events layered on in log space. Deterministic in `seed`.
pub fn generate_synthetic_prices(days: u32, seed: u64, spec: &StressSpec) -> Vec<PriceFeed> {
    assert!(days >= 1, "need at least one day");
    let dt = 1.0 / MINUTES_PER_DAY as f64;
    let sd = spec.daily_vol * dt.sqrt();
    let drift = (spec.daily_drift - 0.5 * spec.daily_vol * spec.daily_vol) * dt;
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = u64::from(days) * MINUTES_PER_DAY;
    let mut log_p = spec.initial_price.ln();
    let mut out = Vec::with_capacity(n as usize);
    for i in 0..n {
        let t = i as f64 * MINUTE;
        if i > 0 {
            let z: f64 = noise.sample(&mut rng);
            log_p += drift + sd * z;
        }
        let shock: f64 = spec.events.iter().map(|e| e.log_offset(t)).sum();
        out.push(PriceFeed::new(spec.source.clone(), (log_p + shock).exp(), t));
    }
    out
}

/// Largest intraday excursion from each day's opening price, by day index.
pub fn daily_moves(prices: &[PriceFeed]) -> Vec<(i64, f64)> {
    let mut out: Vec<(i64, f64)> = Vec::new();
    let mut open = f64::NAN;
    for f in prices {
        let day = (f.observed_at / DAY).floor() as i64;
        match out.last_mut() {
            Some((d, m)) if *d == day => *m = m.max((f.price / open - 1.0).abs()),
            _ => {
                open = f.price;
                out.push((day, 0.0));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_volatility_is_constant() {
        let spec = StressSpec { daily_vol: 0.0, ..Default::default() };
        let p = generate_synthetic_prices(2, 1, &spec);
        assert!(p.iter().all(|f| (f.price - 42_000.0).abs() < 1e-9));
    }

    #[test]
    fn row_count_is_minutes() {
        let p = generate_synthetic_prices(547, 42, &StressSpec::default());
        assert_eq!(p.len(), 547 * 1440);
        assert_eq!(p[1].observed_at - p[0].observed_at, 60.0);
    }

    #[test]
    fn crash_shows_in_daily_moves() {
        let ev = StressEvent { at: DAY + 3600.0, crash: 0.5, duration: 600.0, recovery: None, latency_spike: 0.0, spike_duration: 0.0 };
        let spec = StressSpec { daily_vol: 0.0, events: vec![ev], ..Default::default() };
        let p = generate_synthetic_prices(3, 7, &spec);
        let max = daily_moves(&p).iter().map(|d| d.1).fold(0.0, f64::max);
        assert!(max >= 0.5 - 1e-12);
        assert!((p.last().unwrap().price - 21_000.0).abs() < 1e-6);
    }

    #[test]
    fn rebound_returns_to_trend() {
        let ev = StressEvent { at: 600.0, crash: 0.3, duration: 0.0, recovery: Some(1200.0), latency_spike: 900.0, spike_duration: 3600.0 };
        let spec = StressSpec { daily_vol: 0.0, events: vec![ev], ..Default::default() };
        let p = generate_synthetic_prices(1, 7, &spec);
        assert!((p[10].price - 29_400.0).abs() < 1e-6);
        assert!((p[40].price - 42_000.0).abs() < 1e-6);
        assert_eq!(spec.latency_spike(1000.0), 900.0);
        assert_eq!(spec.latency_spike(5000.0), 0.0);
    }

    #[test]
    fn same_seed_same_path() {
        let a = generate_synthetic_prices(1, 5, &StressSpec::default());
        let b = generate_synthetic_prices(1, 5, &StressSpec::default());
        let c = generate_synthetic_prices(1, 6, &StressSpec::default());
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
