//! Long-horizon replay of a price series under user flow, comparing the
//! protected pool against an unprotected baseline bridge.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::stats::volume_retention;
use super::synth::{daily_moves, StressEvent, StressSpec, DAY};
use crate::engine::{run, theorem1_bound, CollateralShock, LiquidityWindow, RunReport, SimConfig};
use crate::error::EngineError;
use crate::oracle::PriceFeed;
use crate::pricing::haircut;
use crate::relayer::{Delivery, DeliverySchedule, LocalSwap, ScheduledEvent};
use crate::statemachine::Trigger;
use crate::types::{BridgeMessage, Direction, HealthIndex, Mode};

/// Daily move above which a day counts as high-volatility.
pub const HIGH_VOL_MOVE: f64 = 0.05;

/// User flow and behavioral assumptions for a replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplaySpec {
    pub swaps_per_day: u32,
    /// Median swap size in bridged units.
    pub size_median: f64,
    pub size_sigma: f64,
    /// Share of swaps buying the bridged asset with the native asset.
    pub reverse_share: f64,
    /// Median honest relay latency, seconds.
    pub latency_median: f64,
    pub latency_sigma: f64,
    /// Users accept this much below the fair value they expect.
    pub user_tolerance: f64,
    pub arbitrage_interval: f64,
    /// Share of baseline liquidity withdrawn on high-volatility days.
    pub lp_withdrawal: f64,
}

impl Default for ReplaySpec {
    fn default() -> Self {
        Self {
            swaps_per_day: 100,
            size_median: 0.2,
            size_sigma: 0.8,
            reverse_share: 0.3,
            latency_median: 120.0,
            latency_sigma: 0.5,
            user_tolerance: 0.05,
            arbitrage_interval: 600.0,
            lp_withdrawal: 0.30,
        }
    }
}

/// Everything beyond the price path that a replay fixture injects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayExtras {
    /// Latency spikes (and, for reference, the shocks that shaped the path).
    pub stress: Vec<StressEvent>,
    pub shocks: Vec<CollateralShock>,
    /// Unbacked swaps submitted on the destination chain.
    pub forged: Vec<(f64, LocalSwap)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StressKind {
    CircuitBreaker,
    HighVolatility,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressPeriod {
    pub start: f64,
    pub end: f64,
    pub kind: StressKind,
}

impl StressPeriod {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeBreakdown {
    pub total: f64,
    pub stress: f64,
    pub normal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub days: u64,
    pub swaps_requested: usize,
    pub restricted_entries: usize,
    pub halted_entries: usize,
    pub mode_entries_total: usize,
    pub protected_max_bad_debt_fraction: f64,
    pub baseline_max_bad_debt_fraction: f64,
    /// `1 - protected / baseline`; absent when the baseline has no bad debt.
    pub insolvency_reduction: Option<f64>,
    pub protected_solvent: bool,
    pub baseline_solvent: bool,
    pub theorem1_bound: f64,
    pub protected_within_bound: bool,
    pub protected_volume: VolumeBreakdown,
    pub baseline_volume: VolumeBreakdown,
    /// Percentages; absent when the baseline volume in that bucket is zero.
    pub retention_total: Option<f64>,
    pub retention_stress: Option<f64>,
    pub retention_normal: Option<f64>,
    pub stress_periods: Vec<StressPeriod>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub summary: ReplaySummary,
    pub protected: RunReport,
    pub baseline: RunReport,
}

impl ReplayReport {
    /// (timestamp, health) after each protected-pool swap.
    pub fn health_timeline(&self) -> Vec<(f64, HealthIndex)> {
        self.protected.outcomes.iter().map(|o| (o.timestamp, o.health)).collect()
    }

    /// Settled volume per day: (day, protected pool, baseline).
    pub fn daily_volume(&self) -> Vec<(i64, f64, f64)> {
        let mut days: std::collections::BTreeMap<i64, (f64, f64)> = std::collections::BTreeMap::new();
        for o in self.protected.settled() {
            days.entry((o.timestamp / DAY).floor() as i64).or_default().0 += o.notional;
        }
        for o in self.baseline.settled() {
            days.entry((o.timestamp / DAY).floor() as i64).or_default().1 += o.notional;
        }
        days.into_iter().map(|(d, (a, b))| (d, a, b)).collect()
    }
}

/// Last observed price at or before `t`.
fn price_at(prices: &[PriceFeed], t: f64) -> f64 {
    let i = prices.partition_point(|f| f.observed_at <= t);
    prices[i.saturating_sub(1)].price
}

/// Seeded user flow. Forward swaps arrive as relayed messages, reverse swaps
/// as local submissions. `expected_haircut` is the haircut users anticipate
/// when setting their slippage floor.
pub fn user_flow(prices: &[PriceFeed], spec: &ReplaySpec, stress: &StressSpec, seed: u64, expected_haircut: f64) -> DeliverySchedule {
    let (t0, t1) = (prices[0].observed_at, prices[prices.len() - 1].observed_at);
    let days = ((t1 - t0) / DAY).ceil().max(1.0) as u64;
    let size = LogNormal::new(spec.size_median.ln(), spec.size_sigma).expect("valid size distribution");
    let latency = LogNormal::new(spec.latency_median.ln(), spec.latency_sigma).expect("valid latency distribution");
    let mut messages = Vec::new();
    let mut locals = Vec::new();
    let mut id = 0u64;
    for day in 0..days {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(day);
        for _ in 0..spec.swaps_per_day {
            let t = t0 + day as f64 * DAY + rng.random_range(0.0..DAY);
            let dx: f64 = size.sample(&mut rng);
            let tau: f64 = latency.sample(&mut rng) + stress.latency_spike(t);
            let reverse = rng.random_bool(spec.reverse_share);
            id += 1;
            let p = price_at(prices, t);
            if reverse {
                if t > t1 {
                    continue;
                }
                let dy = dx * p;
                let min_out = (1.0 - spec.user_tolerance) * dy / p;
                locals.push((t, LocalSwap { id, direction: Direction::NativeToBridged, amount_in: dy, min_out, forged: false }));
            } else {
                if t + tau > t1 {
                    continue;
                }
                let min_out = (1.0 - spec.user_tolerance) * (1.0 - expected_haircut) * dx * p;
                let mut m = BridgeMessage::new(id, t, dx).with_min_out(min_out);
                m.t_receipt_dest = Some(t + tau);
                messages.push(m);
            }
        }
    }
    // Each message already carries its own receipt time.
    let mut entries: Vec<ScheduledEvent> = messages
        .into_iter()
        .map(|m| ScheduledEvent { at: m.t_receipt_dest.expect("stamped above"), delivery: Delivery::Message(m) })
        .collect();
    entries.sort_by(|a, b| a.at.total_cmp(&b.at));
    let sched = DeliverySchedule { entries };
    sched.with_local_swaps(locals)
}

/// High-volatility windows, one per run of consecutive days whose move exceeds the threshold.
pub fn high_volatility_windows(prices: &[PriceFeed]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (day, mv) in daily_moves(prices) {
        if mv <= HIGH_VOL_MOVE {
            continue;
        }
        let (s, e) = (day as f64 * DAY, (day + 1) as f64 * DAY);
        match out.last_mut() {
            Some(last) if last.1 >= s => last.1 = e,
            _ => out.push((s, e)),
        }
    }
    out
}

/// Windows during which the system sat in Halted after a price-deviation trip.
fn breaker_windows(report: &RunReport, horizon_end: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut open: Option<f64> = None;
    for tr in &report.transitions {
        if tr.to == Mode::Halted && tr.trigger == Trigger::PriceDeviation && open.is_none() {
            open = Some(tr.timestamp);
        } else if tr.from == Mode::Halted && tr.to != Mode::Halted {
            if let Some(s) = open.take() {
                out.push((s, tr.timestamp));
            }
        }
    }
    if let Some(s) = open {
        out.push((s, horizon_end.max(s)));
    }
    // A window must have positive length to be a period.
    out.into_iter().map(|(s, e)| if e > s { (s, e) } else { (s, s + 60.0) }).collect()
}

/// Circuit-breaker windows and high-volatility days, with overlapping
/// windows of different kinds merged into a Mixed period.
pub fn detect_stress_periods(report: &RunReport, prices: &[PriceFeed]) -> Vec<StressPeriod> {
    let end = prices.last().map(|f| f.observed_at).unwrap_or(0.0);
    let mut windows: Vec<(f64, f64, StressKind)> = breaker_windows(report, end)
        .into_iter()
        .map(|(s, e)| (s, e, StressKind::CircuitBreaker))
        .chain(high_volatility_windows(prices).into_iter().map(|(s, e)| (s, e, StressKind::HighVolatility)))
        .collect();
    windows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<StressPeriod> = Vec::new();
    for (s, e, kind) in windows {
        match out.last_mut() {
            Some(last) if s < last.end => {
                last.end = last.end.max(e);
                if last.kind != kind {
                    last.kind = StressKind::Mixed;
                }
            }
            _ => out.push(StressPeriod { start: s, end: e, kind }),
        }
    }
    out
}

fn volumes(report: &RunReport, periods: &[StressPeriod]) -> VolumeBreakdown {
    let (mut total, mut stress) = (0.0, 0.0);
    for o in report.settled() {
        total += o.notional;
        if periods.iter().any(|p| p.contains(o.timestamp)) {
            stress += o.notional;
        }
    }
    VolumeBreakdown { total, stress, normal: total - stress }
}

fn retention(a: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| volume_retention(a, b))
}

/// Replays `prices` for the protected pool and the baseline bridge.
pub fn run_replay(
    prices: &[PriceFeed],
    spec: &ReplaySpec,
    extras: &ReplayExtras,
    cfg: &SimConfig,
) -> Result<ReplayReport, EngineError> {
    if prices.is_empty() {
        return Err(EngineError::DataGap { at: 0.0 });
    }
    let mut prices = prices.to_vec();
    prices.sort_by(|a, b| a.observed_at.total_cmp(&b.observed_at));
    let stress = StressSpec { events: extras.stress.clone(), ..Default::default() };

    let mut protected_cfg = cfg.clone();
    protected_cfg.arbitrage_interval = Some(spec.arbitrage_interval);
    protected_cfg.shocks.extend(extras.shocks.iter().copied());
    let mut base_cfg = protected_cfg.baseline();
    if spec.lp_withdrawal > 0.0 {
        base_cfg.liquidity.extend(high_volatility_windows(&prices).into_iter().map(|(start, end)| LiquidityWindow {
            start,
            end,
            factor: 1.0 - spec.lp_withdrawal,
        }));
    }

    let expected_h = haircut(spec.latency_median, &cfg.params);
    let protected_sched = user_flow(&prices, spec, &stress, cfg.seed, expected_h).with_local_swaps(extras.forged.clone());
    let base_sched = user_flow(&prices, spec, &stress, cfg.seed, 0.0).with_local_swaps(extras.forged.clone());
    let swaps_requested = protected_sched.entries.len();

    let protected = run(&protected_cfg, &protected_sched, &prices)?;
    let baseline = run(&base_cfg, &base_sched, &prices)?;

    let periods = detect_stress_periods(&protected, &prices);
    let av = volumes(&protected, &periods);
    let bv = volumes(&baseline, &periods);
    let bound = theorem1_bound(&cfg.params);
    let restricted_entries = protected.count_entries(Mode::Restricted);
    let halted_entries = protected.count_entries(Mode::Halted);
    let (t0, t1) = (prices[0].observed_at, prices[prices.len() - 1].observed_at);
    let summary = ReplaySummary {
        days: ((t1 - t0) / DAY).ceil().max(1.0) as u64,
        swaps_requested,
        restricted_entries,
        halted_entries,
        mode_entries_total: restricted_entries + halted_entries,
        protected_max_bad_debt_fraction: protected.max_bad_debt_fraction,
        baseline_max_bad_debt_fraction: baseline.max_bad_debt_fraction,
        insolvency_reduction: (baseline.max_bad_debt_fraction > 0.0)
            .then(|| 1.0 - protected.max_bad_debt_fraction / baseline.max_bad_debt_fraction),
        protected_solvent: protected.solvent,
        baseline_solvent: baseline.solvent,
        theorem1_bound: bound,
        protected_within_bound: protected.epochs.iter().all(|e| e.bad_debt_fraction() <= bound),
        retention_total: retention(av.total, bv.total),
        retention_stress: retention(av.stress, bv.stress),
        retention_normal: retention(av.normal, bv.normal),
        protected_volume: av,
        baseline_volume: bv,
        stress_periods: periods,
    };
    Ok(ReplayReport { summary, protected, baseline })
}

/// A bridge-compromise fixture: a validator drain removes most of the excess
/// collateral, an attacker dumps unbacked tokens while relaying slows to a
/// crawl, and the operator recapitalizes a day later.
pub fn orbit_fixture(seed: u64) -> (Vec<PriceFeed>, ReplayExtras) {
    use super::synth::generate_synthetic_prices;
    let drain_at = DAY + 6.0 * 3600.0;
    let events = vec![StressEvent {
        at: drain_at,
        crash: 0.12,
        duration: 4.0 * 3600.0,
        recovery: None,
        latency_spike: 900.0,
        spike_duration: 6.0 * 3600.0,
    }];
    let spec = StressSpec { events: events.clone(), ..Default::default() };
    let prices = generate_synthetic_prices(4, seed, &spec);
    let forged = (0..6)
        .map(|i| {
            let swap = LocalSwap {
                id: 9_000_000 + i,
                direction: Direction::BridgedToNative,
                amount_in: 0.8,
                min_out: 0.0,
                forged: true,
            };
            (drain_at + 1800.0 + i as f64 * 1200.0, swap)
        })
        .collect();
    let extras = ReplayExtras {
        stress: events,
        shocks: vec![
            CollateralShock { at: drain_at, delta_units: -2.4 },
            CollateralShock { at: drain_at + DAY, delta_units: 2.4 },
        ],
        forged,
    };
    (prices, extras)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::synth::generate_synthetic_prices;
    use crate::params::ConfigFile;
    use crate::relayer::{honest_policy, schedule};

    fn cfg() -> SimConfig {
        SimConfig::from_config(&ConfigFile::default()).unwrap()
    }

    fn flat(days: u32) -> Vec<PriceFeed> {
        generate_synthetic_prices(days, 1, &StressSpec { daily_vol: 0.0, ..Default::default() })
    }

    #[test]
    fn flat_series_has_no_mode_changes() {
        let r = run_replay(&flat(3), &ReplaySpec::default(), &ReplayExtras::default(), &cfg()).unwrap();
        assert_eq!(r.summary.mode_entries_total, 0);
        assert_eq!(r.baseline.transitions.len(), 0);
        assert!(r.summary.stress_periods.is_empty());
        assert!(r.summary.protected_solvent);
    }

    #[test]
    fn orbit_fixture_halts_and_stays_bounded() {
        let (prices, extras) = orbit_fixture(42);
        let r = run_replay(&prices, &ReplaySpec::default(), &extras, &cfg()).unwrap();
        assert!(r.summary.halted_entries >= 1);
        assert!(r.summary.protected_within_bound);
        assert!(r.summary.baseline_max_bad_debt_fraction >= r.summary.protected_max_bad_debt_fraction);
        assert!(r.protected.outcomes.iter().filter(|o| o.forged).all(|o| o.status != crate::engine::SwapStatus::Settled));
    }

    #[test]
    fn single_volatile_day_is_high_volatility() {
        let ev = StressEvent { at: DAY + 3600.0, crash: 0.06, duration: 3600.0, recovery: None, latency_spike: 0.0, spike_duration: 0.0 };
        let prices = generate_synthetic_prices(3, 1, &StressSpec { daily_vol: 0.0, events: vec![ev], ..Default::default() });
        let empty = run(&cfg(), &DeliverySchedule::default(), &prices).unwrap();
        let periods = detect_stress_periods(&empty, &prices);
        assert_eq!(periods, vec![StressPeriod { start: DAY, end: 2.0 * DAY, kind: StressKind::HighVolatility }]);
    }

    #[test]
    fn crash_day_with_breaker_is_mixed() {
        let ev = StressEvent { at: DAY + 3600.0, crash: 0.6, duration: 0.0, recovery: Some(3.0 * 3600.0), latency_spike: 0.0, spike_duration: 0.0 };
        let prices = generate_synthetic_prices(3, 1, &StressSpec { daily_vol: 0.0, events: vec![ev], ..Default::default() });
        let msgs: Vec<_> = (0..6).map(|i| BridgeMessage::new(i, DAY + 3600.0 + i as f64 * 1800.0, 0.1)).collect();
        let sched = schedule(&msgs, &honest_policy(), 60.0);
        let report = run(&cfg(), &sched, &prices).unwrap();
        assert!(report.transitions.iter().any(|t| t.trigger == Trigger::PriceDeviation));
        let periods = detect_stress_periods(&report, &prices);
        assert_eq!(periods.len(), 1);
        assert_eq!(periods[0].kind, StressKind::Mixed);
    }

    #[test]
    fn flat_series_has_no_stress_periods() {
        let prices = flat(2);
        let report = run(&cfg(), &DeliverySchedule::default(), &prices).unwrap();
        assert!(detect_stress_periods(&report, &prices).is_empty());
    }
}
