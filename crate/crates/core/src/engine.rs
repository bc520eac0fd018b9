//! Deterministic discrete-event loop: price feeds, collateral events and
//! scheduled swaps are processed in time order through oracle, state machine
//! and pricing, with per-epoch bad-debt accounting.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, OracleError};
use crate::oracle::{aggregate, deviation, health_index, measure_latency, PriceFeed};
use crate::params::{ConfigFile, ProtocolParams};
use crate::pricing::{apply_swap, check_solvency, mode_haircut, quote_reverse, quote_swap};
use crate::relayer::{Delivery, DeliverySchedule};
use crate::statemachine::{effective_limits, step_state, TransitionEvent};
use crate::types::{CollateralLedger, Direction, EpochAccount, HealthIndex, Mode, PoolState, SystemState};

/// Bad debt / collateral ceiling per epoch: `h_max + w_max_frac·h_max`.
pub fn theorem1_bound(p: &ProtocolParams) -> f64 {
    p.h_max + p.w_max_frac * p.h_max
}

/// Which protocol protections are active. The baseline bridge runs with all off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protections {
    pub haircut: bool,
    /// Runs the Normal/Restricted/Halted machine. Off means always Normal.
    pub circuit_breaker: bool,
    pub rate_limit: bool,
    /// Oracle-referenced slippage ceiling and mark-to-market output guard.
    pub oracle_checks: bool,
}

impl Protections {
    pub const ALL: Protections = Protections { haircut: true, circuit_breaker: true, rate_limit: true, oracle_checks: true };
    pub const NONE: Protections =
        Protections { haircut: false, circuit_breaker: false, rate_limit: false, oracle_checks: false };
}

/// Collateral backing the bridged asset, in units of that asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollateralBook {
    pub asset: String,
    /// Units locked on the source chain.
    pub locked: f64,
    /// Bridged units in circulation on the destination chain.
    pub outstanding: f64,
    pub volatility: f64,
}

impl CollateralBook {
    /// Ledger view with the debt marked at `price`.
    pub fn ledger_at(&self, price: f64) -> CollateralLedger {
        CollateralLedger::single(&self.asset, self.locked, self.volatility, self.outstanding * price)
    }

    pub fn prices_at(&self, price: f64) -> BTreeMap<String, f64> {
        BTreeMap::from([(self.asset.clone(), price)])
    }
}

/// Change to the locked collateral at a point in time (negative for a drain).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollateralShock {
    pub at: f64,
    pub delta_units: f64,
}

/// Interval during which LPs hold only `factor` of their liquidity in the pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiquidityWindow {
    pub start: f64,
    pub end: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ProtocolParams,
    pub pool: PoolState,
    pub collateral: CollateralBook,
    pub epoch_length: f64,
    pub seed: u64,
    pub protections: Protections,
    /// Arbitrage rebalances the pool to the accepted oracle price at most once
    /// per this many seconds. `None` disables arbitrage.
    pub arbitrage_interval: Option<f64>,
    pub shocks: Vec<CollateralShock>,
    pub liquidity: Vec<LiquidityWindow>,
}

impl SimConfig {
    pub fn from_config(cfg: &ConfigFile) -> Result<Self, EngineError> {
        let s = &cfg.settings;
        let c = SimConfig {
            params: cfg.params,
            pool: PoolState::new(s.reserve_x, s.reserve_y)?,
            collateral: CollateralBook {
                asset: "BRIDGED".into(),
                locked: s.reserve_x * s.collateral_ratio,
                outstanding: s.reserve_x,
                volatility: 0.0,
            },
            epoch_length: s.epoch_length,
            seed: s.seed,
            protections: Protections::ALL,
            arbitrage_interval: None,
            shocks: Vec::new(),
            liquidity: Vec::new(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        self.params.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        if !(self.epoch_length.is_finite() && self.epoch_length > 0.0) {
            return Err(EngineError::Config(format!("epoch length must be positive, got {}", self.epoch_length)));
        }
        let b = &self.collateral;
        if !(b.locked >= 0.0 && b.outstanding >= 0.0) {
            return Err(EngineError::Config("collateral quantities must be nonnegative".into()));
        }
        if let Some(i) = self.arbitrage_interval {
            if !(i.is_finite() && i >= 0.0) {
                return Err(EngineError::Config(format!("arbitrage interval must be nonnegative, got {i}")));
            }
        }
        for w in &self.liquidity {
            if !(w.end > w.start && w.factor > 0.0 && w.factor.is_finite()) {
                return Err(EngineError::Config(format!("invalid liquidity window {w:?}")));
            }
        }
        Ok(())
    }

    /// Same setup with every protection disabled.
    pub fn baseline(&self) -> Self {
        SimConfig { protections: Protections::NONE, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SwapStatus {
    Settled,
    RevertedSlippage,
    RevertedSolvency,
    RevertedRateLimit,
    BlockedHalted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Message,
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapOutcome {
    pub id: u64,
    pub origin: Origin,
    pub forged: bool,
    pub direction: Direction,
    pub status: SwapStatus,
    pub timestamp: f64,
    pub amount_in: f64,
    /// Input-side reserve just before execution.
    pub input_reserve: f64,
    /// Zero unless settled.
    pub amount_out: f64,
    pub haircut_applied: f64,
    pub mode: Mode,
    pub tau: f64,
    pub deviation: f64,
    pub health: HealthIndex,
    pub oracle_price: f64,
    /// Shortfall against the oracle mark, relative to the fair output. Absent
    /// when the swap never reached pricing.
    pub exec_slippage: Option<f64>,
    pub bad_debt: f64,
    /// Settled volume in quote units.
    pub notional: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub outcomes: Vec<SwapOutcome>,
    pub transitions: Vec<TransitionEvent>,
    pub epochs: Vec<EpochAccount>,
    pub final_pool: PoolState,
    pub final_health: HealthIndex,
    pub solvent: bool,
    pub max_bad_debt_fraction: f64,
}

impl RunReport {
    pub fn total_bad_debt(&self) -> f64 {
        self.epochs.iter().map(|e| e.bad_debt).sum()
    }

    pub fn settled(&self) -> impl Iterator<Item = &SwapOutcome> {
        self.outcomes.iter().filter(|o| o.status == SwapStatus::Settled)
    }

    pub fn count_entries(&self, mode: Mode) -> usize {
        self.transitions.iter().filter(|t| t.to == mode).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_outcomes_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        for o in &self.outcomes {
            w.serialize(o)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum EventRef {
    Price(usize),
    Shock(usize),
    LiquidityStart(usize),
    LiquidityEnd(usize),
    Swap(usize),
}

impl EventRef {
    /// Tie-break rank at equal timestamps: prices first, swaps last.
    fn rank(self) -> u8 {
        match self {
            EventRef::Price(_) => 0,
            EventRef::Shock(_) => 1,
            EventRef::LiquidityStart(_) | EventRef::LiquidityEnd(_) => 2,
            EventRef::Swap(_) => 3,
        }
    }
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    pool: PoolState,
    book: CollateralBook,
    state: SystemState,
    latest: BTreeMap<String, PriceFeed>,
    p_last: Option<f64>,
    last_arbitrage: f64,
    epochs: BTreeMap<u64, EpochAccount>,
    outcomes: Vec<SwapOutcome>,
    transitions: Vec<TransitionEvent>,
}

struct SwapRequest {
    id: u64,
    origin: Origin,
    forged: bool,
    direction: Direction,
    amount_in: f64,
    min_out: f64,
}

/// Runs one simulation. `prices` need not be sorted.
pub fn run(config: &SimConfig, schedule: &DeliverySchedule, prices: &[PriceFeed]) -> Result<RunReport, EngineError> {
    config.validate()?;
    for e in &schedule.entries {
        let amount = match &e.delivery {
            Delivery::Message(m) => m.swap_in,
            Delivery::Local(s) => s.amount_in,
        };
        if !(amount.is_finite() && amount > 0.0) {
            return Err(EngineError::Config(format!("swap amount must be positive, got {amount}")));
        }
    }

    let mut events: Vec<(f64, EventRef)> = Vec::with_capacity(prices.len() + schedule.entries.len());
    events.extend(prices.iter().enumerate().map(|(i, f)| (f.observed_at, EventRef::Price(i))));
    events.extend(config.shocks.iter().enumerate().map(|(i, s)| (s.at, EventRef::Shock(i))));
    for (i, w) in config.liquidity.iter().enumerate() {
        events.push((w.start, EventRef::LiquidityStart(i)));
        events.push((w.end, EventRef::LiquidityEnd(i)));
    }
    events.extend(schedule.entries.iter().enumerate().map(|(i, e)| (e.at, EventRef::Swap(i))));
    // Stable sort keeps input order within a rank, so front-run injections
    // stay ahead of their trigger.
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.rank().cmp(&b.1.rank())));

    let mut eng = Engine {
        cfg: config,
        pool: config.pool,
        book: config.collateral.clone(),
        state: SystemState::default(),
        latest: BTreeMap::new(),
        p_last: None,
        last_arbitrage: f64::NEG_INFINITY,
        epochs: BTreeMap::new(),
        outcomes: Vec::with_capacity(schedule.entries.len()),
        transitions: Vec::new(),
    };

    for (t, ev) in events {
        match ev {
            EventRef::Price(i) => eng.on_price(&prices[i])?,
            EventRef::Shock(i) => eng.book.locked = (eng.book.locked + config.shocks[i].delta_units).max(0.0),
            EventRef::LiquidityStart(i) => eng.pool = eng.pool.scaled(config.liquidity[i].factor)?,
            EventRef::LiquidityEnd(i) => eng.pool = eng.pool.scaled(1.0 / config.liquidity[i].factor)?,
            EventRef::Swap(i) => {
                let entry = &schedule.entries[i];
                eng.on_swap(t, &entry.delivery)?;
            }
        }
    }
    Ok(eng.finish())
}

impl Engine<'_> {
    fn p(&self) -> &ProtocolParams {
        &self.cfg.params
    }

    fn fresh_feeds(&self) -> Vec<PriceFeed> {
        self.latest.values().cloned().collect()
    }

    fn open_epoch(&mut self, t: f64, mark: f64) -> u64 {
        let index = (t / self.cfg.epoch_length).floor().max(0.0) as u64;
        let collateral = self.pool.value_at(mark);
        self.epochs.entry(index).or_insert(EpochAccount {
            epoch_index: index,
            bad_debt: 0.0,
            collateral_start: collateral,
            swaps_settled: 0,
        });
        index
    }

    fn on_price(&mut self, feed: &PriceFeed) -> Result<(), EngineError> {
        let t = feed.observed_at;
        self.latest.insert(feed.source.clone(), feed.clone());
        let agg = aggregate(&self.fresh_feeds(), t, self.p())?.price;
        let Some(last) = self.p_last else {
            self.p_last = Some(agg);
            self.open_epoch(t, agg);
            return Ok(());
        };
        self.open_epoch(t, last);
        let breaker_on = self.cfg.protections.circuit_breaker;
        let accepted =
            !breaker_on || (self.state.mode != Mode::Halted && deviation(agg, last) < self.p().theta_price);
        if accepted {
            self.p_last = Some(agg);
            if let Some(interval) = self.cfg.arbitrage_interval {
                if t - self.last_arbitrage >= interval {
                    self.pool = self.pool.rebalanced_to(agg)?;
                    self.last_arbitrage = t;
                }
            }
        }
        Ok(())
    }

    fn on_swap(&mut self, t: f64, delivery: &Delivery) -> Result<(), EngineError> {
        let (req, tau) = match delivery {
            Delivery::Message(m) => {
                let tau = measure_latency(m, t)?;
                let req = SwapRequest {
                    id: m.id,
                    origin: Origin::Message,
                    forged: false,
                    direction: Direction::BridgedToNative,
                    amount_in: m.swap_in,
                    min_out: m.min_out,
                };
                (req, tau)
            }
            Delivery::Local(s) => {
                let req = SwapRequest {
                    id: s.id,
                    origin: Origin::Local,
                    forged: s.forged,
                    direction: s.direction,
                    amount_in: s.amount_in,
                    min_out: s.min_out,
                };
                (req, self.state.last_tau)
            }
        };

        let agg = match aggregate(&self.fresh_feeds(), t, self.p()) {
            Ok(a) => a.price,
            Err(OracleError::AllStale { .. } | OracleError::NoFeeds) => return Err(EngineError::DataGap { at: t }),
            Err(e) => return Err(e.into()),
        };
        let p_last = self.p_last.unwrap_or(agg);
        let dev = deviation(agg, p_last);
        let health = health_index(&self.book.ledger_at(agg), &self.book.prices_at(agg), tau, self.p())?;
        let epoch = self.open_epoch(t, p_last);

        let prot = self.cfg.protections;
        let mode = if prot.circuit_breaker {
            let (next, event) = step_state(&self.state, t, tau, dev, health, self.p());
            self.state = next;
            self.transitions.extend(event);
            if next.mode != Mode::Halted {
                self.p_last = Some(agg);
            }
            next.mode
        } else {
            self.state = SystemState { last_tau: tau, last_deviation: dev, health, ..self.state };
            self.p_last = Some(agg);
            Mode::Normal
        };

        let mut outcome = SwapOutcome {
            id: req.id,
            origin: req.origin,
            forged: req.forged,
            direction: req.direction,
            status: SwapStatus::BlockedHalted,
            timestamp: t,
            amount_in: req.amount_in,
            input_reserve: match req.direction {
                Direction::BridgedToNative => self.pool.reserve_x(),
                Direction::NativeToBridged => self.pool.reserve_y(),
            },
            amount_out: 0.0,
            haircut_applied: 0.0,
            mode,
            tau,
            deviation: dev,
            health,
            oracle_price: agg,
            exec_slippage: None,
            bad_debt: 0.0,
            notional: 0.0,
        };
        outcome.status = self.execute(&req, tau, agg, mode, &mut outcome)?;

        if outcome.status == SwapStatus::Settled {
            if req.forged {
                self.book.outstanding += req.amount_in;
            }
            let acct = self.epochs.get_mut(&epoch).expect("epoch opened above");
            acct.bad_debt += outcome.bad_debt;
            acct.swaps_settled += 1;
        }
        self.outcomes.push(outcome);
        Ok(())
    }

    fn execute(
        &mut self,
        req: &SwapRequest,
        tau: f64,
        price: f64,
        mode: Mode,
        out: &mut SwapOutcome,
    ) -> Result<SwapStatus, EngineError> {
        let limits = effective_limits(mode, self.p());
        let Some(multiplier) = limits.risk_multiplier else {
            return Ok(SwapStatus::BlockedHalted);
        };
        let prot = self.cfg.protections;
        let forward = req.direction == Direction::BridgedToNative;
        let input_reserve = if forward { self.pool.reserve_x() } else { self.pool.reserve_y() };
        if prot.rate_limit && req.amount_in > limits.w_max * input_reserve {
            return Ok(SwapStatus::RevertedRateLimit);
        }

        let h = if prot.haircut && forward { mode_haircut(tau, multiplier, self.p()) } else { 0.0 };
        out.haircut_applied = h;
        let quote = if forward { quote_swap(&self.pool, req.amount_in, h) } else { quote_reverse(&self.pool, req.amount_in) };

        // Fair output at the oracle mark, and the value the pool actually receives.
        let (fair_out, value_in, value_out) = if forward {
            let value_in = if req.forged { 0.0 } else { (1.0 - h) * req.amount_in * price };
            ((1.0 - h) * req.amount_in * price, value_in, quote.amount_out)
        } else {
            (req.amount_in / price, req.amount_in, quote.amount_out * price)
        };
        let exec_slippage = 1.0 - quote.amount_out / fair_out;
        out.exec_slippage = Some(exec_slippage);

        if (prot.oracle_checks && exec_slippage > self.p().s_max) || quote.amount_out < req.min_out {
            return Ok(SwapStatus::RevertedSlippage);
        }
        if check_solvency(&self.pool, &quote, h).is_err() {
            return Ok(SwapStatus::RevertedSolvency);
        }
        // The output may not exceed the oracle value of the gross input.
        let guard_ok = if forward { quote.amount_out <= req.amount_in * price } else { quote.amount_out * price <= req.amount_in };
        if prot.oracle_checks && !guard_ok {
            return Ok(SwapStatus::RevertedSolvency);
        }
        match apply_swap(&self.pool, req.amount_in, &quote) {
            Ok(next) => self.pool = next,
            Err(_) => return Ok(SwapStatus::RevertedSolvency),
        }
        out.amount_out = quote.amount_out;
        out.bad_debt = (value_out - value_in).max(0.0);
        out.notional = if forward { req.amount_in * price } else { req.amount_in };
        Ok(SwapStatus::Settled)
    }

    fn finish(self) -> RunReport {
        let p = self.cfg.params;
        let final_health = match self.p_last {
            Some(price) => health_index(&self.book.ledger_at(price), &self.book.prices_at(price), self.state.last_tau, &p)
                .unwrap_or(HealthIndex::UNBOUNDED),
            None => HealthIndex::UNBOUNDED,
        };
        let epochs: Vec<EpochAccount> = self.epochs.into_values().collect();
        let max_bad_debt_fraction = epochs.iter().map(EpochAccount::bad_debt_fraction).fold(0.0, f64::max);
        let bound = theorem1_bound(&p);
        let solvent = epochs.iter().all(|e| e.bad_debt_fraction() <= bound) && final_health.value() >= p.h_crit;
        RunReport {
            outcomes: self.outcomes,
            transitions: self.transitions,
            epochs,
            final_pool: self.pool,
            final_health,
            solvent,
            max_bad_debt_fraction,
        }
    }
}
