//! The ten attack-vector fixtures and their expected outcomes.

use serde::{Deserialize, Serialize};

use crate::engine::{run, SimConfig, SwapStatus};
use crate::error::EngineError;
use crate::oracle::PriceFeed;
use crate::relayer::{honest_policy, schedule, AdversaryPolicy, FrontRun, LocalSwap};
use crate::types::{BridgeMessage, Direction, Mode};

const SOURCES: [&str; 3] = ["feed-a", "feed-b", "feed-c"];
const FINALITY: f64 = 600.0;
const VICTIM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AttackStatus {
    Solvent,
    Protected,
    Insolvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    /// Instantaneous drop halfway through the flight.
    Crash,
    /// Linear decline in 25 one-minute steps before the message finalizes.
    Gradual,
    /// An adversarial same-direction swap lands just ahead of the victim.
    FrontRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackVector {
    pub number: u8,
    pub name: &'static str,
    pub latency: f64,
    pub deviation: f64,
    pub swap_size: f64,
    pub shape: Shape,
    pub expect_cb: bool,
    pub expect_swap_ok: bool,
    pub expect_status: AttackStatus,
}

const fn v(
    number: u8,
    name: &'static str,
    latency: f64,
    deviation: f64,
    swap_size: f64,
    shape: Shape,
    expect: (bool, bool, AttackStatus),
) -> AttackVector {
    AttackVector {
        number,
        name,
        latency,
        deviation,
        swap_size,
        shape,
        expect_cb: expect.0,
        expect_swap_ok: expect.1,
        expect_status: expect.2,
    }
}

use AttackStatus::{Protected, Solvent};
use Shape::{Crash, FrontRun as Sandwich, Gradual};

pub const VECTORS: [AttackVector; 10] = [
    v(1, "Normal Operation", 60.0, 0.0, 1.0, Crash, (false, true, Solvent)),
    v(2, "50% Crash, No Latency", 0.0, 0.5, 1.0, Crash, (true, false, Protected)),
    v(3, "50% Crash, 15min Latency", 900.0, 0.5, 1.0, Crash, (true, false, Protected)),
    v(4, "50% Crash, 60min Latency", 3600.0, 0.5, 1.0, Crash, (true, false, Protected)),
    v(5, "Large Drain Attempt", 300.0, 0.5, 5.0, Crash, (true, false, Protected)),
    v(6, "Gradual 25% Drop", 60.0, 0.25, 1.0, Gradual, (false, true, Solvent)),
    v(7, "Sandwich Attack", 60.0, 0.0, 1.0, Sandwich, (false, false, Protected)),
    v(8, "Oracle Delay Exploit", 1800.0, 0.5, 2.0, Crash, (true, false, Protected)),
    v(9, "Extreme Latency (2h)", 7200.0, 0.0, 1.0, Crash, (true, false, Protected)),
    v(10, "Maximum Stress Test", 5400.0, 0.5, 8.0, Crash, (true, false, Protected)),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub number: u8,
    pub name: String,
    pub latency: f64,
    pub deviation: f64,
    pub swap_size: f64,
    pub cb_active: bool,
    pub swap_ok: bool,
    pub status: AttackStatus,
    pub victim_status: SwapStatus,
    pub victim_exec_slippage: Option<f64>,
    pub bad_debt: f64,
    pub expected_cb: bool,
    pub expected_swap_ok: bool,
    pub expected_status: AttackStatus,
    pub matches: bool,
}

fn feeds_at(t: f64, price: f64) -> impl Iterator<Item = PriceFeed> {
    SOURCES.into_iter().map(move |s| PriceFeed::new(s, price, t))
}

pub fn run_vector(cfg: &SimConfig, vector: &AttackVector) -> Result<AttackOutcome, EngineError> {
    let cfg = SimConfig { arbitrage_interval: Some(0.0), ..cfg.clone() };
    let p0 = cfg.pool.spot_price();
    let mut prices: Vec<PriceFeed> = feeds_at(0.0, p0).collect();
    let mut finality = FINALITY;
    let mut policy = honest_policy();

    match vector.shape {
        Shape::Crash => {
            let crashed = p0 * (1.0 - vector.deviation);
            prices.extend(feeds_at(finality + vector.latency / 2.0, crashed));
            prices.extend(feeds_at(finality + vector.latency, crashed));
        }
        Shape::Gradual => {
            const STEPS: u32 = 25;
            for i in 1..=STEPS {
                let px = p0 * (1.0 - vector.deviation * f64::from(i) / f64::from(STEPS));
                prices.extend(feeds_at(60.0 * f64::from(i), px));
            }
            finality = 60.0 * f64::from(STEPS);
            prices.extend(feeds_at(finality + vector.latency, p0 * (1.0 - vector.deviation)));
        }
        Shape::FrontRun => {
            prices.extend(feeds_at(finality + vector.latency, p0));
            let swap = LocalSwap {
                id: 1000 + u64::from(vector.number),
                direction: Direction::BridgedToNative,
                amount_in: vector.swap_size,
                min_out: 0.0,
                forged: false,
            };
            policy = AdversaryPolicy { frontrun: vec![FrontRun { trigger: VICTIM, swap }], ..policy };
        }
    }

    let msg = BridgeMessage::new(VICTIM, finality, vector.swap_size);
    let sched = schedule(&[msg], &policy, vector.latency);
    let report = run(&cfg, &sched, &prices)?;
    let victim = report.outcomes.iter().find(|o| o.id == VICTIM).expect("victim scheduled");

    let cb_active = report.count_entries(Mode::Halted) > 0;
    let swap_ok = victim.status == SwapStatus::Settled;
    let bad_debt = report.total_bad_debt();
    let status = if !report.solvent {
        AttackStatus::Insolvent
    } else if swap_ok {
        AttackStatus::Solvent
    } else {
        AttackStatus::Protected
    };
    Ok(AttackOutcome {
        number: vector.number,
        name: vector.name.to_string(),
        latency: vector.latency,
        deviation: vector.deviation,
        swap_size: vector.swap_size,
        cb_active,
        swap_ok,
        status,
        victim_status: victim.status,
        victim_exec_slippage: victim.exec_slippage,
        bad_debt,
        expected_cb: vector.expect_cb,
        expected_swap_ok: vector.expect_swap_ok,
        expected_status: vector.expect_status,
        matches: (cb_active, swap_ok, status) == (vector.expect_cb, vector.expect_swap_ok, vector.expect_status),
    })
}

pub fn run_attack_suite(cfg: &SimConfig) -> Result<Vec<AttackOutcome>, EngineError> {
    VECTORS.iter().map(|v| run_vector(cfg, v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ConfigFile;

    fn suite() -> Vec<AttackOutcome> {
        run_attack_suite(&SimConfig::from_config(&ConfigFile::default()).unwrap()).unwrap()
    }

    #[test]
    fn every_vector_matches_expectation() {
        for o in suite() {
            assert!(o.matches, "vector {} ({}) diverged: {o:?}", o.number, o.name);
        }
    }

    #[test]
    fn sandwich_reverts_on_slippage_not_breaker() {
        let o = &suite()[6];
        assert_eq!(o.victim_status, SwapStatus::RevertedSlippage);
        assert!(!o.cb_active);
        assert!(o.victim_exec_slippage.unwrap() > 0.2);
    }

    #[test]
    fn maximum_stress_has_no_bad_debt() {
        let o = &suite()[9];
        assert_eq!(o.victim_status, SwapStatus::BlockedHalted);
        assert_eq!(o.bad_debt, 0.0);
    }
}
