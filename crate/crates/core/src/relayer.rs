//! Byzantine relayer model: turns finalized messages into a delivery schedule
//! under a scripted adversary policy (delay, reorder, censor, front-run).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::IngestError;
use crate::types::{BridgeMessage, Direction};

/// Extra delay the relayer adds to each message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DelayRule {
    #[default]
    None,
    Constant(f64),
    /// Delay keyed by message id; unlisted messages are not delayed.
    PerMessage(BTreeMap<u64, f64>),
    /// Independent uniform draw per message, seeded by the policy seed and message id.
    Uniform { min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReorderRule {
    #[default]
    None,
    Reverse,
    /// Seeded permutation of the delivery order.
    Shuffle,
}

/// A swap submitted directly on the destination chain rather than via a message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSwap {
    pub id: u64,
    #[serde(default)]
    pub direction: Direction,
    pub amount_in: f64,
    #[serde(default)]
    pub min_out: f64,
    /// Input minted without backing collateral (e.g. after a validator compromise).
    #[serde(default)]
    pub forged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontRun {
    pub trigger: u64,
    pub swap: LocalSwap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AdversaryPolicy {
    pub delay: DelayRule,
    pub reorder: ReorderRule,
    pub censor: BTreeSet<u64>,
    pub frontrun: Vec<FrontRun>,
    pub seed: u64,
}

impl AdversaryPolicy {
    fn added_delay(&self, msg: &BridgeMessage) -> f64 {
        let d = match &self.delay {
            DelayRule::None => 0.0,
            DelayRule::Constant(d) => *d,
            DelayRule::PerMessage(map) => map.get(&msg.id).copied().unwrap_or(0.0),
            DelayRule::Uniform { min, max } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(msg.id);
                if max > min { rng.random_range(*min..*max) } else { *min }
            }
        };
        assert!(d.is_finite() && d >= 0.0, "relayer delay must be finite and nonnegative, got {d}");
        d
    }

    /// Checks the policy's own invariants.
    pub fn validate(&self) -> Result<(), String> {
        let ok = |d: f64| d.is_finite() && d >= 0.0;
        match &self.delay {
            DelayRule::None => {}
            DelayRule::Constant(d) if !ok(*d) => return Err(format!("constant delay {d} is invalid")),
            DelayRule::PerMessage(map) => {
                if let Some((id, d)) = map.iter().find(|(_, d)| !ok(**d)) {
                    return Err(format!("delay {d} for message {id} is invalid"));
                }
            }
            DelayRule::Uniform { min, max } if !(ok(*min) && ok(*max) && min <= max) => {
                return Err(format!("uniform delay range [{min}, {max}] is invalid"));
            }
            _ => {}
        }
        Ok(())
    }
}

pub fn honest_policy() -> AdversaryPolicy {
    AdversaryPolicy::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Delivery {
    Message(BridgeMessage),
    Local(LocalSwap),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub at: f64,
    pub delivery: Delivery,
}

/// Destination-side arrivals in execution order; timestamps are nondecreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DeliverySchedule {
    pub entries: Vec<ScheduledEvent>,
}

impl DeliverySchedule {
    pub fn is_ordered(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].at <= w[1].at)
    }

    /// Appends locally submitted swaps and restores time order. Existing
    /// entries keep their relative order at equal timestamps.
    pub fn with_local_swaps(mut self, swaps: impl IntoIterator<Item = (f64, LocalSwap)>) -> Self {
        self.entries.extend(swaps.into_iter().map(|(at, s)| ScheduledEvent { at, delivery: Delivery::Local(s) }));
        self.entries.sort_by(|a, b| a.at.total_cmp(&b.at));
        self
    }
}

/// Applies `policy` to `messages` relayed with `base_latency` seconds of honest delay.
pub fn schedule(messages: &[BridgeMessage], policy: &AdversaryPolicy, base_latency: f64) -> DeliverySchedule {
    assert!(base_latency.is_finite() && base_latency >= 0.0, "base latency must be nonnegative");
    let mut live: Vec<(f64, BridgeMessage)> = messages
        .iter()
        .filter(|m| !policy.censor.contains(&m.id))
        .map(|m| (m.t_finalized_src + base_latency + policy.added_delay(m), m.clone()))
        .collect();
    // Natural order: arrival time, then finality, then id.
    live.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then(a.1.t_finalized_src.total_cmp(&b.1.t_finalized_src)).then(a.1.id.cmp(&b.1.id))
    });

    match policy.reorder {
        ReorderRule::None => {}
        ReorderRule::Reverse => live.reverse(),
        ReorderRule::Shuffle => live.shuffle(&mut ChaCha8Rng::seed_from_u64(policy.seed)),
    }

    let mut entries = Vec::with_capacity(live.len() + policy.frontrun.len());
    let mut clock = f64::NEG_INFINITY;
    for (natural, mut msg) in live {
        // A held-back message can only arrive later than its natural time.
        let at = natural.max(clock);
        clock = at;
        msg.t_receipt_dest = Some(at);
        for fr in policy.frontrun.iter().filter(|f| f.trigger == msg.id) {
            entries.push(ScheduledEvent { at, delivery: Delivery::Local(fr.swap.clone()) });
        }
        entries.push(ScheduledEvent { at, delivery: Delivery::Message(msg) });
    }
    DeliverySchedule { entries }
}

/// Relayer scenario file: the messages, the honest latency and the adversary script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub base_latency: f64,
    pub messages: Vec<BridgeMessage>,
    #[serde(default)]
    pub policy: AdversaryPolicy,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let s: Scenario = serde_json::from_str(text)?;
        if !(s.base_latency.is_finite() && s.base_latency >= 0.0) {
            return Err(IngestError::Invalid { line: 0, message: "base_latency must be nonnegative".into() });
        }
        s.policy.validate().map_err(|message| IngestError::Invalid { line: 0, message })?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IngestError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text)
    }

    pub fn schedule(&self) -> DeliverySchedule {
        schedule(&self.messages, &self.policy, self.base_latency)
    }
}
