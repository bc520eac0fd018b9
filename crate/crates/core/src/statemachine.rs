//! Normal / Restricted / Halted operational state machine.
//!
//! The machine is a single-owner sequential object: callers feed observables
//! one step at a time and receive at most one [`TransitionEvent`] per step.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::params::ProtocolParams;
use crate::types::{CbReason, HealthIndex, Mode, SystemState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HealthBand {
    Normal,
    Restricted,
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Trigger {
    LatencyBand,
    HealthBand,
    PriceDeviation,
    LatencyTimeout,
    HealthCritical,
    Recovery,
}

impl From<CbReason> for Trigger {
    fn from(r: CbReason) -> Self {
        match r {
            CbReason::PriceDeviation => Trigger::PriceDeviation,
            CbReason::LatencyTimeout => Trigger::LatencyTimeout,
            CbReason::HealthCritical => Trigger::HealthCritical,
        }
    }
}

/// One mode change. `from` and `to` always differ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub timestamp: f64,
    pub from: Mode,
    pub to: Mode,
    pub trigger: Trigger,
}

pub fn classify_health(h_index: HealthIndex, p: &ProtocolParams) -> HealthBand {
    let h = h_index.value();
    if h >= p.h_safe {
        HealthBand::Normal
    } else if h >= p.h_crit {
        HealthBand::Restricted
    } else {
        HealthBand::Critical
    }
}

/// Breaker check with fixed precedence: price deviation, then latency, then health.
pub fn check_circuit_breaker(tau: f64, deviation: f64, h_index: HealthIndex, p: &ProtocolParams) -> Option<CbReason> {
    if deviation >= p.theta_price {
        Some(CbReason::PriceDeviation)
    } else if tau > p.tau_crit {
        Some(CbReason::LatencyTimeout)
    } else if h_index.value() < p.h_crit {
        Some(CbReason::HealthCritical)
    } else {
        None
    }
}

/// Advances the machine by one observation at `timestamp`.
pub fn step_state(
    state: &SystemState,
    timestamp: f64,
    tau: f64,
    deviation: f64,
    h_index: HealthIndex,
    p: &ProtocolParams,
) -> (SystemState, Option<TransitionEvent>) {
    let breaker = check_circuit_breaker(tau, deviation, h_index, p);
    let latency_restricted = tau > p.tau_restrict;
    let band = classify_health(h_index, p);

    let (mode, cb_reason, trigger) = match (state.mode, breaker) {
        (_, Some(reason)) => (Mode::Halted, Some(reason), Trigger::from(reason)),
        // Halted only clears once every observable is back in its Normal band.
        (Mode::Halted, None) if latency_restricted || band != HealthBand::Normal => {
            (Mode::Halted, state.cb_reason, Trigger::Recovery)
        }
        (_, None) if latency_restricted => (Mode::Restricted, None, Trigger::LatencyBand),
        (_, None) if band != HealthBand::Normal => (Mode::Restricted, None, Trigger::HealthBand),
        (_, None) => (Mode::Normal, None, Trigger::Recovery),
    };

    let next = SystemState { mode, last_tau: tau, last_deviation: deviation, health: h_index, cb_reason };
    let event = (mode != state.mode).then_some(TransitionEvent { timestamp, from: state.mode, to: mode, trigger });
    (next, event)
}

/// Risk controls in force for a mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveLimits {
    /// Multiplier on the haircut. `None` when nothing may settle.
    pub risk_multiplier: Option<f64>,
    pub w_max: f64,
    pub outflows_allowed: bool,
}

pub fn effective_limits(mode: Mode, p: &ProtocolParams) -> EffectiveLimits {
    match mode {
        Mode::Normal => EffectiveLimits { risk_multiplier: Some(1.0), w_max: p.w_max_frac, outflows_allowed: true },
        Mode::Restricted => EffectiveLimits {
            risk_multiplier: Some(p.restricted_multiplier),
            w_max: p.w_max_frac,
            outflows_allowed: true,
        },
        Mode::Halted => EffectiveLimits { risk_multiplier: None, w_max: 0.0, outflows_allowed: false },
    }
}

/// Writes transition events as newline-delimited JSON, one record per event.
pub fn write_transition_log<W: Write>(mut out: W, events: &[TransitionEvent]) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
