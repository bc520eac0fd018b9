//! Monte Carlo solvency analysis: each iteration is a one-epoch run with a
//! price crash while one message is in flight.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{clopper_pearson_lower, clopper_pearson_upper, Summary};
use super::with_jobs;
use crate::engine::{run, theorem1_bound, SimConfig, SwapStatus};
use crate::error::EngineError;
use crate::oracle::PriceFeed;
use crate::relayer::{honest_policy, schedule};
use crate::types::{BridgeMessage, Mode};

/// Bad-debt fraction the 99th percentile must stay under.
pub const BAD_DEBT_THRESHOLD: f64 = 0.002;

const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McScenario {
    pub drawdown: f64,
    /// Seconds between source finality and destination receipt.
    pub latency: f64,
    pub swap_size: f64,
}

/// Independent stream for iteration `index` of a run seeded with `seed`.
pub fn iteration_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn sample_scenario<R: Rng>(rng: &mut R) -> McScenario {
    let latency = LogNormal::new(5.7, 2.0).expect("valid log-normal");
    let size = LogNormal::new(0.0, 1.5).expect("valid log-normal");
    McScenario { drawdown: rng.random_range(0.0..=0.5), latency: latency.sample(rng), swap_size: size.sample(rng) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McIteration {
    pub index: u64,
    #[serde(flatten)]
    pub scenario: McScenario,
    pub status: SwapStatus,
    pub solvent: bool,
    pub bad_debt_fraction: f64,
    pub halted: bool,
    pub restricted: bool,
}

/// Runs the engine on one scenario: oracle at the pool price at t = 0, a drop
/// of `drawdown` halfway through the flight, refreshed at delivery. No
/// arbitrage, so the pool still quotes the pre-crash price on arrival.
pub fn run_scenario(cfg: &SimConfig, index: u64, sc: &McScenario) -> Result<McIteration, EngineError> {
    let cfg = SimConfig { arbitrage_interval: None, ..cfg.clone() };
    let p0 = cfg.pool.spot_price();
    let crashed = p0 * (1.0 - sc.drawdown);
    let prices = [
        PriceFeed::new("oracle", p0, 0.0),
        PriceFeed::new("oracle", crashed, sc.latency / 2.0),
        PriceFeed::new("oracle", crashed, sc.latency),
    ];
    let sched = schedule(&[BridgeMessage::new(index, 0.0, sc.swap_size)], &honest_policy(), sc.latency);
    let report = run(&cfg, &sched, &prices)?;
    Ok(McIteration {
        index,
        scenario: *sc,
        status: report.outcomes[0].status,
        solvent: report.solvent,
        bad_debt_fraction: report.max_bad_debt_fraction,
        halted: report.count_entries(Mode::Halted) > 0,
        restricted: report.count_entries(Mode::Restricted) > 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvencyRow {
    pub label: String,
    pub count: u64,
    pub solvent: u64,
    pub probability: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl SolvencyRow {
    fn tally<'a>(label: &str, rows: impl Iterator<Item = &'a McIteration>) -> SolvencyRow {
        let (count, solvent) = rows.fold((0u64, 0u64), |(c, s), r| (c + 1, s + r.solvent as u64));
        let (probability, ci_lower, ci_upper) = if count == 0 {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            (
                solvent as f64 / count as f64,
                clopper_pearson_lower(solvent, count, ALPHA),
                clopper_pearson_upper(solvent, count, ALPHA),
            )
        };
        SolvencyRow { label: label.to_string(), count, solvent, probability, ci_lower, ci_upper }
    }
}

/// Combined stress classes, most severe first. Each iteration lands in at
/// most one class: the first whose thresholds it meets.
pub const STRESS_CLASSES: [(&str, f64, f64); 3] = [
    ("Extreme (40%+ DD, 30min+)", 0.40, 1800.0),
    ("High (25%+ DD, 15min+)", 0.25, 900.0),
    ("Medium (10%+ DD, 15min+)", 0.10, 900.0),
];
pub const LOW_STRESS_LABEL: &str = "Low (10%+ DD or 15min+)";

pub fn stress_class(sc: &McScenario) -> Option<&'static str> {
    for (label, dd, tau) in STRESS_CLASSES {
        if sc.drawdown >= dd && sc.latency >= tau {
            return Some(label);
        }
    }
    (sc.drawdown >= 0.10 || sc.latency >= 900.0).then_some(LOW_STRESS_LABEL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub iterations: u64,
    pub seed: u64,
    pub by_drawdown: Vec<SolvencyRow>,
    pub by_latency: Vec<SolvencyRow>,
    pub by_stress: Vec<SolvencyRow>,
    pub bad_debt: Summary,
    pub bad_debt_threshold: f64,
    pub p99_below_threshold: bool,
    pub theorem1_bound: f64,
    pub all_within_bound: bool,
    pub cb_trigger_rate: f64,
    pub restricted_rate: f64,
    pub status_counts: BTreeMap<String, u64>,
}

impl McSummary {
    pub fn overall(&self) -> &SolvencyRow {
        self.by_drawdown.last().expect("overall row present")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRun {
    pub summary: McSummary,
    pub iterations: Vec<McIteration>,
}

/// Runs `n` iterations. Results depend only on `cfg.seed` and `n`, never on `jobs`.
pub fn run_montecarlo(n: u64, cfg: &SimConfig, jobs: Option<usize>) -> Result<McRun, EngineError> {
    assert!(n >= 1, "need at least one iteration");
    cfg.validate()?;
    let seed = cfg.seed;
    let iterations: Vec<McIteration> = with_jobs(jobs, || {
        (0..n)
            .into_par_iter()
            .map(|i| run_scenario(cfg, i, &sample_scenario(&mut iteration_rng(seed, i))))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(McRun { summary: summarize(&iterations, seed, cfg), iterations })
}

pub fn summarize(iterations: &[McIteration], seed: u64, cfg: &SimConfig) -> McSummary {
    let dd = |lo: f64, hi: f64| move |r: &&McIteration| r.scenario.drawdown >= lo && r.scenario.drawdown < hi;
    let lat = |lo: f64, hi: f64| move |r: &&McIteration| r.scenario.latency >= lo && r.scenario.latency < hi;
    let all = iterations.iter();

    let by_drawdown = vec![
        SolvencyRow::tally("Drawdown 0-10%", all.clone().filter(dd(0.0, 0.10))),
        SolvencyRow::tally("Drawdown 10-25%", all.clone().filter(dd(0.10, 0.25))),
        SolvencyRow::tally("Drawdown 25-50%", all.clone().filter(dd(0.25, f64::INFINITY))),
        SolvencyRow::tally("Drawdown 0-50% (all)", all.clone()),
    ];
    let by_latency = vec![
        SolvencyRow::tally("Latency 0-15 min", all.clone().filter(lat(0.0, 900.0))),
        SolvencyRow::tally("Latency 15-30 min", all.clone().filter(lat(900.0, 1800.0))),
        SolvencyRow::tally("Latency 30-60 min", all.clone().filter(lat(1800.0, 3600.0))),
        SolvencyRow::tally("Latency >60 min", all.clone().filter(lat(3600.0, f64::INFINITY))),
        SolvencyRow::tally("Latency (all)", all.clone()),
    ];
    let by_stress: Vec<SolvencyRow> = std::iter::once(LOW_STRESS_LABEL)
        .chain(STRESS_CLASSES.iter().rev().map(|c| c.0))
        .map(|label| SolvencyRow::tally(label, all.clone().filter(|r| stress_class(&r.scenario) == Some(label))))
        .collect();

    let fractions: Vec<f64> = iterations.iter().map(|r| r.bad_debt_fraction).collect();
    let bad_debt = Summary::of(&fractions);
    let bound = theorem1_bound(&cfg.params);
    let n = iterations.len() as f64;
    let mut status_counts = BTreeMap::new();
    for r in iterations {
        *status_counts.entry(format!("{:?}", r.status)).or_insert(0) += 1;
    }
    McSummary {
        iterations: iterations.len() as u64,
        seed,
        by_drawdown,
        by_latency,
        by_stress,
        bad_debt,
        bad_debt_threshold: BAD_DEBT_THRESHOLD,
        p99_below_threshold: bad_debt.p99 < BAD_DEBT_THRESHOLD,
        theorem1_bound: bound,
        all_within_bound: fractions.iter().all(|&f| f <= bound),
        cb_trigger_rate: iterations.iter().filter(|r| r.halted).count() as f64 / n,
        restricted_rate: iterations.iter().filter(|r| r.restricted).count() as f64 / n,
        status_counts,
    }
}

/// Points of the empirical bad-debt CDF, one per distinct value.
pub fn bad_debt_cdf(iterations: &[McIteration]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = iterations.iter().map(|r| r.bad_debt_fraction).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = (i + 1) as f64 / n,
            _ => out.push((*x, (i + 1) as f64 / n)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ConfigFile;

    fn cfg() -> SimConfig {
        SimConfig::from_config(&ConfigFile::default()).unwrap()
    }

    #[test]
    fn calm_scenario_is_solvent() {
        let it = run_scenario(&cfg(), 0, &McScenario { drawdown: 0.0, latency: 0.0, swap_size: 1e-3 }).unwrap();
        assert!(it.solvent);
        assert_eq!(it.status, SwapStatus::Settled);
        assert!(it.bad_debt_fraction < 1e-9);
    }

    #[test]
    fn samples_respect_support() {
        let mut rng = iteration_rng(42, 0);
        for _ in 0..10_000 {
            let s = sample_scenario(&mut rng);
            assert!((0.0..=0.5).contains(&s.drawdown));
            assert!(s.latency >= 0.0 && s.swap_size > 0.0);
        }
    }

    #[test]
    fn streams_do_not_depend_on_order() {
        let a = sample_scenario(&mut iteration_rng(42, 17));
        let _ = sample_scenario(&mut iteration_rng(42, 3));
        assert_eq!(a, sample_scenario(&mut iteration_rng(42, 17)));
        assert_ne!(a, sample_scenario(&mut iteration_rng(42, 18)));
    }

    #[test]
    fn jobs_do_not_change_results() {
        let c = cfg();
        let a = run_montecarlo(500, &c, Some(1)).unwrap();
        let b = run_montecarlo(500, &c, Some(4)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn small_run_is_bounded() {
        let r = run_montecarlo(2_000, &cfg(), None).unwrap();
        assert!(r.summary.all_within_bound);
        assert_eq!(r.summary.overall().count, 2_000);
        let latency_total: u64 = r.summary.by_latency[..4].iter().map(|r| r.count).sum();
        assert_eq!(latency_total, 2_000);
    }

    #[test]
    fn stress_classes_are_nested() {
        let s = |d, l| stress_class(&McScenario { drawdown: d, latency: l, swap_size: 1.0 });
        assert_eq!(s(0.45, 2000.0), Some(STRESS_CLASSES[0].0));
        assert_eq!(s(0.45, 1000.0), Some(STRESS_CLASSES[1].0));
        assert_eq!(s(0.15, 1000.0), Some(STRESS_CLASSES[2].0));
        assert_eq!(s(0.15, 10.0), Some(LOW_STRESS_LABEL));
        assert_eq!(s(0.05, 10.0), None);
    }

    #[test]
    fn cdf_is_monotone_and_ends_at_one() {
        let r = run_montecarlo(300, &cfg(), None).unwrap();
        let cdf = bad_debt_cdf(&r.iterations);
        assert!(cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
        assert_eq!(cdf.last().unwrap().1, 1.0);
    }
}
