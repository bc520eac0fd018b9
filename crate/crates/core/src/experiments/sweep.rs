//! Grid sweep over (h_max, tau_max, theta_price) with Pareto flags.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::montecarlo::{iteration_rng, run_scenario, sample_scenario};
use super::with_jobs;
use crate::engine::SimConfig;
use crate::error::EngineError;

pub const H_MAX_GRID: [f64; 5] = [0.03, 0.04, 0.05, 0.06, 0.07];
pub const TAU_MAX_GRID: [f64; 5] = [1200.0, 1500.0, 1800.0, 2100.0, 2400.0];
pub const THETA_GRID: [f64; 5] = [0.40, 0.45, 0.50, 0.55, 0.60];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub h_max: f64,
    pub tau_max: f64,
    pub theta_price: f64,
    pub iterations: u64,
    pub solvency_probability: f64,
    pub avg_bad_debt: f64,
    pub cb_trigger_rate: f64,
    pub pareto: bool,
}

impl SweepPoint {
    /// Weakly better on every objective and strictly better on one.
    pub fn dominates(&self, other: &SweepPoint) -> bool {
        let ge = self.solvency_probability >= other.solvency_probability
            && self.avg_bad_debt <= other.avg_bad_debt
            && self.cb_trigger_rate <= other.cb_trigger_rate;
        let gt = self.solvency_probability > other.solvency_probability
            || self.avg_bad_debt < other.avg_bad_debt
            || self.cb_trigger_rate < other.cb_trigger_rate;
        ge && gt
    }
}

pub fn grid() -> Vec<(f64, f64, f64)> {
    let mut g = Vec::with_capacity(125);
    for h in H_MAX_GRID {
        for tau in TAU_MAX_GRID {
            for theta in THETA_GRID {
                g.push((h, tau, theta));
            }
        }
    }
    g
}

pub fn mark_pareto(points: &mut [SweepPoint]) {
    let flags: Vec<bool> = points.iter().map(|p| !points.iter().any(|q| q.dominates(p))).collect();
    for (p, f) in points.iter_mut().zip(flags) {
        p.pareto = f;
    }
}

/// Every grid point sees the same scenario draws, so differences between
/// points come from the parameters alone.
pub fn run_sweep(cfg: &SimConfig, iterations: u64, jobs: Option<usize>) -> Result<Vec<SweepPoint>, EngineError> {
    assert!(iterations >= 1, "need at least one iteration per point");
    let scenarios: Vec<_> = (0..iterations).map(|i| sample_scenario(&mut iteration_rng(cfg.seed, i))).collect();
    let grid = grid();
    let mut points = with_jobs(jobs, || {
        grid.par_iter()
            .map(|&(h_max, tau_max, theta_price)| {
                let mut c = cfg.clone();
                c.params.h_max = h_max;
                c.params.tau_max = tau_max;
                c.params.theta_price = theta_price;
                c.validate()?;
                let (mut solvent, mut bad, mut halted) = (0u64, 0.0, 0u64);
                for (i, sc) in scenarios.iter().enumerate() {
                    let it = run_scenario(&c, i as u64, sc)?;
                    solvent += it.solvent as u64;
                    bad += it.bad_debt_fraction;
                    halted += it.halted as u64;
                }
                let n = iterations as f64;
                Ok(SweepPoint {
                    h_max,
                    tau_max,
                    theta_price,
                    iterations,
                    solvency_probability: solvent as f64 / n,
                    avg_bad_debt: bad / n,
                    cb_trigger_rate: halted as f64 / n,
                    pareto: false,
                })
            })
            .collect::<Result<Vec<_>, EngineError>>()
    })?;
    mark_pareto(&mut points);
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ConfigFile;

    fn point(s: f64, b: f64, c: f64) -> SweepPoint {
        SweepPoint {
            h_max: 0.05,
            tau_max: 1800.0,
            theta_price: 0.5,
            iterations: 1,
            solvency_probability: s,
            avg_bad_debt: b,
            cb_trigger_rate: c,
            pareto: false,
        }
    }

    #[test]
    fn grid_has_125_points() {
        assert_eq!(grid().len(), 125);
    }

    #[test]
    fn dominated_point_is_not_pareto() {
        let mut pts = vec![point(1.0, 0.001, 0.1), point(0.9, 0.002, 0.2), point(1.0, 0.0005, 0.3)];
        mark_pareto(&mut pts);
        assert_eq!(pts.iter().map(|p| p.pareto).collect::<Vec<_>>(), vec![true, false, true]);
        assert!(!point(1.0, 0.1, 0.1).dominates(&point(1.0, 0.1, 0.1)));
    }

    #[test]
    fn small_sweep_shape() {
        let cfg = SimConfig::from_config(&ConfigFile::default()).unwrap();
        let pts = run_sweep(&cfg, 40, None).unwrap();
        assert_eq!(pts.len(), 125);
        assert!(pts.iter().any(|p| p.pareto));
    }
}
