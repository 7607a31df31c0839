//! Multi-run studies: grid-size sweeps and batches of random worlds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::{Experiment, GridSpec};
use super::episode::{run_experiment, HarnessError, RunResult, Truth};
use super::metrics::{summarize, AlgorithmSummary, MeanCi, Series};
use crate::rng::{purpose, substream};
use crate::sampling::Variant;
use crate::simulator::generate_random_setting;

/// Estimates the truth and runs every algorithm and replicate.
pub fn run_full(exp: &Experiment) -> Result<(Truth, RunResult), HarnessError> {
    let truth = Truth::estimate(exp)?;
    let result = run_experiment(exp, &truth, &exp.world)?;
    Ok((truth, result))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Bids,
    Budgets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis: SweepAxis,
    pub bids: usize,
    pub budgets: usize,
    pub algorithm: Variant,
    pub efficiency: MeanCi,
    pub regret: MeanCi,
}

/// Efficiency index per algorithm for every grid size of the sweep.
pub fn sweep(exp: &Experiment) -> Result<Vec<SweepPoint>, HarnessError> {
    let spec = &exp.sweep;
    let sizes = spec
        .bid_counts
        .iter()
        .map(|&n| (SweepAxis::Bids, n, spec.fixed_count))
        .chain(spec.budget_counts.iter().map(|&n| (SweepAxis::Budgets, spec.fixed_count, n)));
    let mut points = Vec::new();
    for (axis, nx, ny) in sizes {
        let grid = GridSpec {
            bid_count: nx,
            budget_count: ny,
            ..exp.grid.clone()
        };
        let e = exp.with_grid(grid)?;
        let (_, result) = run_full(&e)?;
        for &a in &e.algorithms {
            let series: Vec<Series> = result.traces_for(a).map(Series::from).collect();
            let v: Vec<f64> = series.iter().filter_map(Series::efficiency).collect();
            let r: Vec<f64> = series.iter().filter_map(|s| s.regret().last().copied()).collect();
            points.push(SweepPoint {
                axis,
                bids: nx,
                budgets: ny,
                algorithm: a,
                efficiency: MeanCi::of(&v),
                regret: MeanCi::of(&r),
            });
        }
    }
    Ok(points)
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("axis,bids,budgets,algorithm,replicates,v_mean,v_ci95,regret_mean,regret_ci95\n");
    for p in points {
        let axis = match p.axis {
            SweepAxis::Bids => "bids",
            SweepAxis::Budgets => "budgets",
        };
        let _ = writeln!(
            out,
            "{axis},{},{},{},{},{},{},{},{}",
            p.bids, p.budgets, p.algorithm, p.efficiency.n, p.efficiency.mean, p.efficiency.ci95, p.regret.mean, p.regret.ci95
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingResult {
    pub setting: usize,
    pub summaries: Vec<AlgorithmSummary>,
}

/// Draws `random_settings.settings` worlds around the experiment's world
/// and reports regret and best-run percentages for each.
pub fn random_settings(exp: &Experiment) -> Result<Vec<SettingResult>, HarnessError> {
    (0..exp.random_settings.settings)
        .map(|s| {
            let mut rng = substream(exp.seed, &[purpose::WORLD, s as u64]);
            let e = Experiment {
                world: generate_random_setting(&mut rng, &exp.world),
                ..exp.clone()
            };
            let (_, result) = run_full(&e)?;
            let series: Vec<Series> = result.traces.iter().map(Series::from).collect();
            Ok(SettingResult {
                setting: s + 1,
                summaries: summarize(&series, &e.algorithms, &e.random_settings.checkpoints),
            })
        })
        .collect()
}

pub fn random_settings_csv(results: &[SettingResult]) -> String {
    let checkpoints: Vec<usize> = results
        .first()
        .and_then(|r| r.summaries.first())
        .map(|s| s.beta.iter().map(|(t, _)| *t).collect())
        .unwrap_or_default();
    let mut out = String::from("setting,algorithm,replicates,regret,regret_sd");
    for t in &checkpoints {
        let _ = write!(out, ",beta_{t}");
    }
    out.push('\n');
    for r in results {
        for s in &r.summaries {
            let _ = write!(out, "{},{},{},{},{}", r.setting, s.algorithm, s.replicates, s.regret, s.regret_sd);
            for (_, b) in &s.beta {
                let _ = write!(out, ",{b}");
            }
            out.push('\n');
        }
    }
    out
}
