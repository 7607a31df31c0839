//! Pseudo-regret, efficiency index, best-run percentages and summaries.

use serde::{Deserialize, Serialize};

use super::episode::RunTrace;
use crate::sampling::Variant;

/// `R_t = Σ_{h ≤ t} (r*_h − r_h)`.
pub fn pseudo_regret(rewards: &[f64], optimal: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    rewards
        .iter()
        .zip(optimal)
        .map(|(r, s)| {
            acc += s - r;
            acc
        })
        .collect()
}

/// `V = Σ r_t / Σ r*_t`; absent when the optimum is worth nothing.
pub fn efficiency_index(rewards: &[f64], optimal: &[f64]) -> Option<f64> {
    let total: f64 = optimal.iter().sum();
    (total > 0.0).then(|| rewards.iter().sum::<f64>() / total)
}

/// Sample mean with standard deviation and 95% half-width of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub sd: f64,
    pub ci95: f64,
    pub n: usize,
}

impl MeanCi {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                sd: f64::NAN,
                ci95: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            sd,
            ci95: 1.96 * sd / (n as f64).sqrt(),
            n,
        }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci95
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci95
    }
}

/// Expected and optimal reward series of one (algorithm, replicate) pair,
/// the minimum needed to recompute every metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub algorithm: Variant,
    pub replicate: usize,
    pub rewards: Vec<f64>,
    pub optimal: Vec<f64>,
}

impl From<&RunTrace> for Series {
    fn from(t: &RunTrace) -> Self {
        Self {
            algorithm: t.algorithm,
            replicate: t.replicate,
            rewards: t.rewards(),
            optimal: t.optimal_rewards(),
        }
    }
}

impl Series {
    pub fn regret(&self) -> Vec<f64> {
        pseudo_regret(&self.rewards, &self.optimal)
    }

    pub fn cumulative_reward(&self, t: usize) -> f64 {
        self.rewards[..t.min(self.rewards.len())].iter().sum()
    }

    pub fn efficiency(&self) -> Option<f64> {
        efficiency_index(&self.rewards, &self.optimal)
    }
}

/// Per-day mean cumulative regret with its 95% band, over replicates.
pub fn mean_regret_curve<'a>(series: impl IntoIterator<Item = &'a Series>) -> Vec<MeanCi> {
    let curves: Vec<Vec<f64>> = series.into_iter().map(Series::regret).collect();
    let days = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..days)
        .map(|t| MeanCi::of(&curves.iter().map(|c| c[t]).collect::<Vec<_>>()))
        .collect()
}

/// Best-run percentage β of each algorithm at day `t`.
///
/// A replicate is won by the algorithms with the largest cumulative expected
/// reward through day `t`; ties split the win evenly, so the percentages
/// always sum to 100. Replicates are matched by index across algorithms.
pub fn best_run_percentages(series: &[Series], algorithms: &[Variant], t: usize) -> Vec<f64> {
    let mut wins = vec![0.0; algorithms.len()];
    let mut replicates: Vec<usize> = series.iter().map(|s| s.replicate).collect();
    replicates.sort_unstable();
    replicates.dedup();
    let mut counted = 0usize;
    for r in &replicates {
        let scores: Vec<Option<f64>> = algorithms
            .iter()
            .map(|a| {
                series
                    .iter()
                    .find(|s| s.algorithm == *a && s.replicate == *r)
                    .map(|s| s.cumulative_reward(t))
            })
            .collect();
        if scores.iter().any(Option::is_none) {
            continue;
        }
        let scores: Vec<f64> = scores.into_iter().flatten().collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == best).collect();
        for &w in &winners {
            wins[w] += 1.0 / winners.len() as f64;
        }
        counted += 1;
    }
    wins.iter()
        .map(|w| if counted > 0 { 100.0 * w / counted as f64 } else { 0.0 })
        .collect()
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Variant,
    pub replicates: usize,
    /// Mean cumulative pseudo-regret at the horizon.
    pub regret: f64,
    /// Standard deviation of the final regret across replicates.
    pub regret_sd: f64,
    pub regret_ci95: f64,
    pub efficiency: Option<f64>,
    /// `(t, β)` for each requested checkpoint within the horizon.
    pub beta: Vec<(usize, f64)>,
}

pub fn summarize(series: &[Series], algorithms: &[Variant], checkpoints: &[usize]) -> Vec<AlgorithmSummary> {
    let horizon = series.iter().map(|s| s.rewards.len()).min().unwrap_or(0);
    let checkpoints: Vec<usize> = checkpoints.iter().copied().filter(|&t| t >= 1 && t <= horizon).collect();
    let betas: Vec<Vec<f64>> = checkpoints
        .iter()
        .map(|&t| best_run_percentages(series, algorithms, t))
        .collect();
    algorithms
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let mine: Vec<&Series> = series.iter().filter(|s| s.algorithm == a).collect();
            let finals: Vec<f64> = mine.iter().filter_map(|s| s.regret().last().copied()).collect();
            let stats = MeanCi::of(&finals);
            let eff: Vec<f64> = mine.iter().filter_map(|s| s.efficiency()).collect();
            AlgorithmSummary {
                algorithm: a,
                replicates: mine.len(),
                regret: stats.mean,
                regret_sd: stats.sd,
                regret_ci95: stats.ci95,
                efficiency: (!eff.is_empty()).then(|| MeanCi::of(&eff).mean),
                beta: checkpoints.iter().zip(&betas).map(|(&t, b)| (t, b[i])).collect(),
            }
        })
        .collect()
}

/// Plain-text table: algorithm, R_T, σ(R_T), V, then one β column per checkpoint.
pub fn format_summary(rows: &[AlgorithmSummary]) -> String {
    let mut out = format!("{:<8} {:>5} {:>12} {:>12} {:>8}", "algo", "reps", "R_T", "sd(R_T)", "V");
    if let Some(first) = rows.first() {
        for (t, _) in &first.beta {
            out.push_str(&format!(" {:>9}", format!("beta@{t}")));
        }
    }
    out.push('\n');
    for r in rows {
        let eff = r.efficiency.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"));
        out.push_str(&format!(
            "{:<8} {:>5} {:>12.3} {:>12.3} {:>8}",
            r.algorithm.name(),
            r.replicates,
            r.regret,
            r.regret_sd,
            eff
        ));
        for (_, b) in &r.beta {
            out.push_str(&format!(" {:>8.1}%", b));
        }
        out.push('\n');
    }
    out
}
