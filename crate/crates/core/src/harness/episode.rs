//! The daily learning loop and the expected-reward ground truth it is
//! scored against.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::Experiment;
use crate::domain::AllocationPlan;
use crate::model::{CampaignModel, ModelError, ModelSnapshot};
use crate::optimizer::{allocate, build_value_table, OptimizeError};
use crate::rng::{purpose, substream};
use crate::sampling::{sample_mean, sample_ts, sample_ucb, schedule_b, SamplingError, Strategy, Variant};
use crate::simulator::{
    expected_revenue, true_click_tables, true_optimum, DayOutcome, Environment, Optimum, TruthTable,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Config(#[from] super::config::ConfigError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Expected clicks per arm and the clairvoyant optimum for every day.
#[derive(Debug, Clone)]
pub struct Truth {
    pub tables: Vec<TruthTable>,
    /// Optimum under each day's cap, indexed by day - 1.
    pub optima: Vec<Optimum>,
}

impl Truth {
    /// Monte-Carlo estimate from the experiment's auction world.
    pub fn estimate(exp: &Experiment) -> Result<Self, HarnessError> {
        let tables = true_click_tables(&exp.world, &exp.bids, &exp.budgets, exp.truth_replications, exp.seed);
        Self::from_tables(exp, tables)
    }

    pub fn from_tables(exp: &Experiment, tables: Vec<TruthTable>) -> Result<Self, HarnessError> {
        let mut optima: Vec<Optimum> = Vec::with_capacity(exp.horizon);
        for t in 1..=exp.horizon {
            let cap = exp.spending.cap(t);
            // caps usually repeat; reuse the previous day's optimum when they do
            let reuse = t > 1 && exp.spending.cap(t - 1) == cap;
            let opt = if reuse {
                optima[t - 2].clone()
            } else {
                true_optimum(&tables, &exp.campaigns, &exp.bids, &exp.budgets, cap)?
            };
            optima.push(opt);
        }
        Ok(Self { tables, optima })
    }

    pub fn r_star(&self, t: usize) -> f64 {
        self.optima[t - 1].value
    }

    /// Contribution of campaign `j` to the day-`t` optimum.
    pub fn r_star_campaign(&self, t: usize, j: usize) -> f64 {
        let s = &self.optima[t - 1].solution;
        self.tables[j].revenue_at(s.bid_indices[j], s.budget_indices[j])
    }
}

/// Everything that happened on one day of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub t: usize,
    pub plan: AllocationPlan,
    pub outcomes: Vec<DayOutcome>,
    /// Expected revenue of the pulled superarm, per campaign.
    pub r_mu_campaign: Vec<f64>,
    pub r_mu: f64,
    pub r_star: f64,
    pub cum_regret: f64,
    /// The optimizer failed and the empty allocation was pulled.
    pub infeasible: bool,
    /// Campaigns whose observation the model rejected as inconsistent
    /// (clicks bought at zero cost).
    pub rejected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: Variant,
    pub replicate: usize,
    pub days: Vec<DayRecord>,
}

impl RunTrace {
    pub fn rewards(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.r_mu).collect()
    }

    pub fn optimal_rewards(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.r_star).collect()
    }

    pub fn cum_regret(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.cum_regret).collect()
    }
}

/// Runs the daily loop for one variant and one replicate.
///
/// Day 1 allocates from the prior models; each day's observations are fed
/// to the models right after the pull, ready for the next day. The
/// environment stream of a campaign depends only on `(seed, replicate,
/// campaign)` and the sampling stream on `(seed, replicate, variant,
/// campaign)`, so replicates can run in any order.
pub fn run_episode<E: Environment + ?Sized>(
    exp: &Experiment,
    truth: &Truth,
    env: &E,
    variant: Variant,
    replicate: usize,
) -> Result<(RunTrace, Vec<CampaignModel>), HarnessError> {
    let n = exp.campaigns.len();
    if env.campaigns() != n || truth.tables.len() != n {
        return Err(HarnessError::Invalid(format!(
            "{n} campaigns configured, environment has {}, truth has {}",
            env.campaigns(),
            truth.tables.len()
        )));
    }
    let mut models = exp
        .campaigns
        .iter()
        .map(|c| CampaignModel::new(variant.model_kind(), c, &exp.model, &exp.bids, &exp.budgets))
        .collect::<Result<Vec<_>, _>>()?;
    let rep = replicate as u64;
    let mut env_rngs: Vec<_> = (0..n)
        .map(|j| substream(exp.seed, &[purpose::ENVIRONMENT, rep, j as u64]))
        .collect();
    let mut sample_rngs: Vec<_> = (0..n)
        .map(|j| substream(exp.seed, &[purpose::SAMPLING, rep, variant.ordinal(), j as u64]))
        .collect();
    let feasible: Vec<_> = exp
        .campaigns
        .iter()
        .map(|c| {
            (
                exp.bids.indices_within(c.bid_min, c.bid_max),
                exp.budgets.indices_within(c.budget_min, c.budget_max),
            )
        })
        .collect();
    let arms = exp.bids.len() * exp.budgets.len();
    let mut days = Vec::with_capacity(exp.horizon);
    let mut cum_regret = 0.0;
    for t in 1..=exp.horizon {
        let (b, b_prime) = schedule_b(variant, exp.fts_schedule, n, arms, t, exp.delta)?;
        let (b, b_prime) = (b * exp.exploration_scale, b_prime * exp.exploration_scale);
        let tables: Vec<_> = models
            .iter()
            .zip(sample_rngs.iter_mut())
            .zip(&feasible)
            .map(|((model, rng), (fb, fy))| {
                let est = match variant.strategy() {
                    Strategy::Ucb => sample_ucb(model, &exp.bids, &exp.budgets, b, b_prime),
                    Strategy::Thompson => sample_ts(model, &exp.bids, &exp.budgets, rng, exp.joint_ts),
                    Strategy::Mean => sample_mean(model, &exp.bids, &exp.budgets),
                };
                build_value_table(&est, fb, fy)
            })
            .collect();
        let (plan, infeasible) = match allocate(&tables, exp.spending.cap(t), &exp.budgets) {
            Ok(s) => (s.to_plan(t, &exp.bids, &exp.budgets), false),
            Err(_) => (AllocationPlan::empty(t, &exp.bids, &exp.budgets, n), true),
        };
        let outcomes = crate::simulator::simulate_day(env, &plan, &mut env_rngs);
        let r_mu_campaign: Vec<f64> = truth
            .tables
            .iter()
            .zip(&plan.entries)
            .map(|(tab, e)| tab.revenue_at(e.bid_index, e.budget_index))
            .collect();
        let r_mu = expected_revenue(&truth.tables, &plan);
        let r_star = truth.r_star(t);
        cum_regret += r_star - r_mu;
        // Get and Update of day t + 1, done now so the record can flag
        // observations the model refused
        let mut rejected = Vec::new();
        for (j, ((model, entry), out)) in models.iter_mut().zip(&plan.entries).zip(&outcomes).enumerate() {
            match model.update(entry.bid, entry.budget, out.observation(t)) {
                Ok(()) => {}
                Err(ModelError::ClicksWithoutCost { .. }) => rejected.push(j),
                Err(e) => return Err(e.into()),
            }
        }
        days.push(DayRecord {
            t,
            plan,
            outcomes,
            r_mu_campaign,
            r_mu,
            r_star,
            cum_regret,
            infeasible,
            rejected,
        });
    }
    Ok((
        RunTrace {
            algorithm: variant,
            replicate,
            days,
        },
        models,
    ))
}

/// Output of [`run_experiment`]: traces ordered by algorithm (in config
/// order) then replicate, plus final model snapshots when requested.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub traces: Vec<RunTrace>,
    pub snapshots: Vec<Vec<ModelSnapshot>>,
}

impl RunResult {
    pub fn traces_for(&self, algorithm: Variant) -> impl Iterator<Item = &RunTrace> {
        self.traces.iter().filter(move |t| t.algorithm == algorithm)
    }
}

/// Runs every (algorithm, replicate) pair, in parallel. Results are put back
/// in canonical order, so the outcome does not depend on scheduling.
pub fn run_experiment<E: Environment + ?Sized>(exp: &Experiment, truth: &Truth, env: &E) -> Result<RunResult, HarnessError> {
    let jobs: Vec<(usize, Variant, usize)> = exp
        .algorithms
        .iter()
        .enumerate()
        .flat_map(|(a, &v)| (0..exp.replications).map(move |r| (a, v, r)))
        .collect();
    let mut done: Vec<_> = jobs
        .par_iter()
        .map(|&(a, v, r)| run_episode(exp, truth, env, v, r).map(|res| ((a, r), res)))
        .collect::<Result<_, _>>()?;
    done.sort_by_key(|(key, _)| *key);
    let mut traces = Vec::with_capacity(done.len());
    let mut snapshots = Vec::new();
    for (_, (trace, models)) in done {
        if exp.save_snapshots {
            snapshots.push(models.iter().map(CampaignModel::snapshot).collect());
        }
        traces.push(trace);
    }
    Ok(RunResult { traces, snapshots })
}
