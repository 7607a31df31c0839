//! Domain types shared by every stage of the loop: discretization grids,
//! campaign constraints, spending plans, allocations and daily feedback.
//!
//! Currency is plain `f64`. Comparisons against constraint bounds go through
//! [`approx_le`], which allows a relative slack of [`REL_TOL`]. Grid cells are
//! always addressed by index; nothing downstream relies on float equality.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used for currency and grid comparisons.
pub const REL_TOL: f64 = 1e-9;

/// `a <= b` up to [`REL_TOL`] relative slack.
pub fn approx_le(a: f64, b: f64) -> bool {
    a <= b + REL_TOL * a.abs().max(b.abs()).max(1.0)
}

/// `a == b` up to [`REL_TOL`] relative slack.
pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("grid must not be empty")]
    EmptyGrid,
    #[error("grid value {0} is not finite")]
    NonFinite(f64),
    #[error("grid value {value} at position {index} is negative")]
    Negative { index: usize, value: f64 },
    #[error("grid is not strictly increasing at position {0}")]
    NotIncreasing(usize),
    #[error("budget grid must start at 0, got {0}")]
    MissingZero(f64),
    #[error("budget grid is not evenly spaced at position {0}")]
    Uneven(usize),
    #[error("campaign {id}: {reason}")]
    InvalidCampaign { id: String, reason: String },
    #[error("spending plan cap {value} on day {day} is negative or not finite")]
    InvalidCap { day: usize, value: f64 },
    #[error("observation for day {day}: {reason}")]
    InvalidObservation { day: usize, reason: String },
}

fn check_increasing(values: &[f64]) -> Result<(), DomainError> {
    if values.is_empty() {
        return Err(DomainError::EmptyGrid);
    }
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(DomainError::NonFinite(v));
        }
        if v < 0.0 {
            return Err(DomainError::Negative { index: i, value: v });
        }
        if i > 0 && v <= values[i - 1] {
            return Err(DomainError::NotIncreasing(i));
        }
    }
    Ok(())
}

fn linspace(min: f64, max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![min],
        _ => {
            let step = (max - min) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { max } else { min + step * i as f64 })
                .collect()
        }
    }
}

/// Finite, strictly increasing set of bid levels (currency per click).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BidGrid {
    values: Vec<f64>,
}

impl BidGrid {
    pub fn new(values: Vec<f64>) -> Result<Self, DomainError> {
        check_increasing(&values)?;
        Ok(Self { values })
    }

    /// `n` evenly spaced bids covering `[min, max]`, both ends included.
    pub fn linspace(min: f64, max: f64, n: usize) -> Result<Self, DomainError> {
        Self::new(linspace(min, max, n))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Indices of the bids inside `[lo, hi]`.
    pub fn indices_within(&self, lo: f64, hi: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| approx_le(lo, self.values[i]) && approx_le(self.values[i], hi))
            .collect()
    }
}

impl TryFrom<Vec<f64>> for BidGrid {
    type Error = DomainError;
    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<BidGrid> for Vec<f64> {
    fn from(grid: BidGrid) -> Self {
        grid.values
    }
}

/// Evenly spaced daily-budget levels starting at 0.
///
/// The zero cell lets the optimizer switch a campaign off; the recursion
/// subtracts budgets by index, which requires even spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BudgetGrid {
    values: Vec<f64>,
}

impl BudgetGrid {
    pub fn new(values: Vec<f64>) -> Result<Self, DomainError> {
        check_increasing(&values)?;
        if values[0] != 0.0 {
            return Err(DomainError::MissingZero(values[0]));
        }
        if values.len() > 2 {
            let step = values[1] - values[0];
            for i in 2..values.len() {
                let expected = step * i as f64;
                if (values[i] - expected).abs() > REL_TOL * expected.abs().max(1.0) {
                    return Err(DomainError::Uneven(i));
                }
            }
        }
        Ok(Self { values })
    }

    /// `n` evenly spaced budgets over `[0, max]`.
    pub fn linspace(max: f64, n: usize) -> Result<Self, DomainError> {
        Self::new(linspace(0.0, max, n))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn step(&self) -> f64 {
        if self.values.len() > 1 {
            self.values[1]
        } else {
            0.0
        }
    }

    /// Largest index whose budget does not exceed `cap`.
    pub fn index_at_or_below(&self, cap: f64) -> Option<usize> {
        if !cap.is_finite() && cap.is_sign_positive() {
            return Some(self.len() - 1);
        }
        self.values.iter().rposition(|&v| approx_le(v, cap))
    }

    pub fn indices_within(&self, lo: f64, hi: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| approx_le(lo, self.values[i]) && approx_le(self.values[i], hi))
            .collect()
    }
}

impl TryFrom<Vec<f64>> for BudgetGrid {
    type Error = DomainError;
    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<BudgetGrid> for Vec<f64> {
    fn from(grid: BudgetGrid) -> Self {
        grid.values
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CampaignId(pub String);

impl fmt::Display for CampaignId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CampaignId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

fn default_vpc_prior_variance() -> f64 {
    1.0
}

fn default_vpc_noise() -> f64 {
    1.0
}

/// Per-campaign box constraints and value-per-click prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub id: CampaignId,
    pub bid_min: f64,
    pub bid_max: f64,
    pub budget_min: f64,
    pub budget_max: f64,
    /// Prior variance of the value per click.
    #[serde(default = "default_vpc_prior_variance")]
    pub vpc_prior_variance: f64,
    /// Measurement noise variance of a daily value-per-click observation.
    #[serde(default = "default_vpc_noise")]
    pub vpc_noise: f64,
    /// Prior mean of the value per click. Zero gives the uninformative prior.
    #[serde(default)]
    pub vpc_prior_mean: f64,
}

impl CampaignConfig {
    pub fn new(
        id: impl Into<String>,
        bid_range: (f64, f64),
        budget_range: (f64, f64),
    ) -> Result<Self, DomainError> {
        let cfg = Self {
            id: CampaignId(id.into()),
            bid_min: bid_range.0,
            bid_max: bid_range.1,
            budget_min: budget_range.0,
            budget_max: budget_range.1,
            vpc_prior_variance: default_vpc_prior_variance(),
            vpc_noise: default_vpc_noise(),
            vpc_prior_mean: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_vpc_prior(mut self, mean: f64, variance: f64, noise: f64) -> Self {
        self.vpc_prior_mean = mean;
        self.vpc_prior_variance = variance;
        self.vpc_noise = noise;
        self
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let fail = |reason: &str| {
            Err(DomainError::InvalidCampaign {
                id: self.id.0.clone(),
                reason: reason.to_owned(),
            })
        };
        let all = [
            self.bid_min,
            self.bid_max,
            self.budget_min,
            self.budget_max,
            self.vpc_prior_variance,
            self.vpc_noise,
            self.vpc_prior_mean,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return fail("all parameters must be finite");
        }
        if self.bid_min > self.bid_max {
            return fail("bid_min exceeds bid_max");
        }
        if self.budget_min > self.budget_max {
            return fail("budget_min exceeds budget_max");
        }
        if self.vpc_prior_variance <= 0.0 {
            return fail("vpc_prior_variance must be positive");
        }
        if self.vpc_noise <= 0.0 {
            return fail("vpc_noise must be positive");
        }
        Ok(())
    }
}

/// Cumulative daily budget caps over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpendingPlan {
    daily_caps: Vec<f64>,
}

impl SpendingPlan {
    pub fn new(daily_caps: Vec<f64>) -> Result<Self, DomainError> {
        for (day, &value) in daily_caps.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(DomainError::InvalidCap { day: day + 1, value });
            }
        }
        Ok(Self { daily_caps })
    }

    pub fn constant(cap: f64, horizon: usize) -> Result<Self, DomainError> {
        Self::new(vec![cap; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.daily_caps.len()
    }

    /// Cap for the 1-based day `t`.
    pub fn cap(&self, t: usize) -> f64 {
        self.daily_caps[t - 1]
    }

    pub fn caps(&self) -> &[f64] {
        &self.daily_caps
    }
}

/// The (bid, budget) pair chosen for one campaign on one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignAllocation {
    pub bid_index: usize,
    pub budget_index: usize,
    pub bid: f64,
    pub budget: f64,
}

impl CampaignAllocation {
    pub fn on_grid(bids: &BidGrid, budgets: &BudgetGrid, bid_index: usize, budget_index: usize) -> Self {
        Self {
            bid_index,
            budget_index,
            bid: bids.get(bid_index),
            budget: budgets.get(budget_index),
        }
    }

    /// A zero budget switches the campaign off for the day.
    pub fn is_active(&self) -> bool {
        self.budget > 0.0
    }
}

/// One superarm: an allocation per campaign, in campaign order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub day: usize,
    pub entries: Vec<CampaignAllocation>,
}

impl AllocationPlan {
    /// Every campaign switched off.
    pub fn empty(day: usize, bids: &BidGrid, budgets: &BudgetGrid, campaigns: usize) -> Self {
        Self {
            day,
            entries: (0..campaigns)
                .map(|_| CampaignAllocation::on_grid(bids, budgets, 0, 0))
                .collect(),
        }
    }

    pub fn total_budget(&self) -> f64 {
        self.entries.iter().map(|e| e.budget).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// Budgets summed over campaigns exceed the daily cap.
    TotalBudget,
    /// Bid outside the campaign's bid range.
    BidRange,
    /// Budget outside the campaign's budget range.
    BudgetRange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ConstraintKind,
    pub campaign: Option<CampaignId>,
    pub detail: String,
}

/// Checks a plan against the cap and each campaign's box constraints.
///
/// A campaign with budget 0 is inactive and exempt from its box constraints.
/// Returns every violation found; an empty vector means the plan is feasible.
pub fn validate_allocation(plan: &AllocationPlan, configs: &[CampaignConfig], cap: f64) -> Vec<Violation> {
    let mut violations = Vec::new();
    if plan.entries.len() != configs.len() {
        violations.push(Violation {
            kind: ConstraintKind::TotalBudget,
            campaign: None,
            detail: format!(
                "plan has {} entries for {} campaigns",
                plan.entries.len(),
                configs.len()
            ),
        });
        return violations;
    }
    let total = plan.total_budget();
    if !approx_le(total, cap) {
        violations.push(Violation {
            kind: ConstraintKind::TotalBudget,
            campaign: None,
            detail: format!("total budget {total} exceeds cap {cap}"),
        });
    }
    for (entry, cfg) in plan.entries.iter().zip(configs) {
        if !entry.is_active() {
            continue;
        }
        if !(approx_le(cfg.bid_min, entry.bid) && approx_le(entry.bid, cfg.bid_max)) {
            violations.push(Violation {
                kind: ConstraintKind::BidRange,
                campaign: Some(cfg.id.clone()),
                detail: format!("bid {} outside [{}, {}]", entry.bid, cfg.bid_min, cfg.bid_max),
            });
        }
        if !(approx_le(cfg.budget_min, entry.budget) && approx_le(entry.budget, cfg.budget_max)) {
            violations.push(Violation {
                kind: ConstraintKind::BudgetRange,
                campaign: Some(cfg.id.clone()),
                detail: format!(
                    "budget {} outside [{}, {}]",
                    entry.budget, cfg.budget_min, cfg.budget_max
                ),
            });
        }
    }
    violations
}

/// One day of feedback for one campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub day: usize,
    pub clicks: u64,
    pub cost: f64,
    /// Hour in (0, 24] at which the daily budget ran out, if it did.
    pub exhaust_time: Option<f64>,
    /// Revenue divided by clicks; absent on days without clicks.
    pub value_per_click: Option<f64>,
}

impl ObservationRecord {
    pub fn new(
        day: usize,
        clicks: u64,
        cost: f64,
        exhaust_time: Option<f64>,
        value_per_click: Option<f64>,
    ) -> Result<Self, DomainError> {
        let record = Self {
            day,
            clicks,
            cost,
            exhaust_time,
            value_per_click,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let fail = |reason: String| {
            Err(DomainError::InvalidObservation {
                day: self.day,
                reason,
            })
        };
        if !self.cost.is_finite() || self.cost < 0.0 {
            return fail(format!("cost {} must be finite and non-negative", self.cost));
        }
        if let Some(g) = self.exhaust_time {
            if !(g > 0.0 && g <= 24.0) {
                return fail(format!("exhaust time {g} outside (0, 24]"));
            }
        }
        if let Some(v) = self.value_per_click {
            if !v.is_finite() {
                return fail("value per click must be finite".to_owned());
            }
        }
        Ok(())
    }
}
