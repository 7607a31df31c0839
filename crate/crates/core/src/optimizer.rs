//! Exact multiple-choice knapsack over the budget grid.
//!
//! Each campaign is a class and each (bid, budget) pair an item. The best
//! bid is picked per budget level first, which leaves a one-dimensional DP
//! over budget indices:
//!
//! `M(j, h) = max_{k ≤ h} M(j-1, h-k) + w_j(k)`, with `M(0, ·) = 0`.
//!
//! Starting from an all-zero row keeps every row non-decreasing in `h`, so
//! the optimum under a cap sits in the cap's own cell. Runtime is
//! `O(N · H²)` for `N` campaigns and `H` budget levels.

use thiserror::Error;

use crate::domain::{AllocationPlan, BidGrid, BudgetGrid, CampaignAllocation, REL_TOL};
use crate::sampling::EstimateTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("daily cap {0} admits no budget level")]
    Infeasible(f64),
    #[error("value table {index} has {got} budget levels, expected {expected}")]
    Shape { index: usize, expected: usize, got: usize },
}

/// Best bid and its expected value for every budget level of one campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    /// `z(y)`: bid index attaining the most clicks at each budget level.
    pub best_bid: Vec<usize>,
    /// `w(y)`: value per click times clicks at `(z(y), y)`; 0 where infeasible.
    pub value: Vec<f64>,
    /// Budget levels the campaign may take. Level 0 (inactive) always may.
    pub feasible: Vec<bool>,
    /// Set when the campaign has no feasible bid and can only stay inactive.
    pub excluded: bool,
}

/// Builds `z_j` and `w_j` from a campaign's estimates restricted to its
/// feasible bid and budget indices. Ties go to the lowest bid.
pub fn build_value_table(estimates: &EstimateTable, feasible_bids: &[usize], feasible_budgets: &[usize]) -> ValueTable {
    let levels = estimates.budgets();
    let mut feasible = vec![false; levels];
    feasible[0] = true;
    let fallback_bid = feasible_bids.first().copied().unwrap_or(0);
    let mut table = ValueTable {
        best_bid: vec![fallback_bid; levels],
        value: vec![0.0; levels],
        feasible,
        excluded: feasible_bids.is_empty(),
    };
    if table.excluded {
        return table;
    }
    for &y in feasible_budgets.iter().filter(|&&y| y > 0) {
        table.feasible[y] = true;
        let mut best = (fallback_bid, estimates.clicks(fallback_bid, y));
        for &x in &feasible_bids[1..] {
            let clicks = estimates.clicks(x, y);
            if clicks > best.1 {
                best = (x, clicks);
            }
        }
        table.best_bid[y] = best.0;
        table.value[y] = estimates.value_per_click * best.1;
    }
    table
}

/// Optimal budget split returned by [`allocate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub budget_indices: Vec<usize>,
    pub bid_indices: Vec<usize>,
    pub value: f64,
}

impl Solution {
    pub fn to_plan(&self, day: usize, bids: &BidGrid, budgets: &BudgetGrid) -> AllocationPlan {
        AllocationPlan {
            day,
            entries: self
                .bid_indices
                .iter()
                .zip(&self.budget_indices)
                .map(|(&x, &y)| CampaignAllocation::on_grid(bids, budgets, x, y))
                .collect(),
        }
    }
}

/// Full DP matrix, exposed for inspection and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct DpMatrix {
    /// `rows[j][h]` is `M(j + 1, h)`.
    pub rows: Vec<Vec<f64>>,
    /// `choices[j][h]`: budget index given to campaign `j` in cell `(j, h)`.
    pub choices: Vec<Vec<usize>>,
}

/// Fills the DP matrix up to total budget index `last`, which may exceed
/// the per-campaign grid when several campaigns share the cap.
pub fn fill_matrix(tables: &[ValueTable], last: usize) -> DpMatrix {
    let mut rows = Vec::with_capacity(tables.len());
    let mut choices = Vec::with_capacity(tables.len());
    let mut prev = vec![0.0; last + 1];
    for table in tables {
        let mut row = vec![f64::NEG_INFINITY; last + 1];
        let mut choice = vec![0usize; last + 1];
        for h in 0..=last {
            for k in 0..=h.min(table.value.len() - 1) {
                if !table.feasible[k] {
                    continue;
                }
                let cand = prev[h - k] + table.value[k];
                if cand > row[h] {
                    row[h] = cand;
                    choice[h] = k;
                }
            }
        }
        prev = row.clone();
        rows.push(row);
        choices.push(choice);
    }
    DpMatrix { rows, choices }
}

/// Number of whole budget steps that fit under `cap`, at most what `n`
/// campaigns can spend together.
fn total_index_at_or_below(budgets: &BudgetGrid, cap: f64, n: usize) -> usize {
    let max_total = n * (budgets.len() - 1);
    let step = budgets.step();
    if step <= 0.0 || cap.is_infinite() {
        return if step <= 0.0 { 0 } else { max_total };
    }
    let q = cap / step;
    let r = q.round();
    let steps = if (q - r).abs() <= REL_TOL * r.max(1.0) { r } else { q.floor() };
    (steps as usize).min(max_total)
}

/// Maximizes total expected value subject to the daily cap.
///
/// The cap snaps down to a whole number of budget steps. Among optimal splits the
/// one with the smallest total budget is returned; within it, later
/// campaigns take the lower budget on ties.
pub fn allocate(tables: &[ValueTable], cap: f64, budgets: &BudgetGrid) -> Result<Solution, OptimizeError> {
    for (index, t) in tables.iter().enumerate() {
        if t.value.len() != budgets.len() || t.feasible.len() != budgets.len() {
            return Err(OptimizeError::Shape {
                index,
                expected: budgets.len(),
                got: t.value.len(),
            });
        }
    }
    if !(cap >= 0.0) {
        return Err(OptimizeError::Infeasible(cap));
    }
    let last = total_index_at_or_below(budgets, cap, tables.len());
    if tables.is_empty() {
        return Ok(Solution {
            budget_indices: Vec::new(),
            bid_indices: Vec::new(),
            value: 0.0,
        });
    }
    let dp = fill_matrix(tables, last);
    let final_row = &dp.rows[tables.len() - 1];
    let value = final_row[last];
    let mut h = final_row.iter().position(|&v| v == value).unwrap_or(last);
    let mut budget_indices = vec![0; tables.len()];
    for j in (0..tables.len()).rev() {
        let k = dp.choices[j][h];
        budget_indices[j] = k;
        h -= k;
    }
    let bid_indices = budget_indices
        .iter()
        .zip(tables)
        .map(|(&k, t)| t.best_bid[k])
        .collect();
    Ok(Solution {
        budget_indices,
        bid_indices,
        value,
    })
}
