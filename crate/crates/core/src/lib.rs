//! Online joint bid and daily-budget optimization for a set of advertising
//! campaigns under a shared daily spending cap.
//!
//! Each day the learner picks one (bid, budget) pair per campaign, observes
//! clicks, cost and value per click, and refines Gaussian-process models of
//! the click function. Allocation is an exact multiple-choice knapsack over a
//! discretized budget grid, fed by optimistic (UCB), sampled (Thompson) or
//! mean estimates.

pub mod domain;
pub mod gp;
pub mod harness;
pub mod model;
pub mod optimizer;
pub mod rng;
pub mod sampling;
pub mod simulator;

pub use domain::{
    AllocationPlan, BidGrid, BudgetGrid, CampaignAllocation, CampaignConfig, CampaignId, ObservationRecord,
    SpendingPlan,
};
pub use model::{CampaignModel, ModelKind, ModelSettings};
pub use optimizer::{allocate, build_value_table, Solution, ValueTable};
pub use sampling::{EstimateTable, Variant};
pub use simulator::{AuctionWorld, CampaignWorld, Environment};
