//! Stochastic ground truth: daily VCG position auctions against Gaussian
//! bidders, with clicks, conversions and budget depletion.
//!
//! Ads are ranked by `bid × quality`. Slot `s` is seen with probability
//! `p_obs(s)` and an ad of quality `ρ` in it is clicked with probability
//! `p_obs(s) · ρ`. The per-click price is the welfare our presence takes from
//! the ads ranked below us, divided by our click rate.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AllocationPlan, BidGrid, BudgetGrid, CampaignConfig, ObservationRecord};
use crate::optimizer::{allocate, build_value_table, OptimizeError, Solution};
use crate::rng::{purpose, substream, SimRng};
use crate::sampling::EstimateTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("campaign {index}: {reason}")]
    Invalid { index: usize, reason: String },
}

fn default_conversion_value() -> f64 {
    1.0
}

/// Ground-truth auction environment of one campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignWorld {
    /// Mean of the daily auction count (rounded to the nearest integer).
    pub auctions_mean: f64,
    pub auctions_sd: f64,
    /// Number of ad slots γ.
    pub slots: usize,
    /// Number of participants δ, including us.
    pub participants: usize,
    pub competitor_bid_mean: f64,
    pub competitor_bid_sd: f64,
    /// Observation probability per slot, non-increasing, length γ.
    pub slot_probs: Vec<f64>,
    /// Our click probability, which is also our quality in the ranking.
    pub click_prob: f64,
    pub conversion_prob: f64,
    #[serde(default = "default_conversion_value")]
    pub conversion_value: f64,
}

impl CampaignWorld {
    pub fn competitors(&self) -> usize {
        self.participants.saturating_sub(1)
    }

    pub fn value_per_click(&self) -> f64 {
        self.conversion_prob * self.conversion_value
    }

    fn validate(&self, index: usize) -> Result<(), WorldError> {
        let fail = |reason: &str| {
            Err(WorldError::Invalid {
                index,
                reason: reason.to_owned(),
            })
        };
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(self.auctions_mean.is_finite() && self.auctions_sd >= 0.0) {
            return fail("auction count distribution is invalid");
        }
        if !(self.competitor_bid_mean.is_finite() && self.competitor_bid_sd >= 0.0) {
            return fail("competitor bid distribution is invalid");
        }
        if self.slots == 0 || self.slots > self.participants {
            return fail("need 1 <= slots <= participants");
        }
        if self.slot_probs.len() != self.slots {
            return fail("slot_probs must have one entry per slot");
        }
        if !self.slot_probs.iter().all(|&p| prob(p)) || self.slot_probs.windows(2).any(|w| w[1] > w[0]) {
            return fail("slot_probs must be non-increasing probabilities");
        }
        if !prob(self.click_prob) || !prob(self.conversion_prob) {
            return fail("click and conversion probabilities must lie in [0, 1]");
        }
        if !(self.conversion_value.is_finite() && self.conversion_value >= 0.0) {
            return fail("conversion value must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionWorld {
    pub campaigns: Vec<CampaignWorld>,
}

impl AuctionWorld {
    pub fn new(campaigns: Vec<CampaignWorld>) -> Result<Self, WorldError> {
        let world = Self { campaigns };
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        self.campaigns
            .iter()
            .enumerate()
            .try_for_each(|(i, c)| c.validate(i))
    }

    /// Four campaigns with the synthetic parameters of the first experiment.
    pub fn experiment1() -> Self {
        let mk = |mu: f64, bid_mu: f64, bid_sd: f64, obs: [f64; 5], cl: f64, co: f64| CampaignWorld {
            auctions_mean: mu,
            auctions_sd: 50.0,
            slots: 5,
            participants: 7,
            competitor_bid_mean: bid_mu,
            competitor_bid_sd: bid_sd,
            slot_probs: obs.to_vec(),
            click_prob: cl,
            conversion_prob: co,
            conversion_value: 1.0,
        };
        Self {
            campaigns: vec![
                mk(1000.0, 0.5, 0.1, [0.9, 0.7, 0.6, 0.4, 0.2], 0.5, 0.05),
                mk(1500.0, 0.33, 0.07, [0.9, 0.8, 0.7, 0.6, 0.5], 0.3, 0.05),
                mk(1500.0, 0.4, 0.1, [0.9, 0.7, 0.6, 0.4, 0.3], 0.4, 0.04),
                mk(1250.0, 0.39, 0.51, [0.9, 0.8, 0.6, 0.5, 0.3], 0.4, 0.05),
            ],
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "experiment1" => Some(Self::experiment1()),
            _ => None,
        }
    }
}

/// Outcome of one auction from our point of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuctionResult {
    /// 1-based slot, or `None` when we are not shown.
    pub slot: Option<usize>,
    pub price_per_click: f64,
}

/// Runs one VCG position auction.
///
/// `competitors` holds `(bid, quality)` pairs. Ads with a non-positive
/// score do not take part; ties rank competitors ahead of us.
pub fn run_auction(our_bid: f64, our_quality: f64, competitors: &[(f64, f64)], slot_probs: &[f64]) -> AuctionResult {
    let mut scores: Vec<f64> = competitors
        .iter()
        .map(|&(b, q)| b * q)
        .filter(|&s| s > 0.0)
        .collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    match place(our_bid * our_quality, our_quality, &scores, slot_probs) {
        Some((slot, price)) => AuctionResult {
            slot: Some(slot),
            price_per_click: price,
        },
        None => AuctionResult {
            slot: None,
            price_per_click: 0.0,
        },
    }
}

/// Slot and per-click VCG price for `score` against competitor scores
/// sorted in descending order.
#[inline]
fn place(score: f64, quality: f64, sorted_desc: &[f64], slot_probs: &[f64]) -> Option<(usize, f64)> {
    if !(score > 0.0) {
        return None;
    }
    let ahead = sorted_desc.iter().take_while(|&&s| s >= score).count();
    let slot = ahead + 1;
    let slots = slot_probs.len();
    if slot > slots {
        return None;
    }
    // The ad at overall rank k + 1 (k ≥ slot) is competitor k - 1 in sorted order.
    let mut externality = 0.0;
    for k in slot..=slots {
        let Some(&below) = sorted_desc.get(k - 1) else { break };
        let next = if k < slots { slot_probs[k] } else { 0.0 };
        externality += (slot_probs[k - 1] - next) * below;
    }
    let click_rate = slot_probs[slot - 1] * quality;
    let price = if click_rate > 0.0 { externality / click_rate } else { 0.0 };
    Some((slot, price))
}

/// One campaign's realized day.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DayOutcome {
    pub auctions: u64,
    pub clicks: u64,
    pub conversions: u64,
    pub cost: f64,
    pub exhaust_time: Option<f64>,
    pub revenue: f64,
}

impl DayOutcome {
    pub fn observation(&self, day: usize) -> ObservationRecord {
        ObservationRecord {
            day,
            clicks: self.clicks,
            cost: self.cost,
            exhaust_time: self.exhaust_time,
            value_per_click: (self.clicks > 0).then(|| self.revenue / self.clicks as f64),
        }
    }
}

/// Anything that can play one day for one campaign.
pub trait Environment: Sync {
    fn campaigns(&self) -> usize;
    fn simulate_campaign_day(&self, campaign: usize, bid: f64, budget: f64, rng: &mut SimRng) -> DayOutcome;
}

/// Plays a whole plan, one RNG stream per campaign.
pub fn simulate_day<E: Environment + ?Sized>(env: &E, plan: &AllocationPlan, rngs: &mut [SimRng]) -> Vec<DayOutcome> {
    plan.entries
        .iter()
        .zip(rngs.iter_mut())
        .enumerate()
        .map(|(j, (e, rng))| env.simulate_campaign_day(j, e.bid, e.budget, rng))
        .collect()
}

fn draw_auction_count(c: &CampaignWorld, rng: &mut SimRng) -> u64 {
    let z: f64 = rng.sample(StandardNormal);
    (c.auctions_mean + c.auctions_sd * z).round().max(0.0) as u64
}

/// Draws the competitor scores of one auction into `buf`, sorted descending.
#[inline]
fn draw_competitors(c: &CampaignWorld, rng: &mut SimRng, buf: &mut Vec<f64>) {
    buf.clear();
    for _ in 0..c.competitors() {
        let z: f64 = rng.sample(StandardNormal);
        let bid = (c.competitor_bid_mean + c.competitor_bid_sd * z).max(0.0);
        let quality: f64 = rng.random();
        let s = bid * quality;
        if s > 0.0 {
            buf.push(s);
        }
    }
    buf.sort_unstable_by(|a, b| b.total_cmp(a));
}

impl Environment for AuctionWorld {
    fn campaigns(&self) -> usize {
        self.campaigns.len()
    }

    /// Auctions are spread evenly over 24 hours. After each paid click the
    /// spend is compared with the budget; once it reaches the budget the
    /// campaign leaves the remaining auctions and the hour is recorded. A
    /// zero budget or bid means the campaign does not take part.
    fn simulate_campaign_day(&self, campaign: usize, bid: f64, budget: f64, rng: &mut SimRng) -> DayOutcome {
        let c = &self.campaigns[campaign];
        let mut out = DayOutcome::default();
        if budget <= 0.0 || bid <= 0.0 {
            return out;
        }
        let count = draw_auction_count(c, rng);
        out.auctions = count;
        let score = bid * c.click_prob;
        let mut scores = Vec::with_capacity(c.competitors());
        for i in 0..count {
            draw_competitors(c, rng, &mut scores);
            let Some((slot, price)) = place(score, c.click_prob, &scores, &c.slot_probs) else {
                continue;
            };
            if rng.random::<f64>() >= c.slot_probs[slot - 1] * c.click_prob {
                continue;
            }
            out.clicks += 1;
            out.cost += price;
            if rng.random::<f64>() < c.conversion_prob {
                out.conversions += 1;
                out.revenue += c.conversion_value;
            }
            if out.cost >= budget {
                out.exhaust_time = Some(24.0 * (i + 1) as f64 / count as f64);
                break;
            }
        }
        out
    }
}

/// Monte-Carlo expected clicks of one campaign over the full arm grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTable {
    pub bids: usize,
    pub budgets: usize,
    /// Row-major by bid.
    pub clicks: Vec<f64>,
    /// Standard error of each entry.
    pub std_err: Vec<f64>,
    pub value_per_click: f64,
}

impl TruthTable {
    pub fn clicks_at(&self, bid: usize, budget: usize) -> f64 {
        self.clicks[bid * self.budgets + budget]
    }

    pub fn std_err_at(&self, bid: usize, budget: usize) -> f64 {
        self.std_err[bid * self.budgets + budget]
    }

    /// Expected revenue of the arm.
    pub fn revenue_at(&self, bid: usize, budget: usize) -> f64 {
        self.value_per_click * self.clicks_at(bid, budget)
    }

    pub fn as_estimates(&self) -> EstimateTable {
        EstimateTable::new(self.bids, self.budgets, self.clicks.clone(), self.value_per_click)
    }
}

/// Estimates `n_j(x, y)` on every grid arm by replaying `reps` days.
///
/// Each replayed day is shared by all arms: the same auctions and click
/// draws are evaluated for every bid, and every budget level reads off the
/// same ordered sequence of paid clicks, stopping where the simulator would.
pub fn true_click_table(
    world: &CampaignWorld,
    bids: &BidGrid,
    budgets: &BudgetGrid,
    reps: usize,
    rng: &mut SimRng,
) -> TruthTable {
    let (nx, ny) = (bids.len(), budgets.len());
    let mut sum = vec![0.0; nx * ny];
    let mut sum_sq = vec![0.0; nx * ny];
    let mut events: Vec<Vec<f64>> = vec![Vec::new(); nx];
    let mut scores = Vec::with_capacity(world.competitors());
    for _ in 0..reps {
        for e in &mut events {
            e.clear();
        }
        let count = draw_auction_count(world, rng);
        for _ in 0..count {
            draw_competitors(world, rng, &mut scores);
            let u: f64 = rng.random();
            for (xi, &x) in bids.values().iter().enumerate() {
                if let Some((slot, price)) = place(x * world.click_prob, world.click_prob, &scores, &world.slot_probs) {
                    if u < world.slot_probs[slot - 1] * world.click_prob {
                        events[xi].push(price);
                    }
                }
            }
        }
        for (xi, ev) in events.iter().enumerate() {
            let mut spent = 0.0;
            let mut taken = 0usize;
            for (yi, &y) in budgets.values().iter().enumerate() {
                let clicks = if y <= 0.0 {
                    0
                } else {
                    while taken < ev.len() && spent < y {
                        spent += ev[taken];
                        taken += 1;
                    }
                    taken
                } as f64;
                sum[xi * ny + yi] += clicks;
                sum_sq[xi * ny + yi] += clicks * clicks;
            }
        }
    }
    let r = reps.max(1) as f64;
    let clicks: Vec<f64> = sum.iter().map(|s| s / r).collect();
    let std_err = sum_sq
        .iter()
        .zip(&clicks)
        .map(|(sq, m)| {
            if reps > 1 {
                ((sq / r - m * m).max(0.0) * r / (r - 1.0) / r).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    TruthTable {
        bids: nx,
        budgets: ny,
        clicks,
        std_err,
        value_per_click: world.value_per_click(),
    }
}

/// Truth tables for every campaign, each from its own seeded stream.
pub fn true_click_tables(world: &AuctionWorld, bids: &BidGrid, budgets: &BudgetGrid, reps: usize, seed: u64) -> Vec<TruthTable> {
    world
        .campaigns
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let mut rng = substream(seed, &[purpose::TRUTH, j as u64]);
            true_click_table(c, bids, budgets, reps, &mut rng)
        })
        .collect()
}

/// Expected clicks and standard error at a single arm.
pub fn true_expected_clicks(world: &CampaignWorld, bid: f64, budget: f64, reps: usize, rng: &mut SimRng) -> (f64, f64) {
    let bids = BidGrid::new(vec![bid.max(0.0)]).expect("finite non-negative bid");
    let (grid, col) = if budget > 0.0 {
        (BudgetGrid::new(vec![0.0, budget]).expect("positive budget"), 1)
    } else {
        (BudgetGrid::new(vec![0.0]).expect("zero grid"), 0)
    };
    let t = true_click_table(world, &bids, &grid, reps, rng);
    (t.clicks_at(0, col), t.std_err_at(0, col))
}

/// Clairvoyant optimum on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub solution: Solution,
    /// Expected revenue `r*` of the optimal superarm.
    pub value: f64,
    /// Monte-Carlo standard error of `value`.
    pub std_err: f64,
}

pub fn true_optimum(
    tables: &[TruthTable],
    campaigns: &[CampaignConfig],
    bids: &BidGrid,
    budgets: &BudgetGrid,
    cap: f64,
) -> Result<Optimum, OptimizeError> {
    let values: Vec<_> = tables
        .iter()
        .zip(campaigns)
        .map(|(t, c)| {
            build_value_table(
                &t.as_estimates(),
                &bids.indices_within(c.bid_min, c.bid_max),
                &budgets.indices_within(c.budget_min, c.budget_max),
            )
        })
        .collect();
    let solution = allocate(&values, cap, budgets)?;
    let var: f64 = tables
        .iter()
        .zip(solution.bid_indices.iter().zip(&solution.budget_indices))
        .map(|(t, (&x, &y))| (t.value_per_click * t.std_err_at(x, y)).powi(2))
        .sum();
    Ok(Optimum {
        value: solution.value,
        std_err: var.sqrt(),
        solution,
    })
}

/// Expected revenue of a plan under the truth tables.
pub fn expected_revenue(tables: &[TruthTable], plan: &AllocationPlan) -> f64 {
    tables
        .iter()
        .zip(&plan.entries)
        .map(|(t, e)| t.revenue_at(e.bid_index, e.budget_index))
        .sum()
}

/// Random world keeping each campaign's auction volume, slot and participant
/// counts, and conversion rate from `base`, and drawing the rest uniformly:
/// competitor bid mean in [0.3, 0.6], bid sd in [0.05, 0.5], click
/// probability in [0.2, 0.5], slot probabilities sorted from [0.2, 0.95].
pub fn generate_random_setting(rng: &mut SimRng, base: &AuctionWorld) -> AuctionWorld {
    let campaigns = base
        .campaigns
        .iter()
        .map(|c| {
            let mut slot_probs: Vec<f64> = (0..c.slots).map(|_| rng.random_range(0.2..=0.95)).collect();
            slot_probs.sort_by(|a, b| b.total_cmp(a));
            CampaignWorld {
                competitor_bid_mean: rng.random_range(0.3..=0.6),
                competitor_bid_sd: rng.random_range(0.05..=0.5),
                click_prob: rng.random_range(0.2..=0.5),
                slot_probs,
                ..c.clone()
            }
        })
        .collect();
    AuctionWorld { campaigns }
}
