//! Turns a campaign model into the point estimates the optimizer consumes:
//! an expected-clicks table over every (bid, budget) arm and a value per
//! click. Three strategies: upper confidence bounds, Thompson sampling and
//! plain posterior means.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{BidGrid, BudgetGrid};
use crate::gp::Posterior;
use crate::model::{CampaignModel, ClickModel, ModelKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("confidence parameter δ = {0} must lie in (0, 1)")]
    Delta(f64),
    #[error("day index must be at least 1")]
    Day,
    #[error("unknown algorithm `{0}` (expected one of f-ts, f-ucb, u-ts, u-ucb, f-mean)")]
    UnknownVariant(String),
}

/// Algorithm variant: model family × exploration strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "f-ts")]
    FTs,
    #[serde(rename = "f-ucb")]
    FUcb,
    #[serde(rename = "u-ts")]
    UTs,
    #[serde(rename = "u-ucb")]
    UUcb,
    #[serde(rename = "f-mean")]
    FMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Ucb,
    Thompson,
    Mean,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::FTs, Variant::FUcb, Variant::UTs, Variant::UUcb, Variant::FMean];

    pub fn model_kind(self) -> ModelKind {
        match self {
            Variant::FTs | Variant::FUcb | Variant::FMean => ModelKind::Factorized,
            Variant::UTs | Variant::UUcb => ModelKind::Unfactorized,
        }
    }

    pub fn strategy(self) -> Strategy {
        match self {
            Variant::FTs | Variant::UTs => Strategy::Thompson,
            Variant::FUcb | Variant::UUcb => Strategy::Ucb,
            Variant::FMean => Strategy::Mean,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::FTs => "f-ts",
            Variant::FUcb => "f-ucb",
            Variant::UTs => "u-ts",
            Variant::UUcb => "u-ucb",
            Variant::FMean => "f-mean",
        }
    }

    /// Stable small integer used to derive per-variant seeds.
    pub fn ordinal(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = SamplingError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SamplingError::UnknownVariant(s.to_owned()))
    }
}

/// Which confidence schedule to use for the factorized Thompson variant.
///
/// `Statement` shares the f-ucb constants and is the default; `Proof` uses
/// the wider Thompson constants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FtsSchedule {
    #[default]
    Statement,
    Proof,
}

/// Confidence schedule `(b_t, b'_t)` for clicks and value per click.
///
/// | variant | `b_t` | `b'_t` |
/// |---|---|---|
/// | u-ucb | `2 ln(π² N M t² / 3δ)` | `2 ln(π² N t² / 3δ)` |
/// | u-ts  | `8 ln(2 N M t² / 3δ)`  | `8 ln(2 N t² / 3δ)`  |
/// | f-ucb | `2 ln(π² N M t² / 2δ)` | `2 ln(π² N t² / 2δ)` |
/// | f-ts  | as f-ucb, or `8 ln(2 N M t² / 2δ)`, `8 ln(2 N t² / 2δ)` with [`FtsSchedule::Proof`] |
/// | f-mean | 0 | 0 |
///
/// Values whose logarithm would be negative are clamped to 0.
pub fn schedule_b(
    variant: Variant,
    fts: FtsSchedule,
    campaigns: usize,
    arms: usize,
    t: usize,
    delta: f64,
) -> Result<(f64, f64), SamplingError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SamplingError::Delta(delta));
    }
    if t == 0 {
        return Err(SamplingError::Day);
    }
    let n = campaigns as f64;
    let m = arms as f64;
    let t2 = (t as f64) * (t as f64);
    let pi2 = PI * PI;
    let (scale, numer, denom) = match (variant, fts) {
        (Variant::UUcb, _) => (2.0, pi2, 3.0),
        (Variant::UTs, _) => (8.0, 2.0, 3.0),
        (Variant::FUcb, _) | (Variant::FTs, FtsSchedule::Statement) => (2.0, pi2, 2.0),
        (Variant::FTs, FtsSchedule::Proof) => (8.0, 2.0, 2.0),
        (Variant::FMean, _) => return Ok((0.0, 0.0)),
    };
    let b = scale * (numer * n * m * t2 / (denom * delta)).ln();
    let b_prime = scale * (numer * n * t2 / (denom * delta)).ln();
    Ok((b.max(0.0), b_prime.max(0.0)))
}

/// Point estimates handed to the optimizer for one campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTable {
    bids: usize,
    budgets: usize,
    /// Row-major by bid: `clicks[x * budgets + y]`.
    clicks: Vec<f64>,
    pub value_per_click: f64,
}

impl EstimateTable {
    pub fn new(bids: usize, budgets: usize, clicks: Vec<f64>, value_per_click: f64) -> Self {
        assert_eq!(clicks.len(), bids * budgets, "click table has the wrong size");
        Self {
            bids,
            budgets,
            clicks,
            value_per_click,
        }
    }

    pub fn bids(&self) -> usize {
        self.bids
    }

    pub fn budgets(&self) -> usize {
        self.budgets
    }

    pub fn clicks(&self, bid: usize, budget: usize) -> f64 {
        self.clicks[bid * self.budgets + budget]
    }

    pub fn click_table(&self) -> &[f64] {
        &self.clicks
    }
}

/// `max(0, min(n_sat, y · e_sat))`, and 0 for a zero budget.
pub fn compose_clicks(saturation: f64, efficiency: f64, budget: f64) -> f64 {
    if budget <= 0.0 {
        return 0.0;
    }
    saturation.min(budget * efficiency).max(0.0)
}

fn bid_points(bids: &BidGrid) -> Vec<Vec<f64>> {
    bids.values().iter().map(|&x| vec![x]).collect()
}

fn arm_points(bids: &BidGrid, budgets: &BudgetGrid) -> Vec<Vec<f64>> {
    let mut pts = Vec::with_capacity(bids.len() * budgets.len());
    for &x in bids.values() {
        for &y in budgets.values() {
            pts.push(vec![x, y]);
        }
    }
    pts
}

fn factorized_table(
    bids: &BidGrid,
    budgets: &BudgetGrid,
    saturation: &[f64],
    efficiency: &[f64],
    value_per_click: f64,
) -> EstimateTable {
    let mut clicks = Vec::with_capacity(bids.len() * budgets.len());
    for (n, e) in saturation.iter().zip(efficiency) {
        for &y in budgets.values() {
            clicks.push(compose_clicks(*n, *e, y));
        }
    }
    EstimateTable::new(bids.len(), budgets.len(), clicks, value_per_click.max(0.0))
}

fn unfactorized_table(
    bids: &BidGrid,
    budgets: &BudgetGrid,
    values: impl Iterator<Item = f64>,
    value_per_click: f64,
) -> EstimateTable {
    let clicks = values
        .zip(arm_points(bids, budgets))
        .map(|(v, p)| if p[1] <= 0.0 { 0.0 } else { v.max(0.0) })
        .collect();
    EstimateTable::new(bids.len(), budgets.len(), clicks, value_per_click.max(0.0))
}

fn optimistic(p: &Posterior, beta_sqrt: f64) -> f64 {
    p.mean + beta_sqrt * p.std_dev()
}

/// Upper-confidence estimates: each posterior mean plus `√b` (clicks) or
/// `√b'` (value per click) posterior standard deviations.
pub fn sample_ucb(model: &CampaignModel, bids: &BidGrid, budgets: &BudgetGrid, b: f64, b_prime: f64) -> EstimateTable {
    let (sb, sbp) = (b.max(0.0).sqrt(), b_prime.max(0.0).sqrt());
    let vpc = optimistic(&model.value_per_click().posterior(), sbp);
    match model.click_model() {
        ClickModel::Factorized {
            saturation,
            efficiency,
        } => {
            let pts = bid_points(bids);
            let n: Vec<f64> = saturation.posterior_batch(&pts).iter().map(|p| optimistic(p, sb)).collect();
            let e: Vec<f64> = efficiency.posterior_batch(&pts).iter().map(|p| optimistic(p, sb)).collect();
            factorized_table(bids, budgets, &n, &e, vpc)
        }
        ClickModel::Unfactorized { clicks } => {
            let values = arm_points(bids, budgets).into_iter().map(|p| {
                if p[1] <= 0.0 {
                    0.0
                } else {
                    optimistic(&clicks.posterior(&p), sb)
                }
            });
            unfactorized_table(bids, budgets, values, vpc)
        }
    }
}

/// Posterior means composed through the click factorization; no exploration.
pub fn sample_mean(model: &CampaignModel, bids: &BidGrid, budgets: &BudgetGrid) -> EstimateTable {
    sample_ucb(model, bids, budgets, 0.0, 0.0)
}

fn draw<R: Rng + ?Sized>(p: &Posterior, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    p.mean + p.std_dev() * z
}

/// Lower Cholesky factor of a PSD matrix; non-positive pivots become 0.
fn psd_cholesky(cov: &[f64], m: usize) -> Vec<f64> {
    let mut l = vec![0.0; m * m];
    let jitter = 1e-12 * (0..m).map(|i| cov[i * m + i]).fold(0.0, f64::max);
    for i in 0..m {
        for j in 0..=i {
            let mut s = cov[i * m + j];
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            if i == j {
                l[i * m + i] = if s + jitter > 0.0 { (s + jitter).sqrt() } else { 0.0 };
            } else if l[j * m + j] > 0.0 {
                l[i * m + j] = s / l[j * m + j];
            }
        }
    }
    l
}

fn joint_draw<R: Rng + ?Sized>(means: &[f64], cov: &[f64], rng: &mut R) -> Vec<f64> {
    let m = means.len();
    let l = psd_cholesky(cov, m);
    let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    (0..m)
        .map(|i| means[i] + (0..=i).map(|k| l[i * m + k] * z[k]).sum::<f64>())
        .collect()
}

/// Thompson sampling: one Gaussian draw per grid bid per GP (factorized)
/// or per arm (unfactorized), plus one value-per-click draw.
///
/// Draws are independent across grid points unless `joint` is set, in which
/// case a single correlated sample of each GP over the grid is taken.
pub fn sample_ts<R: Rng + ?Sized>(
    model: &CampaignModel,
    bids: &BidGrid,
    budgets: &BudgetGrid,
    rng: &mut R,
    joint: bool,
) -> EstimateTable {
    let table = match model.click_model() {
        ClickModel::Factorized {
            saturation,
            efficiency,
        } => {
            let pts = bid_points(bids);
            let (n, e) = if joint {
                let means = |gp: &crate::gp::GpState| -> Vec<f64> {
                    gp.posterior_batch(&pts).iter().map(|p| p.mean).collect()
                };
                let n = joint_draw(&means(saturation), &saturation.posterior_covariance(&pts), rng);
                let e = joint_draw(&means(efficiency), &efficiency.posterior_covariance(&pts), rng);
                (n, e)
            } else {
                let n: Vec<f64> = saturation.posterior_batch(&pts).iter().map(|p| draw(p, rng)).collect();
                let e: Vec<f64> = efficiency.posterior_batch(&pts).iter().map(|p| draw(p, rng)).collect();
                (n, e)
            };
            (Some((n, e)), None)
        }
        ClickModel::Unfactorized { clicks } => {
            let pts = arm_points(bids, budgets);
            let active: Vec<Vec<f64>> = pts.iter().filter(|p| p[1] > 0.0).cloned().collect();
            let active_draws = if joint {
                let means: Vec<f64> = clicks.posterior_batch(&active).iter().map(|p| p.mean).collect();
                joint_draw(&means, &clicks.posterior_covariance(&active), rng)
            } else {
                active.iter().map(|p| draw(&clicks.posterior(p), rng)).collect()
            };
            let mut it = active_draws.into_iter();
            let values: Vec<f64> = pts
                .iter()
                .map(|p| if p[1] > 0.0 { it.next().unwrap_or(0.0) } else { 0.0 })
                .collect();
            (None, Some(values))
        }
    };
    let vpc = draw(&model.value_per_click().posterior(), rng);
    match table {
        (Some((n, e)), _) => factorized_table(bids, budgets, &n, &e, vpc),
        (_, Some(values)) => unfactorized_table(bids, budgets, values.into_iter(), vpc),
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CampaignConfig, ObservationRecord};
    use crate::gp::PriorMean;
    use crate::model::ModelSettings;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schedule_values() {
        let (b, bp) = schedule_b(Variant::UUcb, FtsSchedule::Statement, 4, 100, 1, 0.1).unwrap();
        assert!((b - 2.0 * (PI * PI * 400.0 / 0.3).ln()).abs() < 1e-12);
        assert!((b - 18.97).abs() < 0.01, "{b}");
        assert!((bp - 9.76).abs() < 0.01, "{bp}");
        assert_eq!(schedule_b(Variant::FMean, FtsSchedule::Statement, 4, 100, 1, 0.1).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn schedule_rejects_bad_delta() {
        assert_eq!(
            schedule_b(Variant::FTs, FtsSchedule::Statement, 1, 1, 1, 1.0),
            Err(SamplingError::Delta(1.0))
        );
        assert!(schedule_b(Variant::FTs, FtsSchedule::Statement, 1, 1, 0, 0.5).is_err());
    }

    #[test]
    fn schedule_clamps_at_zero() {
        // 2·1·1·1/(3·0.99) < 1
        let (b, bp) = schedule_b(Variant::UTs, FtsSchedule::Statement, 1, 1, 1, 0.99).unwrap();
        assert_eq!((b, bp), (0.0, 0.0));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("x-ts".parse::<Variant>().is_err());
    }

    fn point_mass_model(nsat: f64, esat: f64) -> (CampaignModel, BidGrid, BudgetGrid) {
        let bids = BidGrid::linspace(0.5, 1.0, 2).unwrap();
        let budgets = BudgetGrid::new(vec![0.0, 5.0, 10.0]).unwrap();
        let settings = ModelSettings {
            click_prior: PriorMean::Constant { value: nsat },
            efficiency_prior: PriorMean::Constant { value: esat },
            ..ModelSettings::default()
        };
        let cfg = CampaignConfig::new("c", (0.5, 1.0), (0.0, 10.0)).unwrap();
        let m = CampaignModel::new(ModelKind::Factorized, &cfg, &settings, &bids, &budgets).unwrap();
        (m, bids, budgets)
    }

    #[test]
    fn mean_composes_factorization() {
        let (m, bids, budgets) = point_mass_model(15.0, 2.0);
        let t = sample_mean(&m, &bids, &budgets);
        assert_eq!(t.clicks(0, 0), 0.0);
        assert_eq!(t.clicks(0, 1), 10.0);
        assert_eq!(t.clicks(0, 2), 15.0);
    }

    #[test]
    fn ucb_hand_evaluated() {
        // μ=10, σ=1 and η=1, s=0.5 with b=4: u_n = 12, u_e = 2, y=5 -> 10.
        let bids = BidGrid::new(vec![1.0]).unwrap();
        let budgets = BudgetGrid::new(vec![0.0, 5.0]).unwrap();
        let settings = ModelSettings {
            click_prior: PriorMean::Constant { value: 10.0 },
            efficiency_prior: PriorMean::Constant { value: 1.0 },
            click_scale: 1.0,
            efficiency_scale: 0.5,
            ..ModelSettings::default()
        };
        let cfg = CampaignConfig::new("c", (1.0, 1.0), (0.0, 5.0)).unwrap();
        let m = CampaignModel::new(ModelKind::Factorized, &cfg, &settings, &bids, &budgets).unwrap();
        let t = sample_ucb(&m, &bids, &budgets, 4.0, 0.0);
        assert_eq!(t.clicks(0, 1), 10.0);
        let big = BudgetGrid::new(vec![0.0, 10.0]).unwrap();
        assert_eq!(sample_ucb(&m, &bids, &big, 4.0, 0.0).clicks(0, 1), 12.0);
    }

    #[test]
    fn ucb_is_optimistic_under_zero_means() {
        let (m, bids, budgets) = point_mass_model(0.0, 0.0);
        let t = sample_ucb(&m, &bids, &budgets, 4.0, 4.0);
        assert!(t.clicks(1, 2) > 0.0);
        assert!(t.value_per_click > 0.0);
        let mean = sample_mean(&m, &bids, &budgets);
        assert!(mean.click_table().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn ts_is_deterministic_under_seed() {
        let (mut m, bids, budgets) = point_mass_model(0.0, 0.0);
        m.update(0.5, 5.0, ObservationRecord::new(1, 3, 1.5, None, Some(0.2)).unwrap()).unwrap();
        let a = sample_ts(&m, &bids, &budgets, &mut ChaCha8Rng::seed_from_u64(7), false);
        let b = sample_ts(&m, &bids, &budgets, &mut ChaCha8Rng::seed_from_u64(7), false);
        assert_eq!(a, b);
        let c = sample_ts(&m, &bids, &budgets, &mut ChaCha8Rng::seed_from_u64(7), true);
        let d = sample_ts(&m, &bids, &budgets, &mut ChaCha8Rng::seed_from_u64(7), true);
        assert_eq!(c, d);
    }

    #[test]
    fn psd_cholesky_reconstructs() {
        let cov = [4.0, 2.0, 2.0, 3.0];
        let l = psd_cholesky(&cov, 2);
        assert!((l[0] * l[0] - 4.0).abs() < 1e-9);
        assert!((l[2] * l[0] - 2.0).abs() < 1e-9);
        assert!((l[2] * l[2] + l[3] * l[3] - 3.0).abs() < 1e-9);
        // rank deficient
        let l = psd_cholesky(&[1.0, 1.0, 1.0, 1.0], 2);
        assert!(l.iter().all(|v| v.is_finite()));
    }
}
