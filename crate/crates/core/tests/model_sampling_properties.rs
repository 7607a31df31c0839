mod common;

use adcomb::domain::{BidGrid, BudgetGrid, CampaignConfig, ObservationRecord};
use adcomb::gp::{GpState, PriorMean};
use adcomb::model::{CampaignModel, ClickModel, ModelKind, ModelSettings, ValuePerClick};
use adcomb::rng::substream;
use adcomb::sampling::{sample_mean, sample_ts, sample_ucb};
use proptest::prelude::*;
use rand::Rng;

fn grids() -> (BidGrid, BudgetGrid) {
    (BidGrid::linspace(0.2, 2.0, 6).unwrap(), BudgetGrid::linspace(100.0, 6).unwrap())
}

fn settings(window: Option<usize>) -> ModelSettings {
    ModelSettings {
        click_scale: 50.0,
        efficiency_scale: 2.0,
        click_noise: 0.05,
        efficiency_noise: 0.05,
        window,
        ..ModelSettings::default()
    }
}

fn campaign() -> CampaignConfig {
    CampaignConfig::new("c", (0.2, 2.0), (0.0, 100.0))
        .unwrap()
        .with_vpc_prior(0.1, 0.04, 0.01)
}

/// Random but valid feedback for `days` days on grid arms.
fn feedback(days: usize, seed: u64) -> Vec<(f64, f64, ObservationRecord)> {
    let (bids, budgets) = grids();
    let mut rng = substream(seed, &[]);
    (1..=days)
        .map(|day| {
            let x = bids.get(rng.random_range(0..bids.len()));
            let y = budgets.get(rng.random_range(1..budgets.len()));
            let clicks: u64 = rng.random_range(0..60);
            let cost = if clicks == 0 { 0.0 } else { rng.random_range(1.0..y) };
            let exhaust = (rng.random::<f64>() < 0.4 && clicks > 0).then(|| rng.random_range(1.0..24.0));
            let vpc = (clicks > 0).then(|| rng.random_range(0.0..0.3));
            (x, y, ObservationRecord::new(day, clicks, cost, exhaust, vpc).unwrap())
        })
        .collect()
}

fn trained(kind: ModelKind, window: Option<usize>, days: usize, seed: u64) -> CampaignModel {
    let (bids, budgets) = grids();
    let mut m = CampaignModel::new(kind, &campaign(), &settings(window), &bids, &budgets).unwrap();
    for (x, y, obs) in feedback(days, seed) {
        m.update(x, y, obs).unwrap();
    }
    m
}

fn kinds() -> impl Strategy<Value = ModelKind> {
    prop_oneof![Just(ModelKind::Factorized), Just(ModelKind::Unfactorized)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// Conjugate update checked against the precision-weighted form.
    #[test]
    fn value_per_click_matches_precision_form(
        prior in -1.0f64..1.0, psi2 in 0.001f64..2.0, xi in 0.001f64..2.0,
        obs in prop::collection::vec(-1.0f64..2.0, 0..50)
    ) {
        let mut v = ValuePerClick::new(prior, psi2, xi);
        obs.iter().for_each(|&o| v.observe(o));
        let precision = 1.0 / psi2 + obs.len() as f64 / xi;
        let mean = (prior / psi2 + obs.iter().sum::<f64>() / xi) / precision;
        let p = v.posterior();
        prop_assert!((p.mean - mean).abs() < 1e-9 * mean.abs().max(1.0));
        prop_assert!((p.variance - 1.0 / precision).abs() < 1e-12 * (1.0 / precision).max(1.0));
    }

    #[test]
    fn unbounded_window_equals_long_window(kind in kinds(), days in 1usize..25, seed in any::<u64>()) {
        let a = trained(kind, None, days, seed);
        let b = trained(kind, Some(days + 5), days, seed);
        let (bids, budgets) = grids();
        for &x in bids.values() {
            for &y in budgets.values() {
                prop_assert_eq!(a.predict_clicks(x, y), b.predict_clicks(x, y));
            }
        }
    }

    #[test]
    fn window_equals_model_fed_recent_days(kind in kinds(), days in 2usize..25, w in 1usize..10, seed in any::<u64>()) {
        let windowed = trained(kind, Some(w), days, seed);
        let (bids, budgets) = grids();
        let mut fresh = CampaignModel::new(kind, &campaign(), &settings(None), &bids, &budgets).unwrap();
        let fb = feedback(days, seed);
        for (x, y, obs) in &fb[fb.len().saturating_sub(w)..] {
            fresh.update(*x, *y, obs.clone()).unwrap();
        }
        for &x in bids.values() {
            for &y in budgets.values() {
                let (p, q) = (windowed.predict_clicks(x, y), fresh.predict_clicks(x, y));
                prop_assert!((p.mean - q.mean).abs() < 1e-9 * p.mean.abs().max(1.0));
                prop_assert!((p.variance - q.variance).abs() < 1e-9 * p.variance.max(1.0));
            }
        }
    }

    #[test]
    fn factorized_mean_is_monotone_in_budget(days in 0usize..25, seed in any::<u64>()) {
        let m = trained(ModelKind::Factorized, None, days, seed);
        let ClickModel::Factorized { efficiency, .. } = m.click_model() else { unreachable!() };
        let (bids, budgets) = grids();
        for &x in bids.values() {
            if efficiency.posterior(&[x]).mean < 0.0 {
                continue;
            }
            let means: Vec<f64> = budgets.values().iter().map(|&y| m.predict_clicks(x, y).mean).collect();
            prop_assert!(means.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{:?}", means);
        }
    }

    #[test]
    fn ucb_dominates_mean(kind in kinds(), days in 0usize..20, b in 0.0f64..30.0, bp in 0.0f64..30.0, seed in any::<u64>()) {
        let m = trained(kind, None, days, seed);
        let (bids, budgets) = grids();
        let ucb = sample_ucb(&m, &bids, &budgets, b, bp);
        let mean = sample_mean(&m, &bids, &budgets);
        prop_assert!(ucb.value_per_click >= mean.value_per_click);
        for (u, v) in ucb.click_table().iter().zip(mean.click_table()) {
            prop_assert!(u >= v);
        }
    }

    /// Mean estimates rebuilt straight from the GP posteriors.
    #[test]
    fn mean_table_matches_recomposition(kind in kinds(), days in 0usize..20, seed in any::<u64>()) {
        let m = trained(kind, None, days, seed);
        let (bids, budgets) = grids();
        let table = sample_mean(&m, &bids, &budgets);
        for (xi, &x) in bids.values().iter().enumerate() {
            for (yi, &y) in budgets.values().iter().enumerate() {
                let expected = if y == 0.0 {
                    0.0
                } else {
                    match m.click_model() {
                        ClickModel::Factorized { saturation, efficiency } => {
                            let n = saturation.posterior(&[x]).mean;
                            let e = efficiency.posterior(&[x]).mean;
                            n.min(y * e).max(0.0)
                        }
                        ClickModel::Unfactorized { clicks } => clicks.posterior(&[x, y]).mean.max(0.0),
                    }
                };
                prop_assert_eq!(table.clicks(xi, yi), expected);
            }
        }
        prop_assert_eq!(table.value_per_click, m.value_per_click().posterior().mean.max(0.0));
    }
}

#[test]
fn unfactorized_posterior_matches_oracle() {
    let m = trained(ModelKind::Unfactorized, None, 30, 5);
    let ClickModel::Unfactorized { clicks } = m.click_model() else { unreachable!() };
    let inputs: Vec<Vec<f64>> = clicks.inputs().map(<[f64]>::to_vec).collect();
    for q in [[0.5, 40.0], [1.7, 100.0], [0.2, 20.0]] {
        let p = clicks.posterior(&q);
        let (mean, var) = common::gp_oracle(clicks.config(), &inputs, clicks.targets(), &q);
        assert!((p.mean - mean).abs() < 1e-8 * mean.abs().max(1.0));
        assert!((p.variance - var).abs() < 1e-8 * var.abs().max(1.0));
    }
}

#[test]
fn snapshot_survives_json() {
    for kind in [ModelKind::Factorized, ModelKind::Unfactorized] {
        let m = trained(kind, Some(7), 20, 11);
        let json = serde_json::to_string(&m.snapshot()).unwrap();
        let back = CampaignModel::from_snapshot(&serde_json::from_str(&json).unwrap(), None).unwrap();
        assert_eq!(back.predict_clicks(1.1, 60.0), m.predict_clicks(1.1, 60.0));
        assert_eq!(back.value_per_click(), m.value_per_click());
    }
}

#[test]
fn gp_snapshot_rebuilds_factor() {
    let m = trained(ModelKind::Unfactorized, None, 15, 3);
    let ClickModel::Unfactorized { clicks } = m.click_model() else { unreachable!() };
    let back: GpState = serde_json::from_str(&serde_json::to_string(clicks).unwrap()).unwrap();
    assert_eq!(back.posterior(&[0.9, 50.0]), clicks.posterior(&[0.9, 50.0]));
}

/// Prior-only model whose clicks are the saturation draw, well away from
/// the clamp at 0.
fn saturation_only_model() -> CampaignModel {
    let (bids, budgets) = grids();
    let s = ModelSettings {
        click_scale: 10.0,
        click_prior: PriorMean::Constant { value: 100.0 },
        efficiency_prior: PriorMean::Constant { value: 1e6 },
        ..settings(None)
    };
    CampaignModel::new(ModelKind::Factorized, &campaign(), &s, &bids, &budgets).unwrap()
}

#[test]
fn thompson_draws_are_uncorrelated_across_bids() {
    let m = saturation_only_model();
    let (bids, budgets) = grids();
    let mut rng = substream(77, &[]);
    let n = 4000;
    let top = budgets.len() - 1;
    let draws = |joint: bool, rng: &mut adcomb::rng::SimRng| {
        let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let t = sample_ts(&m, &bids, &budgets, rng, joint);
            a.push(t.clicks(2, top));
            b.push(t.clicks(3, top));
        }
        correlation(&a, &b)
    };
    let independent = draws(false, &mut rng);
    assert!(independent.abs() < 4.0 / (n as f64).sqrt(), "corr {independent}");
    // a joint draw follows the kernel: neighbours 0.2 apart in scaled units
    let joint = draws(true, &mut rng);
    let expected = (-0.5f64).exp();
    assert!((joint - expected).abs() < 0.05, "corr {joint}");
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>();
    cov / (va * vb).sqrt()
}

#[test]
fn thompson_value_draws_centre_on_posterior_mean() {
    // a prior mean far above zero keeps the clamp at 0 out of play
    let (bids, budgets) = grids();
    let c = campaign().with_vpc_prior(2.0, 0.25, 0.5);
    let m = CampaignModel::new(ModelKind::Factorized, &c, &settings(None), &bids, &budgets).unwrap();
    let post = m.value_per_click().posterior();
    let mut rng = substream(8, &[]);
    let n = 100_000;
    let mean = (0..n)
        .map(|_| sample_ts(&m, &bids, &budgets, &mut rng, false).value_per_click)
        .sum::<f64>()
        / n as f64;
    let se = post.std_dev() / (n as f64).sqrt();
    assert!((mean - post.mean).abs() < 3.0 * se, "{mean} vs {}", post.mean);
}

#[test]
fn thompson_without_variance_is_the_mean() {
    let (bids, budgets) = grids();
    let tiny = ModelSettings {
        click_scale: 1e-200,
        efficiency_scale: 1e-200,
        click_prior: PriorMean::Linear {
            intercept: 5.0,
            slopes: vec![10.0],
        },
        efficiency_prior: PriorMean::Constant { value: 0.5 },
        ..settings(None)
    };
    let c = campaign().with_vpc_prior(0.5, 1e-300, 1.0);
    let m = CampaignModel::new(ModelKind::Factorized, &c, &tiny, &bids, &budgets).unwrap();
    let mut rng = substream(1, &[]);
    let ts = sample_ts(&m, &bids, &budgets, &mut rng, false);
    assert_eq!(ts, sample_mean(&m, &bids, &budgets));
    assert_eq!(sample_ucb(&m, &bids, &budgets, 9.0, 9.0), sample_mean(&m, &bids, &budgets));
}
