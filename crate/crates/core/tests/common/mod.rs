//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use adcomb::domain::{BidGrid, BudgetGrid};
use adcomb::gp::GpConfig;
use adcomb::rng::SimRng;
use adcomb::sampling::EstimateTable;
use adcomb::simulator::{DayOutcome, Environment, TruthTable};
use nalgebra::{DMatrix, DVector};

/// Posterior mean and variance from an explicitly formed Gram matrix and
/// its direct inverse. Kernel and input scaling are re-implemented here.
pub fn gp_oracle(cfg: &GpConfig, inputs: &[Vec<f64>], targets: &[f64], x: &[f64]) -> (f64, f64) {
    let scale = |p: &[f64]| -> Vec<f64> {
        p.iter()
            .enumerate()
            .map(|(d, v)| {
                let (lo, hi) = (cfg.scaling.lower[d], cfg.scaling.upper[d]);
                if hi > lo {
                    (v - lo) / (hi - lo)
                } else {
                    v - lo
                }
            })
            .collect()
    };
    let ls = cfg.kernel.length_scales().to_vec();
    let amp = cfg.kernel.amplitude();
    let k = |a: &[f64], b: &[f64]| -> f64 {
        let r2: f64 = a.iter().zip(b).zip(&ls).map(|((u, v), l)| ((u - v) / l).powi(2)).sum();
        amp * (-0.5 * r2).exp()
    };
    let n = inputs.len();
    let xs: Vec<Vec<f64>> = inputs.iter().map(|p| scale(p)).collect();
    let q = scale(x);
    let s = cfg.target_scale;
    let m = |p: &[f64]| cfg.prior.eval(p);
    if n == 0 {
        return (m(x), k(&q, &q) * s * s);
    }
    let phi = DMatrix::from_fn(n, n, |i, j| k(&xs[i], &xs[j]) + if i == j { cfg.noise } else { 0.0 });
    let inv = phi.try_inverse().expect("Gram matrix is invertible");
    let kv = DVector::from_fn(n, |i, _| k(&q, &xs[i]));
    let resid = DVector::from_fn(n, |i, _| (targets[i] - m(&inputs[i])) / s);
    let mean = m(x) + s * (kv.transpose() * &inv * resid)[(0, 0)];
    let var = (k(&q, &q) - (kv.transpose() * &inv * &kv)[(0, 0)]) * s * s;
    (mean, var)
}

/// `½ log det(I + K/λ)` through an LU determinant.
pub fn ig_determinant(cfg: &GpConfig, inputs: &[Vec<f64>]) -> f64 {
    let n = inputs.len();
    if n == 0 {
        return 0.0;
    }
    let scaled: Vec<Vec<f64>> = inputs
        .iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(d, v)| (v - cfg.scaling.lower[d]) / (cfg.scaling.upper[d] - cfg.scaling.lower[d]))
                .collect()
        })
        .collect();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let kij = cfg.kernel.eval(&scaled[i], &scaled[j]);
        (if i == j { 1.0 } else { 0.0 }) + kij / cfg.noise
    });
    0.5 * m.determinant().ln()
}

/// Exhaustive optimum over every campaign's (bid, budget) arms plus the
/// inactive choice, subject to the cap. Values are summed in campaign
/// order, the same order the DP accumulates them. Returns `None` when no
/// budget level fits under the cap.
pub fn brute_force(
    estimates: &[EstimateTable],
    feasible_bids: &[Vec<usize>],
    feasible_budgets: &[Vec<usize>],
    budgets: &BudgetGrid,
    cap: f64,
) -> Option<f64> {
    if !(cap >= 0.0) {
        return None;
    }
    let eps = 1e-9 * cap.abs().max(1.0);
    // arms per campaign: (budget value, revenue)
    let arms: Vec<Vec<(f64, f64)>> = estimates
        .iter()
        .enumerate()
        .map(|(j, est)| {
            let mut a = vec![(0.0, 0.0)];
            for &y in feasible_budgets[j].iter().filter(|&&y| y > 0) {
                for &x in &feasible_bids[j] {
                    a.push((budgets.get(y), est.value_per_click * est.clicks(x, y)));
                }
            }
            a
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    let mut idx = vec![0usize; arms.len()];
    loop {
        let spend: f64 = idx.iter().zip(&arms).map(|(&i, a)| a[i].0).sum();
        if spend <= cap + eps {
            let mut v = 0.0;
            for (&i, a) in idx.iter().zip(&arms) {
                v += a[i].1;
            }
            best = best.max(v);
        }
        // odometer increment
        let mut j = 0;
        loop {
            if j == arms.len() {
                return Some(best);
            }
            idx[j] += 1;
            if idx[j] < arms[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// A noiseless world: clicks are exactly `min(n_sat(x), y · e(x))`, every
/// click costs `1 / e(x)`, and each click is worth exactly `value[j]`.
pub struct DeterministicWorld {
    pub bids: Vec<f64>,
    pub saturation: Vec<f64>,
    pub efficiency: Vec<f64>,
    pub values: Vec<f64>,
}

impl DeterministicWorld {
    fn bid_index(&self, bid: f64) -> usize {
        self.bids
            .iter()
            .position(|&b| (b - bid).abs() < 1e-12)
            .expect("bid on the grid")
    }

    pub fn clicks(&self, bid_index: usize, budget: f64) -> f64 {
        self.saturation[bid_index].min(budget * self.efficiency[bid_index])
    }

    pub fn truth(&self, bids: &BidGrid, budgets: &BudgetGrid) -> Vec<TruthTable> {
        self.values
            .iter()
            .map(|&v| {
                let mut clicks = Vec::new();
                for xi in 0..bids.len() {
                    for &y in budgets.values() {
                        clicks.push(self.clicks(xi, y));
                    }
                }
                TruthTable {
                    bids: bids.len(),
                    budgets: budgets.len(),
                    std_err: vec![0.0; clicks.len()],
                    clicks,
                    value_per_click: v,
                }
            })
            .collect()
    }
}

impl Environment for DeterministicWorld {
    fn campaigns(&self) -> usize {
        self.values.len()
    }

    fn simulate_campaign_day(&self, campaign: usize, bid: f64, budget: f64, _rng: &mut SimRng) -> DayOutcome {
        if budget <= 0.0 {
            return DayOutcome::default();
        }
        let i = self.bid_index(bid);
        let clicks = self.clicks(i, budget);
        assert_eq!(clicks.fract(), 0.0, "fixture must produce whole clicks");
        let cost = clicks / self.efficiency[i];
        let exhausted = budget * self.efficiency[i] <= self.saturation[i];
        DayOutcome {
            auctions: clicks as u64,
            clicks: clicks as u64,
            conversions: 0,
            cost,
            exhaust_time: exhausted.then(|| 24.0 * budget * self.efficiency[i] / self.saturation[i]),
            revenue: self.values[campaign] * clicks,
        }
    }
}
