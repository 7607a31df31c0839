//! Per-campaign model: click-curve GPs plus the value-per-click posterior.
//!
//! The factorized model keeps two 1-D GPs over bids, one for the saturation
//! clicks `n_sat(x)` and one for the clicks bought per unit of cost
//! `e_sat(x)`; expected clicks are `min(n_sat(x), y · e_sat(x))`. The
//! unfactorized model keeps a single 2-D GP over `(bid, budget)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{BidGrid, BudgetGrid, CampaignConfig, DomainError, ObservationRecord};
use crate::gp::{GpConfig, GpError, GpState, InputScaling, Kernel, Posterior, PriorMean};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("day {day}: {clicks} clicks reported with zero cost")]
    ClicksWithoutCost { day: usize, clicks: u64 },
    #[error("exhaust time {0} outside (0, 24]")]
    ExhaustTime(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Factorized,
    Unfactorized,
}

fn default_length_scale() -> f64 {
    0.2
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_noise() -> f64 {
    0.25
}
fn default_scale() -> f64 {
    1.0
}
fn default_prior() -> PriorMean {
    PriorMean::Zero
}

/// GP hyperparameters shared by every campaign in a run.
///
/// Length scales are fractions of the grid span (inputs are mapped to
/// `[0, 1]`); the default 0.2 is a fifth of the span. Noise variances are
/// in units of the scaled targets, i.e. raw targets divided by
/// `click_scale` or `efficiency_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    #[serde(default = "default_length_scale")]
    pub bid_length_scale: f64,
    #[serde(default = "default_length_scale")]
    pub budget_length_scale: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// λ for the click GPs (saturation clicks, or daily clicks when unfactorized).
    #[serde(default = "default_noise")]
    pub click_noise: f64,
    /// λ for the clicks-per-cost GP.
    #[serde(default = "default_noise")]
    pub efficiency_noise: f64,
    #[serde(default = "default_scale")]
    pub click_scale: f64,
    #[serde(default = "default_scale")]
    pub efficiency_scale: f64,
    #[serde(default = "default_prior")]
    pub click_prior: PriorMean,
    #[serde(default = "default_prior")]
    pub efficiency_prior: PriorMean,
    /// Only the most recent `window` days feed the GPs.
    #[serde(default)]
    pub window: Option<usize>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            bid_length_scale: default_length_scale(),
            budget_length_scale: default_length_scale(),
            amplitude: default_amplitude(),
            click_noise: default_noise(),
            efficiency_noise: default_noise(),
            click_scale: default_scale(),
            efficiency_scale: default_scale(),
            click_prior: default_prior(),
            efficiency_prior: default_prior(),
            window: None,
        }
    }
}

/// Conjugate normal posterior of the value per click.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuePerClick {
    pub prior_mean: f64,
    pub prior_variance: f64,
    pub noise: f64,
    pub sum: f64,
    pub count: u64,
}

impl ValuePerClick {
    pub fn new(prior_mean: f64, prior_variance: f64, noise: f64) -> Self {
        Self {
            prior_mean,
            prior_variance,
            noise,
            sum: 0.0,
            count: 0,
        }
    }

    pub fn observe(&mut self, value: f64) {
        self.sum += value;
        self.count += 1;
    }

    /// `(ξ ν₀ + ψ² Σv) / (ξ + n ψ²)` and `ψ² ξ / (ξ + n ψ²)`.
    pub fn posterior(&self) -> Posterior {
        let psi2 = self.prior_variance;
        let denom = self.noise + self.count as f64 * psi2;
        Posterior {
            mean: (self.noise * self.prior_mean + psi2 * self.sum) / denom,
            variance: psi2 * self.noise / denom,
        }
    }
}

/// Saturation clicks implied by a day's clicks, assuming clicks arrive
/// uniformly over 24 hours: `(24 / g) · n` if the budget ran out at hour
/// `g`, otherwise `n`.
pub fn extrapolate_saturation(clicks: f64, exhaust_time: Option<f64>) -> Result<f64, ModelError> {
    match exhaust_time {
        None => Ok(clicks),
        Some(g) if g > 0.0 && g <= 24.0 => Ok(24.0 / g * clicks),
        Some(g) => Err(ModelError::ExhaustTime(g)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClickModel {
    Factorized {
        saturation: GpState,
        efficiency: GpState,
    },
    Unfactorized {
        clicks: GpState,
    },
}

/// One day as seen by the model: the arm that was set and what came back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub bid: f64,
    pub budget: f64,
    pub observation: ObservationRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignModel {
    kind: ModelKind,
    clicks: ClickModel,
    vpc: ValuePerClick,
    window: Option<usize>,
    history: Vec<HistoryEntry>,
}

/// Everything needed to rebuild a [`CampaignModel`]: hyperparameters and
/// the raw observation history. GP factors are recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub kind: ModelKind,
    pub gp_configs: Vec<GpConfig>,
    pub vpc_prior_mean: f64,
    pub vpc_prior_variance: f64,
    pub vpc_noise: f64,
    pub window: Option<usize>,
    pub history: Vec<HistoryEntry>,
}

impl CampaignModel {
    pub fn new(
        kind: ModelKind,
        campaign: &CampaignConfig,
        settings: &ModelSettings,
        bids: &BidGrid,
        budgets: &BudgetGrid,
    ) -> Result<Self, ModelError> {
        campaign.validate()?;
        let bid_scaling = (bids.min(), bids.max());
        let clicks = match kind {
            ModelKind::Factorized => {
                let kernel = Kernel::squared_exponential(vec![settings.bid_length_scale], settings.amplitude)?;
                let scaling = InputScaling::new(vec![bid_scaling.0], vec![bid_scaling.1]);
                ClickModel::Factorized {
                    saturation: GpState::new(
                        GpConfig::new(kernel.clone(), settings.click_noise)
                            .with_target_scale(settings.click_scale)
                            .with_scaling(scaling.clone())
                            .with_prior(settings.click_prior.clone()),
                    )?,
                    efficiency: GpState::new(
                        GpConfig::new(kernel, settings.efficiency_noise)
                            .with_target_scale(settings.efficiency_scale)
                            .with_scaling(scaling)
                            .with_prior(settings.efficiency_prior.clone()),
                    )?,
                }
            }
            ModelKind::Unfactorized => {
                let kernel = Kernel::squared_exponential(
                    vec![settings.bid_length_scale, settings.budget_length_scale],
                    settings.amplitude,
                )?;
                let scaling = InputScaling::new(vec![bid_scaling.0, 0.0], vec![bid_scaling.1, budgets.max()]);
                ClickModel::Unfactorized {
                    clicks: GpState::new(
                        GpConfig::new(kernel, settings.click_noise)
                            .with_target_scale(settings.click_scale)
                            .with_scaling(scaling)
                            .with_prior(settings.click_prior.clone()),
                    )?,
                }
            }
        };
        Ok(Self {
            kind,
            clicks,
            vpc: ValuePerClick::new(
                campaign.vpc_prior_mean,
                campaign.vpc_prior_variance,
                campaign.vpc_noise,
            ),
            window: settings.window,
            history: Vec::new(),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn click_model(&self) -> &ClickModel {
        &self.clicks
    }

    pub fn value_per_click(&self) -> &ValuePerClick {
        &self.vpc
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    fn feed_gps(clicks: &mut ClickModel, entry: &HistoryEntry) -> Result<(), ModelError> {
        let obs = &entry.observation;
        // A zero budget means the campaign sat out the day: nothing was learned.
        if entry.budget <= 0.0 {
            return Ok(());
        }
        match clicks {
            ClickModel::Factorized {
                saturation,
                efficiency,
            } => {
                let n_sat = extrapolate_saturation(obs.clicks as f64, obs.exhaust_time)?;
                saturation.add_observation(&[entry.bid], n_sat)?;
                if obs.cost > 0.0 {
                    efficiency.add_observation(&[entry.bid], obs.clicks as f64 / obs.cost)?;
                }
            }
            ClickModel::Unfactorized { clicks } => {
                clicks.add_observation(&[entry.bid, entry.budget], obs.clicks as f64)?;
            }
        }
        Ok(())
    }

    fn empty_like(clicks: &ClickModel) -> Result<ClickModel, ModelError> {
        Ok(match clicks {
            ClickModel::Factorized {
                saturation,
                efficiency,
            } => ClickModel::Factorized {
                saturation: GpState::new(saturation.config().clone())?,
                efficiency: GpState::new(efficiency.config().clone())?,
            },
            ClickModel::Unfactorized { clicks } => ClickModel::Unfactorized {
                clicks: GpState::new(clicks.config().clone())?,
            },
        })
    }

    /// Folds in the feedback for the arm `(bid, budget)` set on `obs.day`.
    pub fn update(&mut self, bid: f64, budget: f64, obs: ObservationRecord) -> Result<(), ModelError> {
        obs.validate()?;
        if obs.cost == 0.0 && obs.clicks > 0 {
            return Err(ModelError::ClicksWithoutCost {
                day: obs.day,
                clicks: obs.clicks,
            });
        }
        let entry = HistoryEntry {
            bid,
            budget,
            observation: obs,
        };
        match self.window {
            Some(w) if self.history.len() >= w => {
                let mut rebuilt = Self::empty_like(&self.clicks)?;
                let start = self.history.len() + 1 - w;
                for e in self.history[start..].iter().chain(std::iter::once(&entry)) {
                    Self::feed_gps(&mut rebuilt, e)?;
                }
                self.clicks = rebuilt;
            }
            _ => Self::feed_gps(&mut self.clicks, &entry)?,
        }
        if let Some(v) = entry.observation.value_per_click {
            self.vpc.observe(v);
        }
        self.history.push(entry);
        Ok(())
    }

    /// Posterior summary of expected clicks at `(x, y)`.
    ///
    /// In the factorized model the mean is `max(0, min(μ_sat, y · η))` and
    /// the variance is that of whichever branch attains the minimum.
    /// Zero budget always yields zero clicks.
    pub fn predict_clicks(&self, x: f64, y: f64) -> Posterior {
        if y <= 0.0 {
            return Posterior {
                mean: 0.0,
                variance: 0.0,
            };
        }
        match &self.clicks {
            ClickModel::Factorized {
                saturation,
                efficiency,
            } => {
                let n = saturation.posterior(&[x]);
                let e = efficiency.posterior(&[x]);
                let linear = y * e.mean;
                if n.mean <= linear {
                    Posterior {
                        mean: n.mean.max(0.0),
                        variance: n.variance,
                    }
                } else {
                    Posterior {
                        mean: linear.max(0.0),
                        variance: y * y * e.variance,
                    }
                }
            }
            ClickModel::Unfactorized { clicks } => {
                let p = clicks.posterior(&[x, y]);
                Posterior {
                    mean: p.mean.max(0.0),
                    variance: p.variance,
                }
            }
        }
    }

    pub fn snapshot(&self) -> ModelSnapshot {
        let gp_configs = match &self.clicks {
            ClickModel::Factorized {
                saturation,
                efficiency,
            } => vec![saturation.config().clone(), efficiency.config().clone()],
            ClickModel::Unfactorized { clicks } => vec![clicks.config().clone()],
        };
        ModelSnapshot {
            kind: self.kind,
            gp_configs,
            vpc_prior_mean: self.vpc.prior_mean,
            vpc_prior_variance: self.vpc.prior_variance,
            vpc_noise: self.vpc.noise,
            window: self.window,
            history: self.history.clone(),
        }
    }

    /// Rebuilds a model by replaying the snapshot's history. A different
    /// `window` may be supplied to resume with a new sliding window.
    pub fn from_snapshot(snapshot: &ModelSnapshot, window: Option<Option<usize>>) -> Result<Self, ModelError> {
        let bad = || {
            ModelError::Gp(GpError::Hyperparameter(
                "snapshot GP configs do not match the model kind".into(),
            ))
        };
        let clicks = match (snapshot.kind, snapshot.gp_configs.as_slice()) {
            (ModelKind::Factorized, [sat, eff]) => ClickModel::Factorized {
                saturation: GpState::new(sat.clone())?,
                efficiency: GpState::new(eff.clone())?,
            },
            (ModelKind::Unfactorized, [n]) => ClickModel::Unfactorized {
                clicks: GpState::new(n.clone())?,
            },
            _ => return Err(bad()),
        };
        let mut model = Self {
            kind: snapshot.kind,
            clicks,
            vpc: ValuePerClick::new(
                snapshot.vpc_prior_mean,
                snapshot.vpc_prior_variance,
                snapshot.vpc_noise,
            ),
            window: window.unwrap_or(snapshot.window),
            history: Vec::new(),
        };
        for e in &snapshot.history {
            model.update(e.bid, e.budget, e.observation.clone())?;
        }
        Ok(model)
    }
}
