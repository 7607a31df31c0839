//! Run configuration: the TOML file schema, presets, and resolution into a
//! concrete [`Experiment`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{BidGrid, BudgetGrid, CampaignConfig, SpendingPlan};
use crate::model::ModelSettings;
use crate::sampling::{FtsSchedule, Variant};
use crate::simulator::AuctionWorld;

/// Configuration problem, anchored to a line of the source text when known.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn new(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }

    fn at_key(source: &str, key: &str, message: impl Into<String>) -> Self {
        Self {
            line: key_line(source, key),
            message: message.into(),
        }
    }
}

/// 1-based line of the first `key = ...` or `[key]` in a TOML text.
fn key_line(source: &str, key: &str) -> Option<usize> {
    source.lines().position(|l| {
        let l = l.trim_start();
        let is_assignment = l
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='));
        let is_table = l.trim_start_matches('[').starts_with(key) && l.starts_with('[');
        is_assignment || is_table
    })
    .map(|i| i + 1)
}

/// Bid and budget grids: `bid_count` evenly spaced bids over
/// `[bid_min, bid_max]` and `budget_count` evenly spaced budgets over
/// `[0, budget_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub bid_min: f64,
    pub bid_max: f64,
    pub bid_count: usize,
    pub budget_max: f64,
    pub budget_count: usize,
}

impl GridSpec {
    pub fn bids(&self) -> Result<BidGrid, ConfigError> {
        if self.bid_count == 0 {
            return Err(ConfigError::new("grid.bid_count must be at least 1"));
        }
        BidGrid::linspace(self.bid_min, self.bid_max, self.bid_count).map_err(|e| ConfigError::new(format!("grid: {e}")))
    }

    pub fn budgets(&self) -> Result<BudgetGrid, ConfigError> {
        if self.budget_count < 2 {
            return Err(ConfigError::new("grid.budget_count must be at least 2"));
        }
        BudgetGrid::linspace(self.budget_max, self.budget_count).map_err(|e| ConfigError::new(format!("grid: {e}")))
    }
}

/// Grid sizes visited by `sweep`. Each bid count is paired with
/// `fixed_count` budgets and each budget count with `fixed_count` bids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub bid_counts: Vec<usize>,
    pub budget_counts: Vec<usize>,
    pub fixed_count: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            bid_counts: vec![5, 10, 20, 40, 80],
            budget_counts: vec![5, 10, 20, 40, 80],
            fixed_count: 10,
        }
    }
}

/// Number of random worlds drawn by `random-settings`, and the days at which
/// the best-run percentage is reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSettingsSpec {
    pub settings: usize,
    pub checkpoints: Vec<usize>,
}

impl Default for RandomSettingsSpec {
    fn default() -> Self {
        Self {
            settings: 5,
            checkpoints: vec![25, 50, 100],
        }
    }
}

/// The configuration file. Every key is optional; missing keys come from
/// `preset` when one is named and from built-in defaults otherwise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: Option<String>,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub replications: Option<usize>,
    pub algorithms: Option<Vec<Variant>>,
    pub delta: Option<f64>,
    /// Multiplier applied to both confidence schedules.
    pub exploration_scale: Option<f64>,
    pub fts_schedule: Option<FtsSchedule>,
    pub joint_ts: Option<bool>,
    /// Replayed days per arm when estimating the expected click tables.
    pub truth_replications: Option<usize>,
    pub daily_cap: Option<f64>,
    pub daily_caps: Option<Vec<f64>>,
    /// Write each episode's final model state next to the CSV.
    pub save_snapshots: Option<bool>,
    pub grid: Option<GridSpec>,
    /// Merged key by key over the preset's model settings.
    pub model: Option<toml::Table>,
    pub campaigns: Option<Vec<CampaignConfig>>,
    pub world: Option<AuctionWorld>,
    pub sweep: Option<SweepSpec>,
    pub random_settings: Option<RandomSettingsSpec>,
}

/// A fully resolved, validated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub name: String,
    pub seed: u64,
    pub horizon: usize,
    pub replications: usize,
    pub algorithms: Vec<Variant>,
    pub delta: f64,
    pub exploration_scale: f64,
    pub fts_schedule: FtsSchedule,
    pub joint_ts: bool,
    pub truth_replications: usize,
    pub save_snapshots: bool,
    pub bids: BidGrid,
    pub budgets: BudgetGrid,
    pub spending: SpendingPlan,
    pub model: ModelSettings,
    pub campaigns: Vec<CampaignConfig>,
    pub world: AuctionWorld,
    pub grid: GridSpec,
    pub sweep: SweepSpec,
    pub random_settings: RandomSettingsSpec,
}

pub const PRESETS: [&str; 3] = ["experiment1", "experiment2", "experiment3"];

fn paper_algorithms() -> Vec<Variant> {
    vec![Variant::FTs, Variant::FUcb, Variant::UTs, Variant::UUcb]
}

fn model_for(click_scale: f64, efficiency_scale: f64) -> ModelSettings {
    ModelSettings {
        bid_length_scale: 0.2,
        budget_length_scale: 0.2,
        amplitude: 1.0,
        click_noise: 0.01,
        efficiency_noise: 0.01,
        click_scale,
        efficiency_scale,
        ..ModelSettings::default()
    }
}

/// Value-per-click prior and observation noise used by the presets, sized
/// for conversion rates of a few percent.
pub const PRESET_VPC_PRIOR_VARIANCE: f64 = 0.01;
pub const PRESET_VPC_NOISE: f64 = 0.0004;

fn preset_base(grid: GridSpec, cap: f64, horizon: usize, replications: usize, model: ModelSettings) -> RunConfig {
    RunConfig {
        seed: Some(1),
        horizon: Some(horizon),
        replications: Some(replications),
        daily_cap: Some(cap),
        grid: Some(grid),
        model: Some(toml::Table::try_from(model).expect("model settings serialize")),
        world: Some(AuctionWorld::experiment1()),
        ..RunConfig::default()
    }
}

/// Built-in configurations of the three synthetic experiments.
pub fn preset(name: &str) -> Option<RunConfig> {
    let wide = GridSpec {
        bid_min: 0.2,
        bid_max: 2.0,
        bid_count: 10,
        budget_max: 500.0,
        budget_count: 10,
    };
    let cfg = match name {
        "experiment1" => RunConfig {
            algorithms: Some(Variant::ALL.to_vec()),
            ..preset_base(wide, 500.0, 200, 100, model_for(500.0, 5.0))
        },
        "experiment2" => RunConfig {
            algorithms: Some(paper_algorithms()),
            sweep: Some(SweepSpec::default()),
            ..preset_base(wide, 500.0, 50, 30, model_for(500.0, 5.0))
        },
        "experiment3" => RunConfig {
            algorithms: Some(paper_algorithms()),
            random_settings: Some(RandomSettingsSpec::default()),
            ..preset_base(
                GridSpec {
                    bid_min: 0.1,
                    bid_max: 1.0,
                    bid_count: 10,
                    budget_max: 100.0,
                    budget_count: 10,
                },
                100.0,
                100,
                50,
                model_for(500.0, 5.0),
            )
        },
        _ => return None,
    };
    Some(RunConfig {
        name: Some(name.to_owned()),
        preset: Some(name.to_owned()),
        ..cfg
    })
}

/// Parses a configuration file. Syntax errors, unknown keys and type errors
/// carry the offending line.
pub fn parse_config(source: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(source).map_err(|e: toml::de::Error| {
        let line = e.span().map(|s| source[..s.start.min(source.len())].lines().count().max(1));
        let line = line.map(|l| {
            // a span starting right after a newline belongs to the next line
            match e.span() {
                Some(s) if s.start > 0 && source.as_bytes().get(s.start - 1) == Some(&b'\n') => l + 1,
                _ => l,
            }
        });
        ConfigError {
            line,
            message: e.message().to_owned(),
        }
    })
}

fn overlay<T>(top: Option<T>, base: Option<T>) -> Option<T> {
    top.or(base)
}

impl RunConfig {
    /// Fills unset keys from the named preset, then validates.
    ///
    /// `source` is the original text, used only to anchor semantic errors
    /// to a line; pass an empty string for programmatic configs.
    pub fn resolve(self, source: &str) -> Result<Experiment, ConfigError> {
        let base = match &self.preset {
            Some(name) => preset(name).ok_or_else(|| {
                ConfigError::at_key(
                    source,
                    "preset",
                    format!("unknown preset `{name}` (expected one of {})", PRESETS.join(", ")),
                )
            })?,
            None => RunConfig::default(),
        };
        let mut model_table = base.model.unwrap_or_default();
        if let Some(top) = self.model {
            model_table.extend(top);
        }
        let model: ModelSettings = toml::Value::Table(model_table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::at_key(source, "model", format!("model: {}", e.message())))?;
        let merged = RunConfig {
            name: overlay(self.name, base.name),
            preset: self.preset,
            seed: overlay(self.seed, base.seed),
            horizon: overlay(self.horizon, base.horizon),
            replications: overlay(self.replications, base.replications),
            algorithms: overlay(self.algorithms, base.algorithms),
            delta: overlay(self.delta, base.delta),
            exploration_scale: overlay(self.exploration_scale, base.exploration_scale),
            fts_schedule: overlay(self.fts_schedule, base.fts_schedule),
            joint_ts: overlay(self.joint_ts, base.joint_ts),
            truth_replications: overlay(self.truth_replications, base.truth_replications),
            // an explicit schedule in the file wins over a preset's constant cap
            daily_cap: if self.daily_caps.is_some() {
                self.daily_cap
            } else {
                overlay(self.daily_cap, base.daily_cap)
            },
            daily_caps: overlay(self.daily_caps, base.daily_caps),
            save_snapshots: overlay(self.save_snapshots, base.save_snapshots),
            grid: overlay(self.grid, base.grid),
            model: None,
            campaigns: overlay(self.campaigns, base.campaigns),
            world: overlay(self.world, base.world),
            sweep: overlay(self.sweep, base.sweep),
            random_settings: overlay(self.random_settings, base.random_settings),
        };
        merged.finish(model, source)
    }

    fn finish(self, model: ModelSettings, source: &str) -> Result<Experiment, ConfigError> {
        let err = |key: &str, msg: String| ConfigError::at_key(source, key, msg);
        let horizon = self.horizon.unwrap_or(200);
        if horizon == 0 {
            return Err(err("horizon", "horizon must be at least 1".into()));
        }
        let replications = self.replications.unwrap_or(1);
        if replications == 0 {
            return Err(err("replications", "replications must be at least 1".into()));
        }
        let delta = self.delta.unwrap_or(0.05);
        if !(delta > 0.0 && delta < 1.0) {
            return Err(err("delta", format!("delta must lie in (0, 1), got {delta}")));
        }
        let exploration_scale = self.exploration_scale.unwrap_or(1.0);
        if !(exploration_scale >= 0.0 && exploration_scale.is_finite()) {
            return Err(err("exploration_scale", "exploration_scale must be non-negative".into()));
        }
        let algorithms = self.algorithms.unwrap_or_else(|| Variant::ALL.to_vec());
        if algorithms.is_empty() {
            return Err(err("algorithms", "at least one algorithm is required".into()));
        }
        let truth_replications = self.truth_replications.unwrap_or(2000);
        if truth_replications == 0 {
            return Err(err("truth_replications", "truth_replications must be at least 1".into()));
        }
        let world = self
            .world
            .ok_or_else(|| ConfigError::new("no world given: set `preset` or a [world] table"))?;
        world.validate().map_err(|e| err("world", format!("world: {e}")))?;
        let grid = self
            .grid
            .ok_or_else(|| ConfigError::new("no grid given: set `preset` or a [grid] table"))?;
        let bids = grid.bids().map_err(|e| err("grid", e.message))?;
        let budgets = grid.budgets().map_err(|e| err("grid", e.message))?;
        let spending = match (self.daily_caps, self.daily_cap) {
            (Some(_), Some(_)) => return Err(err("daily_caps", "set either daily_cap or daily_caps, not both".into())),
            (Some(caps), None) => {
                if caps.len() < horizon {
                    return Err(err(
                        "daily_caps",
                        format!("daily_caps lists {} days but the horizon is {horizon}", caps.len()),
                    ));
                }
                SpendingPlan::new(caps)
            }
            (None, Some(cap)) => SpendingPlan::constant(cap, horizon),
            (None, None) => SpendingPlan::constant(budgets.max(), horizon),
        }
        .map_err(|e| err("daily_cap", e.to_string()))?;
        let campaigns = match self.campaigns {
            Some(c) => c,
            None => default_campaigns(&world, &bids, &budgets),
        };
        if campaigns.len() != world.campaigns.len() {
            return Err(err(
                "campaigns",
                format!("{} campaigns configured but the world has {}", campaigns.len(), world.campaigns.len()),
            ));
        }
        for c in &campaigns {
            c.validate().map_err(|e| err("campaigns", e.to_string()))?;
        }
        validate_model(&model).map_err(|m| err("model", m))?;
        let sweep = self.sweep.unwrap_or_default();
        let random_settings = self.random_settings.unwrap_or_default();
        Ok(Experiment {
            name: self.name.unwrap_or_else(|| "run".to_owned()),
            seed: self.seed.unwrap_or(0),
            horizon,
            replications,
            algorithms,
            delta,
            exploration_scale,
            fts_schedule: self.fts_schedule.unwrap_or_default(),
            joint_ts: self.joint_ts.unwrap_or(false),
            truth_replications,
            save_snapshots: self.save_snapshots.unwrap_or(false),
            bids,
            budgets,
            spending,
            model,
            campaigns,
            world,
            grid,
            sweep,
            random_settings,
        })
    }
}

fn validate_model(m: &ModelSettings) -> Result<(), String> {
    let positive = [
        ("bid_length_scale", m.bid_length_scale),
        ("budget_length_scale", m.budget_length_scale),
        ("amplitude", m.amplitude),
        ("click_noise", m.click_noise),
        ("efficiency_noise", m.efficiency_noise),
        ("click_scale", m.click_scale),
        ("efficiency_scale", m.efficiency_scale),
    ];
    for (name, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            return Err(format!("model.{name} must be positive, got {v}"));
        }
    }
    if m.window == Some(0) {
        return Err("model.window must be at least 1".into());
    }
    Ok(())
}

/// One campaign per world entry, named `C1, C2, ...`, free to use the whole
/// grid, with the preset value-per-click prior.
pub fn default_campaigns(world: &AuctionWorld, bids: &BidGrid, budgets: &BudgetGrid) -> Vec<CampaignConfig> {
    (0..world.campaigns.len())
        .map(|j| {
            CampaignConfig::new(format!("C{}", j + 1), (bids.min(), bids.max()), (0.0, budgets.max()))
                .expect("grid bounds form valid ranges")
                .with_vpc_prior(0.0, PRESET_VPC_PRIOR_VARIANCE, PRESET_VPC_NOISE)
        })
        .collect()
}

impl Experiment {
    pub fn from_preset(name: &str) -> Result<Self, ConfigError> {
        preset(name)
            .ok_or_else(|| ConfigError::new(format!("unknown preset `{name}` (expected one of {})", PRESETS.join(", "))))?
            .resolve("")
    }

    /// Same run on a different grid; campaigns built from the world are
    /// rebuilt so their ranges follow the new grid.
    pub fn with_grid(&self, grid: GridSpec) -> Result<Self, ConfigError> {
        let bids = grid.bids()?;
        let budgets = grid.budgets()?;
        let mut next = self.clone();
        if self.campaigns == default_campaigns(&self.world, &self.bids, &self.budgets) {
            next.campaigns = default_campaigns(&self.world, &bids, &budgets);
        }
        next.bids = bids;
        next.budgets = budgets;
        next.grid = grid;
        Ok(next)
    }

    /// Expected-click tables depend on the world and grids only; this is
    /// the seed they are estimated with.
    pub fn truth_seed(&self) -> u64 {
        self.seed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for name in PRESETS {
            let e = Experiment::from_preset(name).unwrap();
            assert_eq!(e.campaigns.len(), 4);
            assert_eq!(e.spending.horizon(), e.horizon);
        }
        let e = Experiment::from_preset("experiment1").unwrap();
        assert_eq!((e.bids.len(), e.budgets.len(), e.horizon), (10, 10, 200));
        assert_eq!(e.budgets.max(), 500.0);
        assert_eq!(e.spending.cap(1), 500.0);
    }

    #[test]
    fn file_overrides_preset() {
        let src = "preset = \"experiment1\"\nhorizon = 7\n[model]\nclick_noise = 0.5\n";
        let e = parse_config(src).unwrap().resolve(src).unwrap();
        assert_eq!(e.horizon, 7);
        assert_eq!(e.model.click_noise, 0.5);
        assert_eq!(e.model.click_scale, 500.0);
        assert_eq!(e.spending.horizon(), 7);
    }

    #[test]
    fn syntax_errors_name_the_line() {
        let src = "seed = 1\nhorizon = \n";
        let e = parse_config(src).unwrap_err();
        assert_eq!(e.line, Some(2), "{e}");
    }

    #[test]
    fn unknown_keys_name_the_line() {
        let src = "seed = 1\n\nhorizn = 3\n";
        let e = parse_config(src).unwrap_err();
        assert_eq!(e.line, Some(3), "{e}");
        assert!(e.to_string().starts_with("line 3:"));
    }

    #[test]
    fn semantic_errors_name_the_line() {
        let src = "preset = \"experiment1\"\nreplications = 0\n";
        let e = parse_config(src).unwrap().resolve(src).unwrap_err();
        assert_eq!(e.line, Some(2));
        let src = "preset = \"nope\"\n";
        let e = parse_config(src).unwrap().resolve(src).unwrap_err();
        assert_eq!(e.line, Some(1));
    }

    #[test]
    fn missing_world_is_reported() {
        let e = RunConfig::default().resolve("").unwrap_err();
        assert!(e.message.contains("world"));
    }

    #[test]
    fn spending_schedule_must_cover_horizon() {
        let src = "preset = \"experiment1\"\nhorizon = 3\ndaily_caps = [1.0, 2.0]\n";
        let e = parse_config(src).unwrap().resolve(src).unwrap_err();
        assert_eq!(e.line, Some(3));
        let src = "preset = \"experiment1\"\nhorizon = 2\ndaily_caps = [100.0, 200.0]\n";
        let e = parse_config(src).unwrap().resolve(src).unwrap();
        assert_eq!(e.spending.caps(), &[100.0, 200.0]);
    }

    #[test]
    fn with_grid_rebuilds_default_campaigns() {
        let e = Experiment::from_preset("experiment1").unwrap();
        let g = GridSpec {
            bid_count: 5,
            budget_max: 300.0,
            ..e.grid.clone()
        };
        let f = e.with_grid(g).unwrap();
        assert_eq!(f.bids.len(), 5);
        assert_eq!(f.campaigns[0].budget_max, 300.0);
    }
}
