//! CSV traces, run manifests, model snapshots, and reading traces back.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Experiment;
use super::episode::{HarnessError, RunResult, RunTrace, Truth};
use super::metrics::Series;
use crate::model::ModelSnapshot;
use crate::sampling::Variant;

pub const AGGREGATE_CAMPAIGN: &str = "ALL";

/// One CSV line. Campaign rows leave `cum_regret` empty; the aggregate row
/// leaves `bid` empty and sums everything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub run_id: String,
    pub replicate: usize,
    pub t: usize,
    pub algorithm: Variant,
    pub campaign: String,
    pub bid: Option<f64>,
    pub budget: f64,
    pub clicks: u64,
    pub cost: f64,
    pub revenue: f64,
    pub r_mu: f64,
    pub r_star: f64,
    pub cum_regret: Option<f64>,
}

/// SHA-256 of the resolved experiment's canonical JSON form.
pub fn config_hash(exp: &Experiment) -> String {
    let json = serde_json::to_string(exp).expect("experiment serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

pub fn run_id(exp: &Experiment) -> String {
    config_hash(exp)[..12].to_owned()
}

fn trace_rows<'a>(run_id: &'a str, exp: &'a Experiment, truth: &'a Truth, trace: &'a RunTrace) -> impl Iterator<Item = CsvRow> + 'a {
    trace.days.iter().flat_map(move |d| {
        let campaigns = d.plan.entries.iter().enumerate().map(move |(j, e)| {
            let out = &d.outcomes[j];
            CsvRow {
                run_id: run_id.to_owned(),
                replicate: trace.replicate,
                t: d.t,
                algorithm: trace.algorithm,
                campaign: exp.campaigns[j].id.0.clone(),
                bid: Some(e.bid),
                budget: e.budget,
                clicks: out.clicks,
                cost: out.cost,
                revenue: out.revenue,
                r_mu: d.r_mu_campaign[j],
                r_star: truth.r_star_campaign(d.t, j),
                cum_regret: None,
            }
        });
        let all = CsvRow {
            run_id: run_id.to_owned(),
            replicate: trace.replicate,
            t: d.t,
            algorithm: trace.algorithm,
            campaign: AGGREGATE_CAMPAIGN.to_owned(),
            bid: None,
            budget: d.plan.total_budget(),
            clicks: d.outcomes.iter().map(|o| o.clicks).sum(),
            cost: d.outcomes.iter().map(|o| o.cost).sum(),
            revenue: d.outcomes.iter().map(|o| o.revenue).sum(),
            r_mu: d.r_mu,
            r_star: d.r_star,
            cum_regret: Some(d.cum_regret),
        };
        campaigns.chain(std::iter::once(all))
    })
}

pub fn write_csv<W: Write>(writer: W, exp: &Experiment, truth: &Truth, traces: &[RunTrace]) -> Result<(), HarnessError> {
    let id = run_id(exp);
    let mut w = csv::Writer::from_writer(writer);
    for trace in traces {
        for row in trace_rows(&id, exp, truth, trace) {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub name: String,
    pub seed: u64,
    pub config_sha256: String,
    pub r_star_day1: f64,
    pub r_star_std_err_day1: f64,
    pub files: Vec<String>,
    pub experiment: Experiment,
}

/// Writes `results.csv`, `summary.txt`, `manifest.json` and, when enabled,
/// `snapshots/<algorithm>-r<replicate>.json` under `dir`.
pub fn write_run(dir: &Path, exp: &Experiment, truth: &Truth, result: &RunResult, summary: &str) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut files = vec!["results.csv".to_owned(), "summary.txt".to_owned()];
    write_csv(fs::File::create(dir.join("results.csv"))?, exp, truth, &result.traces)?;
    fs::write(dir.join("summary.txt"), summary)?;
    if !result.snapshots.is_empty() {
        fs::create_dir_all(dir.join("snapshots"))?;
        for (trace, snap) in result.traces.iter().zip(&result.snapshots) {
            let name = format!("snapshots/{}-r{}.json", trace.algorithm, trace.replicate);
            fs::write(dir.join(&name), serde_json::to_string_pretty(snap)?)?;
            files.push(name);
        }
    }
    let manifest = Manifest {
        run_id: run_id(exp),
        name: exp.name.clone(),
        seed: exp.seed,
        config_sha256: config_hash(exp),
        r_star_day1: truth.optima[0].value,
        r_star_std_err_day1: truth.optima[0].std_err,
        files,
        experiment: exp.clone(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest.files.iter().map(|f| dir.join(f)).chain([dir.join("manifest.json")]).collect())
}

pub fn read_snapshots(path: &Path) -> Result<Vec<ModelSnapshot>, HarnessError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Reads the aggregate rows of a results CSV back into per-replicate
/// series, with the algorithms in order of first appearance.
pub fn read_series<R: Read>(reader: R) -> Result<(Vec<Variant>, Vec<Series>), HarnessError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut order: Vec<Variant> = Vec::new();
    let mut by_key: BTreeMap<(usize, usize), Series> = BTreeMap::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row?;
        if row.campaign != AGGREGATE_CAMPAIGN {
            continue;
        }
        let a = match order.iter().position(|&v| v == row.algorithm) {
            Some(i) => i,
            None => {
                order.push(row.algorithm);
                order.len() - 1
            }
        };
        let s = by_key.entry((a, row.replicate)).or_insert_with(|| Series {
            algorithm: row.algorithm,
            replicate: row.replicate,
            rewards: Vec::new(),
            optimal: Vec::new(),
        });
        if row.t != s.rewards.len() + 1 {
            return Err(HarnessError::Invalid(format!(
                "{} replicate {}: day {} out of order",
                row.algorithm, row.replicate, row.t
            )));
        }
        s.rewards.push(row.r_mu);
        s.optimal.push(row.r_star);
    }
    Ok((order, by_key.into_values().collect()))
}
