use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adcomb::harness::experiments::{random_settings_csv, sweep_csv};
use adcomb::harness::metrics::{format_summary, summarize, Series};
use adcomb::harness::output::{config_hash, read_series, write_run};
use adcomb::harness::{parse_config, random_settings, run_full, sweep, Experiment, RunConfig};
use adcomb::sampling::Variant;
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adcomb", version, about = "Joint bid and daily-budget optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm on one world and write a results CSV.
    Run(RunArgs),
    /// Efficiency index for each grid size of the sweep.
    Sweep(RunArgs),
    /// Regret and best-run percentages over randomly drawn worlds.
    RandomSettings(RunArgs),
    /// Summarize a results CSV written by `run`.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in configuration to start from (experiment1, experiment2, experiment3).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Algorithms to run, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    algo: Option<Vec<Variant>>,
    #[arg(long)]
    reps: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Results CSV.
    csv: PathBuf,
    /// Days at which to report best-run percentages.
    #[arg(long, value_delimiter = ',', default_value = "25,50,100")]
    checkpoints: Vec<usize>,
    /// Also write the table to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: adcomb::sampling::SamplingError| e.to_string())
}

fn load(args: &RunArgs, default_preset: &str) -> Result<Experiment> {
    let (mut cfg, source) = match &args.config {
        Some(path) => {
            let source = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let cfg = parse_config(&source).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            (cfg, source)
        }
        None => (RunConfig::default(), String::new()),
    };
    if args.preset.is_some() {
        cfg.preset = args.preset.clone();
    } else if args.config.is_none() {
        cfg.preset = Some(default_preset.to_owned());
    }
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if args.algo.is_some() {
        cfg.algorithms = args.algo.clone();
    }
    if args.reps.is_some() {
        cfg.replications = args.reps;
    }
    let origin = args
        .config
        .as_deref()
        .map_or_else(|| "config".to_owned(), |p| p.display().to_string());
    cfg.resolve(&source).map_err(|e| anyhow::anyhow!("{origin}: {e}"))
}

fn write_manifest(dir: &Path, exp: &Experiment, files: &[&str]) -> Result<()> {
    let manifest = serde_json::json!({
        "name": exp.name,
        "seed": exp.seed,
        "config_sha256": config_hash(exp),
        "files": files,
        "experiment": exp,
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let exp = load(&args, "experiment1")?;
    let (truth, result) = run_full(&exp)?;
    let series: Vec<Series> = result.traces.iter().map(Series::from).collect();
    let table = format_summary(&summarize(&series, &exp.algorithms, &[25, 50, 100]));
    let written = write_run(&args.out, &exp, &truth, &result, &table)?;
    println!("r* = {:.4} (se {:.4})", truth.optima[0].value, truth.optima[0].std_err);
    print!("{table}");
    println!("wrote {} files to {}", written.len(), args.out.display());
    Ok(())
}

fn run_sweep(args: RunArgs) -> Result<()> {
    let exp = load(&args, "experiment2")?;
    let points = sweep(&exp)?;
    fs::create_dir_all(&args.out)?;
    let csv = sweep_csv(&points);
    fs::write(args.out.join("sweep.csv"), &csv)?;
    write_manifest(&args.out, &exp, &["sweep.csv"])?;
    print!("{csv}");
    Ok(())
}

fn run_random_settings(args: RunArgs) -> Result<()> {
    let exp = load(&args, "experiment3")?;
    let results = random_settings(&exp)?;
    fs::create_dir_all(&args.out)?;
    let csv = random_settings_csv(&results);
    fs::write(args.out.join("random_settings.csv"), &csv)?;
    write_manifest(&args.out, &exp, &["random_settings.csv"])?;
    for r in &results {
        println!("setting {}", r.setting);
        print!("{}", format_summary(&r.summaries));
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let file = fs::File::open(&args.csv).with_context(|| format!("cannot open {}", args.csv.display()))?;
    let (algorithms, series) = read_series(file)?;
    let table = format_summary(&summarize(&series, &algorithms, &args.checkpoints));
    if let Some(out) = &args.out {
        fs::write(out, &table)?;
    }
    print!("{table}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => run_sweep(a),
        Command::RandomSettings(a) => run_random_settings(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
