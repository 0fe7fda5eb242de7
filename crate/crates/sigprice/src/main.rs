//! `sigprice`: model-free pricing of path-dependent exotics from the
//! market prices of a payoff family.
//!
//! Every subcommand reads and writes the crate's file formats (JSON
//! configs, JSONL path batches, payoff catalogues, price CSVs). Failures
//! exit nonzero and print a stage-tagged diagnostic such as
//! `error: [pricing] ...` to stderr.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sigprice::calibrate::{
    fit_implied_signature, ImpliedExpectedSignature, PayoffFunctional, PayoffRegression,
    Regularization,
};
use sigprice::error::{Error, Result};
use sigprice::experiments::{
    render_report, run_family_size_sweep, run_pricing_experiment, ExperimentConfig,
    ExperimentReport,
};
use sigprice::leadlag::write_path_batch;
use sigprice::models::{market_price_family, sample_paths, Market};
use sigprice::payoffs::{read_catalogue, write_price_csv, FamilyCounts, PriceRow};

#[derive(Parser)]
#[command(
    name = "sigprice",
    version,
    about = "Model-free pricing of exotic derivatives via path signatures",
    after_help = "Config file shapes:\n  \
        simulate / price-family   a market: {\"model\": ..., \"params\": {...}, \"days\": n, \"seed\": s}\n  \
        fit-functionals           the basis market (same shape, typically BlackScholes)\n  \
        experiment                {\"markets\": [market, ...], \"family\": counts?, \"held_out\": counts?, \"experiment\": {...}?}\n  \
        sweep                     {\"market\": market, \"sizes\": [n, ...]?, \"held_out\": counts?, \"experiment\": {...}?}"
)]
struct Cli {
    /// JSON configuration file; the expected shape depends on the
    /// subcommand (see --help).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides every RNG seed found in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Overrides the signature truncation order.
    #[arg(long, global = true)]
    order: Option<usize>,

    /// Overrides the trading-day count of every market in the
    /// configuration.
    #[arg(long, global = true)]
    days: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulates price paths under the configured market into
    /// `paths.jsonl`.
    Simulate {
        /// Number of paths to simulate.
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// Monte-Carlo prices a payoff catalogue under the configured market
    /// into `prices.csv`.
    PriceFamily {
        /// Payoff catalogue (JSON array of payoffs).
        #[arg(long)]
        catalogue: PathBuf,
        /// Monte-Carlo paths per price.
        #[arg(long, default_value_t = 100_000)]
        mc_paths: usize,
    },
    /// Approximates every catalogue payoff by a linear signature
    /// functional on a simulated basis cloud, into `functionals.json`.
    FitFunctionals {
        /// Payoff catalogue (JSON array of payoffs).
        #[arg(long)]
        catalogue: PathBuf,
        /// Number of basis paths.
        #[arg(long, default_value_t = 10_000)]
        basis_paths: usize,
        /// Relative ridge for the regression; 0 = minimum norm.
        #[arg(long, default_value_t = 1e-8)]
        ridge: f64,
    },
    /// Solves for the implied expected signature from fitted functionals
    /// and observed prices, into `implied.json`.
    ImpliedSig {
        /// Fitted functionals (output of fit-functionals).
        #[arg(long)]
        functionals: PathBuf,
        /// Observed prices CSV (payoff_id,price,std_err), one row per
        /// functional.
        #[arg(long)]
        prices: PathBuf,
        /// Solver: "min-norm" or "ridge=<lambda>".
        #[arg(long, default_value = "min-norm")]
        reg: String,
    },
    /// Prices fitted functionals against an implied expected signature
    /// into `prices.csv` (std_err column is 0: no Monte Carlo involved).
    Price {
        /// Fitted functionals (output of fit-functionals).
        #[arg(long)]
        functionals: PathBuf,
        /// Implied expected signature (output of implied-sig).
        #[arg(long)]
        implied: PathBuf,
    },
    /// Runs the full calibrate-and-predict experiment for each configured
    /// market and renders a report directory.
    Experiment,
    /// Runs the family-size sweep against one held-out family and renders
    /// a report directory.
    Sweep,
}

/// Experiment command configuration: one experiment per market, shared
/// family sizes and knobs.
#[derive(Deserialize)]
struct ExperimentSpec {
    markets: Vec<Market>,
    #[serde(default = "FamilyCounts::mixed")]
    family: FamilyCounts,
    #[serde(default = "default_held_out")]
    held_out: FamilyCounts,
    #[serde(default)]
    experiment: ExperimentConfig,
}

/// Sweep command configuration.
#[derive(Deserialize)]
struct SweepSpec {
    market: Market,
    #[serde(default = "default_sizes")]
    sizes: Vec<usize>,
    #[serde(default = "default_held_out")]
    held_out: FamilyCounts,
    #[serde(default)]
    experiment: ExperimentConfig,
}

fn default_held_out() -> FamilyCounts {
    FamilyCounts::exotics(100)
}

fn default_sizes() -> Vec<usize> {
    vec![33, 66, 100]
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_stage("config"))?;
    serde_json::from_str(&text).map_err(|e| Error::from(e).in_stage("config"))
}

fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn config_path(cli: &Cli) -> Result<&Path> {
    cli.config
        .as_deref()
        .ok_or_else(|| Error::Config("this command requires --config".into()).in_stage("config"))
}

/// Applies the global --seed/--days overrides to a market.
fn override_market(market: &mut Market, cli: &Cli) -> Result<()> {
    if let Some(seed) = cli.seed {
        market.seed = seed;
    }
    if let Some(days) = cli.days {
        market.days = days;
    }
    market.validate().map_err(|e| e.in_stage("config"))
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    fs::create_dir_all(&cli.out)?;
    Ok(&cli.out)
}

fn parse_reg(s: &str) -> Result<Regularization> {
    if s == "min-norm" {
        return Ok(Regularization::MinimumNorm);
    }
    if let Some(v) = s.strip_prefix("ridge=") {
        let lambda: f64 = v
            .parse()
            .map_err(|_| Error::Config(format!("bad ridge value {v:?}")).in_stage("config"))?;
        return Ok(Regularization::Ridge(lambda));
    }
    Err(Error::Config(format!(
        "unknown regularization {s:?}; use min-norm or ridge=<lambda>"
    ))
    .in_stage("config"))
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { count } => simulate(&cli, *count),
        Command::PriceFamily { catalogue, mc_paths } => price_family(&cli, catalogue, *mc_paths),
        Command::FitFunctionals { catalogue, basis_paths, ridge } => {
            fit_functionals(&cli, catalogue, *basis_paths, *ridge)
        }
        Command::ImpliedSig { functionals, prices, reg } => {
            implied_sig(&cli, functionals, prices, reg)
        }
        Command::Price { functionals, implied } => price(&cli, functionals, implied),
        Command::Experiment => experiment(&cli),
        Command::Sweep => sweep(&cli),
    }
}

fn simulate(cli: &Cli, count: usize) -> Result<()> {
    let mut market: Market = load_json(config_path(cli)?)?;
    override_market(&mut market, cli)?;
    let paths = sample_paths(&market, count).map_err(|e| e.in_stage("simulate"))?;
    let out = out_dir(cli)?.join("paths.jsonl");
    let file = File::create(&out)?;
    write_path_batch(BufWriter::new(file), &paths)?;
    println!("wrote {count} paths to {}", out.display());
    Ok(())
}

fn price_family(cli: &Cli, catalogue: &Path, mc_paths: usize) -> Result<()> {
    let mut market: Market = load_json(config_path(cli)?)?;
    override_market(&mut market, cli)?;
    let payoffs = read_catalogue(BufReader::new(File::open(catalogue)?))
        .map_err(|e| e.in_stage("config"))?;
    let estimates =
        market_price_family(&market, &payoffs, mc_paths).map_err(|e| e.in_stage("pricing"))?;
    let rows: Vec<PriceRow> = estimates
        .iter()
        .enumerate()
        .map(|(i, e)| PriceRow { payoff_id: i, price: e.price, std_err: e.std_err })
        .collect();
    let out = out_dir(cli)?.join("prices.csv");
    write_price_csv(File::create(&out)?, &rows)?;
    println!("priced {} payoffs into {}", rows.len(), out.display());
    Ok(())
}

fn fit_functionals(cli: &Cli, catalogue: &Path, basis_paths: usize, ridge: f64) -> Result<()> {
    let mut basis: Market = load_json(config_path(cli)?)?;
    override_market(&mut basis, cli)?;
    let payoffs = read_catalogue(BufReader::new(File::open(catalogue)?))
        .map_err(|e| e.in_stage("config"))?;
    let order = cli.order.unwrap_or(5);
    let paths = sample_paths(&basis, basis_paths).map_err(|e| e.in_stage("basis"))?;
    let regression =
        PayoffRegression::new(&paths, order, ridge).map_err(|e| e.in_stage("regression"))?;
    let fitted: Result<Vec<PayoffFunctional>> = payoffs.iter().map(|p| regression.fit(p)).collect();
    let fitted = fitted.map_err(|e| e.in_stage("regression"))?;
    let worst = fitted.iter().map(|f| f.r2).fold(f64::INFINITY, f64::min);
    let out = out_dir(cli)?.join("functionals.json");
    save_json(&out, &fitted)?;
    println!(
        "fitted {} functionals at order {order} (worst in-sample R^2 = {worst:.6}) into {}",
        fitted.len(),
        out.display()
    );
    Ok(())
}

fn implied_sig(cli: &Cli, functionals: &Path, prices: &Path, reg: &str) -> Result<()> {
    let fitted: Vec<PayoffFunctional> = load_json(functionals)?;
    let mut rows = sigprice::payoffs::read_price_csv(BufReader::new(File::open(prices)?))
        .map_err(|e| e.in_stage("config"))?;
    rows.sort_by_key(|r| r.payoff_id);
    if rows.len() != fitted.len() || rows.iter().enumerate().any(|(i, r)| r.payoff_id != i) {
        return Err(Error::Config(format!(
            "price rows must cover payoff ids 0..{} exactly",
            fitted.len()
        ))
        .in_stage("config"));
    }
    let price_vec: Vec<f64> = rows.iter().map(|r| r.price).collect();
    let order = cli
        .order
        .or_else(|| fitted.iter().map(|f| f.functional.order()).max())
        .ok_or_else(|| Error::Config("no functionals given".into()).in_stage("config"))?;
    let regularization = parse_reg(reg)?;
    let implied = fit_implied_signature(&fitted, &price_vec, order, regularization)
        .map_err(|e| e.in_stage("calibration"))?;
    let max_residual = implied.residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let out = out_dir(cli)?.join("implied.json");
    save_json(&out, &implied)?;
    println!(
        "implied expected signature at order {order}: rank {}, max price residual {max_residual:.3e}, written to {}",
        implied.rank,
        out.display()
    );
    Ok(())
}

fn price(cli: &Cli, functionals: &Path, implied: &Path) -> Result<()> {
    let fitted: Vec<PayoffFunctional> = load_json(functionals)?;
    let implied: ImpliedExpectedSignature = load_json(implied)?;
    let rows: Vec<PriceRow> = fitted
        .iter()
        .enumerate()
        .map(|(i, f)| PriceRow {
            payoff_id: i,
            price: f.functional.pair(&implied.tensor),
            std_err: 0.0,
        })
        .collect();
    let out = out_dir(cli)?.join("prices.csv");
    write_price_csv(File::create(&out)?, &rows)?;
    println!("priced {} payoffs against the implied signature into {}", rows.len(), out.display());
    Ok(())
}

fn apply_experiment_overrides(config: &mut ExperimentConfig, cli: &Cli) {
    if let Some(order) = cli.order {
        config.order = order;
    }
}

fn experiment(cli: &Cli) -> Result<()> {
    let mut spec: ExperimentSpec = load_json(config_path(cli)?)?;
    apply_experiment_overrides(&mut spec.experiment, cli);
    if spec.markets.is_empty() {
        return Err(Error::Config("no markets configured".into()).in_stage("config"));
    }
    let mut reports = Vec::new();
    for market in &mut spec.markets {
        override_market(market, cli)?;
        let report =
            run_pricing_experiment(market, &spec.family, &spec.held_out, &spec.experiment)?;
        let run = &report.runs[0];
        println!(
            "{}: |F| = {}, rank = {}, R^2 = {:.6}, MSE = {:.3e}, MAE = {:.3e}",
            run.label,
            run.family.total(),
            run.rank,
            run.metrics.r2,
            run.metrics.mse,
            run.metrics.mae
        );
        reports.push(report);
    }
    let merged = ExperimentReport::merge(&reports)?;
    let dir = out_dir(cli)?;
    render_report(&merged, dir)?;
    println!("report written to {}", dir.join("report.json").display());
    Ok(())
}

fn sweep(cli: &Cli) -> Result<()> {
    let mut spec: SweepSpec = load_json(config_path(cli)?)?;
    apply_experiment_overrides(&mut spec.experiment, cli);
    override_market(&mut spec.market, cli)?;
    let report =
        run_family_size_sweep(&spec.market, &spec.sizes, &spec.held_out, &spec.experiment)?;
    for point in &report.curve {
        println!("|F| = {:>4}: R^2 = {:.6}", point.family_size, point.r2);
    }
    println!(
        "R^2 curve non-decreasing: {}",
        if report.curve_non_decreasing() { "yes" } else { "no" }
    );
    let dir = out_dir(cli)?;
    render_report(&report, dir)?;
    println!("report written to {}", dir.join("report.json").display());
    Ok(())
}
