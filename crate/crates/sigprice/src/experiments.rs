//! End-to-end pricing experiments.
//!
//! A run calibrates an implied expected signature from the market prices
//! of one payoff family and predicts the prices of a disjoint held-out
//! family, comparing against Monte-Carlo reference prices. Reports carry
//! the full prediction table plus summary metrics and can be rendered to
//! byte-stable CSV and SVG files.
//!
//! Failures are tagged with the stage they occurred in: `config`,
//! `family`, `basis`, `regression`, `pricing`, `calibration`, `report`
//! or `render`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{
    ImpliedExpectedSignature, PayoffFunctional, PayoffRegression, Regularization,
};
use crate::error::{Error, Result};
use crate::models::{
    market_price_family, sample_paths, BlackScholesParams, Market, ModelParams,
};
use crate::payoffs::{build_family, FamilyCounts, FamilyGrids, Payoff, PayoffKind, SampleSet};

/// Seed offset for the held-out reference sweep, so reference prices use
/// Monte-Carlo draws independent of the calibration price sweep.
const TRUTH_SEED_SHIFT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Everything a run needs besides the market and the family sizes.
///
/// The regression basis is always a Black-Scholes cloud with per-path
/// volatilities: it is a reference measure for approximating payoffs, not
/// a model of the market being priced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Signature truncation order for both the payoff regressions and the
    /// implied expected signature.
    pub order: usize,
    /// Number of basis paths behind the payoff regressions.
    pub basis_paths: usize,
    /// Volatility range of the Black-Scholes basis sampler.
    pub basis: BlackScholesParams,
    /// Seed of the basis sampler, independent of the market seed.
    pub basis_seed: u64,
    /// Monte-Carlo paths per pricing sweep.
    pub mc_paths: usize,
    /// Relative ridge for the payoff regressions; 0 requests plain
    /// minimum-norm least squares.
    pub ridge: f64,
    /// Solver for the implied-signature system.
    pub regularization: Regularization,
    /// Strike, barrier and variance-strike grids for family construction.
    pub grids: FamilyGrids,
}

impl Default for ExperimentConfig {
    /// Defaults tuned on the three stochastic-volatility markets: a small
    /// relative ridge in the payoff regressions and a small absolute ridge
    /// in the implied-signature solve. Both solves see Monte-Carlo noise
    /// in their targets, so exact interpolation (ridge 0, minimum norm)
    /// transfers that noise straight into held-out prices.
    fn default() -> Self {
        ExperimentConfig {
            order: 5,
            basis_paths: 10_000,
            basis: BlackScholesParams::default(),
            basis_seed: 1,
            mc_paths: 100_000,
            ridge: 1e-3,
            regularization: Regularization::Ridge(1e-4),
            grids: FamilyGrids::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::InvalidParams("signature order must be >= 1".into()));
        }
        if self.basis_paths < 2 {
            return Err(Error::InvalidParams(
                "need at least 2 basis paths for a regression".into(),
            ));
        }
        if self.mc_paths < 2 {
            return Err(Error::InvalidParams(
                "need at least 2 Monte-Carlo paths for a standard error".into(),
            ));
        }
        if !self.ridge.is_finite() || self.ridge < 0.0 {
            return Err(Error::InvalidParams(format!(
                "ridge must be finite and >= 0, got {}",
                self.ridge
            )));
        }
        Ok(())
    }
}

/// One held-out payoff's outcome: the Monte-Carlo reference price, the
/// signature prediction, and the signed error (predicted minus reference).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub payoff_id: String,
    pub true_price: f64,
    pub predicted_price: f64,
    pub error: f64,
}

/// Prediction-quality summary over a table of rows. `r2` uses the
/// out-of-sample convention 1 - SS_res / SS_tot, which is negative when
/// predictions underperform the reference mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r2: f64,
    pub mse: f64,
    pub mae: f64,
}

/// Computes metrics from a prediction table.
///
/// Errors on an empty table, non-finite entries, or a degenerate table
/// whose reference prices are all identical (R^2 is undefined there).
pub fn metrics_of(rows: &[PredictionRow]) -> Result<Metrics> {
    if rows.is_empty() {
        return Err(Error::Report("empty prediction table".into()));
    }
    for r in rows {
        if !(r.true_price.is_finite() && r.predicted_price.is_finite() && r.error.is_finite()) {
            return Err(Error::Report(format!(
                "non-finite prediction row for {}",
                r.payoff_id
            )));
        }
    }
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r.true_price).sum::<f64>() / n;
    let ss_tot: f64 = rows.iter().map(|r| (r.true_price - mean).powi(2)).sum();
    let ss_res: f64 = rows
        .iter()
        .map(|r| (r.predicted_price - r.true_price).powi(2))
        .sum();
    if ss_tot == 0.0 {
        return Err(Error::Report(
            "reference prices are all identical; R^2 undefined".into(),
        ));
    }
    let mae = rows
        .iter()
        .map(|r| (r.predicted_price - r.true_price).abs())
        .sum::<f64>()
        / n;
    Ok(Metrics { r2: 1.0 - ss_res / ss_tot, mse: ss_res / n, mae })
}

/// One complete calibrate-and-predict run against a single market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    /// Short model label used in file names and plot titles.
    pub label: String,
    /// The market that produced both family prices and held-out truth.
    pub market: Market,
    pub family: FamilyCounts,
    pub held_out: FamilyCounts,
    /// Numerical rank of the stacked calibration map.
    pub rank: usize,
    /// Worst in-sample payoff-approximation R^2 across both families.
    pub min_fit_r2: f64,
    pub predictions: Vec<PredictionRow>,
    pub metrics: Metrics,
}

/// One point of the accuracy-vs-family-size curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub family_size: usize,
    pub r2: f64,
}

/// A full experiment: the configuration snapshot, one or more runs, and
/// the accuracy-vs-family-size curve they trace out (one point per run).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub runs: Vec<ModelRun>,
    pub curve: Vec<CurvePoint>,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

impl ExperimentReport {
    /// Checks internal consistency: every run's stored metrics must
    /// recompute from its prediction table, and the curve must mirror the
    /// runs one to one.
    pub fn validate(&self) -> Result<()> {
        if self.runs.is_empty() {
            return Err(Error::Report("report contains no runs".into()));
        }
        for run in &self.runs {
            for row in &run.predictions {
                if !close(row.error, row.predicted_price - row.true_price) {
                    return Err(Error::Report(format!(
                        "stored error for {} disagrees with its prices",
                        row.payoff_id
                    )));
                }
            }
            let m = metrics_of(&run.predictions)?;
            if !(close(m.r2, run.metrics.r2)
                && close(m.mse, run.metrics.mse)
                && close(m.mae, run.metrics.mae))
            {
                return Err(Error::Report(format!(
                    "stored metrics for run {} do not recompute from its prediction table",
                    run.label
                )));
            }
            if run.predictions.len() != run.held_out.total() {
                return Err(Error::Report(format!(
                    "run {} has {} predictions for a held-out family of {}",
                    run.label,
                    run.predictions.len(),
                    run.held_out.total()
                )));
            }
        }
        if self.curve.len() != self.runs.len() {
            return Err(Error::Report(format!(
                "curve has {} points for {} runs",
                self.curve.len(),
                self.runs.len()
            )));
        }
        for (point, run) in self.curve.iter().zip(&self.runs) {
            if point.family_size != run.family.total() || !close(point.r2, run.metrics.r2) {
                return Err(Error::Report(format!(
                    "curve point ({}, {}) does not match run {}",
                    point.family_size, point.r2, run.label
                )));
            }
        }
        Ok(())
    }

    /// Whether the R^2 curve never decreases (trivially true for a single
    /// run); the trend summary for family-size sweeps.
    pub fn curve_non_decreasing(&self) -> bool {
        self.curve.windows(2).all(|w| w[0].r2 <= w[1].r2)
    }

    /// Merges several reports sharing one configuration into a single
    /// multi-run report, e.g. the same experiment across markets.
    pub fn merge(reports: &[ExperimentReport]) -> Result<ExperimentReport> {
        let first = reports
            .first()
            .ok_or_else(|| Error::Report("nothing to merge".into()))?;
        let mut merged = ExperimentReport {
            config: first.config.clone(),
            runs: Vec::new(),
            curve: Vec::new(),
        };
        for r in reports {
            if r.config != first.config {
                return Err(Error::Report("cannot merge reports with different configs".into()));
            }
            merged.runs.extend(r.runs.iter().cloned());
            merged.curve.extend(r.curve.iter().copied());
        }
        merged.validate()?;
        Ok(merged)
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses and validates a report, re-deriving the metrics from the
    /// stored prediction tables as a self-consistency check.
    pub fn from_json(s: &str) -> Result<Self> {
        let report: ExperimentReport = serde_json::from_str(s)?;
        report.validate()?;
        Ok(report)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

fn model_label(model: &ModelParams) -> &'static str {
    match model {
        ModelParams::BlackScholes(_) => "black-scholes",
        ModelParams::HullWhite(_) => "hull-white",
        ModelParams::Garch(_) => "garch",
        ModelParams::RoughVol(_) => "rough-vol",
    }
}

fn payoff_label(index: usize, p: &Payoff) -> String {
    let tag = match p.kind {
        PayoffKind::EuropeanCall => "euc",
        PayoffKind::EuropeanPut => "eup",
        PayoffKind::UpAndOutCall => "uoc",
        PayoffKind::UpAndInCall => "uic",
        PayoffKind::VarianceOption => "var",
    };
    match p.barrier {
        Some(b) => format!("{index:03}_{tag}_k{}_b{}", p.strike, b),
        None => format!("{index:03}_{tag}_k{}", p.strike),
    }
}

/// Work shared by every family size: the fitted regression basis and the
/// held-out family with its functionals and reference prices.
struct Prepared {
    regression: PayoffRegression,
    held_payoffs: Vec<Payoff>,
    held_fitted: Vec<PayoffFunctional>,
    held_truth: Vec<f64>,
}

fn prepare(market: &Market, held_out: &FamilyCounts, config: &ExperimentConfig) -> Result<Prepared> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    market.validate().map_err(|e| e.in_stage("config"))?;

    let held_payoffs = build_family(held_out, &config.grids, SampleSet::OutOfSample)
        .map_err(|e| e.in_stage("family"))?;

    let basis_market = Market::new(
        ModelParams::BlackScholes(config.basis),
        market.days,
        config.basis_seed,
    )
    .map_err(|e| e.in_stage("basis"))?;
    let basis_paths =
        sample_paths(&basis_market, config.basis_paths).map_err(|e| e.in_stage("basis"))?;
    let regression = PayoffRegression::new(&basis_paths, config.order, config.ridge)
        .map_err(|e| e.in_stage("regression"))?;

    let held_fitted: Result<Vec<_>> = held_payoffs
        .par_iter()
        .map(|p| regression.fit(p))
        .collect();
    let held_fitted = held_fitted.map_err(|e| e.in_stage("regression"))?;

    // Reference prices come from an independent seed so calibration noise
    // and truth noise are uncorrelated.
    let truth_market = Market {
        seed: market.seed.wrapping_add(TRUTH_SEED_SHIFT),
        ..*market
    };
    let held_truth = market_price_family(&truth_market, &held_payoffs, config.mc_paths)
        .map_err(|e| e.in_stage("pricing"))?
        .into_iter()
        .map(|e| e.price)
        .collect();

    Ok(Prepared { regression, held_payoffs, held_fitted, held_truth })
}

fn run_prepared(
    market: &Market,
    family: &FamilyCounts,
    held_out: &FamilyCounts,
    prep: &Prepared,
    config: &ExperimentConfig,
) -> Result<ModelRun> {
    let payoffs =
        build_family(family, &config.grids, SampleSet::InSample).map_err(|e| e.in_stage("family"))?;
    run_prepared_payoffs(market, family, &payoffs, held_out, prep, config)
}

fn run_prepared_payoffs(
    market: &Market,
    family: &FamilyCounts,
    payoffs: &[Payoff],
    held_out: &FamilyCounts,
    prep: &Prepared,
    config: &ExperimentConfig,
) -> Result<ModelRun> {
    let fitted: Result<Vec<_>> = payoffs.par_iter().map(|p| prep.regression.fit(p)).collect();
    let fitted = fitted.map_err(|e| e.in_stage("regression"))?;

    let estimates = market_price_family(market, payoffs, config.mc_paths)
        .map_err(|e| e.in_stage("pricing"))?;
    let prices: Vec<f64> = estimates.iter().map(|e| e.price).collect();

    let implied = prep
        .regression
        .implied_signature(&fitted, &prices, config.regularization)
        .map_err(|e| e.in_stage("calibration"))?;

    let predictions = predict(&prep.held_payoffs, &prep.held_fitted, &prep.held_truth, &implied);
    let metrics = metrics_of(&predictions).map_err(|e| e.in_stage("report"))?;

    let min_fit_r2 = fitted
        .iter()
        .chain(&prep.held_fitted)
        .map(|f| f.r2)
        .fold(f64::INFINITY, f64::min);

    Ok(ModelRun {
        label: model_label(&market.model).to_string(),
        market: *market,
        family: *family,
        held_out: *held_out,
        rank: implied.rank,
        min_fit_r2,
        predictions,
        metrics,
    })
}

fn predict(
    payoffs: &[Payoff],
    fitted: &[PayoffFunctional],
    truth: &[f64],
    implied: &ImpliedExpectedSignature,
) -> Vec<PredictionRow> {
    payoffs
        .iter()
        .zip(fitted)
        .zip(truth)
        .enumerate()
        .map(|(i, ((p, f), &true_price))| {
            let predicted_price = f.functional.pair(&implied.tensor);
            PredictionRow {
                payoff_id: payoff_label(i, p),
                true_price,
                predicted_price,
                error: predicted_price - true_price,
            }
        })
        .collect()
}

/// Runs the full pipeline once: build both families, approximate every
/// payoff by a signature functional on the basis cloud, price the
/// calibration family under the market, solve for the implied expected
/// signature, and compare held-out predictions against independent
/// Monte-Carlo reference prices.
pub fn run_pricing_experiment(
    market: &Market,
    family: &FamilyCounts,
    held_out: &FamilyCounts,
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    let prep = prepare(market, held_out, config)?;
    let run = run_prepared(market, family, held_out, &prep, config)?;
    let curve = vec![CurvePoint { family_size: run.family.total(), r2: run.metrics.r2 }];
    let report = ExperimentReport { config: config.clone(), runs: vec![run], curve };
    report.validate()?;
    Ok(report)
}

/// Reorders a kind-blocked family round-robin across the four kinds, so
/// every prefix is as kind-balanced as possible (European, up-and-out,
/// up-and-in, variance, then repeat).
fn interleave_kinds(payoffs: &[Payoff]) -> Vec<Payoff> {
    let bucket_of = |p: &Payoff| match p.kind {
        PayoffKind::EuropeanCall | PayoffKind::EuropeanPut => 0usize,
        PayoffKind::UpAndOutCall => 1,
        PayoffKind::UpAndInCall => 2,
        PayoffKind::VarianceOption => 3,
    };
    let mut buckets: [Vec<Payoff>; 4] = Default::default();
    for p in payoffs {
        buckets[bucket_of(p)].push(*p);
    }
    let mut out = Vec::with_capacity(payoffs.len());
    let mut next = [0usize; 4];
    while out.len() < payoffs.len() {
        for (bucket, cursor) in buckets.iter().zip(&mut next) {
            if let Some(p) = bucket.get(*cursor) {
                out.push(*p);
                *cursor += 1;
            }
        }
    }
    out
}

/// Repeats the experiment for a strictly increasing sequence of
/// calibration-family sizes against one fixed held-out family, reusing
/// the basis regression and reference prices.
///
/// The sizes are nested: the full family is built once at the largest
/// size, interleaved across kinds, and each smaller size is a prefix.
/// A point on the curve therefore answers "how well does calibration do
/// when only this much of the final quote universe is visible", with
/// every quote that was visible at a smaller size still visible at the
/// larger ones.
pub fn run_family_size_sweep(
    market: &Market,
    sizes: &[usize],
    held_out: &FamilyCounts,
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    if sizes.is_empty() {
        return Err(Error::InvalidParams("no family sizes to sweep".into()).in_stage("config"));
    }
    if !sizes.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidParams(format!(
            "family sizes must be strictly increasing, got {sizes:?}"
        ))
        .in_stage("config"));
    }
    let full = FamilyCounts::round_robin(*sizes.last().expect("nonempty"));
    let blocked =
        build_family(&full, &config.grids, SampleSet::InSample).map_err(|e| e.in_stage("family"))?;
    let interleaved = interleave_kinds(&blocked);

    let prep = prepare(market, held_out, config)?;
    let mut runs = Vec::with_capacity(sizes.len());
    let mut curve = Vec::with_capacity(sizes.len());
    for &n in sizes {
        // A kind-balanced prefix has exactly the round-robin composition.
        let family = FamilyCounts::round_robin(n);
        let run =
            run_prepared_payoffs(market, &family, &interleaved[..n], held_out, &prep, config)?;
        curve.push(CurvePoint { family_size: n, r2: run.metrics.r2 });
        runs.push(run);
    }
    let report = ExperimentReport { config: config.clone(), runs, curve };
    report.validate()?;
    Ok(report)
}

// ---- rendering ----

const SVG_W: f64 = 480.0;
const SVG_H: f64 = 360.0;
// Plot rectangle inside the figure margins.
const PLOT_L: f64 = 60.0;
const PLOT_R: f64 = 460.0;
const PLOT_T: f64 = 40.0;
const PLOT_B: f64 = 310.0;

/// Affine map from data range to pixel range (pixel axes may be inverted).
struct LinMap {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl LinMap {
    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

/// Pads a data range by 5% and widens degenerate ranges so the affine map
/// is always well defined.
fn padded(mut lo: f64, mut hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn svg_header(out: &mut String) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\" font-family=\"sans-serif\">\n"
    ));
}

fn svg_frame(out: &mut String, title: &str) {
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        (PLOT_L + PLOT_R) / 2.0
    ));
    out.push_str(&format!(
        "<rect x=\"{PLOT_L}\" y=\"{PLOT_T}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" \
         stroke=\"#444444\"/>\n",
        PLOT_R - PLOT_L,
        PLOT_B - PLOT_T
    ));
}

/// Renders a run's predicted-vs-reference scatter with the identity line;
/// the plotted table is embedded in the `desc` element. Output is a pure
/// function of the run, so identical runs render to identical bytes.
pub fn render_scatter_svg(run: &ModelRun) -> Result<String> {
    if run.predictions.is_empty() {
        return Err(Error::Report("empty prediction table".into()));
    }
    let values = run
        .predictions
        .iter()
        .flat_map(|r| [r.true_price, r.predicted_price]);
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = padded(lo, hi);
    let x = LinMap { lo, hi, px_lo: PLOT_L, px_hi: PLOT_R };
    let y = LinMap { lo, hi, px_lo: PLOT_B, px_hi: PLOT_T };

    let mut out = String::new();
    svg_header(&mut out);
    out.push_str("<desc>\npayoff_id,true_price,predicted_price\n");
    for r in &run.predictions {
        out.push_str(&format!("{},{},{}\n", r.payoff_id, r.true_price, r.predicted_price));
    }
    out.push_str("</desc>\n");
    svg_frame(
        &mut out,
        &format!("{}: predicted vs reference (R^2 = {:.6})", run.label, run.metrics.r2),
    );
    out.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#999999\" \
         stroke-dasharray=\"4 3\"/>\n",
        x.map(lo),
        y.map(lo),
        x.map(hi),
        y.map(hi)
    ));
    for r in &run.predictions {
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#4682b4\" fill-opacity=\"0.7\"/>\n",
            x.map(r.predicted_price),
            y.map(r.true_price)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{PLOT_L}\" y=\"328\" font-size=\"11\">{lo:.4}</text>\n\
         <text x=\"{PLOT_R}\" y=\"328\" text-anchor=\"end\" font-size=\"11\">{hi:.4}</text>\n\
         <text x=\"{:.2}\" y=\"346\" text-anchor=\"middle\" font-size=\"12\">predicted price</text>\n",
        (PLOT_L + PLOT_R) / 2.0
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{PLOT_B}\" text-anchor=\"end\" font-size=\"11\">{lo:.4}</text>\n\
         <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\">{hi:.4}</text>\n\
         <text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\" \
         transform=\"rotate(-90 18 {:.2})\">reference price</text>\n",
        PLOT_L - 6.0,
        PLOT_L - 6.0,
        PLOT_T + 4.0,
        (PLOT_T + PLOT_B) / 2.0,
        (PLOT_T + PLOT_B) / 2.0
    ));
    out.push_str("</svg>\n");
    Ok(out)
}

/// Renders a run's error histogram (20 equal bins across the error range);
/// bar counts are embedded as `data-count` attributes. Byte-stable like
/// the scatter.
pub fn render_error_histogram_svg(run: &ModelRun) -> Result<String> {
    if run.predictions.is_empty() {
        return Err(Error::Report("empty prediction table".into()));
    }
    const BINS: usize = 20;
    let lo = run.predictions.iter().map(|r| r.error).fold(f64::INFINITY, f64::min);
    let hi = run
        .predictions
        .iter()
        .map(|r| r.error)
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / BINS as f64;
    let mut counts = [0usize; BINS];
    for r in &run.predictions {
        let i = (((r.error - lo) / width) as usize).min(BINS - 1);
        counts[i] += 1;
    }
    let max_count = *counts.iter().max().expect("BINS > 0");

    let x = LinMap { lo, hi, px_lo: PLOT_L, px_hi: PLOT_R };
    let y = LinMap { lo: 0.0, hi: max_count as f64, px_lo: PLOT_B, px_hi: PLOT_T };

    let mut out = String::new();
    svg_header(&mut out);
    out.push_str("<desc>\npayoff_id,error\n");
    for r in &run.predictions {
        out.push_str(&format!("{},{}\n", r.payoff_id, r.error));
    }
    out.push_str("</desc>\n");
    svg_frame(&mut out, &format!("{}: held-out pricing errors", run.label));
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let x0 = x.map(lo + i as f64 * width);
        let x1 = x.map(lo + (i + 1) as f64 * width);
        let top = y.map(c as f64);
        out.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#4682b4\" \
             stroke=\"#ffffff\" data-count=\"{c}\"/>\n",
            x0,
            top,
            x1 - x0,
            PLOT_B - top
        ));
    }
    if lo < 0.0 && hi > 0.0 {
        out.push_str(&format!(
            "<line x1=\"{0:.2}\" y1=\"{PLOT_T}\" x2=\"{0:.2}\" y2=\"{PLOT_B}\" \
             stroke=\"#cc3333\" stroke-dasharray=\"3 3\"/>\n",
            x.map(0.0)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{PLOT_L}\" y=\"328\" font-size=\"11\">{lo:.3e}</text>\n\
         <text x=\"{PLOT_R}\" y=\"328\" text-anchor=\"end\" font-size=\"11\">{hi:.3e}</text>\n\
         <text x=\"{:.2}\" y=\"346\" text-anchor=\"middle\" font-size=\"12\">prediction error</text>\n\
         <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\">{max_count}</text>\n",
        (PLOT_L + PLOT_R) / 2.0,
        PLOT_L - 6.0,
        PLOT_T + 4.0
    ));
    out.push_str("</svg>\n");
    Ok(out)
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for row in rows {
        wtr.serialize(row)?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Report(e.to_string()))?;
    fs::write(path, bytes)?;
    Ok(())
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    run: usize,
    label: &'a str,
    family_size: usize,
    rank: usize,
    min_fit_r2: f64,
    r2: f64,
    mse: f64,
    mae: f64,
}

/// Writes a validated report to `dir`: `report.json`, `metrics.csv`,
/// `curve.csv`, and per run a prediction CSV plus scatter and histogram
/// SVGs. Returns the written paths. Identical reports produce
/// byte-identical files.
pub fn render_report(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    report.validate().map_err(|e| e.in_stage("render"))?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let json_path = dir.join("report.json");
    fs::write(&json_path, report.to_json()?)?;
    written.push(json_path);

    let metrics_path = dir.join("metrics.csv");
    write_csv(
        &metrics_path,
        report.runs.iter().enumerate().map(|(i, r)| MetricsRow {
            run: i,
            label: &r.label,
            family_size: r.family.total(),
            rank: r.rank,
            min_fit_r2: r.min_fit_r2,
            r2: r.metrics.r2,
            mse: r.metrics.mse,
            mae: r.metrics.mae,
        }),
    )?;
    written.push(metrics_path);

    let curve_path = dir.join("curve.csv");
    write_csv(&curve_path, report.curve.iter().copied())?;
    written.push(curve_path);

    for (i, run) in report.runs.iter().enumerate() {
        let stem = format!("{i:02}_{}", run.label);

        let pred_path = dir.join(format!("{stem}_predictions.csv"));
        write_csv(&pred_path, run.predictions.iter().cloned())?;
        written.push(pred_path);

        let scatter_path = dir.join(format!("{stem}_scatter.svg"));
        fs::write(&scatter_path, render_scatter_svg(run)?)?;
        written.push(scatter_path);

        let hist_path = dir.join(format!("{stem}_errors.svg"));
        fs::write(&hist_path, render_error_histogram_svg(run)?)?;
        written.push(hist_path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            order: 3,
            basis_paths: 300,
            basis_seed: 11,
            mc_paths: 2000,
            ..ExperimentConfig::default()
        }
    }

    fn tiny_market() -> Market {
        Market::new(
            ModelParams::BlackScholes(BlackScholesParams::default()),
            20,
            42,
        )
        .unwrap()
    }

    fn rows_from(pairs: &[(f64, f64)]) -> Vec<PredictionRow> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(t, p))| PredictionRow {
                payoff_id: format!("{i:03}_euc_k1"),
                true_price: t,
                predicted_price: p,
                error: p - t,
            })
            .collect()
    }

    fn synthetic_report(pairs: &[(f64, f64)]) -> ExperimentReport {
        let predictions = rows_from(pairs);
        let metrics = metrics_of(&predictions).unwrap();
        let family = FamilyCounts::round_robin(8);
        let held_out = FamilyCounts::exotics(pairs.len());
        let run = ModelRun {
            label: "black-scholes".into(),
            market: tiny_market(),
            family,
            held_out,
            rank: 5,
            min_fit_r2: 0.9,
            predictions,
            metrics,
        };
        ExperimentReport {
            config: tiny_config(),
            curve: vec![CurvePoint { family_size: family.total(), r2: metrics.r2 }],
            runs: vec![run],
        }
    }

    #[test]
    fn metrics_match_hand_computation() {
        let rows = rows_from(&[(1.0, 1.1), (2.0, 1.9), (3.0, 3.0)]);
        let m = metrics_of(&rows).unwrap();
        // mean 2, ss_tot 2, ss_res 0.02.
        assert!((m.r2 - (1.0 - 0.02 / 2.0)).abs() < 1e-12);
        assert!((m.mse - 0.02 / 3.0).abs() < 1e-12);
        assert!((m.mae - (0.1 + 0.1 + 0.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_reject_bad_tables() {
        assert!(matches!(metrics_of(&[]), Err(Error::Report(_))));
        let constant = rows_from(&[(1.0, 1.1), (1.0, 0.9)]);
        assert!(matches!(metrics_of(&constant), Err(Error::Report(_))));
        let mut rows = rows_from(&[(1.0, 1.1), (2.0, 1.9)]);
        rows[0].predicted_price = f64::NAN;
        assert!(matches!(metrics_of(&rows), Err(Error::Report(_))));
    }

    #[test]
    fn report_json_round_trip_checks_consistency() {
        let report = synthetic_report(&[(0.1, 0.11), (0.2, 0.19), (0.3, 0.31)]);
        let json = report.to_json().unwrap();
        let back = ExperimentReport::from_json(&json).unwrap();
        assert_eq!(back, report);

        let mut tampered = report.clone();
        tampered.runs[0].metrics.r2 += 0.01;
        let json = serde_json::to_string(&tampered).unwrap();
        assert!(matches!(ExperimentReport::from_json(&json), Err(Error::Report(_))));

        let mut bad_curve = report.clone();
        bad_curve.curve[0].family_size += 1;
        assert!(bad_curve.validate().is_err());
    }

    #[test]
    fn tiny_experiment_end_to_end() {
        let report = run_pricing_experiment(
            &tiny_market(),
            &FamilyCounts::round_robin(24),
            &FamilyCounts::exotics(10),
            &tiny_config(),
        )
        .unwrap();
        report.validate().unwrap();
        let run = &report.runs[0];
        assert_eq!(run.predictions.len(), 10);
        assert_eq!(run.label, "black-scholes");
        assert!(run.rank > 0);
        assert!(
            run.metrics.r2 > 0.5,
            "tiny run should already predict decently, got R^2 = {}",
            run.metrics.r2
        );
        assert_eq!(report.curve.len(), 1);
        assert_eq!(report.curve[0].family_size, 24);
    }

    #[test]
    fn sweep_runs_every_size_against_one_held_out_family() {
        let report = run_family_size_sweep(
            &tiny_market(),
            &[8, 16, 24],
            &FamilyCounts::exotics(9),
            &tiny_config(),
        )
        .unwrap();
        assert_eq!(report.runs.len(), 3);
        assert_eq!(
            report.curve.iter().map(|p| p.family_size).collect::<Vec<_>>(),
            vec![8, 16, 24]
        );
        // Same held-out truth for every size.
        for run in &report.runs {
            assert_eq!(run.predictions.len(), 9);
            for (a, b) in run.predictions.iter().zip(&report.runs[0].predictions) {
                assert_eq!(a.true_price, b.true_price);
            }
        }
        report.validate().unwrap();
    }

    #[test]
    fn sweep_rejects_bad_size_sequences() {
        let held = FamilyCounts::exotics(9);
        let cfg = tiny_config();
        let m = tiny_market();
        let err = run_family_size_sweep(&m, &[], &held, &cfg).unwrap_err();
        assert_eq!(err.stage(), Some("config"));
        let err = run_family_size_sweep(&m, &[16, 8], &held, &cfg).unwrap_err();
        assert_eq!(err.stage(), Some("config"));
        // A zero size passes the ordering check and fails at family
        // construction.
        let err = run_family_size_sweep(&m, &[0], &held, &cfg).unwrap_err();
        assert_eq!(err.stage(), Some("family"));
    }

    #[test]
    fn identical_configs_render_identical_bytes() {
        let market = tiny_market();
        let family = FamilyCounts::round_robin(12);
        let held = FamilyCounts::exotics(6);
        let cfg = tiny_config();
        let a = run_pricing_experiment(&market, &family, &held, &cfg).unwrap();
        let b = run_pricing_experiment(&market, &family, &held, &cfg).unwrap();
        assert_eq!(a, b);

        let dir = tempfile::tempdir().unwrap();
        let files_a = render_report(&a, dir.path().join("a")).unwrap();
        let files_b = render_report(&b, dir.path().join("b")).unwrap();
        assert_eq!(files_a.len(), files_b.len());
        for (fa, fb) in files_a.iter().zip(&files_b) {
            assert_eq!(
                fs::read(fa).unwrap(),
                fs::read(fb).unwrap(),
                "{} and {} differ",
                fa.display(),
                fb.display()
            );
        }
    }

    #[test]
    fn perfect_predictions_sit_on_the_identity_line() {
        let report = synthetic_report(&[(0.1, 0.1), (0.2, 0.2), (0.35, 0.35)]);
        let svg = render_scatter_svg(&report.runs[0]).unwrap();

        // The identity line runs corner to corner of the padded range;
        // perfectly predicted points must land on it up to coordinate
        // rounding, after accounting for the different x and y pixel spans.
        let circles: Vec<(f64, f64)> = svg
            .lines()
            .filter(|l| l.starts_with("<circle"))
            .map(|l| {
                let get = |key: &str| {
                    let start = l.find(key).unwrap() + key.len();
                    let end = l[start..].find('"').unwrap();
                    l[start..start + end].parse::<f64>().unwrap()
                };
                (get("cx=\""), get("cy=\""))
            })
            .collect();
        assert_eq!(circles.len(), 3);
        for (cx, cy) in circles {
            let expected_cy = PLOT_B - (PLOT_B - PLOT_T) * (cx - PLOT_L) / (PLOT_R - PLOT_L);
            assert!(
                (cy - expected_cy).abs() <= 0.02,
                "({cx}, {cy}) off the identity line"
            );
        }
    }

    #[test]
    fn histogram_bars_account_for_every_prediction() {
        let report =
            synthetic_report(&[(0.1, 0.12), (0.2, 0.19), (0.3, 0.33), (0.4, 0.38), (0.5, 0.5)]);
        let svg = render_error_histogram_svg(&report.runs[0]).unwrap();
        let total: usize = svg
            .lines()
            .filter(|l| l.starts_with("<rect") && l.contains("data-count"))
            .map(|l| {
                let start = l.find("data-count=\"").unwrap() + "data-count=\"".len();
                let end = l[start..].find('"').unwrap();
                l[start..start + end].parse::<usize>().unwrap()
            })
            .sum();
        assert_eq!(total, 5);
    }

    #[test]
    fn rendering_rejects_empty_prediction_tables() {
        let mut report = synthetic_report(&[(0.1, 0.1), (0.2, 0.21)]);
        report.runs[0].predictions.clear();
        let dir = tempfile::tempdir().unwrap();
        assert!(render_report(&report, dir.path()).is_err());
        assert!(render_scatter_svg(&report.runs[0]).is_err());
        assert!(render_error_histogram_svg(&report.runs[0]).is_err());
    }

    #[test]
    fn merge_concatenates_runs_and_rejects_config_mismatch() {
        let a = synthetic_report(&[(0.1, 0.11), (0.2, 0.19)]);
        let b = synthetic_report(&[(0.3, 0.29), (0.4, 0.42)]);
        let merged = ExperimentReport::merge(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(merged.runs.len(), 2);
        assert_eq!(merged.curve.len(), 2);

        let mut other = b;
        other.config.order = 4;
        assert!(ExperimentReport::merge(&[a, other]).is_err());
        assert!(ExperimentReport::merge(&[]).is_err());
    }

    #[test]
    fn curve_trend_helper() {
        let mut report = synthetic_report(&[(0.1, 0.11), (0.2, 0.19)]);
        assert!(report.curve_non_decreasing());
        report.curve = vec![
            CurvePoint { family_size: 8, r2: -0.5 },
            CurvePoint { family_size: 16, r2: 0.4 },
            CurvePoint { family_size: 24, r2: 0.99 },
        ];
        assert!(report.curve_non_decreasing());
        report.curve[2].r2 = 0.2;
        assert!(!report.curve_non_decreasing());
    }
}
