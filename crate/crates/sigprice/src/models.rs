//! Seeded Monte-Carlo path generators.
//!
//! Four path laws on a uniform trading timeline over [0, 1]: Black-Scholes
//! with a per-path constant volatility (the regression basis), and three
//! stochastic-volatility market generators (Hull-White, GARCH(1,1), rough
//! Bergomi-style rough volatility). Interest rates are zero and paths are
//! already discounted, so every generator is an exact per-step martingale:
//! each log step uses the variance known at the step's left endpoint with
//! its own compensator, never a variance that peeks at the step's shock.
//!
//! Reproducibility: path `i` of a run is drawn from stream `i` of a
//! counter-based ChaCha12 generator seeded by the market seed, so results
//! are bit-identical for a given (model, params, days, seed, count)
//! regardless of thread count or chunking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::leadlag::PricePath;
use crate::payoffs::{PathStats, Payoff};

/// Black-Scholes basis generator: each path has its own constant
/// volatility, uniform on `[vol_min, vol_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlackScholesParams {
    pub vol_min: f64,
    pub vol_max: f64,
}

impl Default for BlackScholesParams {
    fn default() -> Self {
        BlackScholesParams { vol_min: 0.05, vol_max: 0.40 }
    }
}

/// Hull-White stochastic volatility: the squared volatility follows a
/// driftless geometric Brownian motion with volatility-of-volatility
/// `vol_of_vol`, correlated with the spot shock by `correlation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HullWhiteParams {
    pub spot_vol: f64,
    pub vol_of_vol: f64,
    pub correlation: f64,
}

impl Default for HullWhiteParams {
    fn default() -> Self {
        HullWhiteParams { spot_vol: 0.20, vol_of_vol: 0.5, correlation: 0.0 }
    }
}

/// GARCH(1,1) with per-step (daily) variance recursion
/// `h_{k+1} = omega + alpha * h_k * z_k^2 + beta * h_k`, started at the
/// long-run level `omega / (1 - alpha - beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for GarchParams {
    fn default() -> Self {
        GarchParams { omega: 2e-6, alpha: 0.1, beta: 0.85 }
    }
}

/// Rough volatility (rough Bergomi): instantaneous variance
/// `V_t = xi0 * exp(eta * Y_t - eta^2/2 * Var Y_t)` where `Y` is a Riemann-
/// Liouville fractional Brownian motion with Hurst index `hurst`, and the
/// spot shock correlates with the variance driver by `correlation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoughVolParams {
    pub hurst: f64,
    pub eta: f64,
    pub correlation: f64,
    pub xi0: f64,
}

impl Default for RoughVolParams {
    fn default() -> Self {
        RoughVolParams { hurst: 0.1, eta: 1.9, correlation: -0.7, xi0: 0.04 }
    }
}

/// Model choice plus its parameters; serializes as `{model, params}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "params")]
pub enum ModelParams {
    BlackScholes(BlackScholesParams),
    HullWhite(HullWhiteParams),
    #[serde(rename = "GARCH")]
    Garch(GarchParams),
    RoughVol(RoughVolParams),
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidParams(msg));
        match *self {
            ModelParams::BlackScholes(p) => {
                if !(0.0 <= p.vol_min && p.vol_min <= p.vol_max) || !p.vol_max.is_finite() {
                    return err(format!(
                        "volatility range [{}, {}] must satisfy 0 <= min <= max",
                        p.vol_min, p.vol_max
                    ));
                }
            }
            ModelParams::HullWhite(p) => {
                if !(p.spot_vol >= 0.0) || !p.spot_vol.is_finite() {
                    return err(format!("spot_vol must be >= 0, got {}", p.spot_vol));
                }
                if !(p.vol_of_vol >= 0.0) || !p.vol_of_vol.is_finite() {
                    return err(format!("vol_of_vol must be >= 0, got {}", p.vol_of_vol));
                }
                if !(-1.0..=1.0).contains(&p.correlation) {
                    return err(format!("correlation must be in [-1, 1], got {}", p.correlation));
                }
            }
            ModelParams::Garch(p) => {
                if !(p.omega >= 0.0) || !(p.alpha >= 0.0) || !(p.beta >= 0.0) {
                    return err(format!(
                        "GARCH coefficients must be >= 0, got ({}, {}, {})",
                        p.omega, p.alpha, p.beta
                    ));
                }
                if !(p.alpha + p.beta < 1.0) {
                    return err(format!(
                        "GARCH needs alpha + beta < 1 for a finite long-run variance, got {}",
                        p.alpha + p.beta
                    ));
                }
            }
            ModelParams::RoughVol(p) => {
                if !(p.hurst > 0.0 && p.hurst <= 0.5) {
                    return err(format!("hurst must lie in (0, 0.5], got {}", p.hurst));
                }
                if !(p.eta >= 0.0) || !p.eta.is_finite() {
                    return err(format!("eta must be >= 0, got {}", p.eta));
                }
                if !(-1.0..=1.0).contains(&p.correlation) {
                    return err(format!("correlation must be in [-1, 1], got {}", p.correlation));
                }
                if !(p.xi0 > 0.0) || !p.xi0.is_finite() {
                    return err(format!("xi0 must be > 0, got {}", p.xi0));
                }
            }
        }
        Ok(())
    }
}

fn default_days() -> usize {
    252
}

/// A market: a path law, a trading-day count for the uniform timeline on
/// [0, 1], and the master RNG seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Market {
    #[serde(flatten)]
    pub model: ModelParams,
    #[serde(default = "default_days")]
    pub days: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Market {
    pub fn new(model: ModelParams, days: usize, seed: u64) -> Result<Self> {
        let m = Market { model, days, seed };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.days < 1 {
            return Err(Error::InvalidParams("need at least 1 trading day".into()));
        }
        self.model.validate()
    }

    /// The RNG for path `index`: stream `index` of the seeded generator.
    fn path_rng(&self, index: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

/// Precomputed per-run simulation state (rough-vol kernel weights are the
/// only heavy part; the other models carry their parameters directly).
enum Engine {
    BlackScholes(BlackScholesParams),
    HullWhite(HullWhiteParams),
    Garch { p: GarchParams, h0: f64 },
    RoughVol(RoughEngine),
}

impl Engine {
    fn new(market: &Market) -> Result<Engine> {
        market.validate()?;
        Ok(match market.model {
            ModelParams::BlackScholes(p) => Engine::BlackScholes(p),
            ModelParams::HullWhite(p) => Engine::HullWhite(p),
            ModelParams::Garch(p) => Engine::Garch {
                p,
                h0: p.omega / (1.0 - p.alpha - p.beta),
            },
            ModelParams::RoughVol(p) => Engine::RoughVol(RoughEngine::new(p, market.days)),
        })
    }

    /// Simulates one path's values on the uniform timeline (length days + 1).
    fn simulate(&self, rng: &mut ChaCha12Rng, days: usize) -> Vec<f64> {
        match self {
            Engine::BlackScholes(p) => simulate_black_scholes(p, rng, days),
            Engine::HullWhite(p) => simulate_hull_white(p, rng, days),
            Engine::Garch { p, h0 } => simulate_garch(p, *h0, rng, days),
            Engine::RoughVol(e) => e.simulate(rng),
        }
    }
}

fn simulate_black_scholes(p: &BlackScholesParams, rng: &mut ChaCha12Rng, days: usize) -> Vec<f64> {
    let sigma = if p.vol_max > p.vol_min {
        rng.random_range(p.vol_min..p.vol_max)
    } else {
        p.vol_min
    };
    let dt = 1.0 / days as f64;
    let drift = -0.5 * sigma * sigma * dt;
    let scale = sigma * dt.sqrt();
    let mut values = Vec::with_capacity(days + 1);
    let mut x = 1.0f64;
    values.push(x);
    for _ in 0..days {
        let z: f64 = rng.sample(StandardNormal);
        x *= (drift + scale * z).exp();
        values.push(x);
    }
    values
}

fn simulate_hull_white(p: &HullWhiteParams, rng: &mut ChaCha12Rng, days: usize) -> Vec<f64> {
    let dt = 1.0 / days as f64;
    let sqrt_dt = dt.sqrt();
    let xi = p.vol_of_vol;
    let rho = p.correlation;
    let rho_perp = (1.0 - rho * rho).sqrt();
    let mut v = p.spot_vol * p.spot_vol;
    let mut x = 1.0f64;
    let mut values = Vec::with_capacity(days + 1);
    values.push(x);
    for _ in 0..days {
        // Per step: variance shock first, then the orthogonal spot shock.
        let zv: f64 = rng.sample(StandardNormal);
        let zp: f64 = rng.sample(StandardNormal);
        let zs = rho * zv + rho_perp * zp;
        x *= (v.sqrt() * sqrt_dt * zs - 0.5 * v * dt).exp();
        values.push(x);
        v *= (xi * sqrt_dt * zv - 0.5 * xi * xi * dt).exp();
    }
    values
}

fn simulate_garch(p: &GarchParams, h0: f64, rng: &mut ChaCha12Rng, days: usize) -> Vec<f64> {
    // h is per-step variance; with the default daily calibration the
    // natural timeline is 252 steps.
    let mut h = h0;
    let mut x = 1.0f64;
    let mut values = Vec::with_capacity(days + 1);
    values.push(x);
    for _ in 0..days {
        let z: f64 = rng.sample(StandardNormal);
        x *= (h.sqrt() * z - 0.5 * h).exp();
        values.push(x);
        h = p.omega + p.alpha * h * z * z + p.beta * h;
    }
    values
}

/// Hybrid-scheme state for the rough-volatility generator.
///
/// The Volterra process `Y_t = sqrt(2H) int_0^t (t-s)^(H-1/2) dW_s` is
/// discretized with the nearest interval integrated exactly (the pair
/// (increment, kernel integral) is jointly Gaussian with known 2x2
/// covariance) and the history summed with power-kernel weights at the
/// L2-optimal evaluation points `b_j = ((j^(a+1) - (j-1)^(a+1))/(a+1))^(1/a)`,
/// `a = H - 1/2`. The variance compensator uses the scheme's own Var(Y_i),
/// so E[V_t] = xi0 holds exactly in the simulation.
struct RoughEngine {
    p: RoughVolParams,
    days: usize,
    dt: f64,
    /// Cholesky of the (increment, kernel integral) covariance:
    /// dW = c11 z1, I = c21 z1 + c22 z2.
    c11: f64,
    c21: f64,
    c22: f64,
    /// History weights w[j] for lags j >= 2 (w[0], w[1] unused).
    weights: Vec<f64>,
    /// Scheme variance of Y at each time index i (1-based, var_y[0] unused).
    var_y: Vec<f64>,
    sqrt_2h: f64,
}

impl RoughEngine {
    fn new(p: RoughVolParams, days: usize) -> RoughEngine {
        let a = p.hurst - 0.5;
        let n = days;
        let dt = 1.0 / n as f64;
        let var_dw = dt;
        let var_i = dt.powf(2.0 * a + 1.0) / (2.0 * a + 1.0);
        let cov = dt.powf(a + 1.0) / (a + 1.0);
        let c11 = var_dw.sqrt();
        let c21 = cov / c11;
        let c22 = (var_i - cov * cov / var_dw).max(0.0).sqrt();

        let mut weights = vec![0.0; n + 1];
        for (j, w) in weights.iter_mut().enumerate().skip(2) {
            let jf = j as f64;
            let b = ((jf.powf(a + 1.0) - (jf - 1.0).powf(a + 1.0)) / (a + 1.0)).powf(1.0 / a);
            *w = (b * dt).powf(a);
        }
        // At H = 1/2 the kernel is constant: a = 0 makes every weight 1 and
        // the near-term integral coincide with the plain increment, so Y is
        // a standard Brownian motion (powf conventions 1^inf = 1, x^0 = 1
        // give exactly that, and c22 collapses to 0).
        // Var(Y_i) = 2H (var_i + sum_{j=2}^{i} w_j^2 dt): the near-term
        // integral and the disjoint history increments are independent.
        let two_h = 2.0 * p.hurst;
        let mut var_y = vec![0.0; n + 1];
        let mut acc = 0.0;
        for i in 1..=n {
            if i >= 2 {
                acc += weights[i].powi(2) * dt;
            }
            var_y[i] = two_h * (var_i + acc);
        }

        RoughEngine {
            p,
            days: n,
            dt,
            c11,
            c21,
            c22,
            weights,
            var_y,
            sqrt_2h: two_h.sqrt(),
        }
    }

    fn simulate(&self, rng: &mut ChaCha12Rng) -> Vec<f64> {
        let n = self.days;
        let dt = self.dt;
        let sqrt_dt = dt.sqrt();
        let rho = self.p.correlation;
        let rho_perp = (1.0 - rho * rho).sqrt();
        let eta = self.p.eta;
        let xi0 = self.p.xi0;

        let mut dw = vec![0.0f64; n];
        let mut x = 1.0f64;
        let mut v = xi0; // V at t_0: Y_0 = 0 with zero variance
        let mut values = Vec::with_capacity(n + 1);
        values.push(x);
        for i in 1..=n {
            // Fixed draw order: variance-driver pair, then orthogonal spot shock.
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let z3: f64 = rng.sample(StandardNormal);
            let dwi = self.c11 * z1;
            let kernel_int = self.c21 * z1 + self.c22 * z2;
            let db = rho * dwi + rho_perp * sqrt_dt * z3;

            // Spot step over [t_{i-1}, t_i] with the left-endpoint variance.
            x *= (v.sqrt() * db - 0.5 * v * dt).exp();
            values.push(x);

            dw[i - 1] = dwi;
            let mut hist = 0.0;
            for j in 2..=i {
                hist += self.weights[j] * dw[i - j];
            }
            let y = self.sqrt_2h * (kernel_int + hist);
            v = xi0 * (eta * y - 0.5 * eta * eta * self.var_y[i]).exp();
        }
        values
    }
}

/// Draws `count` paths from the market. Deterministic in (model, params,
/// days, seed, count) and independent of thread count.
pub fn sample_paths(market: &Market, count: usize) -> Result<Vec<PricePath>> {
    if count == 0 {
        return Err(Error::InvalidParams("path count must be >= 1".into()));
    }
    let engine = Engine::new(market)?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = market.path_rng(i as u64);
            PricePath::from_uniform(engine.simulate(&mut rng, market.days))
        })
        .collect()
}

/// A Monte-Carlo price with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceEstimate {
    pub price: f64,
    pub std_err: f64,
}

/// Paths are generated and consumed in fixed-size chunks so pricing never
/// materializes the whole path set; the chunk size is part of no contract
/// (per-path RNG streams make results independent of it).
const PRICING_CHUNK: usize = 8192;

/// Monte-Carlo price of an arbitrary statistic of the path.
///
/// The mean is accumulated in path order, so the result is bit-stable for
/// a given market and path count.
pub fn market_price_fn(
    market: &Market,
    payoff: impl Fn(&PathStats) -> f64 + Sync,
    mc_paths: usize,
) -> Result<PriceEstimate> {
    let estimates = market_price_all(market, &[&payoff], mc_paths)?;
    Ok(estimates[0])
}

/// Monte-Carlo price of one payoff. See [`market_price_family`] to price a
/// whole family on a single set of paths.
pub fn market_price(market: &Market, payoff: &Payoff, mc_paths: usize) -> Result<PriceEstimate> {
    payoff.validate()?;
    market_price_fn(market, |s| payoff.evaluate_stats(s), mc_paths)
}

type BoxedStatFn = Box<dyn Fn(&PathStats) -> f64 + Sync>;

/// Prices a family of payoffs on one shared set of Monte-Carlo paths.
pub fn market_price_family(
    market: &Market,
    payoffs: &[Payoff],
    mc_paths: usize,
) -> Result<Vec<PriceEstimate>> {
    for p in payoffs {
        p.validate()?;
    }
    let fns: Vec<BoxedStatFn> = payoffs
        .iter()
        .map(|p| {
            let p = *p;
            Box::new(move |s: &PathStats| p.evaluate_stats(s)) as _
        })
        .collect();
    let refs: Vec<&(dyn Fn(&PathStats) -> f64 + Sync)> = fns.iter().map(|b| b.as_ref()).collect();
    market_price_all(market, &refs, mc_paths)
}

fn market_price_all(
    market: &Market,
    payoffs: &[&(dyn Fn(&PathStats) -> f64 + Sync)],
    mc_paths: usize,
) -> Result<Vec<PriceEstimate>> {
    if mc_paths == 0 {
        return Err(Error::Pricing("Monte-Carlo path count must be >= 1".into()));
    }
    let engine = Engine::new(market)?;
    let k = payoffs.len();
    let mut sums = vec![0.0f64; k];
    let mut sq_sums = vec![0.0f64; k];

    let mut start = 0usize;
    while start < mc_paths {
        let end = (start + PRICING_CHUNK).min(mc_paths);
        let chunk: Result<Vec<Vec<f64>>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let mut rng = market.path_rng(i as u64);
                let path = PricePath::from_uniform(engine.simulate(&mut rng, market.days))?;
                let stats = PathStats::of(&path);
                Ok(payoffs.iter().map(|f| f(&stats)).collect())
            })
            .collect();
        for row in chunk? {
            for (j, v) in row.into_iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Pricing(format!(
                        "payoff {j} produced a non-finite value"
                    )));
                }
                sums[j] += v;
                sq_sums[j] += v * v;
            }
        }
        start = end;
    }

    let n = mc_paths as f64;
    Ok((0..k)
        .map(|j| {
            let mean = sums[j] / n;
            let var = (sq_sums[j] / n - mean * mean).max(0.0);
            PriceEstimate { price: mean, std_err: (var / n).sqrt() }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn bs_market(vol_min: f64, vol_max: f64, seed: u64) -> Market {
        Market::new(
            ModelParams::BlackScholes(BlackScholesParams { vol_min, vol_max }),
            252,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn zero_volatility_gives_constant_path() {
        let m = bs_market(0.0, 0.0, 1);
        let paths = sample_paths(&m, 3).unwrap();
        for p in paths {
            assert!(p.values().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn black_scholes_terminal_mean_is_one() {
        let m = bs_market(0.05, 0.40, 7);
        let est = market_price_fn(&m, |s| s.terminal, 10_000).unwrap();
        assert!(
            (est.price - 1.0).abs() <= 3.0 * est.std_err,
            "terminal mean {} +/- {}",
            est.price,
            est.std_err
        );
    }

    #[test]
    fn black_scholes_atm_call_matches_closed_form() {
        let sigma = 0.2f64;
        let m = bs_market(sigma, sigma, 11);
        let est = market_price(&m, &Payoff::european_call(1.0), 20_000).unwrap();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let d1 = sigma / 2.0;
        let exact = normal.cdf(d1) - normal.cdf(-d1);
        assert!((exact - 0.0797).abs() < 5e-4, "sanity: closed form near 0.0797");
        assert!(
            (est.price - exact).abs() <= 3.0 * est.std_err,
            "MC {} +/- {} vs closed form {}",
            est.price,
            est.std_err,
            exact
        );
    }

    fn martingale_and_positivity(model: ModelParams, seed: u64) {
        let m = Market::new(model, 252, seed).unwrap();
        let paths = sample_paths(&m, 4000).unwrap();
        let terminals: Vec<f64> = paths.iter().map(|p| p.terminal()).collect();
        for p in &paths {
            assert!(p.values().iter().all(|&v| v > 0.0));
        }
        let n = terminals.len() as f64;
        let mean = terminals.iter().sum::<f64>() / n;
        let var = terminals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        let se = (var / n).sqrt();
        assert!(
            (mean - 1.0).abs() <= 3.0 * se,
            "terminal mean {mean} +/- {se} for {model:?}"
        );
    }

    #[test]
    fn hull_white_is_a_martingale() {
        martingale_and_positivity(ModelParams::HullWhite(HullWhiteParams::default()), 21);
    }

    #[test]
    fn garch_is_a_martingale() {
        martingale_and_positivity(ModelParams::Garch(GarchParams::default()), 22);
    }

    #[test]
    fn rough_vol_is_a_martingale() {
        martingale_and_positivity(ModelParams::RoughVol(RoughVolParams::default()), 23);
    }

    /// Classical log-normal stochastic-vol simulation: at H = 1/2 the
    /// fractional driver degenerates to a standard Brownian motion, so the
    /// rough engine must match this law. Implemented independently of the
    /// hybrid-scheme machinery.
    fn classical_lognormal_sv(p: &RoughVolParams, seed: u64, days: usize, count: usize) -> Vec<PricePath> {
        let dt = 1.0 / days as f64;
        let sqrt_dt = dt.sqrt();
        let rho = p.correlation;
        let rho_perp = (1.0 - rho * rho).sqrt();
        (0..count)
            .map(|i| {
                let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xabcd_ef01);
                rng.set_stream(i as u64);
                let mut w = 0.0f64; // driver of the variance
                let mut t = 0.0f64;
                let mut x = 1.0f64;
                let mut values = vec![x];
                for _ in 0..days {
                    let v = p.xi0 * (p.eta * w - 0.5 * p.eta * p.eta * t).exp();
                    let zw: f64 = rng.sample(StandardNormal);
                    let zp: f64 = rng.sample(StandardNormal);
                    let db = rho * sqrt_dt * zw + rho_perp * sqrt_dt * zp;
                    x *= (v.sqrt() * db - 0.5 * v * dt).exp();
                    values.push(x);
                    w += sqrt_dt * zw;
                    t += dt;
                }
                PricePath::from_uniform(values).unwrap()
            })
            .collect()
    }

    #[test]
    fn hurst_half_reduces_to_classical_stochastic_vol() {
        let p = RoughVolParams { hurst: 0.5, eta: 1.0, correlation: -0.5, xi0: 0.04 };
        let days = 64;
        let count = 20_000;
        let m = Market::new(ModelParams::RoughVol(p), days, 31).unwrap();
        let rough = sample_paths(&m, count).unwrap();
        let classical = classical_lognormal_sv(&p, 77, days, count);

        // Compare realized-variance and squared-terminal moments: both are
        // sensitive to the variance process law, not just the spot marginals.
        let stat = |paths: &[PricePath], f: &dyn Fn(&PricePath) -> f64| {
            let xs: Vec<f64> = paths.iter().map(f).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            (mean, (var / n).sqrt())
        };
        let qv = |p: &PricePath| p.quadratic_variation();
        let sq = |p: &PricePath| (p.terminal() - 1.0).powi(2);
        for f in [&qv as &dyn Fn(&PricePath) -> f64, &sq] {
            let (m1, se1) = stat(&rough, f);
            let (m2, se2) = stat(&classical, f);
            let se = se1.hypot(se2);
            assert!(
                (m1 - m2).abs() <= 3.5 * se,
                "moment mismatch: {m1} +/- {se1} vs {m2} +/- {se2}"
            );
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = Market::new(ModelParams::HullWhite(HullWhiteParams::default()), 64, 5).unwrap();
        let a = sample_paths(&m, 50).unwrap();
        let b = sample_paths(&m, 50).unwrap();
        assert_eq!(a, b);
        // A different seed moves every path.
        let m2 = Market::new(ModelParams::HullWhite(HullWhiteParams::default()), 64, 6).unwrap();
        let c = sample_paths(&m2, 50).unwrap();
        assert_ne!(a, c);
        // Prefixes agree: path i does not depend on the total count.
        let d = sample_paths(&m, 10).unwrap();
        assert_eq!(&a[..10], &d[..]);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let bad = [
            ModelParams::BlackScholes(BlackScholesParams { vol_min: 0.4, vol_max: 0.1 }),
            ModelParams::BlackScholes(BlackScholesParams { vol_min: -0.1, vol_max: 0.1 }),
            ModelParams::HullWhite(HullWhiteParams { vol_of_vol: -0.5, ..Default::default() }),
            ModelParams::HullWhite(HullWhiteParams { correlation: 1.5, ..Default::default() }),
            ModelParams::Garch(GarchParams { alpha: 0.5, beta: 0.5, ..Default::default() }),
            ModelParams::Garch(GarchParams { omega: -1e-6, ..Default::default() }),
            ModelParams::RoughVol(RoughVolParams { hurst: 0.0, ..Default::default() }),
            ModelParams::RoughVol(RoughVolParams { hurst: 0.7, ..Default::default() }),
            ModelParams::RoughVol(RoughVolParams { xi0: 0.0, ..Default::default() }),
        ];
        for model in bad {
            assert!(Market::new(model, 252, 0).is_err(), "{model:?} should be rejected");
        }
    }

    #[test]
    fn constant_payoff_prices_to_one_exactly() {
        let m = Market::new(ModelParams::Garch(GarchParams::default()), 32, 9).unwrap();
        let est = market_price_fn(&m, |_| 1.0, 500).unwrap();
        assert_eq!(est.price, 1.0);
        assert_eq!(est.std_err, 0.0);
    }

    #[test]
    fn barrier_below_spot_knocks_out_immediately() {
        // Not constructible through the validated catalogue (up-barriers sit
        // above spot), but evaluation is total: max >= X_0 = 1 > barrier.
        let knocked = Payoff { kind: crate::payoffs::PayoffKind::UpAndOutCall, strike: 1.0, barrier: Some(0.95) };
        let m = bs_market(0.2, 0.2, 13);
        let est = market_price_fn(&m, |s| knocked.evaluate_stats(s), 200).unwrap();
        assert_eq!(est.price, 0.0);
        assert_eq!(est.std_err, 0.0);
    }

    #[test]
    fn market_config_json_round_trip() {
        let text = r#"{"model":"RoughVol","params":{"hurst":0.1,"eta":1.9,"correlation":-0.7,"xi0":0.04},"days":252,"seed":42}"#;
        let m: Market = serde_json::from_str(text).unwrap();
        assert_eq!(m.days, 252);
        assert_eq!(m.seed, 42);
        assert!(matches!(m.model, ModelParams::RoughVol(_)));
        let back = serde_json::to_string(&m).unwrap();
        let reparsed: Market = serde_json::from_str(&back).unwrap();
        assert_eq!(reparsed, m);

        // Defaults: days and seed may be omitted, params fields fill in.
        let minimal: Market = serde_json::from_str(r#"{"model":"GARCH","params":{}}"#).unwrap();
        assert_eq!(minimal.days, 252);
        assert_eq!(minimal.seed, 0);
        assert!(matches!(minimal.model, ModelParams::Garch(p) if p == GarchParams::default()));
    }

    #[test]
    fn family_pricing_matches_single_pricing() {
        let m = bs_market(0.2, 0.2, 17);
        let family = vec![Payoff::european_call(1.0), Payoff::variance_option(0.03)];
        let batch = market_price_family(&m, &family, 1000).unwrap();
        for (p, est) in family.iter().zip(&batch) {
            let single = market_price(&m, p, 1000).unwrap();
            assert_eq!(single.price, est.price);
            assert_eq!(single.std_err, est.std_err);
        }
    }
}
