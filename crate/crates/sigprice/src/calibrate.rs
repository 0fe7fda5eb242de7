//! The two linear fits behind model-free pricing.
//!
//! Fit A ([`PayoffRegression`], [`fit_payoff_functional`]): regress payoff
//! cash flows on truncated lead-lag signature features over a basis-path
//! cloud, producing a linear functional that prices the payoff as a dual
//! pairing. Columns are standardized before the (tiny) ridge is applied
//! and coefficients are mapped back to the raw dual basis, so the constant
//! feature acts as an unpenalized intercept. The factorization of the
//! feature Gram matrix is shared across payoffs.
//!
//! Fit B ([`fit_implied_signature`]): given fitted functionals and
//! observed prices, recover the expected signature implied by the market.
//! The system is underdetermined (a few hundred unknowns, ~100 prices), so
//! the solution is the minimum-norm least-squares one, with the degree-0
//! coordinate pinned to 1 (the price of "pay 1 at maturity").
//!
//! Rank deficiency is expected, not exceptional: signature coordinates of
//! lead-lag paths on a shared timeline satisfy exact linear relations
//! (pure-time words are constant, lead and lag have equal increments), so
//! both solvers are rank-revealing and report the rank they saw.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leadlag::{lead_lag, PricePath};
use crate::payoffs::{PathStats, Payoff};
use crate::signature::sig_path;
use crate::tensor::{dimension, LinearFunctional, TruncatedTensor};

/// Relative eigenvalue/singular-value cutoff for rank decisions. Gram
/// formation squares conditioning, so this sits well above f64 epsilon.
const RANK_TOL: f64 = 1e-10;

/// A payoff together with its signature-payoff approximation and fit
/// diagnostics (in-sample R^2 and the L2 norm of in-sample residuals).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffFunctional {
    pub payoff: Payoff,
    pub functional: LinearFunctional,
    pub r2: f64,
    pub residual: f64,
}

/// How the implied-signature system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regularization {
    /// Minimum-norm least squares (rank-revealing pseudo-inverse).
    MinimumNorm,
    /// Ridge with the given absolute penalty on the unconstrained
    /// coordinates.
    Ridge(f64),
}

/// The expected signature implied by observed prices: pairing a payoff's
/// functional with `tensor` prices the payoff. `residuals[i]` is the
/// signed price-reproduction error of family member `i`; `rank` is the
/// numerical rank of the stacked-functional map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpliedExpectedSignature {
    pub tensor: TruncatedTensor,
    pub residuals: Vec<f64>,
    pub rank: usize,
    pub regularization: Regularization,
}

/// Shared state for fitting payoff functionals on one basis-path cloud:
/// standardized signature features and the eigendecomposition of their
/// Gram matrix, reusable across any number of payoffs.
pub struct PayoffRegression {
    order: usize,
    lambda: f64,
    /// Standardized features, one row per path, constant column dropped.
    design: DMatrix<f64>,
    stats: Vec<PathStats>,
    col_mean: Vec<f64>,
    col_scale: Vec<f64>,
    eigen: SymmetricEigen<f64, nalgebra::Dyn>,
    rank: usize,
}

impl PayoffRegression {
    /// Computes order-`order` lead-lag signatures of the basis paths and
    /// factorizes the standardized feature Gram matrix.
    ///
    /// `ridge` is a relative penalty: the absolute ridge added to the Gram
    /// eigenvalues is `ridge * trace / ncols` (the mean column energy).
    /// `ridge = 0` requests plain minimum-norm least squares.
    pub fn new(basis_paths: &[PricePath], order: usize, ridge: f64) -> Result<Self> {
        if basis_paths.is_empty() {
            return Err(Error::Calibration("no basis paths".into()));
        }
        if order < 1 {
            return Err(Error::Calibration("signature order must be >= 1".into()));
        }
        if !(ridge >= 0.0) || !ridge.is_finite() {
            return Err(Error::Calibration(format!(
                "ridge must be finite and >= 0, got {ridge}"
            )));
        }
        let m = basis_paths.len();
        let dim = dimension(3, order);
        let ncols = dim - 1; // constant degree-0 column handled as intercept

        let rows: Result<Vec<Vec<f64>>> = basis_paths
            .par_iter()
            .map(|p| Ok(sig_path(&lead_lag(p)?, order).coeffs()[1..].to_vec()))
            .collect();
        let rows = rows?;
        let stats: Vec<PathStats> = basis_paths.iter().map(PathStats::of).collect();

        let mut col_mean = vec![0.0f64; ncols];
        for row in &rows {
            for (s, v) in col_mean.iter_mut().zip(row) {
                *s += v;
            }
        }
        for s in &mut col_mean {
            *s /= m as f64;
        }
        let mut col_var = vec![0.0f64; ncols];
        for row in &rows {
            for ((s, v), mu) in col_var.iter_mut().zip(row).zip(&col_mean) {
                *s += (v - mu) * (v - mu);
            }
        }
        let col_scale: Vec<f64> = col_var
            .iter()
            .zip(&col_mean)
            .map(|(&v, &mu)| {
                let sd = (v / m as f64).sqrt();
                // Constant columns (pure-time words) standardize to zero and
                // drop out of the fit; keep a unit scale so the back-map is
                // well defined.
                if sd > 1e-14 * mu.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();

        let design = DMatrix::from_fn(m, ncols, |i, j| (rows[i][j] - col_mean[j]) / col_scale[j]);
        let gram = design.tr_mul(&design);
        let trace: f64 = gram.diagonal().iter().sum();
        let lambda = ridge * trace / ncols as f64;
        let eigen = SymmetricEigen::new(gram);
        let max_eig = eigen.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let rank = eigen
            .eigenvalues
            .iter()
            .filter(|&&e| e > RANK_TOL * max_eig)
            .count();

        Ok(PayoffRegression {
            order,
            lambda,
            design,
            stats,
            col_mean,
            col_scale,
            eigen,
            rank,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of basis paths.
    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    /// Numerical rank of the standardized design (exact lead-lag relations
    /// make this strictly less than the column count).
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Fits the signature-payoff approximation of `payoff`.
    pub fn fit(&self, payoff: &Payoff) -> Result<PayoffFunctional> {
        payoff.validate()?;
        let y: Vec<f64> = self.stats.iter().map(|s| payoff.evaluate_stats(s)).collect();
        let (functional, r2, residual) = self.fit_values(&y)?;
        Ok(PayoffFunctional { payoff: *payoff, functional, r2, residual })
    }

    /// Fits a functional to arbitrary per-path cash flows (one value per
    /// basis path, in path order). Returns (functional, R^2, residual L2
    /// norm). Constant targets are reproduced exactly by the intercept and
    /// count as a perfect fit.
    pub fn fit_values(&self, y: &[f64]) -> Result<(LinearFunctional, f64, f64)> {
        let m = self.stats.len();
        if y.len() != m {
            return Err(Error::Calibration(format!(
                "{} target values for {} basis paths",
                y.len(),
                m
            )));
        }
        let y_mean = y.iter().sum::<f64>() / m as f64;
        let y_centered = DVector::from_iterator(m, y.iter().map(|v| v - y_mean));

        // Ridge (or pseudo-inverse) solve in the eigenbasis of the Gram.
        let c = self.design.tr_mul(&y_centered);
        let mut z = self.eigen.eigenvectors.tr_mul(&c);
        let max_eig = self.eigen.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        for (zi, &ev) in z.iter_mut().zip(self.eigen.eigenvalues.iter()) {
            *zi = if self.lambda > 0.0 {
                *zi / (ev + self.lambda)
            } else if ev > RANK_TOL * max_eig {
                *zi / ev
            } else {
                0.0
            };
        }
        let beta = &self.eigen.eigenvectors * z;

        // Back to the raw dual basis.
        let ncols = beta.len();
        let mut coeffs = vec![0.0f64; ncols + 1];
        let mut intercept = y_mean;
        for j in 0..ncols {
            let lj = beta[j] / self.col_scale[j];
            coeffs[j + 1] = lj;
            intercept -= lj * self.col_mean[j];
        }
        coeffs[0] = intercept;
        let functional = LinearFunctional::from_coeffs(3, self.order, coeffs)?;

        // In-sample diagnostics, computed in the standardized system where
        // predictions are X~ beta + y_mean.
        let pred = &self.design * &beta;
        let ss_res: f64 = pred
            .iter()
            .zip(y_centered.iter())
            .map(|(p, yc)| (p - yc) * (p - yc))
            .sum();
        let ss_tot: f64 = y_centered.iter().map(|v| v * v).sum();
        let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        Ok((functional, r2, ss_res.sqrt()))
    }
}

impl PayoffRegression {
    /// Fit B in this regression's standardized coordinates: solves for the
    /// implied expected signature with every feature rescaled by its basis
    /// standard deviation, which is what makes the system numerically
    /// well-posed (raw signature coordinates span many orders of
    /// magnitude, so a raw-coordinate solve lets ill-scaled directions
    /// dominate; see [`fit_implied_signature_raw`]).
    ///
    /// Coordinates the price data says nothing about are left at zero, so
    /// the result encodes exactly what the family's prices imply and
    /// nothing else. Pair it with a small [`Regularization::Ridge`]: exact
    /// interpolation of Monte-Carlo prices chases their noise.
    ///
    /// The functionals must come from this regression's [`fit`].
    ///
    /// [`fit`]: PayoffRegression::fit
    pub fn implied_signature(
        &self,
        fitted: &[PayoffFunctional],
        prices: &[f64],
        regularization: Regularization,
    ) -> Result<ImpliedExpectedSignature> {
        self.implied_signature_centered(fitted, prices, regularization, false)
    }

    /// Like [`implied_signature`], but shrinks toward the basis cloud's
    /// empirical mean signature instead of toward zero: coordinates the
    /// price data does not constrain keep their basis-measure values.
    ///
    /// This is an informative prior. It helps when the basis model is
    /// close to the market and the family is sparse, and it pins exactly
    /// deterministic coordinates (pure-time words) at their true values;
    /// but it also lets a weak family borrow most of its answer from the
    /// basis, which can mask how little the family's prices determine.
    ///
    /// [`implied_signature`]: PayoffRegression::implied_signature
    pub fn implied_signature_toward_basis_mean(
        &self,
        fitted: &[PayoffFunctional],
        prices: &[f64],
        regularization: Regularization,
    ) -> Result<ImpliedExpectedSignature> {
        self.implied_signature_centered(fitted, prices, regularization, true)
    }

    fn implied_signature_centered(
        &self,
        fitted: &[PayoffFunctional],
        prices: &[f64],
        regularization: Regularization,
        center_mean: bool,
    ) -> Result<ImpliedExpectedSignature> {
        if fitted.is_empty() {
            return Err(Error::Calibration("empty payoff family".into()));
        }
        if fitted.len() != prices.len() {
            return Err(Error::Calibration(format!(
                "{} functionals but {} prices",
                fitted.len(),
                prices.len()
            )));
        }
        let ncols = self.col_mean.len();
        let dim = dimension(3, self.order);
        // Standardized system: price = y_bar + beta . E~, with E~ the
        // implied signature in centered/scaled coordinates.
        let mut b = DMatrix::zeros(fitted.len(), ncols);
        let mut rhs = DVector::zeros(fitted.len());
        // The full map (intercept column included) for the rank report;
        // the affine change of coordinates preserves the rank of the raw
        // stacked map.
        let mut full = DMatrix::zeros(fitted.len(), ncols + 1);
        let mut any_nonzero = false;
        for (i, (f, &p)) in fitted.iter().zip(prices).enumerate() {
            let l = &f.functional;
            if l.dim() != 3 || l.order() != self.order {
                return Err(Error::Calibration(format!(
                    "functional {i} has shape ({}, {}), expected (3, {})",
                    l.dim(),
                    l.order(),
                    self.order
                )));
            }
            let c = l.coeffs();
            let mut y_bar = c[0];
            for j in 0..ncols {
                let beta = c[j + 1] * self.col_scale[j];
                b[(i, j)] = beta;
                full[(i, j + 1)] = beta;
                y_bar += c[j + 1] * self.col_mean[j];
            }
            full[(i, 0)] = y_bar;
            rhs[i] = if center_mean { p - y_bar } else { p - c[0] };
            any_nonzero |= y_bar != 0.0 || c.iter().any(|&v| v != 0.0);
        }
        if !any_nonzero {
            return Err(Error::Calibration("all functionals are zero".into()));
        }

        let z = svd_solve(&b, &rhs, regularization)?;
        let mut coeffs = vec![0.0f64; dim];
        coeffs[0] = 1.0;
        for j in 0..ncols {
            let base = if center_mean { self.col_mean[j] } else { 0.0 };
            coeffs[j + 1] = base + self.col_scale[j] * z[j];
        }
        let tensor = TruncatedTensor::from_coeffs(3, self.order, coeffs)?;
        let residuals: Vec<f64> = fitted
            .iter()
            .zip(prices)
            .map(|(f, &p)| f.functional.pair(&tensor) - p)
            .collect();
        let rank = numerical_rank(&full);
        Ok(ImpliedExpectedSignature { tensor, residuals, rank, regularization })
    }
}

/// Minimum-norm or ridge SVD solution of `a x = rhs`. The minimum-norm
/// solver zeroes singular directions below the relative [`RANK_TOL`]
/// cutoff.
fn svd_solve(
    a: &DMatrix<f64>,
    rhs: &DVector<f64>,
    regularization: Regularization,
) -> Result<DVector<f64>> {
    if let Regularization::Ridge(l) = regularization {
        if !(l >= 0.0) || !l.is_finite() {
            return Err(Error::Calibration(format!(
                "ridge penalty must be finite and >= 0, got {l}"
            )));
        }
    }
    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let mut z = u.tr_mul(rhs);
    for (zi, &s) in z.iter_mut().zip(svd.singular_values.iter()) {
        *zi = match regularization {
            Regularization::MinimumNorm => {
                if s > RANK_TOL * s_max {
                    *zi / s
                } else {
                    0.0
                }
            }
            Regularization::Ridge(l) => *zi * s / (s * s + l),
        };
    }
    Ok(v_t.tr_mul(&z))
}

/// Number of singular values above the relative [`RANK_TOL`] cutoff.
fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let svd = a.clone().svd(false, false);
    let s_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    svd.singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * s_max)
        .count()
}

/// One-shot form of fit A: builds the regression state for `basis_paths`
/// and fits a single payoff. Use [`PayoffRegression`] directly to fit many
/// payoffs on one basis.
pub fn fit_payoff_functional(
    payoff: &Payoff,
    basis_paths: &[PricePath],
    order: usize,
    ridge: f64,
) -> Result<PayoffFunctional> {
    PayoffRegression::new(basis_paths, order, ridge)?.fit(payoff)
}

/// Fit B on raw functionals: finds the order-`order` tensor `E` with
/// degree-0 coordinate 1 minimizing `sum_F (<l_F, E> - price_F)^2`,
/// breaking ties by minimum norm of the unconstrained coordinates.
pub fn fit_implied_signature_raw(
    functionals: &[LinearFunctional],
    prices: &[f64],
    order: usize,
    regularization: Regularization,
) -> Result<ImpliedExpectedSignature> {
    if functionals.is_empty() {
        return Err(Error::Calibration("empty payoff family".into()));
    }
    if functionals.len() != prices.len() {
        return Err(Error::Calibration(format!(
            "{} functionals but {} prices",
            functionals.len(),
            prices.len()
        )));
    }
    let nrows = functionals.len();
    let dim = dimension(3, order);
    let mut any_nonzero = false;
    let mut a = DMatrix::zeros(nrows, dim);
    for (i, l) in functionals.iter().enumerate() {
        if l.dim() != 3 {
            return Err(Error::Calibration(format!(
                "functional {i} has dimension {}, expected 3",
                l.dim()
            )));
        }
        let t = l.truncate(order);
        for (j, &v) in t.coeffs().iter().enumerate() {
            a[(i, j)] = v;
            any_nonzero |= v != 0.0;
        }
    }
    if !any_nonzero {
        return Err(Error::Calibration("all functionals are zero".into()));
    }

    // Degree-0 coordinate pinned to 1: move its contribution to the rhs.
    let a0 = a.column(0).clone_owned();
    let rhs = DVector::from_iterator(nrows, prices.iter().zip(a0.iter()).map(|(p, c)| p - c));
    let a_free = a.columns(1, dim - 1).clone_owned();

    let e_free = svd_solve(&a_free, &rhs, regularization)?;

    let mut coeffs = vec![0.0f64; dim];
    coeffs[0] = 1.0;
    coeffs[1..].copy_from_slice(e_free.as_slice());
    let tensor = TruncatedTensor::from_coeffs(3, order, coeffs)?;

    let residuals: Vec<f64> = functionals
        .iter()
        .zip(prices)
        .map(|(l, p)| l.pair(&tensor) - p)
        .collect();

    // Rank of the full stacked map, constant column included.
    let rank = numerical_rank(&a);

    Ok(ImpliedExpectedSignature { tensor, residuals, rank, regularization })
}

/// Fit B: implied expected signature from fitted payoff functionals and
/// their observed prices.
pub fn fit_implied_signature(
    functionals: &[PayoffFunctional],
    prices: &[f64],
    order: usize,
    regularization: Regularization,
) -> Result<ImpliedExpectedSignature> {
    let raw: Vec<LinearFunctional> = functionals.iter().map(|f| f.functional.clone()).collect();
    fit_implied_signature_raw(&raw, prices, order, regularization)
}

/// Prices a payoff against an implied expected signature: fits the
/// payoff's functional on the regression basis and pairs it with the
/// implied tensor.
pub fn price_payoff(
    payoff: &Payoff,
    implied: &ImpliedExpectedSignature,
    basis: &PayoffRegression,
) -> Result<f64> {
    let fitted = basis.fit(payoff)?;
    Ok(fitted.functional.pair(&implied.tensor))
}
