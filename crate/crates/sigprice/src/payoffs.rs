//! Payoff catalogue and family construction.
//!
//! Four payoff families on discrete price paths: European calls/puts,
//! up-and-out barrier calls, up-and-in barrier calls, and options on
//! realized variance. All of them factor through three path statistics
//! (terminal price, running maximum, quadratic variation), so evaluation
//! is cheap and barrier monitoring is discrete at the sampling times.
//!
//! [`build_family`] enumerates deterministic parameter grids for a target
//! payoff family, with an out-of-sample variant on offset grid points so
//! held-out payoffs never coincide with calibration ones.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leadlag::PricePath;

/// The supported payoff kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PayoffKind {
    EuropeanCall,
    EuropeanPut,
    UpAndOutCall,
    UpAndInCall,
    VarianceOption,
}

impl PayoffKind {
    pub fn is_barrier(self) -> bool {
        matches!(self, PayoffKind::UpAndOutCall | PayoffKind::UpAndInCall)
    }
}

/// A parameterized payoff. `strike` is in price units, except for
/// [`PayoffKind::VarianceOption`] where it is in (squared) variance units.
/// `barrier` is present exactly for the barrier kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Payoff {
    pub kind: PayoffKind,
    pub strike: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier: Option<f64>,
}

impl Payoff {
    pub fn european_call(strike: f64) -> Self {
        Payoff { kind: PayoffKind::EuropeanCall, strike, barrier: None }
    }

    pub fn european_put(strike: f64) -> Self {
        Payoff { kind: PayoffKind::EuropeanPut, strike, barrier: None }
    }

    pub fn up_and_out_call(strike: f64, barrier: f64) -> Self {
        Payoff { kind: PayoffKind::UpAndOutCall, strike, barrier: Some(barrier) }
    }

    pub fn up_and_in_call(strike: f64, barrier: f64) -> Self {
        Payoff { kind: PayoffKind::UpAndInCall, strike, barrier: Some(barrier) }
    }

    pub fn variance_option(strike: f64) -> Self {
        Payoff { kind: PayoffKind::VarianceOption, strike, barrier: None }
    }

    /// Checks parameter invariants: positive strike; barrier present and
    /// above the normalized spot (1) exactly for barrier kinds.
    pub fn validate(&self) -> Result<()> {
        if !(self.strike > 0.0) || !self.strike.is_finite() {
            return Err(Error::InvalidFamily(format!(
                "strike must be positive and finite, got {}",
                self.strike
            )));
        }
        match (self.kind.is_barrier(), self.barrier) {
            (true, Some(b)) if b > 1.0 && b.is_finite() => Ok(()),
            (true, Some(b)) => Err(Error::InvalidFamily(format!(
                "up-barrier must be finite and above spot 1, got {b}"
            ))),
            (true, None) => Err(Error::InvalidFamily(format!(
                "{:?} requires a barrier",
                self.kind
            ))),
            (false, Some(_)) => Err(Error::InvalidFamily(format!(
                "{:?} does not take a barrier",
                self.kind
            ))),
            (false, None) => Ok(()),
        }
    }

    /// Evaluates the payoff on a path.
    pub fn evaluate(&self, p: &PricePath) -> f64 {
        self.evaluate_stats(&PathStats::of(p))
    }

    /// Evaluates the payoff on precomputed path statistics.
    pub fn evaluate_stats(&self, s: &PathStats) -> f64 {
        match self.kind {
            PayoffKind::EuropeanCall => (s.terminal - self.strike).max(0.0),
            PayoffKind::EuropeanPut => (self.strike - s.terminal).max(0.0),
            PayoffKind::UpAndOutCall => {
                if s.running_max < self.barrier.expect("validated barrier") {
                    (s.terminal - self.strike).max(0.0)
                } else {
                    0.0
                }
            }
            PayoffKind::UpAndInCall => {
                if s.running_max >= self.barrier.expect("validated barrier") {
                    (s.terminal - self.strike).max(0.0)
                } else {
                    0.0
                }
            }
            PayoffKind::VarianceOption => (s.qv - self.strike).max(0.0),
        }
    }
}

/// The path statistics the payoff families factor through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStats {
    pub terminal: f64,
    pub running_max: f64,
    pub qv: f64,
}

impl PathStats {
    pub fn of(p: &PricePath) -> Self {
        PathStats {
            terminal: p.terminal(),
            running_max: p.running_max(),
            qv: p.quadratic_variation(),
        }
    }
}

/// Number of payoffs of each kind in a family. European slots alternate
/// call, put, call, ... in grid order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyCounts {
    pub european: usize,
    pub up_and_out: usize,
    pub up_and_in: usize,
    pub variance: usize,
}

impl FamilyCounts {
    pub fn total(&self) -> usize {
        self.european + self.up_and_out + self.up_and_in + self.variance
    }

    /// The benchmark mixed family: 25 payoffs of each kind.
    pub fn mixed() -> Self {
        FamilyCounts { european: 25, up_and_out: 25, up_and_in: 25, variance: 25 }
    }

    /// A vanilla-only family of the same total size.
    pub fn vanilla_only(total: usize) -> Self {
        FamilyCounts { european: total, up_and_out: 0, up_and_in: 0, variance: 0 }
    }

    /// Distributes `total` payoffs round-robin over the four kinds, so
    /// smaller families keep the same mixture as the full one.
    pub fn round_robin(total: usize) -> Self {
        let base = total / 4;
        let extra = total % 4;
        FamilyCounts {
            european: base + usize::from(extra > 0),
            up_and_out: base + usize::from(extra > 1),
            up_and_in: base + usize::from(extra > 2),
            variance: base,
        }
    }

    /// An exotics-only family (no Europeans), round-robin over the three
    /// exotic kinds; the usual held-out composition.
    pub fn exotics(total: usize) -> Self {
        let base = total / 3;
        let extra = total % 3;
        FamilyCounts {
            european: 0,
            up_and_out: base + usize::from(extra > 0),
            up_and_in: base + usize::from(extra > 1),
            variance: base,
        }
    }
}

/// Parameter ranges for family construction, plus the grid offsets that
/// separate calibration payoffs from held-out ones.
///
/// A grid of `n` points on `[lo, hi]` with offset `c` places points at
/// `lo + (i + c) * (hi - lo) / n`; distinct offsets in (0, 1) give
/// provably disjoint grids on the same range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyGrids {
    pub strike_range: (f64, f64),
    pub barrier_range: (f64, f64),
    pub variance_strike_range: (f64, f64),
    pub in_sample_offset: f64,
    pub out_of_sample_offset: f64,
}

impl Default for FamilyGrids {
    fn default() -> Self {
        // Variance strikes bracket the realized variance of a 20%-vol year
        // (0.04): from a quarter of it to 2.25 times it.
        FamilyGrids {
            strike_range: (0.8, 1.2),
            barrier_range: (1.05, 1.5),
            variance_strike_range: (0.25 * 0.04, 2.25 * 0.04),
            in_sample_offset: 0.25,
            out_of_sample_offset: 0.75,
        }
    }
}

/// Which of the two disjoint grid families to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleSet {
    InSample,
    OutOfSample,
}

fn grid(range: (f64, f64), n: usize, offset: f64) -> Vec<f64> {
    let (lo, hi) = range;
    let step = (hi - lo) / n as f64;
    (0..n).map(|i| lo + (i as f64 + offset) * step).collect()
}

fn check_range(name: &str, range: (f64, f64)) -> Result<()> {
    if !(range.0 < range.1) || !range.0.is_finite() || !range.1.is_finite() {
        return Err(Error::InvalidFamily(format!(
            "{name} range ({}, {}) is empty or not finite",
            range.0, range.1
        )));
    }
    Ok(())
}

/// Builds a deterministic payoff family.
///
/// Strikes and barriers are drawn from offset grids; the in-sample and
/// out-of-sample variants use different offsets, and construction fails if
/// the two would share any payoff. Barrier payoffs enumerate a
/// (strike x barrier) product grid, near-square for the requested count.
/// Up-and-in payoffs use a half-shifted offset so they never duplicate an
/// (up-and-out, European) pair in the same family, which would introduce
/// an exact linear dependence.
pub fn build_family(
    counts: &FamilyCounts,
    grids: &FamilyGrids,
    which: SampleSet,
) -> Result<Vec<Payoff>> {
    if counts.total() == 0 {
        return Err(Error::InvalidFamily("family has zero payoffs".into()));
    }
    let in_frac = normalized_offset(grids.in_sample_offset);
    let out_frac = normalized_offset(grids.out_of_sample_offset);
    if in_frac == out_frac {
        return Err(Error::InvalidFamily(format!(
            "in-sample and out-of-sample grid offsets {} and {} overlap",
            grids.in_sample_offset, grids.out_of_sample_offset
        )));
    }
    let family = family_with_offset(counts, grids, offset_for(which, grids))?;
    // Cross-check disjointness against the sibling family on the same grids.
    let other = family_with_offset(counts, grids, offset_for(other_set(which), grids))?;
    for f in &family {
        if other.contains(f) {
            return Err(Error::InvalidFamily(format!(
                "in-sample and out-of-sample families overlap at {f:?}"
            )));
        }
    }
    Ok(family)
}

fn other_set(which: SampleSet) -> SampleSet {
    match which {
        SampleSet::InSample => SampleSet::OutOfSample,
        SampleSet::OutOfSample => SampleSet::InSample,
    }
}

fn offset_for(which: SampleSet, grids: &FamilyGrids) -> f64 {
    match which {
        SampleSet::InSample => normalized_offset(grids.in_sample_offset),
        SampleSet::OutOfSample => normalized_offset(grids.out_of_sample_offset),
    }
}

fn normalized_offset(c: f64) -> f64 {
    c.rem_euclid(1.0)
}

/// Up-and-in grids use half the base offset (see `build_family` docs).
fn half(c: f64) -> f64 {
    c / 2.0
}

fn family_with_offset(
    counts: &FamilyCounts,
    grids: &FamilyGrids,
    offset: f64,
) -> Result<Vec<Payoff>> {
    let mut family = Vec::with_capacity(counts.total());

    if counts.european > 0 {
        check_range("strike", grids.strike_range)?;
        for (i, k) in grid(grids.strike_range, counts.european, offset)
            .into_iter()
            .enumerate()
        {
            family.push(if i % 2 == 0 {
                Payoff::european_call(k)
            } else {
                Payoff::european_put(k)
            });
        }
    }
    if counts.up_and_out > 0 {
        check_range("strike", grids.strike_range)?;
        check_range("barrier", grids.barrier_range)?;
        family.extend(barrier_grid(
            counts.up_and_out,
            grids,
            offset,
            Payoff::up_and_out_call,
        ));
    }
    if counts.up_and_in > 0 {
        check_range("strike", grids.strike_range)?;
        check_range("barrier", grids.barrier_range)?;
        family.extend(barrier_grid(
            counts.up_and_in,
            grids,
            half(offset),
            Payoff::up_and_in_call,
        ));
    }
    if counts.variance > 0 {
        check_range("variance strike", grids.variance_strike_range)?;
        for k in grid(grids.variance_strike_range, counts.variance, offset) {
            family.push(Payoff::variance_option(k));
        }
    }
    for f in &family {
        f.validate()?;
    }
    Ok(family)
}

fn barrier_grid(
    count: usize,
    grids: &FamilyGrids,
    offset: f64,
    make: fn(f64, f64) -> Payoff,
) -> Vec<Payoff> {
    let n_strikes = (count as f64).sqrt().ceil() as usize;
    let n_barriers = count.div_ceil(n_strikes);
    let strikes = grid(grids.strike_range, n_strikes, offset);
    let barriers = grid(grids.barrier_range, n_barriers, offset);
    let mut out = Vec::with_capacity(count);
    'outer: for &k in &strikes {
        for &b in &barriers {
            if out.len() == count {
                break 'outer;
            }
            out.push(make(k, b));
        }
    }
    out
}

/// Reads a payoff catalogue: a JSON list of `{kind, strike, barrier?}`.
pub fn read_catalogue(reader: impl Read) -> Result<Vec<Payoff>> {
    let payoffs: Vec<Payoff> = serde_json::from_reader(reader)?;
    for p in &payoffs {
        p.validate()?;
    }
    Ok(payoffs)
}

/// Writes a payoff catalogue as a JSON list.
pub fn write_catalogue(writer: impl Write, payoffs: &[Payoff]) -> Result<()> {
    serde_json::to_writer_pretty(writer, payoffs)?;
    Ok(())
}

/// One row of a price table: a payoff's position in its family, the price,
/// and the Monte-Carlo standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRow {
    pub payoff_id: usize,
    pub price: f64,
    pub std_err: f64,
}

/// Writes prices as CSV `payoff_id,price,std_err`.
pub fn write_price_csv(writer: impl Write, rows: &[PriceRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a `payoff_id,price,std_err` CSV.
pub fn read_price_csv(reader: impl Read) -> Result<Vec<PriceRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}
