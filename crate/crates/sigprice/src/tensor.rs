//! Truncated tensor algebra `T^N(R^d)` and its dual.
//!
//! Elements are stored as dense graded coefficient vectors over words
//! (multi-indices) with letters in `{1, ..., d}`. The word enumeration is
//! part of the public contract and is stable across serialization:
//!
//! - words are ordered degree-major (all words of length 0, then length 1, ...),
//! - within a degree, lexicographically with letter `1 < 2 < ... < d`,
//! - the word `(i_1, ..., i_k)` sits at `offset(k) + sum_j (i_j - 1) d^(k-j)`,
//!   where `offset(k) = 1 + d + ... + d^(k-1)`.
//!
//! For `d = 3, N = 5` this gives `(3^6 - 1)/2 = 364` coefficients.
//!
//! [`TruncatedTensor`] holds signatures and expected signatures;
//! [`LinearFunctional`] holds elements of the dual (payoff functionals).
//! Shape mismatches between operands are programming errors and panic.
//! All values are immutable in spirit: operations are pure and return new
//! values, so everything here is safe to share across threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of coefficients of `T^N(R^d)`: `sum_{k=0}^{N} d^k`.
pub fn dimension(dim: usize, order: usize) -> usize {
    assert!(dim >= 1, "tensor dimension must be >= 1");
    let mut total = 0usize;
    let mut pow = 1usize;
    for _ in 0..=order {
        total = total.checked_add(pow).expect("tensor dimension overflow");
        pow = pow.checked_mul(dim).unwrap_or(0);
    }
    total
}

/// Start offset of the degree-`k` block in the graded layout.
fn block_offset(dim: usize, k: usize) -> usize {
    dimension(dim, k) - dim.pow(k as u32)
}

/// A word (multi-index): an ordered sequence of letters in `{1, ..., d}`.
///
/// The empty word indexes the degree-0 (scalar) coefficient.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Word(Vec<u8>);

impl Word {
    /// Builds a word from letters; letters are validated against `d` when
    /// the word is used to index a tensor.
    pub fn new(letters: impl Into<Vec<u8>>) -> Self {
        Word(letters.into())
    }

    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    /// Position of this word in the graded coefficient layout for dimension `d`.
    ///
    /// Panics if any letter is outside `[1, d]`.
    pub fn index(&self, dim: usize) -> usize {
        block_offset(dim, self.0.len()) + word_block_index(&self.0, dim)
    }
}

impl From<&[u8]> for Word {
    fn from(letters: &[u8]) -> Self {
        Word(letters.to_vec())
    }
}

/// Index of a word within its own degree block (base-`d` digits).
fn word_block_index(letters: &[u8], dim: usize) -> usize {
    let mut idx = 0usize;
    for &l in letters {
        assert!(
            (1..=dim as u8).contains(&l),
            "letter {l} outside alphabet 1..={dim}"
        );
        idx = idx * dim + (l as usize - 1);
    }
    idx
}

/// Letters of the word at position `pos` within the degree-`k` block.
fn letters_of_block_index(mut pos: usize, k: usize, dim: usize) -> Vec<u8> {
    let mut letters = vec![0u8; k];
    for slot in letters.iter_mut().rev() {
        *slot = (pos % dim) as u8 + 1;
        pos /= dim;
    }
    letters
}

/// Raw serialized form shared by tensors and functionals: `{dim, order, coeffs}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawGraded {
    dim: usize,
    order: usize,
    coeffs: Vec<f64>,
}

impl RawGraded {
    fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(Error::InvalidTensor("dim must be >= 1".into()));
        }
        let expect = dimension(self.dim, self.order);
        if self.coeffs.len() != expect {
            return Err(Error::InvalidTensor(format!(
                "coefficient count {} does not match dimension({}, {}) = {}",
                self.coeffs.len(),
                self.dim,
                self.order,
                expect
            )));
        }
        Ok(())
    }
}

/// An element of the truncated tensor algebra `T^N(R^d)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "RawGraded")]
pub struct TruncatedTensor {
    dim: usize,
    order: usize,
    coeffs: Vec<f64>,
}

impl From<TruncatedTensor> for RawGraded {
    fn from(t: TruncatedTensor) -> Self {
        RawGraded {
            dim: t.dim,
            order: t.order,
            coeffs: t.coeffs,
        }
    }
}

impl<'de> Deserialize<'de> for TruncatedTensor {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawGraded::deserialize(de)?;
        raw.validate().map_err(serde::de::Error::custom)?;
        Ok(TruncatedTensor {
            dim: raw.dim,
            order: raw.order,
            coeffs: raw.coeffs,
        })
    }
}

impl TruncatedTensor {
    /// The zero element.
    pub fn zero(dim: usize, order: usize) -> Self {
        TruncatedTensor {
            dim,
            order,
            coeffs: vec![0.0; dimension(dim, order)],
        }
    }

    /// The multiplicative unit: 1 at the empty word.
    pub fn unit(dim: usize, order: usize) -> Self {
        let mut t = Self::zero(dim, order);
        t.coeffs[0] = 1.0;
        t
    }

    /// Wraps a coefficient vector laid out in the documented word enumeration.
    pub fn from_coeffs(dim: usize, order: usize, coeffs: Vec<f64>) -> Result<Self> {
        let raw = RawGraded { dim, order, coeffs };
        raw.validate()?;
        Ok(TruncatedTensor {
            dim: raw.dim,
            order: raw.order,
            coeffs: raw.coeffs,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Mutable coefficient buffer, for in-place accumulation inside the crate.
    pub(crate) fn coeffs_mut(&mut self) -> &mut Vec<f64> {
        &mut self.coeffs
    }

    pub fn get(&self, word: &Word) -> f64 {
        assert!(word.len() <= self.order, "word longer than tensor order");
        self.coeffs[word.index(self.dim)]
    }

    pub fn set(&mut self, word: &Word, value: f64) {
        assert!(word.len() <= self.order, "word longer than tensor order");
        let idx = word.index(self.dim);
        self.coeffs[idx] = value;
    }

    /// The degree-`k` coefficient block.
    pub fn block(&self, k: usize) -> &[f64] {
        assert!(k <= self.order);
        let start = block_offset(self.dim, k);
        &self.coeffs[start..start + self.dim.pow(k as u32)]
    }

    /// Graded truncated product: the coefficient of a word `w` in the result
    /// is the sum of `a[u] * b[v]` over all splittings `w = u.v`; degrees
    /// above the shared order are discarded.
    ///
    /// Panics if `dim` or `order` differ.
    pub fn tensor_mul(&self, other: &TruncatedTensor) -> TruncatedTensor {
        assert_eq!(self.dim, other.dim, "tensor dimension mismatch");
        assert_eq!(self.order, other.order, "tensor order mismatch");
        let mut out = TruncatedTensor::zero(self.dim, self.order);
        mul_into(
            self.dim,
            self.order,
            &self.coeffs,
            &other.coeffs,
            &mut out.coeffs,
        );
        out
    }

    /// In-place variant used by signature accumulation: `self <- self (x) other`.
    pub(crate) fn tensor_mul_assign(&mut self, other: &TruncatedTensor, scratch: &mut Vec<f64>) {
        debug_assert_eq!(self.dim, other.dim);
        debug_assert_eq!(self.order, other.order);
        scratch.clear();
        scratch.resize(self.coeffs.len(), 0.0);
        mul_into(self.dim, self.order, &self.coeffs, &other.coeffs, scratch);
        std::mem::swap(&mut self.coeffs, scratch);
    }

    pub fn scale(&self, factor: f64) -> TruncatedTensor {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= factor;
        }
        out
    }

    pub fn add(&self, other: &TruncatedTensor) -> TruncatedTensor {
        assert_eq!(self.dim, other.dim, "tensor dimension mismatch");
        assert_eq!(self.order, other.order, "tensor order mismatch");
        let mut out = self.clone();
        for (c, o) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *c += o;
        }
        out
    }
}

fn mul_into(dim: usize, order: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for ka in 0..=order {
        let off_a = block_offset(dim, ka);
        let len_a = dim.pow(ka as u32);
        for kb in 0..=(order - ka) {
            let off_b = block_offset(dim, kb);
            let len_b = dim.pow(kb as u32);
            let off_o = block_offset(dim, ka + kb);
            for ia in 0..len_a {
                let av = a[off_a + ia];
                if av == 0.0 {
                    continue;
                }
                let row = &mut out[off_o + ia * len_b..off_o + (ia + 1) * len_b];
                for (o, bv) in row.iter_mut().zip(&b[off_b..off_b + len_b]) {
                    *o += av * bv;
                }
            }
        }
    }
}

/// An element of the dual `T^N((R^d)^*)` in the dual basis `e_I^*`.
///
/// Same graded layout and serialization as [`TruncatedTensor`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "RawGraded")]
pub struct LinearFunctional {
    dim: usize,
    order: usize,
    coeffs: Vec<f64>,
}

impl From<LinearFunctional> for RawGraded {
    fn from(l: LinearFunctional) -> Self {
        RawGraded {
            dim: l.dim,
            order: l.order,
            coeffs: l.coeffs,
        }
    }
}

impl<'de> Deserialize<'de> for LinearFunctional {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawGraded::deserialize(de)?;
        raw.validate().map_err(serde::de::Error::custom)?;
        Ok(LinearFunctional {
            dim: raw.dim,
            order: raw.order,
            coeffs: raw.coeffs,
        })
    }
}

impl LinearFunctional {
    pub fn zero(dim: usize, order: usize) -> Self {
        LinearFunctional {
            dim,
            order,
            coeffs: vec![0.0; dimension(dim, order)],
        }
    }

    /// The projection `1^*` onto the degree-0 coefficient.
    pub fn unit(dim: usize, order: usize) -> Self {
        let mut l = Self::zero(dim, order);
        l.coeffs[0] = 1.0;
        l
    }

    /// The dual-basis element `e_I^*` for a single word.
    pub fn basis(dim: usize, word: &Word) -> Self {
        let mut l = Self::zero(dim, word.len());
        let idx = word.index(dim);
        l.coeffs[idx] = 1.0;
        l
    }

    pub fn from_coeffs(dim: usize, order: usize, coeffs: Vec<f64>) -> Result<Self> {
        let raw = RawGraded { dim, order, coeffs };
        raw.validate()?;
        Ok(LinearFunctional {
            dim: raw.dim,
            order: raw.order,
            coeffs: raw.coeffs,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn get(&self, word: &Word) -> f64 {
        assert!(word.len() <= self.order, "word longer than functional order");
        self.coeffs[word.index(self.dim)]
    }

    pub fn set(&mut self, word: &Word, value: f64) {
        assert!(word.len() <= self.order, "word longer than functional order");
        let idx = word.index(self.dim);
        self.coeffs[idx] = value;
    }

    pub fn scale(&self, factor: f64) -> LinearFunctional {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= factor;
        }
        out
    }

    pub fn add(&self, other: &LinearFunctional) -> LinearFunctional {
        assert_eq!(self.dim, other.dim, "functional dimension mismatch");
        assert_eq!(self.order, other.order, "functional order mismatch");
        let mut out = self.clone();
        for (c, o) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *c += o;
        }
        out
    }

    /// Reinterprets the functional at a different truncation order, keeping
    /// coefficients of surviving degrees.
    pub fn truncate(&self, order: usize) -> LinearFunctional {
        let mut out = LinearFunctional::zero(self.dim, order);
        let keep = dimension(self.dim, order.min(self.order));
        out.coeffs[..keep].copy_from_slice(&self.coeffs[..keep]);
        out
    }

    /// Shuffle product, extended bilinearly from the word recursion
    ///
    /// `e_I* sh e_J* = (e_{I-}* sh e_J*) (x) e_{i_n}* + (e_I* sh e_{J-}*) (x) e_{j_m}*`
    ///
    /// with `1*` as unit. The result has order `self.order + other.order`;
    /// callers re-truncate as needed.
    ///
    /// Panics if dimensions differ.
    pub fn shuffle(&self, other: &LinearFunctional) -> LinearFunctional {
        assert_eq!(self.dim, other.dim, "functional dimension mismatch");
        let dim = self.dim;
        let mut out = LinearFunctional::zero(dim, self.order + other.order);
        let mut prefix = Vec::with_capacity(self.order + other.order);
        for ku in 0..=self.order {
            let u_off = block_offset(dim, ku);
            for iu in 0..dim.pow(ku as u32) {
                let cu = self.coeffs[u_off + iu];
                if cu == 0.0 {
                    continue;
                }
                let u = letters_of_block_index(iu, ku, dim);
                for kv in 0..=other.order {
                    let v_off = block_offset(dim, kv);
                    for iv in 0..dim.pow(kv as u32) {
                        let cv = other.coeffs[v_off + iv];
                        if cv == 0.0 {
                            continue;
                        }
                        let v = letters_of_block_index(iv, kv, dim);
                        let out_off = block_offset(dim, ku + kv);
                        interleave_into(
                            &u,
                            &v,
                            cu * cv,
                            dim,
                            &mut prefix,
                            &mut out.coeffs[out_off..],
                        );
                    }
                }
            }
        }
        out
    }

    /// Dual pairing `<l, a> = sum over common words of l[w] * a[w]`.
    ///
    /// Orders may differ; degrees present on only one side pair to zero.
    /// Panics if dimensions differ.
    pub fn pair(&self, tensor: &TruncatedTensor) -> f64 {
        assert_eq!(self.dim, tensor.dim, "pairing dimension mismatch");
        let common = dimension(self.dim, self.order.min(tensor.order));
        self.coeffs[..common]
            .iter()
            .zip(&tensor.coeffs[..common])
            .map(|(l, a)| l * a)
            .sum()
    }
}

/// Accumulates `c` times every interleaving of `u` and `v` into the degree
/// block `out` (offset already applied). Equal interleavings arising from
/// different merge routes accumulate, which realizes the shuffle counts.
fn interleave_into(u: &[u8], v: &[u8], c: f64, dim: usize, prefix: &mut Vec<u8>, out: &mut [f64]) {
    if u.is_empty() && v.is_empty() {
        out[word_block_index(prefix, dim)] += c;
        return;
    }
    if let Some((&first, rest)) = u.split_first() {
        prefix.push(first);
        interleave_into(rest, v, c, dim, prefix, out);
        prefix.pop();
    }
    if let Some((&first, rest)) = v.split_first() {
        prefix.push(first);
        interleave_into(u, rest, c, dim, prefix, out);
        prefix.pop();
    }
}
