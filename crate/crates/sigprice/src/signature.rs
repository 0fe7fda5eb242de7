//! Truncated signatures of piecewise-linear paths.
//!
//! The signature of a linear segment is the tensor exponential of its
//! increment, and signatures concatenate multiplicatively (Chen's
//! relation), so for piecewise-linear paths the truncated signature is
//! computed exactly as an ordered product of segment exponentials: cost
//! O(segments * dim(T^N)^~ ) with no quadrature error.
//!
//! Also provides the two closed-form market functionals on lead-lag
//! signatures: the price increment (forward estimate) and the realized
//! quadratic variation.

use crate::leadlag::LeadLagPath;
use crate::tensor::{dimension, LinearFunctional, TruncatedTensor, Word};

/// Fills `coeffs` (graded layout, length `dimension(d, order)`) with the
/// tensor exponential of `v`: degree-k block is `v^{(x)k} / k!`.
fn fill_segment_exp(v: &[f64], order: usize, coeffs: &mut [f64]) {
    let d = v.len();
    debug_assert_eq!(coeffs.len(), dimension(d, order));
    coeffs[0] = 1.0;
    let mut prev_off = 0usize;
    let mut prev_len = 1usize;
    for k in 1..=order {
        let off = prev_off + prev_len;
        let inv_k = 1.0 / k as f64;
        for a in 0..prev_len {
            let base = coeffs[prev_off + a] * inv_k;
            for (j, &vj) in v.iter().enumerate() {
                coeffs[off + a * d + j] = base * vj;
            }
        }
        prev_off = off;
        prev_len *= d;
    }
}

/// Truncated signature of a single linear segment with the given increment:
/// the tensor exponential `sum_k v^{(x)k} / k!`.
pub fn sig_segment(increment: &[f64], order: usize) -> TruncatedTensor {
    let d = increment.len();
    assert!(d >= 1, "segment increment must have at least one component");
    let mut out = TruncatedTensor::zero(d, order);
    fill_segment_exp(increment, order, out.coeffs_mut());
    out
}

/// Truncated signature of a piecewise-linear path given by its vertices.
///
/// Panics if there are fewer than 2 vertices or the vertices disagree in
/// dimension (programming errors, like the tensor shape contracts).
pub fn sig_piecewise_linear(vertices: &[Vec<f64>], order: usize) -> TruncatedTensor {
    assert!(vertices.len() >= 2, "need at least one segment");
    let d = vertices[0].len();
    let mut acc = TruncatedTensor::unit(d, order);
    let mut seg = TruncatedTensor::zero(d, order);
    let mut scratch = Vec::new();
    let mut inc = vec![0.0; d];
    for pair in vertices.windows(2) {
        assert_eq!(pair[1].len(), d, "vertex dimension mismatch");
        for (i, slot) in inc.iter_mut().enumerate() {
            *slot = pair[1][i] - pair[0][i];
        }
        fill_segment_exp(&inc, order, seg.coeffs_mut());
        acc.tensor_mul_assign(&seg, &mut scratch);
    }
    acc
}

/// Truncated signature of a lead-lag path over all its segments.
pub fn sig_path(path: &LeadLagPath, order: usize) -> TruncatedTensor {
    sig_path_range(path, 0, path.vertices().len() - 1, order)
}

/// Truncated signature of a lead-lag path restricted to the vertex range
/// `[from, to]`. `from == to` gives the unit (empty path).
///
/// Panics if the range is out of bounds or reversed.
pub fn sig_path_range(path: &LeadLagPath, from: usize, to: usize, order: usize) -> TruncatedTensor {
    let verts = path.vertices();
    assert!(from <= to && to < verts.len(), "vertex range out of bounds");
    let mut acc = TruncatedTensor::unit(3, order);
    let mut seg = TruncatedTensor::zero(3, order);
    let mut scratch = Vec::new();
    for pair in verts[from..=to].windows(2) {
        let inc = [
            pair[1][0] - pair[0][0],
            pair[1][1] - pair[0][1],
            pair[1][2] - pair[0][2],
        ];
        fill_segment_exp(&inc, order, seg.coeffs_mut());
        acc.tensor_mul_assign(&seg, &mut scratch);
    }
    acc
}

/// The functional whose pairing with a lead-lag signature is the total
/// price increment `X_1 - X_0`: the dual basis element of the lag-price
/// letter.
pub fn increment_functional() -> LinearFunctional {
    LinearFunctional::basis(3, &Word::new(vec![2]))
}

/// The functional whose pairing with a lead-lag signature is the realized
/// quadratic variation `sum_i (X_{t_i} - X_{t_{i-1}})^2`: the antisymmetric
/// degree-2 combination of the lead and lag letters.
pub fn qv_functional() -> LinearFunctional {
    let mut l = LinearFunctional::zero(3, 2);
    l.set(&Word::new(vec![3, 2]), 1.0);
    l.set(&Word::new(vec![2, 3]), -1.0);
    l
}
