#![allow(dead_code)]

//! Shared helpers for integration tests: a quadrature reference for
//! signatures, random path and functional generators, and error metrics.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sigprice::tensor::{LinearFunctional, TruncatedTensor, Word};

/// Signature of a piecewise-linear path by composite trapezoid quadrature
/// of the iterated integrals, on a grid aligned with the segment
/// breakpoints (`cells` subdivisions per segment).
///
/// Within a cell every integrand is polynomial, so the only error is the
/// trapezoid truncation O(1/cells^2); degree-1 and degree-2 coefficients
/// are exact up to rounding.
pub fn quadrature_signature(vertices: &[Vec<f64>], order: usize, cells: usize) -> TruncatedTensor {
    let dim = vertices[0].len();
    assert!(vertices.len() >= 2 && dim >= 1 && cells >= 1);

    // Grid values of the path, one Vec per coordinate.
    let n_pts = (vertices.len() - 1) * cells + 1;
    let mut x = vec![Vec::with_capacity(n_pts); dim];
    for (a, b) in vertices.iter().zip(&vertices[1..]) {
        for j in 0..cells {
            let s = j as f64 / cells as f64;
            for (i, coord) in x.iter_mut().enumerate() {
                coord.push(a[i] + s * (b[i] - a[i]));
            }
        }
    }
    for (i, coord) in x.iter_mut().enumerate() {
        coord.push(vertices[vertices.len() - 1][i]);
    }

    let mut out = TruncatedTensor::unit(dim, order);
    // `level[w]` holds t -> integral for the degree-k word with base-d
    // digits w (first letter most significant); the prefix of word `w`
    // is `w / dim` and its last letter has 0-based index `w % dim`.
    let mut level = vec![vec![1.0; n_pts]];
    for degree in 1..=order {
        let mut next = Vec::with_capacity(level.len() * dim);
        for w in 0..level.len() * dim {
            let prefix = &level[w / dim];
            let coord = &x[w % dim];
            let mut acc = Vec::with_capacity(n_pts);
            let mut v = 0.0;
            acc.push(v);
            for j in 0..n_pts - 1 {
                v += 0.5 * (prefix[j] + prefix[j + 1]) * (coord[j + 1] - coord[j]);
                acc.push(v);
            }
            next.push(acc);
        }
        for (w, series) in next.iter().enumerate() {
            out.set(&Word::new(digits(w, degree, dim)), series[n_pts - 1]);
        }
        level = next;
    }
    out
}

/// Letters (1-based) of the degree-`k` word with base-`dim` digit index `w`.
fn digits(mut w: usize, k: usize, dim: usize) -> Vec<u8> {
    let mut letters = vec![0u8; k];
    for slot in letters.iter_mut().rev() {
        *slot = (w % dim) as u8 + 1;
        w /= dim;
    }
    letters
}

/// Worst relative error over degree blocks: `max_k ||a_k - b_k||_inf / ||b_k||_inf`,
/// with `b` as the reference. Degree 0 is skipped (both sides hold the unit).
pub fn block_rel_error(a: &TruncatedTensor, b: &TruncatedTensor) -> f64 {
    assert_eq!(a.dim(), b.dim());
    assert_eq!(a.order(), b.order());
    let mut worst = 0.0f64;
    for k in 1..=b.order() {
        let (ba, bb) = (a.block(k), b.block(k));
        let diff = ba
            .iter()
            .zip(bb)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0f64, f64::max);
        let scale = bb.iter().map(|q| q.abs()).fold(0.0f64, f64::max);
        if scale > 0.0 {
            worst = worst.max(diff / scale);
        } else {
            worst = worst.max(diff);
        }
    }
    worst
}

/// Largest absolute coefficient difference between two tensors.
pub fn max_abs_diff(a: &TruncatedTensor, b: &TruncatedTensor) -> f64 {
    a.coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0f64, f64::max)
}

/// Random piecewise-linear path in `R^dim`: `segments + 1` vertices with
/// coordinates stepped by increments uniform in [-1, 1].
pub fn random_vertices(rng: &mut StdRng, dim: usize, segments: usize) -> Vec<Vec<f64>> {
    let mut v = vec![vec![0.0; dim]];
    for _ in 0..segments {
        let last = v.last().unwrap().clone();
        v.push(
            last.iter()
                .map(|c| c + rng.random_range(-1.0..1.0))
                .collect(),
        );
    }
    v
}

/// Random dense functional with coefficients uniform in [-1, 1].
pub fn random_functional(rng: &mut StdRng, dim: usize, order: usize) -> LinearFunctional {
    let n = sigprice::tensor::dimension(dim, order);
    let coeffs = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    LinearFunctional::from_coeffs(dim, order, coeffs).unwrap()
}

pub fn seeded(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}
