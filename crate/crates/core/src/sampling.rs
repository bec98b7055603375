//! Latin hypercube sampling.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::substream;

/// `n` points in `[0, 1)^d` with exactly one point per interval
/// `[k/n, (k+1)/n)` in every coordinate.
pub fn lhs(n: usize, d: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 || d == 0 {
        return Err(Error::invalid(format!("lhs needs n >= 1 and d >= 1, got n={n}, d={d}")));
    }
    let mut rng = substream(seed, "lhs", 0);
    let mut points = vec![vec![0.0; d]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    let scale = n as f64;
    for j in 0..d {
        strata.shuffle(&mut rng);
        for (p, &k) in points.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            // Guard against rounding pushing the point into the next stratum.
            p[j] = ((k as f64 + u) / scale).min((k as f64 + 1.0) / scale - f64::EPSILON);
        }
    }
    Ok(points)
}

/// Maps unit-cube samples into per-dimension `[lo, hi]` bounds.
pub fn scale_to_bounds(points: &mut [Vec<f64>], bounds: &[(f64, f64)]) {
    for p in points {
        for (x, &(lo, hi)) in p.iter_mut().zip(bounds) {
            *x = lo + *x * (hi - lo);
        }
    }
}
