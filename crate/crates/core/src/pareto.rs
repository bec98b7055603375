//! Pareto dominance, fronts, hypervolume and hypervolume improvement.
//!
//! All objective vectors are in minimization form.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::rng::substream;

/// Reference coordinate used after normalization to `[0, 1]`.
pub const NORMALIZED_REFERENCE: f64 = 1.1;

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "objective vectors have dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    check_dims(a, b)?;
    Ok(dominates_unchecked(a, b))
}

#[inline]
pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        strict |= x < y;
    }
    strict
}

#[inline]
fn weakly_dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub points: Vec<Vec<f64>>,
    /// Position of each front point in the input sequence.
    pub origins: Vec<usize>,
}

impl ParetoFront {
    pub fn empty() -> Self {
        ParetoFront {
            points: Vec::new(),
            origins: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Non-dominated subset; exact duplicates keep their first occurrence.
pub fn pareto_front(points: &[Vec<f64>]) -> Result<ParetoFront> {
    let first = points
        .first()
        .ok_or_else(|| Error::invalid("pareto_front needs at least one point"))?;
    let d = first.len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::invalid("points have inconsistent dimensions"));
    }
    let mut front = ParetoFront::empty();
    for (i, p) in points.iter().enumerate() {
        let beaten = points
            .iter()
            .enumerate()
            .any(|(j, q)| dominates_unchecked(q, p) || (j < i && q == p));
        if !beaten {
            front.points.push(p.clone());
            front.origins.push(i);
        }
    }
    Ok(front)
}

fn check_reference(points: &[Vec<f64>], reference: &[f64]) -> Result<()> {
    if reference.is_empty() || reference.iter().any(|r| !r.is_finite()) {
        return Err(Error::invalid("reference point must be nonempty and finite"));
    }
    for p in points {
        check_dims(p, reference)?;
        if p.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("objective vector contains NaN"));
        }
    }
    Ok(())
}

/// Exact dominated volume inside the reference box. Points that are not
/// strictly better than the reference in every coordinate add nothing.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    check_reference(points, reference)?;
    let d = reference.len();
    let mut flat = Vec::with_capacity(points.len() * d);
    for p in points {
        if p.iter().zip(reference).all(|(v, r)| v < r) {
            flat.extend_from_slice(p);
        }
    }
    let flat = nondominated_flat(&flat, d);
    Ok(wfg(flat, d, reference))
}

fn box_volume(p: &[f64], r: &[f64]) -> f64 {
    p.iter().zip(r).map(|(v, r)| r - v).product()
}

/// Filters a flat point buffer down to non-dominated, de-duplicated rows.
fn nondominated_flat(pts: &[f64], d: usize) -> Vec<f64> {
    let n = pts.len() / d;
    let row = |i: usize| &pts[i * d..(i + 1) * d];
    let mut out = Vec::with_capacity(pts.len());
    for i in 0..n {
        let p = row(i);
        let beaten = (0..n).any(|j| {
            let q = row(j);
            dominates_unchecked(q, p) || (j < i && q == p)
        });
        if !beaten {
            out.extend_from_slice(p);
        }
    }
    out
}

/// WFG exclusive-contribution recursion over a non-dominated set.
fn wfg(mut pts: Vec<f64>, d: usize, r: &[f64]) -> f64 {
    let n = pts.len() / d;
    match n {
        0 => return 0.0,
        1 => return box_volume(&pts, r),
        _ => {}
    }
    if d == 1 {
        return r[0] - pts.iter().copied().fold(f64::INFINITY, f64::min);
    }
    if d == 2 {
        return sweep2(&mut pts, r);
    }
    // Sorting by the last objective keeps the limited sets small.
    let mut rows: Vec<&[f64]> = pts.chunks_exact(d).collect();
    rows.sort_by(|a, b| b[d - 1].total_cmp(&a[d - 1]));
    let mut total = 0.0;
    let mut limited = Vec::new();
    for (i, p) in rows.iter().enumerate() {
        limited.clear();
        for q in &rows[i + 1..] {
            limited.extend(p.iter().zip(q.iter()).map(|(a, b)| a.max(*b)));
        }
        let nd = nondominated_flat(&limited, d);
        total += box_volume(p, r) - wfg(nd, d, r);
    }
    total
}

fn sweep2(pts: &mut [f64], r: &[f64]) -> f64 {
    let mut rows: Vec<(f64, f64)> = pts.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut area = 0.0;
    let mut floor = r[1];
    for (x, y) in rows {
        if y < floor {
            area += (r[0] - x) * (floor - y);
            floor = y;
        }
    }
    area
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

const CHUNK: usize = 1024;

/// Uniform Monte-Carlo estimate of the dominated volume, sampling the box
/// between the componentwise minimum of the points and the reference.
pub fn hypervolume_mc(points: &[Vec<f64>], reference: &[f64], n_samples: usize, seed: u64) -> Result<Estimate> {
    check_reference(points, reference)?;
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let inside: Vec<&Vec<f64>> = points
        .iter()
        .filter(|p| p.iter().zip(reference).all(|(v, r)| v < r))
        .collect();
    if inside.is_empty() {
        return Ok(Estimate { mean: 0.0, std_error: 0.0 });
    }
    let d = reference.len();
    let lo: Vec<f64> = (0..d)
        .map(|j| inside.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let vol = box_volume(&lo, reference);
    let chunks = n_samples.div_ceil(CHUNK);
    let hits: usize = exec::map_range(chunks, |c| {
        let mut rng = substream(seed, "hv-mc", c as u64);
        let count = CHUNK.min(n_samples - c * CHUNK);
        let mut y = vec![0.0; d];
        let mut hits = 0;
        for _ in 0..count {
            for (j, v) in y.iter_mut().enumerate() {
                *v = lo[j] + rng.random::<f64>() * (reference[j] - lo[j]);
            }
            if inside.iter().any(|p| weakly_dominates(p, &y)) {
                hits += 1;
            }
        }
        hits
    })
    .into_iter()
    .sum();
    let p = hits as f64 / n_samples as f64;
    Ok(Estimate {
        mean: vol * p,
        std_error: vol * (p * (1.0 - p) / n_samples as f64).sqrt(),
    })
}

/// `HV(front ∪ {x}) − HV(front)`.
pub fn hvi(x: &[f64], front: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    check_reference(front, reference)?;
    check_dims(x, reference)?;
    let flat: Vec<f64> = front.iter().flatten().copied().collect();
    Ok(hvi_flat(x, &flat, reference, &mut Vec::new()))
}

/// HVI against a flat front buffer. `scratch` is reused across calls.
pub(crate) fn hvi_flat(x: &[f64], front: &[f64], r: &[f64], scratch: &mut Vec<f64>) -> f64 {
    let d = r.len();
    if x.iter().zip(r).any(|(v, r)| !(v < r)) {
        return 0.0;
    }
    if front.chunks_exact(d).any(|q| weakly_dominates(q, x)) {
        return 0.0;
    }
    scratch.clear();
    for q in front.chunks_exact(d) {
        if q.iter().zip(r).all(|(v, r)| v < r) {
            scratch.extend(q.iter().zip(x).map(|(a, b)| a.max(*b)));
        }
    }
    let nd = nondominated_flat(scratch, d);
    (box_volume(x, r) - wfg(nd, d, r)).max(0.0)
}

/// Monte-Carlo expected HVI under independent normal marginals.
pub fn ehvi_mc(
    means: &[f64],
    variances: &[f64],
    front: &[Vec<f64>],
    reference: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    check_reference(front, reference)?;
    check_dims(means, reference)?;
    check_dims(variances, reference)?;
    if variances.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("posterior variances must be nonnegative"));
    }
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let flat: Vec<f64> = front.iter().flatten().copied().collect();
    let sd: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    Ok(ehvi_flat(means, &sd, &flat, reference, n_samples, seed))
}

pub(crate) fn ehvi_flat(means: &[f64], sd: &[f64], front: &[f64], r: &[f64], n_samples: usize, seed: u64) -> Estimate {
    let d = r.len();
    if sd.iter().all(|s| *s == 0.0) {
        return Estimate {
            mean: hvi_flat(means, front, r, &mut Vec::new()),
            std_error: 0.0,
        };
    }
    let chunks = n_samples.div_ceil(CHUNK);
    let sums = exec::map_range(chunks, |c| {
        let mut rng = substream(seed, "ehvi", c as u64);
        let count = CHUNK.min(n_samples - c * CHUNK);
        let mut y = vec![0.0; d];
        let mut scratch = Vec::new();
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..count {
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                y[j] = means[j] + sd[j] * z;
            }
            let h = hvi_flat(&y, front, r, &mut scratch);
            s1 += h;
            s2 += h * h;
        }
        (s1, s2)
    });
    let (s1, s2) = sums.into_iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = n_samples as f64;
    let mean = s1 / n;
    let var = if n_samples > 1 {
        ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Estimate {
        mean,
        std_error: (var / n).sqrt(),
    }
}

/// Affine map of each objective onto `[0, 1]` using observed extremes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Normalizer {
    pub fn fit(observations: &[Vec<f64>]) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| Error::invalid("normalization needs at least one observation"))?;
        let mut lo = first.clone();
        let mut hi = first.clone();
        for o in observations {
            check_dims(o, first)?;
            for j in 0..o.len() {
                lo[j] = lo[j].min(o[j]);
                hi[j] = hi[j].max(o[j]);
            }
        }
        Ok(Normalizer { lo, hi })
    }

    fn span(&self, j: usize) -> f64 {
        let s = self.hi[j] - self.lo[j];
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(j, x)| (x - self.lo[j]) / self.span(j))
            .collect()
    }

    pub fn apply_variance(&self, var: &[f64]) -> Vec<f64> {
        var.iter()
            .enumerate()
            .map(|(j, v)| v / (self.span(j) * self.span(j)))
            .collect()
    }

    pub fn reference(&self) -> Vec<f64> {
        vec![NORMALIZED_REFERENCE; self.lo.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn v(a: &[f64]) -> Vec<f64> {
        a.to_vec()
    }

    #[test]
    fn dominance() {
        assert!(dominates(&[1.0, 1.0], &[2.0, 2.0]).unwrap());
        assert!(!dominates(&[1.0, 2.0], &[2.0, 1.0]).unwrap());
        assert!(!dominates(&[2.0, 1.0], &[1.0, 2.0]).unwrap());
        assert!(!dominates(&[1.0, 1.0], &[1.0, 1.0]).unwrap());
        assert!(dominates(&[1.0, 1.0], &[1.0, 2.0]).unwrap());
        assert!(dominates(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn front_examples() {
        let f = pareto_front(&[v(&[1.0, 2.0]), v(&[2.0, 1.0]), v(&[2.0, 2.0])]).unwrap();
        assert_eq!(f.points, vec![v(&[1.0, 2.0]), v(&[2.0, 1.0])]);
        assert_eq!(f.origins, vec![0, 1]);
        let f = pareto_front(&vec![v(&[3.0, 3.0]); 4]).unwrap();
        assert_eq!(f.points.len(), 1);
        assert_eq!(f.origins, vec![0]);
        assert!(pareto_front(&[]).is_err());
    }

    #[test]
    fn front_matches_all_pairs_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..3).map(|_| rng.random_range(0..10) as f64).collect())
            .collect();
        let f = pareto_front(&pts).unwrap();
        let mut oracle = Vec::new();
        for (i, p) in pts.iter().enumerate() {
            let mut keep = true;
            for (j, q) in pts.iter().enumerate() {
                let le = q.iter().zip(p).all(|(a, b)| a <= b);
                let lt = q.iter().zip(p).any(|(a, b)| a < b);
                if (le && lt) || (j < i && q == p) {
                    keep = false;
                }
            }
            if keep {
                oracle.push(i);
            }
        }
        assert_eq!(f.origins, oracle);
    }

    #[test]
    fn hypervolume_examples() {
        assert_eq!(hypervolume(&[v(&[1.0, 1.0])], &[2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(hypervolume(&[v(&[1.0, 3.0]), v(&[3.0, 1.0])], &[4.0, 4.0]).unwrap(), 5.0);
        assert_eq!(hypervolume(&[], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(hypervolume(&[v(&[2.0, 0.0])], &[2.0, 2.0]).unwrap(), 0.0);
        assert!(hypervolume(&[v(&[1.0])], &[2.0, 2.0]).is_err());
        assert!(hypervolume(&[v(&[1.0, 1.0])], &[f64::NAN, 2.0]).is_err());
    }

    #[test]
    fn hypervolume_3d_inclusion_exclusion() {
        // Two boxes of volume 8 and 4 sharing a 2x1x1... computed by hand:
        // a=(0,0,1) box 2*2*1=4, b=(1,1,0) box 1*1*2=2, overlap (1,1,1) box 1.
        let h = hypervolume(&[v(&[0.0, 0.0, 1.0]), v(&[1.0, 1.0, 0.0])], &[2.0, 2.0, 2.0]).unwrap();
        assert!((h - 5.0).abs() < 1e-15);
    }

    #[test]
    fn exact_vs_monte_carlo_3d() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let pts: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let r = [1.0, 1.0, 1.0];
        let exact = hypervolume(&pts, &r).unwrap();
        let mc = hypervolume_mc(&pts, &r, 1_000_000, 2).unwrap();
        assert!((mc.mean - exact).abs() / exact < 0.01, "{} vs {exact}", mc.mean);
    }

    /// Counts centres of a regular grid that some point weakly dominates.
    fn grid_count(pts: &[Vec<f64>], r: &[f64], cells: usize) -> f64 {
        let d = r.len();
        let h = 1.0 / cells as f64;
        let total = cells.pow(d as u32);
        let mut hits = 0usize;
        let mut y = vec![0.0; d];
        for idx in 0..total {
            let mut k = idx;
            for item in y.iter_mut().take(d) {
                *item = (k % cells) as f64 * h + h / 2.0;
                k /= cells;
            }
            if pts.iter().any(|p| p.iter().zip(&y).all(|(a, b)| a <= b)) {
                hits += 1;
            }
        }
        let _ = r;
        hits as f64 * h.powi(d as i32)
    }

    #[test]
    fn exact_vs_grid_counting() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for d in [2usize, 3] {
            let cells = if d == 2 { 100 } else { 50 };
            for _ in 0..3 {
                let pts: Vec<Vec<f64>> = (0..6).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
                let r = vec![1.0; d];
                let exact = hypervolume(&pts, &r).unwrap();
                let grid = grid_count(&pts, &r, cells);
                let cell = (1.0 / cells as f64).powi(d as i32);
                let surface = 2 * d * cells.pow(d as u32 - 1) * pts.len();
                assert!((exact - grid).abs() <= cell * surface as f64, "{exact} vs {grid}");
            }
        }
    }

    #[test]
    fn hvi_examples() {
        let front = [v(&[1.0, 1.0])];
        let r = [2.0, 2.0];
        assert_eq!(hvi(&[1.5, 1.5], &front, &r).unwrap(), 0.0);
        assert_eq!(hvi(&[1.0, 1.0], &front, &r).unwrap(), 0.0);
        assert!((hvi(&[0.5, 0.5], &front, &r).unwrap() - 1.25).abs() < 1e-15);
        assert_eq!(hvi(&[0.5, 0.5], &[], &r).unwrap(), 2.25);
        assert_eq!(hvi(&[2.5, 0.5], &front, &r).unwrap(), 0.0);
    }

    #[test]
    fn ehvi_degenerate() {
        let front = [v(&[1.0, 1.0])];
        let r = [2.0, 2.0];
        let e = ehvi_mc(&[0.5, 0.5], &[0.0, 0.0], &front, &r, 10, 1).unwrap();
        assert_eq!(e.mean, hvi(&[0.5, 0.5], &front, &r).unwrap());
        let e = ehvi_mc(&[1.5, 1.5], &[1e-12, 1e-12], &front, &r, 1000, 1).unwrap();
        assert!(e.mean < 1e-9);
        assert!(ehvi_mc(&[0.5, 0.5], &[-1.0, 0.0], &front, &r, 10, 1).is_err());
        assert!(ehvi_mc(&[0.5, 0.5], &[0.1, 0.1], &front, &r, 0, 1).is_err());
    }

    fn hvi_closed_form(y1: f64, y2: f64) -> f64 {
        if y1 >= 2.0 || y2 >= 2.0 {
            return 0.0;
        }
        let outer = (2.0 - y1) * (2.0 - y2);
        let inner = (2.0 - y1.max(1.0)) * (2.0 - y2.max(1.0));
        outer - inner
    }

    #[test]
    fn ehvi_matches_quadrature() {
        let (mu, s) = (0.5, 0.1);
        let n = 400;
        let (lo, hi) = (mu - 6.0 * s, mu + 6.0 * s);
        let h = (hi - lo) / n as f64;
        let pdf = |y: f64| (-(y - mu) * (y - mu) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        let mut quad = 0.0;
        for i in 0..n {
            let y1 = lo + (i as f64 + 0.5) * h;
            for j in 0..n {
                let y2 = lo + (j as f64 + 0.5) * h;
                quad += hvi_closed_form(y1, y2) * pdf(y1) * pdf(y2) * h * h;
            }
        }
        let e = ehvi_mc(&[mu, mu], &[s * s, s * s], &[v(&[1.0, 1.0])], &[2.0, 2.0], 100_000, 3).unwrap();
        assert!((e.mean - quad).abs() / quad < 0.02, "{} vs {quad}", e.mean);
        assert!(e.std_error > 0.0 && e.std_error < 0.01);
        let again = ehvi_mc(&[mu, mu], &[s * s, s * s], &[v(&[1.0, 1.0])], &[2.0, 2.0], 100_000, 3).unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn normalizer() {
        let n = Normalizer::fit(&[v(&[1.0, 5.0]), v(&[3.0, 5.0])]).unwrap();
        assert_eq!(n.apply(&[2.0, 5.0]), vec![0.5, 0.0]);
        assert_eq!(n.apply_variance(&[4.0, 1.0]), vec![1.0, 1.0]);
        assert_eq!(n.reference(), vec![1.1, 1.1]);
    }

    fn pts_strategy(d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, d), 1..8)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn hv_monotone_and_hvi_consistent(pts in pts_strategy(3), x in proptest::collection::vec(0.0f64..1.2, 3)) {
            let r = [1.1, 1.1, 1.1];
            let base = hypervolume(&pts, &r).unwrap();
            let mut with = pts.clone();
            with.push(x.clone());
            let grown = hypervolume(&with, &r).unwrap();
            prop_assert!(grown >= base - 1e-12);
            let inc = hvi(&x, &pts, &r).unwrap();
            prop_assert!(inc >= 0.0);
            prop_assert!((inc - (grown - base)).abs() < 1e-9);
            let inside = x.iter().all(|v| *v < 1.1);
            let dominated = pts.iter().any(|p| p.iter().zip(&x).all(|(a, b)| a <= b));
            prop_assert_eq!(inc > 0.0, inside && !dominated);
        }

        #[test]
        fn dominated_point_leaves_hv_unchanged(pts in pts_strategy(4), bump in proptest::collection::vec(0.0f64..0.1, 4)) {
            let r = [1.2; 4];
            let base = hypervolume(&pts, &r).unwrap();
            let mut with = pts.clone();
            with.push(pts[0].iter().zip(&bump).map(|(a, b)| a + b).collect());
            prop_assert_eq!(hypervolume(&with, &r).unwrap(), base);
        }

        #[test]
        fn translation_invariance(pts in pts_strategy(3), shift in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let r = [1.1, 1.1, 1.1];
            let moved: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
            let rm: Vec<f64> = r.iter().zip(&shift).map(|(a, b)| a + b).collect();
            let a = hypervolume(&pts, &r).unwrap();
            let b = hypervolume(&moved, &rm).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a));
        }
    }
}
