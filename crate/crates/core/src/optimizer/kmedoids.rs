//! K-medoids clustering: alternating assign/update from a seeded random
//! start, followed by an eager swap phase until no swap lowers the cost.

use rand::seq::index::sample;

use crate::composition::{euclidean, DesignSpace};
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::substream;

const MAX_ALTERNATIONS: usize = 100;

/// Total distance from every point to its nearest medoid.
pub fn medoid_cost<D>(points: &[Vec<f64>], medoids: &[usize], distance: &D) -> f64
where
    D: Fn(&[f64], &[f64]) -> f64,
{
    points
        .iter()
        .map(|p| {
            medoids
                .iter()
                .map(|&m| distance(p, &points[m]))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Nearest and second-nearest medoid slot and distance for one point.
#[derive(Clone, Copy)]
struct Near {
    slot: usize,
    d1: f64,
    d2: f64,
}

fn nearest<D>(p: &[f64], points: &[Vec<f64>], medoids: &[usize], distance: &D) -> Near
where
    D: Fn(&[f64], &[f64]) -> f64,
{
    let mut n = Near {
        slot: 0,
        d1: f64::INFINITY,
        d2: f64::INFINITY,
    };
    for (s, &m) in medoids.iter().enumerate() {
        let d = distance(p, &points[m]);
        if d < n.d1 {
            n.d2 = n.d1;
            n.d1 = d;
            n.slot = s;
        } else if d < n.d2 {
            n.d2 = d;
        }
    }
    n
}

/// `k` medoid indices into `points`, in ascending order.
pub fn k_medoids<D>(points: &[Vec<f64>], k: usize, seed: u64, distance: D) -> Result<Vec<usize>>
where
    D: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k_medoids needs 1 <= k <= {n}, got k={k}")));
    }
    if k == n {
        return Ok((0..n).collect());
    }
    let mut rng = substream(seed, "kmedoids", 0);
    let mut medoids: Vec<usize> = sample(&mut rng, n, k).into_vec();
    medoids.sort_unstable();

    // Alternate: assign to nearest medoid, move each medoid to the member
    // minimizing within-cluster distance.
    for _ in 0..MAX_ALTERNATIONS {
        let near = exec::map_slice(points, |p| nearest(p, points, &medoids, &distance).slot);
        let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, s) in near.into_iter().enumerate() {
            clusters[s].push(i);
        }
        let current = medoids.clone();
        let updated: Vec<usize> = exec::map_range(k, |s| {
            let members = &clusters[s];
            // An empty cluster keeps its medoid.
            let mut best = (f64::INFINITY, current[s]);
            for &c in members.iter() {
                let cost: f64 = members.iter().map(|&o| distance(&points[o], &points[c])).sum();
                if cost < best.0 || (cost == best.0 && c < best.1) {
                    best = (cost, c);
                }
            }
            best.1
        });
        let changed = updated.iter().zip(&medoids).any(|(a, b)| a != b);
        medoids = updated;
        if !changed {
            break;
        }
    }

    // Swap phase. For each non-medoid candidate the change in cost for
    // every medoid removal is accumulated in one pass over the points.
    let mut is_medoid = vec![false; n];
    for &m in &medoids {
        is_medoid[m] = true;
    }
    // A kept medoid can be claimed by another cluster; refill duplicates.
    let mut seen = vec![false; n];
    let mut spare = 0;
    for m in medoids.iter_mut() {
        if seen[*m] {
            while is_medoid[spare] {
                spare += 1;
            }
            *m = spare;
            is_medoid[spare] = true;
        }
        seen[*m] = true;
    }
    let mut near = exec::map_slice(points, |p| nearest(p, points, &medoids, &distance));
    let mut total: f64 = near.iter().map(|x| x.d1).sum();
    let mut since_improvement = 0;
    let mut c = 0;
    while since_improvement < n {
        if !is_medoid[c] {
            let mut delta = vec![0.0; k];
            for x in &near {
                delta[x.slot] += x.d2 - x.d1;
            }
            let mut shared = 0.0;
            for (o, x) in near.iter().enumerate() {
                let d = distance(&points[o], &points[c]);
                if d < x.d1 {
                    shared += d - x.d1;
                    delta[x.slot] += x.d1 - x.d2;
                } else if d < x.d2 {
                    delta[x.slot] += d - x.d2;
                }
            }
            let (slot, best) = delta
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (s, &v)| if v < acc.1 { (s, v) } else { acc });
            let change = best + shared;
            if change < -1e-12 * (1.0 + total.abs()) {
                is_medoid[medoids[slot]] = false;
                is_medoid[c] = true;
                medoids[slot] = c;
                near = exec::map_slice(points, |p| nearest(p, points, &medoids, &distance));
                total = near.iter().map(|x| x.d1).sum();
                since_improvement = 0;
            }
        }
        since_improvement += 1;
        c = (c + 1) % n;
    }
    medoids.sort_unstable();
    Ok(medoids)
}

/// K-medoids over the member fraction vectors of a design space.
pub fn seed_batch(space: &DesignSpace, k: usize, seed: u64) -> Result<Vec<usize>> {
    seed_from(space, &(0..space.len()).collect::<Vec<_>>(), k, seed)
}

/// K-medoids restricted to `subset`; returns space indices.
pub fn seed_from(space: &DesignSpace, subset: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    let points: Vec<Vec<f64>> = subset.iter().map(|&i| space.fractions(i)).collect();
    let local = k_medoids(&points, k, seed, euclidean)?;
    Ok(local.into_iter().map(|i| subset[i]).collect())
}
