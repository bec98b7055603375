//! Batch selection by expected hypervolume improvement.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::gp::GpModel;
use crate::pareto::{ehvi_flat, Estimate, Normalizer};
use crate::rng::derive_seed;

/// Per-candidate posterior in normalized minimization space.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Posterior of every model at every input, mapped through `normalizer`.
pub fn predict(models: &[GpModel], inputs: &[&[f64]], normalizer: &Normalizer) -> Vec<Prediction> {
    exec::map_slice(inputs, |x| {
        let (mean, var): (Vec<f64>, Vec<f64>) = models.iter().map(|m| m.posterior(x)).unzip();
        Prediction {
            mean: normalizer.apply(&mean),
            sd: normalizer.apply_variance(&var).into_iter().map(f64::sqrt).collect(),
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchStrategy {
    /// Pick the best candidate, add its posterior mean to the front, repeat.
    #[default]
    GreedyBeliever,
    /// Top `q` candidates by EHVI against the unaugmented front.
    IndependentTopQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    pub index: usize,
    pub ehvi: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub picks: Vec<Pick>,
    /// Set when the pool held fewer than `q` candidates.
    pub short_pool: bool,
}

impl Selection {
    pub fn indices(&self) -> Vec<usize> {
        self.picks.iter().map(|p| p.index).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionSettings {
    pub q: usize,
    pub samples: usize,
    pub seed: u64,
    pub strategy: BatchStrategy,
}

/// Heap entry ordered by score, then lowest candidate index.
struct Entry {
    score: f64,
    index: usize,
    pos: usize,
    round: usize,
    estimate: Estimate,
}

impl PartialEq for Entry {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        self.score.total_cmp(&o.score).then(o.index.cmp(&self.index))
    }
}

/// Chooses up to `q` candidates from `pool` (candidate indices, with
/// `predictions` aligned to it). Each candidate's Monte-Carlo stream depends
/// only on the seed and its index, so scores are comparable across steps.
///
/// The greedy strategy evaluates lazily: adding a point to the front can
/// only lower a candidate's expected improvement, so a stale score is an
/// upper bound and only the top of the queue needs re-scoring.
pub fn select_batch(
    pool: &[usize],
    predictions: &[Prediction],
    front: &[Vec<f64>],
    reference: &[f64],
    settings: &AcquisitionSettings,
) -> Result<Selection> {
    if pool.is_empty() {
        return Err(Error::ExhaustedPool);
    }
    if pool.len() != predictions.len() {
        return Err(Error::invalid("pool and predictions differ in length"));
    }
    if settings.q == 0 || settings.samples == 0 {
        return Err(Error::invalid("batch size and sample count must be at least 1"));
    }
    let d = reference.len();
    if front.iter().any(|p| p.len() != d) || predictions.iter().any(|p| p.mean.len() != d || p.sd.len() != d) {
        return Err(Error::invalid("objective dimensions do not match the reference point"));
    }
    let short_pool = pool.len() < settings.q;
    if short_pool {
        log::warn!("pool holds {} candidates, fewer than batch size {}", pool.len(), settings.q);
    }
    let q = settings.q.min(pool.len());
    let mut flat: Vec<f64> = front.iter().flatten().copied().collect();
    let score = |pos: usize, flat: &[f64]| {
        let p = &predictions[pos];
        let seed = derive_seed(settings.seed, "ehvi-candidate", pool[pos] as u64);
        ehvi_flat(&p.mean, &p.sd, flat, reference, settings.samples, seed)
    };

    let initial = exec::map_range(pool.len(), |pos| score(pos, &flat));
    let mut heap: BinaryHeap<Entry> = initial
        .into_iter()
        .enumerate()
        .map(|(pos, estimate)| Entry {
            score: estimate.mean,
            index: pool[pos],
            pos,
            round: 0,
            estimate,
        })
        .collect();

    let mut picks = Vec::with_capacity(q);
    let mut round = 0;
    while picks.len() < q {
        let Some(top) = heap.pop() else { break };
        if settings.strategy == BatchStrategy::GreedyBeliever && top.round != round {
            let estimate = score(top.pos, &flat);
            heap.push(Entry {
                score: estimate.mean,
                round,
                estimate,
                ..top
            });
            continue;
        }
        picks.push(Pick {
            index: top.index,
            ehvi: top.estimate.mean,
            std_error: top.estimate.std_error,
        });
        if settings.strategy == BatchStrategy::GreedyBeliever {
            flat.extend_from_slice(&predictions[top.pos].mean);
            round += 1;
        }
    }
    Ok(Selection { picks, short_pool })
}

/// True once the latest relative hypervolume gain drops below `threshold`.
pub fn check_convergence(hv_history: &[f64], threshold: f64) -> bool {
    match hv_history {
        [.., prev, last] => (last - prev) / prev.max(1e-12) < threshold,
        _ => false,
    }
}
