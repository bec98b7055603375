//! The batch Bayesian optimization loop over a finite candidate pool.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::acquisition::{check_convergence, predict, select_batch, AcquisitionSettings, BatchStrategy, Pick};
use super::kmedoids::k_medoids;
use crate::composition::euclidean;
use crate::error::{Error, Result};
use crate::exec;
use crate::gp::{GpConfig, GpModel, MemberSummary};
use crate::pareto::{hypervolume, pareto_front, Normalizer};
use crate::properties::ConstraintReport;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopSettings {
    pub batch_size: usize,
    /// Number of evaluated batches, the seed batch included.
    pub max_iterations: usize,
    pub convergence_threshold: f64,
    pub seed: u64,
    pub ehvi_samples: usize,
    pub strategy: BatchStrategy,
    pub gp: GpConfig,
}

impl Default for LoopSettings {
    fn default() -> Self {
        LoopSettings {
            batch_size: 10,
            max_iterations: 10,
            convergence_threshold: 0.05,
            seed: 0,
            ehvi_samples: 128,
            strategy: BatchStrategy::GreedyBeliever,
            gp: GpConfig::default(),
        }
    }
}

impl LoopSettings {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.convergence_threshold > 0.0 && self.convergence_threshold < 1.0) {
            return Err(Error::Config(format!(
                "convergence_threshold must lie in (0, 1), got {}",
                self.convergence_threshold
            )));
        }
        if self.ehvi_samples == 0 {
            return Err(Error::Config("ehvi_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of evaluating one candidate with the true oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Minimization form.
    pub objectives: Vec<f64>,
    pub constraints: Option<ConstraintReport>,
    pub supply_risk: Option<f64>,
    pub cost: Option<f64>,
}

impl Evaluation {
    pub fn objectives_only(objectives: Vec<f64>) -> Self {
        Evaluation {
            objectives,
            constraints: None,
            supply_risk: None,
            cost: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub iteration: usize,
    pub index: usize,
    #[serde(flatten)]
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub evaluated: usize,
    /// Hypervolume after each iteration so far, all under the current
    /// normalization.
    pub hv_history: Vec<f64>,
    /// Candidate indices on the current front.
    pub front: Vec<usize>,
    /// Acquisition values of the batch evaluated in this iteration (empty
    /// for the seed batch).
    pub picks: Vec<Pick>,
    /// Surrogate hyperparameters used to choose this batch, per objective.
    pub surrogates: Vec<Vec<MemberSummary>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopOutcome {
    pub iterations: usize,
    pub converged: bool,
    pub exhausted: bool,
    pub hv_trace: Vec<f64>,
    pub front: Vec<usize>,
}

/// Records streamed while the loop runs.
pub enum Event<'a> {
    Observed(&'a Observation),
    Iteration(&'a IterationSummary),
}

/// A finite pool of candidates with feature vectors and a true evaluator.
pub trait Problem: Sync {
    /// Feature vector of candidate `index` (surrogate input).
    fn features(&self, index: usize) -> &[f64];
    fn evaluate(&self, index: usize) -> Result<Evaluation>;
}

/// State after the last complete iteration of an earlier run.
#[derive(Debug, Clone, Default)]
pub struct Resume {
    pub observations: Vec<Observation>,
    pub summaries: Vec<IterationSummary>,
}

fn hv_history(observations: &[Observation], iterations: usize) -> Result<(Normalizer, Vec<f64>)> {
    let all: Vec<Vec<f64>> = observations.iter().map(|o| o.evaluation.objectives.clone()).collect();
    let norm = Normalizer::fit(&all)?;
    let reference = norm.reference();
    let mut hist = Vec::with_capacity(iterations);
    for t in 1..=iterations {
        let pts: Vec<Vec<f64>> = observations
            .iter()
            .filter(|o| o.iteration <= t)
            .map(|o| norm.apply(&o.evaluation.objectives))
            .collect();
        hist.push(hypervolume(&pts, &reference)?);
    }
    Ok((norm, hist))
}

/// Runs seed batch, then fit / select / evaluate until the hypervolume gain
/// falls below the threshold, `max_iterations` batches have been evaluated,
/// or the pool runs out.
pub fn run_loop(
    problem: &dyn Problem,
    pool: &[usize],
    settings: &LoopSettings,
    resume: Resume,
    sink: &mut dyn FnMut(Event<'_>) -> Result<()>,
) -> Result<LoopOutcome> {
    settings.validate()?;
    if pool.is_empty() {
        return Err(Error::NoData("candidate pool is empty".into()));
    }
    let Resume {
        mut observations,
        mut summaries,
    } = resume;
    let mut seen: HashSet<usize> = observations.iter().map(|o| o.index).collect();
    let mut iteration = summaries.last().map_or(0, |s| s.iteration);
    let mut exhausted = false;
    let mut converged = summaries
        .last()
        .is_some_and(|s| check_convergence(&s.hv_history, settings.convergence_threshold));

    while !converged && iteration < settings.max_iterations {
        let next = iteration + 1;
        let remaining: Vec<usize> = pool.iter().copied().filter(|i| !seen.contains(i)).collect();
        if remaining.is_empty() {
            exhausted = true;
            break;
        }
        let (batch, picks, surrogates) = if iteration == 0 {
            let k = settings.batch_size.min(remaining.len());
            let feats: Vec<Vec<f64>> = remaining.iter().map(|&i| problem.features(i).to_vec()).collect();
            let local = k_medoids(&feats, k, derive_seed(settings.seed, "seed-batch", 0), euclidean)?;
            (local.into_iter().map(|i| remaining[i]).collect::<Vec<_>>(), Vec::new(), Vec::new())
        } else {
            propose(problem, &observations, &remaining, settings, next)?
        };
        if batch.len() < settings.batch_size {
            exhausted = true;
        }
        let evals = exec::try_map_range(batch.len(), |i| problem.evaluate(batch[i]))?;
        for (index, evaluation) in batch.iter().copied().zip(evals) {
            let obs = Observation {
                iteration: next,
                index,
                evaluation,
            };
            sink(Event::Observed(&obs))?;
            seen.insert(index);
            observations.push(obs);
        }
        iteration = next;
        let (norm, hist) = hv_history(&observations, iteration)?;
        let normalized: Vec<Vec<f64>> = observations.iter().map(|o| norm.apply(&o.evaluation.objectives)).collect();
        let front = pareto_front(&normalized)?;
        let summary = IterationSummary {
            iteration,
            evaluated: observations.len(),
            hv_history: hist,
            front: front.origins.iter().map(|&i| observations[i].index).collect(),
            picks,
            surrogates,
        };
        sink(Event::Iteration(&summary))?;
        converged = check_convergence(&summary.hv_history, settings.convergence_threshold);
        summaries.push(summary);
        if exhausted {
            break;
        }
    }
    let last = summaries
        .last()
        .ok_or_else(|| Error::NoData("campaign evaluated nothing".into()))?;
    Ok(LoopOutcome {
        iterations: iteration,
        converged,
        exhausted,
        hv_trace: last.hv_history.clone(),
        front: last.front.clone(),
    })
}

type Proposal = (Vec<usize>, Vec<Pick>, Vec<Vec<MemberSummary>>);

fn propose(
    problem: &dyn Problem,
    observations: &[Observation],
    remaining: &[usize],
    settings: &LoopSettings,
    iteration: usize,
) -> Result<Proposal> {
    let x: Vec<Vec<f64>> = observations.iter().map(|o| problem.features(o.index).to_vec()).collect();
    let n_obj = observations[0].evaluation.objectives.len();
    let models = exec::try_map_range(n_obj, |j| {
        let y: Vec<f64> = observations.iter().map(|o| o.evaluation.objectives[j]).collect();
        let config = GpConfig {
            seed: derive_seed(settings.seed, "gp", (iteration * 64 + j) as u64),
            ..settings.gp.clone()
        };
        GpModel::fit(&x, &y, &config)
    })?;
    let all: Vec<Vec<f64>> = observations.iter().map(|o| o.evaluation.objectives.clone()).collect();
    let norm = Normalizer::fit(&all)?;
    let normalized: Vec<Vec<f64>> = all.iter().map(|v| norm.apply(v)).collect();
    let front = pareto_front(&normalized)?;
    let inputs: Vec<&[f64]> = remaining.iter().map(|&i| problem.features(i)).collect();
    let predictions = predict(&models, &inputs, &norm);
    let acq = AcquisitionSettings {
        q: settings.batch_size,
        samples: settings.ehvi_samples,
        seed: derive_seed(settings.seed, "ehvi", iteration as u64),
        strategy: settings.strategy,
    };
    let selection = select_batch(remaining, &predictions, &front.points, &norm.reference(), &acq)?;
    let surrogates = models.iter().map(GpModel::summaries).collect();
    Ok((selection.indices(), selection.picks, surrogates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::lhs;

    /// Two objectives on [0,1]^2 with a concave front along x1 = 0.
    struct Toy {
        x: Vec<Vec<f64>>,
    }

    impl Problem for Toy {
        fn features(&self, index: usize) -> &[f64] {
            &self.x[index]
        }

        fn evaluate(&self, index: usize) -> Result<Evaluation> {
            let p = &self.x[index];
            let g = 1.0 + 9.0 * p[1];
            let f1 = p[0];
            Ok(Evaluation::objectives_only(vec![f1, g * (1.0 - (f1 / g).powi(2))]))
        }
    }

    fn toy(n: usize) -> Toy {
        Toy { x: lhs(n, 2, 1).unwrap() }
    }

    fn settings(seed: u64) -> LoopSettings {
        LoopSettings {
            batch_size: 5,
            max_iterations: 4,
            convergence_threshold: 1e-9,
            seed,
            ehvi_samples: 32,
            gp: GpConfig {
                ensemble_size: 4,
                ..GpConfig::default()
            },
            ..LoopSettings::default()
        }
    }

    fn run(problem: &Toy, pool: &[usize], s: &LoopSettings, resume: Resume) -> (LoopOutcome, Vec<Observation>, Vec<IterationSummary>) {
        let mut obs = resume.observations.clone();
        let mut sums = resume.summaries.clone();
        let out = run_loop(problem, pool, s, resume, &mut |e| {
            match e {
                Event::Observed(o) => obs.push(o.clone()),
                Event::Iteration(i) => sums.push(i.clone()),
            }
            Ok(())
        })
        .unwrap();
        (out, obs, sums)
    }

    #[test]
    fn evaluates_batch_times_iterations_without_repeats() {
        let p = toy(120);
        let pool: Vec<usize> = (0..120).collect();
        let (out, obs, sums) = run(&p, &pool, &settings(2), Resume::default());
        assert_eq!(out.iterations, 4);
        assert_eq!(obs.len(), 20);
        let unique: HashSet<usize> = obs.iter().map(|o| o.index).collect();
        assert_eq!(unique.len(), 20);
        for w in out.hv_trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert_eq!(sums.len(), 4);
        assert!(sums[0].picks.is_empty());
        assert_eq!(sums[1].picks.len(), 5);
        assert_eq!(sums[1].surrogates.len(), 2);
        assert!(out.front.iter().all(|i| unique.contains(i)));
    }

    #[test]
    fn deterministic() {
        let p = toy(80);
        let pool: Vec<usize> = (0..80).collect();
        let a = run(&p, &pool, &settings(9), Resume::default());
        let b = run(&p, &pool, &settings(9), Resume::default());
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let p = toy(80);
        let pool: Vec<usize> = (0..80).collect();
        let full = run(&p, &pool, &settings(5), Resume::default());
        let resume = Resume {
            observations: full.1.iter().filter(|o| o.iteration <= 2).cloned().collect(),
            summaries: full.2[..2].to_vec(),
        };
        let resumed = run(&p, &pool, &settings(5), resume);
        assert_eq!(resumed.1, full.1);
        assert_eq!(resumed.0, full.0);
    }

    #[test]
    fn pool_restriction_and_exhaustion() {
        let p = toy(100);
        let pool: Vec<usize> = (0..100).filter(|i| i % 10 == 0).collect();
        let (out, obs, _) = run(&p, &pool, &settings(1), Resume::default());
        assert!(obs.iter().all(|o| o.index % 10 == 0));
        assert_eq!(obs.len(), 10);
        assert!(out.exhausted);
        assert_eq!(out.iterations, 2);
    }

    #[test]
    fn converges_on_flat_improvement() {
        let p = toy(60);
        let pool: Vec<usize> = (0..60).collect();
        let s = LoopSettings {
            convergence_threshold: 0.99,
            max_iterations: 6,
            ..settings(3)
        };
        let (out, _, _) = run(&p, &pool, &s, Resume::default());
        assert!(out.converged);
        assert!(out.iterations < 6);
    }
}
