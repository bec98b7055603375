mod common;

use std::collections::HashSet;

use common::benchmark_fraction;
use riskforge::campaign::{run_to_dir, Campaign, CampaignConfig, Scenario, LOG_FILE};
use riskforge::gp::GpConfig;
use riskforge::optimizer::{Event, Observation, Problem, Resume};

#[test]
fn concave_benchmark_reaches_ninety_percent() {
    for seed in [1, 2] {
        let (frac, iterations) = benchmark_fraction(seed);
        assert!(iterations <= 10);
        assert!(frac >= 0.9, "seed {seed}: {frac}");
    }
}

fn small_config(scenario: Scenario, seed: u64) -> CampaignConfig {
    let mut c = CampaignConfig {
        scenario,
        seed,
        batch_size: 4,
        max_iterations: 3,
        ehvi_samples: 32,
        convergence_threshold: 0.001,
        gp: GpConfig {
            ensemble_size: 8,
            ..GpConfig::default()
        },
        ..CampaignConfig::default()
    };
    c.space.step = 0.25;
    c.space.min_active = 1;
    c.oracles.thresholds.melting_point_c = 2500.0;
    c
}

#[test]
fn scenario_invariants() {
    let mut dims = Vec::new();
    for scenario in Scenario::ALL {
        let camp = Campaign::prepare(small_config(scenario, 11), None).unwrap();
        let mut obs: Vec<Observation> = Vec::new();
        let out = camp
            .run(Resume::default(), &mut |e| {
                if let Event::Observed(o) = e {
                    obs.push(o.clone());
                }
                Ok(())
            })
            .unwrap();
        let unique: HashSet<usize> = obs.iter().map(|o| o.index).collect();
        assert_eq!(unique.len(), obs.len());
        for w in out.hv_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{scenario}: {:?}", out.hv_trace);
        }
        if scenario.feasible_only() {
            assert!(camp.pool.len() < camp.space.len());
            assert!(obs.iter().all(|o| o.evaluation.constraints.unwrap().feasible));
        }
        assert!(out.front.iter().all(|i| unique.contains(i)));
        dims.push(obs[0].evaluation.objectives.len());
    }
    assert_eq!(dims[1], dims[0] + 1);
    assert_eq!(dims[3], dims[2] + 1);
}

#[test]
fn seven_batches_of_ten_is_seventy_alloys() {
    let mut c = small_config(Scenario::DesignPerf, 4);
    c.batch_size = 10;
    c.max_iterations = 7;
    c.convergence_threshold = 1e-9;
    c.space.step = 0.1;
    c.objectives.truncate(2);
    c.gp.ensemble_size = 4;
    c.ehvi_samples = 8;
    let camp = Campaign::prepare(c, None).unwrap();
    let mut n = 0;
    let out = camp
        .run(Resume::default(), &mut |e| {
            n += matches!(e, Event::Observed(_)) as usize;
            Ok(())
        })
        .unwrap();
    if !out.converged {
        assert_eq!(out.iterations, 7);
        assert_eq!(n, 70);
    }
}

#[test]
fn logs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let camp = Campaign::prepare(small_config(Scenario::FeasiblePerfSr, 3), None).unwrap();
    run_to_dir(&camp, &dir.path().join("a"), false).unwrap();
    run_to_dir(&camp, &dir.path().join("b"), false).unwrap();
    let a = std::fs::read(dir.path().join("a").join(LOG_FILE)).unwrap();
    let b = std::fs::read(dir.path().join("b").join(LOG_FILE)).unwrap();
    assert_eq!(a, b);
    for name in ["pareto.csv", "strength_cost.csv", "signature.csv", "hv_trace.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(name)).unwrap(),
            std::fs::read(dir.path().join("b").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn report_matches_oracles() {
    let dir = tempfile::tempdir().unwrap();
    let camp = Campaign::prepare(small_config(Scenario::DesignPerfSr, 8), None).unwrap();
    let result = run_to_dir(&camp, dir.path(), false).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("pareto.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let cost_col = headers.iter().position(|h| h == "cost_usd_per_kg").unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let i: usize = rec[0].parse().unwrap();
        let cost: f64 = rec[cost_col].parse().unwrap();
        assert_eq!(cost, camp.oracles.cost(&camp.space.get(i)).unwrap());
        rows += 1;
    }
    assert_eq!(rows, result.front().len());

    let mut rdr = csv::Reader::from_path(dir.path().join("signature.csv")).unwrap();
    let sig: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert!((sig.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    for (e, s) in sig.iter().enumerate() {
        let expect: f64 =
            result.front().iter().map(|&i| camp.features(i)[e]).sum::<f64>() / result.front().len() as f64;
        assert!((s - expect).abs() < 1e-12);
    }
}
