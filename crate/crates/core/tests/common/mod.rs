//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use riskforge::extraction::definition::load_dir;
use riskforge::extraction::{compute_indicator, DirFetcher, ExtractionConfig, IndicatorDefinition, IndicatorReport, KeywordRuleClassifier};
use riskforge::optimizer::{run_loop, Evaluation, Event, LoopSettings, Observation, Problem, Resume};
use riskforge::pareto::{hypervolume, Normalizer};
use riskforge::sampling::lhs;
use riskforge::Result;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

pub fn se_kernel(a: &[f64], b: &[f64], signal: f64, ls: &[f64]) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    signal * (-0.5 * r2).exp()
}

/// Zero-mean GP posterior of the latent function from the dense normal
/// equations.
pub fn dense_posterior(x: &[Vec<f64>], y: &[f64], signal: f64, ls: &[f64], noise: f64, q: &[f64]) -> (f64, f64) {
    let n = x.len();
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| se_kernel(&x[i], &x[j], signal, ls) + if i == j { noise } else { 0.0 })
                .collect()
        })
        .collect();
    let ks: Vec<f64> = x.iter().map(|xi| se_kernel(xi, q, signal, ls)).collect();
    let alpha = solve(k.clone(), y.to_vec());
    let v = solve(k, ks.clone());
    let mean = ks.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let var = signal - ks.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
    (mean, var)
}

/// Distinct non-dominated points by pairwise comparison, sorted.
pub fn brute_front(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dominated = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y);
    let mut out: Vec<Vec<f64>> = points
        .iter()
        .filter(|p| !points.iter().any(|q| dominated(q, p)))
        .cloned()
        .collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup();
    out
}

/// Dominated volume by inclusion-exclusion over every subset (small sets).
pub fn inclusion_exclusion_hv(points: &[Vec<f64>], r: &[f64]) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for mask in 1u32..(1 << n) {
        let mut vol = 1.0;
        for (j, rj) in r.iter().enumerate() {
            let worst = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| points[i][j])
                .fold(f64::NEG_INFINITY, f64::max);
            vol *= (rj - worst).max(0.0);
        }
        let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
        total += sign * vol;
    }
    total
}

/// Dijkstra's two-stack evaluator over the formula grammar, with unary
/// minus as a prefix operator. `None` on division by zero.
pub fn shunting_yard(expr: &str, bindings: &HashMap<String, f64>) -> Option<f64> {
    #[derive(Clone, Copy, PartialEq, Debug)]
    enum Op {
        Add,
        Sub,
        Mul,
        Div,
        Neg,
        Open,
    }
    fn prec(op: Op) -> u8 {
        match op {
            Op::Add | Op::Sub => 1,
            Op::Mul | Op::Div => 2,
            Op::Neg => 3,
            Op::Open => 0,
        }
    }
    fn apply(op: Op, vals: &mut Vec<f64>) -> Option<()> {
        if op == Op::Neg {
            let a = vals.pop()?;
            vals.push(-a);
            return Some(());
        }
        let b = vals.pop()?;
        let a = vals.pop()?;
        vals.push(match op {
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            Op::Div => {
                if b == 0.0 {
                    return None;
                }
                a / b
            }
            _ => unreachable!(),
        });
        Some(())
    }
    let chars: Vec<char> = expr.chars().collect();
    let mut vals: Vec<f64> = Vec::new();
    let mut ops: Vec<Op> = Vec::new();
    let mut expect_operand = true;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            vals.push(s.parse().unwrap());
            expect_operand = false;
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            vals.push(bindings[&s]);
            expect_operand = false;
        } else if c == '(' {
            ops.push(Op::Open);
            expect_operand = true;
            i += 1;
        } else if c == ')' {
            while let Some(op) = ops.pop() {
                if op == Op::Open {
                    break;
                }
                apply(op, &mut vals)?;
            }
            expect_operand = false;
            i += 1;
        } else {
            let op = match (c, expect_operand) {
                ('-', true) => Op::Neg,
                ('+', _) => Op::Add,
                ('-', _) => Op::Sub,
                ('*', _) => Op::Mul,
                ('/', _) => Op::Div,
                _ => panic!("unexpected {c}"),
            };
            // Prefix operators bind to what follows; binary ones are left
            // associative.
            if op != Op::Neg {
                while let Some(&top) = ops.last() {
                    if top != Op::Open && prec(top) >= prec(op) {
                        ops.pop();
                        apply(top, &mut vals)?;
                    } else {
                        break;
                    }
                }
            }
            ops.push(op);
            expect_operand = true;
            i += 1;
        }
    }
    while let Some(op) = ops.pop() {
        apply(op, &mut vals)?;
    }
    assert_eq!(vals.len(), 1, "malformed expression {expr}");
    vals.pop()
}

/// Two objectives over a finite point set in [0,1]^2 with a concave front
/// along `x1 = 0`: `f1 = x0`, `f2 = g (1 - (f1/g)^2)`, `g = 1 + 9 x1`.
pub struct ConcaveBenchmark {
    pub x: Vec<Vec<f64>>,
}

impl ConcaveBenchmark {
    pub fn objectives(p: &[f64]) -> Vec<f64> {
        let g = 1.0 + 9.0 * p[1];
        let f1 = p[0];
        vec![f1, g * (1.0 - (f1 / g).powi(2))]
    }
}

impl Problem for ConcaveBenchmark {
    fn features(&self, index: usize) -> &[f64] {
        &self.x[index]
    }

    fn evaluate(&self, index: usize) -> Result<Evaluation> {
        Ok(Evaluation::objectives_only(Self::objectives(&self.x[index])))
    }
}

/// Fraction of the full-pool hypervolume reached by a batch-10 campaign of
/// at most 10 iterations on a 1,000-point benchmark pool, with the
/// iteration count. Normalization is fixed by the whole pool.
pub fn benchmark_fraction(seed: u64) -> (f64, usize) {
    let problem = ConcaveBenchmark { x: lhs(1000, 2, 2024).unwrap() };
    let all: Vec<Vec<f64>> = problem.x.iter().map(|p| ConcaveBenchmark::objectives(p)).collect();
    let norm = Normalizer::fit(&all).unwrap();
    let r = norm.reference();
    let full = hypervolume(&all.iter().map(|v| norm.apply(v)).collect::<Vec<_>>(), &r).unwrap();

    let settings = LoopSettings {
        batch_size: 10,
        max_iterations: 10,
        seed,
        ..LoopSettings::default()
    };
    let pool: Vec<usize> = (0..problem.x.len()).collect();
    let mut obs: Vec<Observation> = Vec::new();
    let out = run_loop(&problem, &pool, &settings, Resume::default(), &mut |e| {
        if let Event::Observed(o) = e {
            obs.push(o.clone());
        }
        Ok(())
    })
    .unwrap();
    let found: Vec<Vec<f64>> = obs.iter().map(|o| norm.apply(&o.evaluation.objectives)).collect();
    (hypervolume(&found, &r).unwrap() / full, out.iterations)
}

/// Random well-formed expression over `names`, printed with the minimal
/// parentheses plus some redundant ones. Returns the text and the
/// precedence of its top-level operator.
pub fn expression(rng: &mut ChaCha8Rng, depth: u32, names: &[&str]) -> (String, u8) {
    if depth == 0 || rng.random_bool(0.25) {
        let leaf = if rng.random_bool(0.5) {
            names[rng.random_range(0..names.len())].to_string()
        } else if rng.random_bool(0.5) {
            rng.random_range(1..100).to_string()
        } else {
            format!("{}.{}", rng.random_range(0..10), rng.random_range(1..100))
        };
        return (leaf, 3);
    }
    if rng.random_bool(0.1) {
        let (inner, p) = expression(rng, depth - 1, names);
        let inner = if p < 3 { format!("({inner})") } else { inner };
        return (format!("-{inner}"), 3);
    }
    let op = ['+', '-', '*', '/'][rng.random_range(0..4)];
    let prec = if op == '+' || op == '-' { 1 } else { 2 };
    let (l, lp) = expression(rng, depth - 1, names);
    let (r, rp) = expression(rng, depth - 1, names);
    let l = if lp < prec { format!("({l})") } else { l };
    let r = if rp <= prec { format!("({r})") } else { r };
    let s = format!("{l} {op} {r}");
    if rng.random_bool(0.1) {
        (format!("({s})"), 3)
    } else {
        (s, prec)
    }
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/extraction")
}

pub fn definition() -> IndicatorDefinition {
    load_dir(&fixtures().join("definitions")).unwrap().remove(0).1
}

pub fn classifier() -> KeywordRuleClassifier {
    KeywordRuleClassifier::new()
        .rule("reserves", "reserves")
        .rule("production", "mine production")
}

/// Static-range indicator for `element` starting at `year` over the
/// fixture documents.
pub fn run_fixture(element: &str, year: i32, config: &ExtractionConfig) -> IndicatorReport {
    let mut fetcher = DirFetcher::new(fixtures().join("documents"));
    let mut clf = classifier();
    compute_indicator(&definition(), element, year, "2025-06-30", &mut fetcher, &mut clf, config).unwrap()
}

pub fn riskforge(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_riskforge"))
        .args(args)
        .env_remove("RISKFORGE_DATA_DIR")
        .output()
        .unwrap()
}

/// Campaign TOML small enough for a few seconds per run.
pub fn small_config_toml(scenario: &str, seed: u64) -> String {
    format!(
        "scenario = \"{scenario}\"\n\
         seed = {seed}\n\
         batch_size = 4\n\
         max_iterations = 3\n\
         ehvi_samples = 32\n\
         convergence_threshold = 0.001\n\
         [space]\nstep = 0.25\nmin_active = 1\n\
         [gp]\nensemble_size = 8\n\
         [oracles.thresholds]\nmelting_point_c = 2500.0\n"
    )
}

/// `index` column of a CSV file.
pub fn csv_indices(path: &Path) -> Vec<usize> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap()[0].parse().unwrap()).collect()
}

/// Observation records of a campaign log as (index, objective count).
pub fn logged_observations(path: &Path) -> Vec<(usize, usize)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["record"] == "observation").then(|| {
                (v["index"].as_u64().unwrap() as usize, v["objectives"].as_array().unwrap().len())
            })
        })
        .collect()
}
