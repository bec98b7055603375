//! Gaussian-process regression with a squared-exponential ARD kernel.
//!
//! A [`GpModel`] holds one or more hyperparameter settings ("members"), each
//! with its own Cholesky factor. Predictions from several members are
//! combined by moment matching the equal-weight mixture. Outputs are
//! standardized at fit time, so the zero prior mean applies to the
//! standardized targets.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::rng::substream;
use crate::sampling::{lhs, scale_to_bounds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub length_scales: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn isotropic(signal_variance: f64, length_scale: f64, dims: usize, noise_variance: f64) -> Self {
        KernelParams {
            signal_variance,
            length_scales: vec![length_scale; dims],
            noise_variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_variance > 0.0) {
            return Err(Error::invalid("signal variance must be positive"));
        }
        if self.length_scales.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::invalid("length scales must be positive"));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(Error::invalid("noise variance must be nonnegative"));
        }
        Ok(())
    }
}

/// `sigma_s^2 * exp(-sum_h (x_h - x'_h)^2 / (2 l_h^2))`.
pub fn kernel(x: &[f64], x2: &[f64], params: &KernelParams) -> Result<f64> {
    let d = params.length_scales.len();
    if x.len() != d || x2.len() != d {
        return Err(Error::invalid(format!(
            "kernel inputs have dims {} and {}, expected {d}",
            x.len(),
            x2.len()
        )));
    }
    Ok(Scaled::new(params).eval(x, x2))
}

/// Kernel with the `1 / (2 l^2)` factors precomputed.
struct Scaled {
    signal_variance: f64,
    inv_two_l2: Vec<f64>,
}

impl Scaled {
    fn new(p: &KernelParams) -> Self {
        Scaled {
            signal_variance: p.signal_variance,
            inv_two_l2: p.length_scales.iter().map(|l| 0.5 / (l * l)).collect(),
        }
    }

    #[inline]
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((x, y), w) in a.iter().zip(b).zip(&self.inv_two_l2) {
            let d = x - y;
            s += d * d * w;
        }
        self.signal_variance * (-s).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperBounds {
    pub length_scale: (f64, f64),
    pub signal_variance: (f64, f64),
    pub noise_variance: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        HyperBounds {
            length_scale: (0.01, 10.0),
            signal_variance: (0.01, 100.0),
            noise_variance: (1e-8, 1e-2),
        }
    }
}

impl HyperBounds {
    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("length_scale", self.length_scale),
            ("signal_variance", self.signal_variance),
            ("noise_variance", self.noise_variance),
        ] {
            let zero_ok = name == "noise_variance" && lo == 0.0 && hi == 0.0;
            if !(zero_ok || (lo > 0.0 && hi >= lo && hi.is_finite())) {
                return Err(Error::Config(format!("bad {name} bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Log-space box over (signal variance, length scales..., noise variance).
/// A degenerate interval pins that parameter.
struct LogBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
    noise_fixed: Option<f64>,
}

impl LogBox {
    fn new(b: &HyperBounds, dims: usize) -> Self {
        let mut lo = vec![b.signal_variance.0.ln()];
        let mut hi = vec![b.signal_variance.1.ln()];
        for _ in 0..dims {
            lo.push(b.length_scale.0.ln());
            hi.push(b.length_scale.1.ln());
        }
        let noise_fixed = (b.noise_variance.0 == b.noise_variance.1).then_some(b.noise_variance.0);
        if noise_fixed.is_none() {
            lo.push(b.noise_variance.0.ln());
            hi.push(b.noise_variance.1.ln());
        }
        LogBox { lo, hi, noise_fixed }
    }

    fn dims(&self) -> usize {
        self.lo.len()
    }

    fn clamp(&self, theta: &mut [f64]) {
        for ((t, lo), hi) in theta.iter_mut().zip(&self.lo).zip(&self.hi) {
            *t = t.clamp(*lo, *hi);
        }
    }

    fn params(&self, theta: &[f64], dims: usize) -> KernelParams {
        KernelParams {
            signal_variance: theta[0].exp(),
            length_scales: theta[1..=dims].iter().map(|t| t.exp()).collect(),
            noise_variance: self.noise_fixed.unwrap_or_else(|| theta[dims + 1].exp()),
        }
    }

    fn samples(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut pts = lhs(n, self.dims(), seed)?;
        let bounds: Vec<(f64, f64)> = self.lo.iter().copied().zip(self.hi.iter().copied()).collect();
        scale_to_bounds(&mut pts, &bounds);
        Ok(pts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Multi-start maximization of the log marginal likelihood; one member.
    Mle,
    /// Latin-hypercube ensemble over the hyperparameter box, equal weights.
    #[default]
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub mode: FitMode,
    pub bounds: HyperBounds,
    pub ensemble_size: usize,
    pub mle_starts: usize,
    pub seed: u64,
    pub standardize: bool,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            mode: FitMode::Ensemble,
            bounds: HyperBounds::default(),
            ensemble_size: 32,
            mle_starts: 8,
            seed: 0,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone)]
struct Member {
    params: KernelParams,
    scaled: Scaled,
    /// Row-major lower Cholesky factor of `K + (noise + jitter) I`.
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
    log_marginal_likelihood: f64,
}

impl Clone for Scaled {
    fn clone(&self) -> Self {
        Scaled {
            signal_variance: self.signal_variance,
            inv_two_l2: self.inv_two_l2.clone(),
        }
    }
}

impl std::fmt::Debug for Scaled {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scaled").finish_non_exhaustive()
    }
}

/// Summary of one ensemble member for logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSummary {
    pub params: KernelParams,
    pub jitter: f64,
    pub log_marginal_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: Vec<Vec<f64>>,
    y_shift: f64,
    y_scale: f64,
    members: Vec<Member>,
}

/// `K(X, X)` with the kernel evaluated once per unordered pair, so the
/// result is exactly symmetric.
pub fn kernel_matrix(x: &[Vec<f64>], params: &KernelParams) -> DMatrix<f64> {
    let k = Scaled::new(params);
    let n = x.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = k.eval(&x[i], &x[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn factorize(x: &[Vec<f64>], y: &DVector<f64>, params: KernelParams) -> Option<Member> {
    let n = x.len();
    let base = kernel_matrix(x, &params);
    let mut jitter = 0.0;
    loop {
        let mut k = base.clone();
        for i in 0..n {
            k[(i, i)] += params.noise_variance + jitter;
        }
        if let Some(ch) = k.cholesky() {
            let l = ch.l();
            let alpha = ch.solve(y);
            let log_det_half: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
            let lml = -0.5 * y.dot(&alpha)
                - log_det_half
                - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            let mut chol = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    chol[i * n + j] = l[(i, j)];
                }
            }
            return Some(Member {
                scaled: Scaled::new(&params),
                params,
                chol,
                alpha: alpha.iter().copied().collect(),
                jitter,
                log_marginal_likelihood: lml,
            });
        }
        jitter = if jitter == 0.0 {
            1e-10 * params.signal_variance
        } else {
            jitter * 10.0
        };
        if jitter > 1e-4 * params.signal_variance * (1.0 + 1e-9) {
            return None;
        }
    }
}

impl GpModel {
    /// Fits hyperparameters per `config` and factorizes every member.
    pub fn fit(x: &[Vec<f64>], y: &[f64], config: &GpConfig) -> Result<Self> {
        let (dims, yv, shift, scale) = prepare(x, y, config.standardize)?;
        config.bounds.validate()?;
        let bx = LogBox::new(&config.bounds, dims);
        let members = match config.mode {
            FitMode::Ensemble => {
                if config.ensemble_size == 0 {
                    return Err(Error::Config("ensemble_size must be at least 1".into()));
                }
                let thetas = bx.samples(config.ensemble_size, config.seed)?;
                exec::try_map_range(thetas.len(), |i| {
                    factorize(x, &yv, bx.params(&thetas[i], dims)).ok_or_else(|| {
                        Error::NumericalFailure(format!(
                            "ensemble member {i} is not positive definite after jitter escalation"
                        ))
                    })
                })?
            }
            FitMode::Mle => vec![fit_mle(x, &yv, &bx, dims, config)?],
        };
        Ok(GpModel {
            inputs: x.to_vec(),
            y_shift: shift,
            y_scale: scale,
            members,
        })
    }

    /// Builds a model with fixed hyperparameters, one member per entry.
    pub fn with_params(
        x: &[Vec<f64>],
        y: &[f64],
        params: Vec<KernelParams>,
        standardize: bool,
    ) -> Result<Self> {
        let (dims, yv, shift, scale) = prepare(x, y, standardize)?;
        if params.is_empty() {
            return Err(Error::invalid("at least one parameter set is required"));
        }
        let members = params
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                p.validate()?;
                if p.length_scales.len() != dims {
                    return Err(Error::invalid(format!(
                        "member {i} has {} length scales for {dims} input dims",
                        p.length_scales.len()
                    )));
                }
                factorize(x, &yv, p).ok_or_else(|| {
                    Error::NumericalFailure(format!(
                        "member {i} is not positive definite after jitter escalation"
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GpModel {
            inputs: x.to_vec(),
            y_shift: shift,
            y_scale: scale,
            members,
        })
    }

    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn n_train(&self) -> usize {
        self.inputs.len()
    }

    pub fn dims(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn summaries(&self) -> Vec<MemberSummary> {
        self.members
            .iter()
            .map(|m| MemberSummary {
                params: m.params.clone(),
                jitter: m.jitter,
                log_marginal_likelihood: m.log_marginal_likelihood,
            })
            .collect()
    }

    /// Exact posterior of one member, in output units.
    pub fn member_posterior(&self, member: usize, q: &[f64]) -> (f64, f64) {
        let m = &self.members[member];
        let n = self.inputs.len();
        let mut v: Vec<f64> = self.inputs.iter().map(|xi| m.scaled.eval(xi, q)).collect();
        let mean: f64 = v.iter().zip(&m.alpha).map(|(k, a)| k * a).sum();
        // Forward substitution: v <- L^-1 k.
        for i in 0..n {
            let row = &m.chol[i * n..i * n + i];
            let s: f64 = row.iter().zip(&v[..i]).map(|(l, w)| l * w).sum();
            v[i] = (v[i] - s) / m.chol[i * n + i];
        }
        let reduction: f64 = v.iter().map(|w| w * w).sum();
        let var = (m.params.signal_variance - reduction).max(0.0);
        (
            mean * self.y_scale + self.y_shift,
            var * self.y_scale * self.y_scale,
        )
    }

    /// Moment-matched mixture over members: mean of means, and mean of
    /// (variance + mean^2) minus the squared mixture mean.
    pub fn posterior(&self, q: &[f64]) -> (f64, f64) {
        let k = self.members.len() as f64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..self.members.len() {
            let (m, v) = self.member_posterior(i, q);
            s1 += m;
            s2 += v + m * m;
        }
        let mean = s1 / k;
        (mean, (s2 / k - mean * mean).max(0.0))
    }

    pub fn predict_many(&self, queries: &[Vec<f64>]) -> Vec<(f64, f64)> {
        exec::map_slice(queries, |q| self.posterior(q))
    }

    /// Draws from the mixture: pick a member uniformly, then a normal draw
    /// from its posterior.
    pub fn sample_posterior(&self, q: &[f64], n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        let moments: Vec<(f64, f64)> = (0..self.members.len())
            .map(|i| self.member_posterior(i, q))
            .collect();
        let mut rng = substream(seed, "gp-sample", 0);
        Ok((0..n)
            .map(|_| {
                let (m, v) = moments[rng.random_range(0..moments.len())];
                let z: f64 = rng.sample(StandardNormal);
                m + v.sqrt() * z
            })
            .collect())
    }
}

fn prepare(x: &[Vec<f64>], y: &[f64], standardize: bool) -> Result<(usize, DVector<f64>, f64, f64)> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::invalid(format!(
            "need matching nonempty training data, got {} inputs and {} outputs",
            x.len(),
            y.len()
        )));
    }
    let dims = x[0].len();
    if dims == 0 || x.iter().any(|r| r.len() != dims) {
        return Err(Error::invalid("training inputs must share a nonzero dimension"));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data must be finite"));
    }
    let (shift, scale) = if standardize {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        (mean, if sd > 0.0 { sd } else { 1.0 })
    } else {
        (0.0, 1.0)
    };
    let yv = DVector::from_iterator(y.len(), y.iter().map(|v| (v - shift) / scale));
    Ok((dims, yv, shift, scale))
}

fn fit_mle(
    x: &[Vec<f64>],
    y: &DVector<f64>,
    bx: &LogBox,
    dims: usize,
    config: &GpConfig,
) -> Result<Member> {
    let starts = bx.samples(config.mle_starts.max(1), config.seed)?;
    let objective = |theta: &[f64]| -> f64 {
        let mut t = theta.to_vec();
        bx.clamp(&mut t);
        match factorize(x, y, bx.params(&t, dims)) {
            Some(m) => -m.log_marginal_likelihood,
            None => f64::INFINITY,
        }
    };
    let results = exec::map_slice(&starts, |s| {
        let (mut best, val) = nelder_mead(&objective, s, 0.5, 200 * bx.dims());
        bx.clamp(&mut best);
        (best, val)
    });
    // First strictly better start wins, so ties resolve to the lowest index.
    let mut chosen: Option<(Vec<f64>, f64)> = None;
    for (theta, val) in results {
        if val.is_finite() && chosen.as_ref().is_none_or(|(_, b)| val < *b) {
            chosen = Some((theta, val));
        }
    }
    let (theta, _) = chosen.ok_or_else(|| {
        Error::NumericalFailure("no maximum-likelihood start produced a valid factorization".into())
    })?;
    factorize(x, y, bx.params(&theta, dims)).ok_or_else(|| {
        Error::NumericalFailure("maximum-likelihood member is not positive definite".into())
    })
}

/// Derivative-free simplex minimizer.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], step: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), f(start)));
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += step;
        let v = f(&p);
        simplex.push((p, v));
    }
    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        if spread.abs() < 1e-9 && simplex[0].1.is_finite() {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (p, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].0.clone();
        let reflected = combine(&centroid, &worst, -1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = combine(&centroid, &worst, -2.0);
            let fe = f(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let contracted = combine(&centroid, &worst, 0.5);
            let fc = f(&contracted);
            if fc < simplex[n].1 {
                simplex[n] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let p = combine(&best, &entry.0, 0.5);
                    let v = f(&p);
                    *entry = (p, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}
