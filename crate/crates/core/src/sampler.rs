//! Stochastic search over Gaussian control distributions.
//!
//! One iteration draws `M` perturbed control sequences around the mean,
//! scores each with a caller-supplied objective, maps costs to weights with a
//! [`ShapeFunction`] and moves the mean by the weighted average perturbation:
//!
//! ```text
//! ζ_t ← ζ_t + α Σ_m w_m (û_t^(m) − ζ_t),   w_m = S(−J_m) / Σ_m' S(−J_m')
//! ```
//!
//! The exponential shape gives MPPI, the q-exponential shape gives Tsallis
//! MPPI, and a steep logistic around an elite threshold gives CEM.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{self, ConstraintConfig, QuadraticCost};
use crate::dynamics::{self, DynamicsModel, Trajectory};

/// Noise generator used for every sampling stream.
pub type SamplerRng = ChaCha8Rng;

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SamplerRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid shape function: {0}")]
    InvalidShape(String),
    #[error("cost batch is empty")]
    EmptyBatch,
    #[error("every sample received zero weight")]
    DegenerateBatch,
    #[error("{what} has size {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// How the logistic steepness `k` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogisticRate {
    Fixed(f64),
    /// `k = c / IQR` of the finite batch costs.
    IqrScaled(f64),
}

/// Monotone map from negative cost to a nonnegative sample weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeFunction {
    /// `exp(−J / η)`
    Exponential { eta: f64 },
    /// `[1 − J/γ]^{1/(1−q)}` below the elite threshold `γ`, zero above it.
    QExponential { q: f64, elite_fraction: f64 },
    /// `1 / (1 + exp(k (J − γ)))` with `γ` between the elite and non-elite costs.
    Logistic { rate: LogisticRate, elite_fraction: f64 },
}

impl ShapeFunction {
    pub fn mppi() -> Self {
        Self::Exponential { eta: 10.0 }
    }

    pub fn tsallis() -> Self {
        Self::QExponential {
            q: 0.5,
            elite_fraction: 0.1,
        }
    }

    pub fn cem() -> Self {
        Self::Logistic {
            rate: LogisticRate::IqrScaled(20.0),
            elite_fraction: 0.1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Exponential { .. } => "mppi",
            Self::QExponential { .. } => "tsallis",
            Self::Logistic { .. } => "cem",
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let fraction_ok = |f: f64| f > 0.0 && f <= 1.0;
        match *self {
            Self::Exponential { eta } if !(eta.is_finite() && eta > 0.0) => {
                Err(SamplerError::InvalidShape(format!("eta must be positive, got {eta}")))
            }
            Self::QExponential { q, .. } if !q.is_finite() || q == 1.0 => {
                Err(SamplerError::InvalidShape(format!("q must be finite and differ from 1, got {q}")))
            }
            Self::QExponential { elite_fraction, .. } | Self::Logistic { elite_fraction, .. }
                if !fraction_ok(elite_fraction) =>
            {
                Err(SamplerError::InvalidShape(format!(
                    "elite fraction must lie in (0, 1], got {elite_fraction}"
                )))
            }
            Self::Logistic {
                rate: LogisticRate::Fixed(k) | LogisticRate::IqrScaled(k),
                ..
            } if !(k.is_finite() && k > 0.0) => Err(SamplerError::InvalidShape(format!(
                "logistic rate must be positive, got {k}"
            ))),
            _ => Ok(()),
        }
    }

    /// Resolves the batch-dependent parameters (shift, threshold, rate).
    pub fn resolve(&self, batch: &[f64]) -> Result<ResolvedShape, SamplerError> {
        if batch.is_empty() {
            return Err(SamplerError::EmptyBatch);
        }
        let mut sorted: Vec<f64> = batch.iter().map(|&c| sanitize(c)).collect();
        sorted.sort_by(f64::total_cmp);
        let min = sorted[0];
        let resolved = match *self {
            Self::Exponential { eta } => ResolvedShape::Exponential {
                eta,
                min_cost: if min.is_finite() { min } else { 0.0 },
            },
            Self::QExponential { q, elite_fraction } => {
                let gamma = sorted[elite_count(elite_fraction, sorted.len()) - 1];
                let shift = if min.is_finite() { min.min(0.0) } else { 0.0 };
                let hard = !sorted.iter().any(|&c| c < gamma);
                ResolvedShape::QExponential {
                    q,
                    gamma: gamma - shift,
                    shift,
                    hard: hard || !(gamma - shift > 0.0),
                    cutoff: gamma,
                }
            }
            Self::Logistic { rate, elite_fraction } => {
                let k_elite = elite_count(elite_fraction, sorted.len());
                let threshold = if k_elite >= sorted.len() {
                    f64::INFINITY
                } else {
                    0.5 * (sorted[k_elite - 1] + sorted[k_elite])
                };
                let k = match rate {
                    LogisticRate::Fixed(k) => k,
                    LogisticRate::IqrScaled(c) => {
                        let finite: Vec<f64> = sorted.iter().copied().filter(|c| c.is_finite()).collect();
                        let spread = interquartile_range(&finite);
                        let range = finite.last().zip(finite.first()).map(|(hi, lo)| hi - lo).unwrap_or(0.0);
                        if spread > 0.0 {
                            c / spread
                        } else if range > 0.0 {
                            c / range
                        } else {
                            f64::INFINITY
                        }
                    }
                };
                ResolvedShape::Logistic { k, threshold }
            }
        };
        Ok(resolved)
    }

    /// Weight of a single sample with negated cost `neg_cost`, where
    /// `batch_context` is the whole batch of costs it was drawn with.
    pub fn evaluate(&self, neg_cost: f64, batch_context: &[f64]) -> Result<f64, SamplerError> {
        Ok(self.resolve(batch_context)?.weight(-neg_cost))
    }

    /// Unnormalised weights for a whole batch of costs.
    pub fn weights(&self, costs: &[f64]) -> Result<Vec<f64>, SamplerError> {
        let resolved = self.resolve(costs)?;
        Ok(costs.iter().map(|&c| resolved.weight(c)).collect())
    }
}

/// A shape function with its batch statistics fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolvedShape {
    Exponential {
        eta: f64,
        min_cost: f64,
    },
    QExponential {
        q: f64,
        /// Threshold after the shift.
        gamma: f64,
        /// Costs are translated by `−shift` when the batch minimum is negative.
        shift: f64,
        /// No sample lies strictly below the threshold: use `J ≤ cutoff` as an indicator.
        hard: bool,
        cutoff: f64,
    },
    Logistic {
        k: f64,
        threshold: f64,
    },
}

impl ResolvedShape {
    /// Weight of a sample with cost `cost`; never negative, zero for
    /// non-finite costs.
    pub fn weight(&self, cost: f64) -> f64 {
        let cost = sanitize(cost);
        if !cost.is_finite() {
            return 0.0;
        }
        match *self {
            Self::Exponential { eta, min_cost } => (-(cost - min_cost) / eta).exp(),
            Self::QExponential {
                q,
                gamma,
                shift,
                hard,
                cutoff,
            } => {
                if hard {
                    return if cost <= cutoff { 1.0 } else { 0.0 };
                }
                if gamma == f64::INFINITY {
                    return 1.0;
                }
                let ratio = (cost - shift) / gamma;
                if q < 1.0 {
                    if cost < cutoff {
                        ((-ratio).ln_1p() / (1.0 - q)).exp()
                    } else {
                        0.0
                    }
                } else {
                    // heavy-tailed branch, no cutoff
                    (-ratio.ln_1p() / (q - 1.0)).exp()
                }
            }
            Self::Logistic { k, threshold } => {
                if cost == threshold {
                    return 0.5;
                }
                let z = k * (cost - threshold);
                if z.is_nan() {
                    return 0.0;
                }
                1.0 / (1.0 + z.exp())
            }
        }
    }
}

#[inline]
fn sanitize(cost: f64) -> f64 {
    if cost.is_nan() {
        f64::INFINITY
    } else {
        cost
    }
}

/// `⌈f·M⌉`, clamped to `1..=M`.
pub fn elite_count(fraction: f64, batch: usize) -> usize {
    ((fraction * batch as f64).ceil() as usize).clamp(1, batch)
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn interquartile_range(sorted: &[f64]) -> f64 {
    if sorted.len() < 2 {
        return 0.0;
    }
    quantile(sorted, 0.75) - quantile(sorted, 0.25)
}

/// Per-timestep Gaussian over controls with a shared diagonal spread.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlDistribution {
    horizon: usize,
    dim: usize,
    mean: Vec<f64>,
    /// Per-coordinate standard deviation, the square root of the diagonal covariance.
    std: Vec<f64>,
}

impl ControlDistribution {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self, SamplerError> {
        let dim = std.len();
        if dim == 0 || mean.is_empty() || mean.len() % dim != 0 {
            return Err(SamplerError::DimensionMismatch {
                what: "mean sequence",
                expected: dim,
                got: mean.len(),
            });
        }
        if std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(SamplerError::InvalidConfig(format!(
                "sampling standard deviations must be positive, got {std:?}"
            )));
        }
        Ok(Self {
            horizon: mean.len() / dim,
            dim,
            mean,
            std,
        })
    }

    pub fn zeros(horizon: usize, std: Vec<f64>) -> Result<Self, SamplerError> {
        Self::new(vec![0.0; horizon * std.len()], std)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Flat `horizon × dim` mean sequence.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn mean_at(&self, t: usize) -> &[f64] {
        &self.mean[t * self.dim..(t + 1) * self.dim]
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn covariance_diag(&self) -> Vec<f64> {
        self.std.iter().map(|s| s * s).collect()
    }

    pub fn with_mean(&self, mean: Vec<f64>) -> Result<Self, SamplerError> {
        if mean.len() != self.mean.len() {
            return Err(SamplerError::DimensionMismatch {
                what: "mean sequence",
                expected: self.mean.len(),
                got: mean.len(),
            });
        }
        Ok(Self { mean, ..self.clone() })
    }
}

/// A batch of sampled control sequences and the perturbations that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    count: usize,
    len: usize,
    controls: Vec<f64>,
    noise: Vec<f64>,
}

impl Samples {
    /// Builds a batch from explicit control sequences around `dist`'s mean.
    pub fn from_controls(dist: &ControlDistribution, controls: Vec<Vec<f64>>) -> Result<Self, SamplerError> {
        let len = dist.mean.len();
        let mut flat = Vec::with_capacity(controls.len() * len);
        for c in &controls {
            if c.len() != len {
                return Err(SamplerError::DimensionMismatch {
                    what: "sample",
                    expected: len,
                    got: c.len(),
                });
            }
            flat.extend_from_slice(c);
        }
        let noise = flat
            .chunks_exact(len)
            .flat_map(|c| c.iter().zip(&dist.mean).map(|(u, z)| u - z))
            .collect();
        Ok(Self {
            count: controls.len(),
            len,
            controls: flat,
            noise,
        })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Control sequence `m`, flat `horizon × dim`.
    pub fn control(&self, m: usize) -> &[f64] {
        &self.controls[m * self.len..(m + 1) * self.len]
    }

    /// Perturbation `û^(m) − ζ`.
    pub fn noise(&self, m: usize) -> &[f64] {
        &self.noise[m * self.len..(m + 1) * self.len]
    }
}

/// Draws `count` sequences `û_t = ζ_t + ε_t`, `ε_t ~ N(0, diag(σ²))`.
///
/// The control dimension is split into `rngs.len()` equal blocks and block
/// `b` draws only from `rngs[b]` (sample-major, then timestep, then
/// coordinate), so a stacked multi-agent distribution reproduces the draws
/// each agent would make on its own.
pub fn sample_controls(dist: &ControlDistribution, count: usize, rngs: &mut [SamplerRng]) -> Samples {
    assert!(!rngs.is_empty(), "at least one noise stream is required");
    assert_eq!(dist.dim % rngs.len(), 0, "control dimension must split evenly across streams");
    let block = dist.dim / rngs.len();
    let len = dist.mean.len();
    let mut noise = vec![0.0; count * len];
    for (b, rng) in rngs.iter_mut().enumerate() {
        for m in 0..count {
            for t in 0..dist.horizon {
                let base = m * len + t * dist.dim + b * block;
                for d in 0..block {
                    let z: f64 = rng.sample(StandardNormal);
                    noise[base + d] = dist.std[b * block + d] * z;
                }
            }
        }
    }
    let controls = noise
        .chunks_exact(len)
        .flat_map(|eps| eps.iter().zip(&dist.mean).map(|(e, z)| z + e))
        .collect();
    Samples {
        count,
        len,
        controls,
        noise,
    }
}

/// Normalises raw weights to sum to one.
pub fn normalized_weights(raw: &[f64]) -> Result<Vec<f64>, SamplerError> {
    let total: f64 = raw.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(SamplerError::DegenerateBatch);
    }
    Ok(raw.iter().map(|w| w / total).collect())
}

/// Mean update from explicit unnormalised weights.
pub fn update_from_weights(
    dist: &ControlDistribution,
    samples: &Samples,
    raw_weights: &[f64],
    alpha: f64,
) -> Result<ControlDistribution, SamplerError> {
    if raw_weights.len() != samples.count {
        return Err(SamplerError::DimensionMismatch {
            what: "weights",
            expected: samples.count,
            got: raw_weights.len(),
        });
    }
    if samples.len != dist.mean.len() {
        return Err(SamplerError::DimensionMismatch {
            what: "sample",
            expected: dist.mean.len(),
            got: samples.len,
        });
    }
    let weights = normalized_weights(raw_weights)?;
    let mut step = vec![0.0; dist.mean.len()];
    for (m, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        for (s, e) in step.iter_mut().zip(samples.noise(m)) {
            *s += w * e;
        }
    }
    let mean = dist.mean.iter().zip(&step).map(|(z, s)| z + alpha * s).collect();
    Ok(ControlDistribution { mean, ..dist.clone() })
}

/// One stochastic-search update of the mean from a scored batch.
pub fn ss_update(
    dist: &ControlDistribution,
    samples: &Samples,
    costs: &[f64],
    shape: &ShapeFunction,
    alpha: f64,
) -> Result<ControlDistribution, SamplerError> {
    if costs.len() != samples.count {
        return Err(SamplerError::DimensionMismatch {
            what: "costs",
            expected: samples.count,
            got: costs.len(),
        });
    }
    let weights = shape.weights(costs)?;
    update_from_weights(dist, samples, &weights, alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Samples per iteration, `M`.
    pub samples: usize,
    /// Step size `α`.
    pub alpha: f64,
    /// Stochastic-search iterations per solve.
    pub iterations: usize,
    pub seed: u64,
    /// Add the importance-ratio term `η Σ_t ½ ζ_tᵀ Σ⁻¹ (ζ_t + 2 ε_t)` to each
    /// sample's cost when the shape is exponential.
    pub mppi_control_coupling: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            samples: 1024,
            alpha: 1.0,
            iterations: 2,
            seed: 0,
            mppi_control_coupling: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.samples < 2 {
            return Err(SamplerError::InvalidConfig(format!(
                "at least 2 samples are required, got {}",
                self.samples
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(SamplerError::InvalidConfig(format!(
                "step size must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.iterations == 0 {
            return Err(SamplerError::InvalidConfig("at least one iteration is required".into()));
        }
        Ok(())
    }
}

/// Thread pool used for per-sample and per-agent evaluation. Results never
/// depend on the worker count: draws are sequential and reductions run in
/// index order.
#[derive(Clone, Default)]
pub struct Workers {
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Workers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workers").field("threads", &self.threads()).finish()
    }
}

impl Workers {
    /// `threads == 0` uses the global rayon pool.
    pub fn new(threads: usize) -> Result<Self, SamplerError> {
        if threads == 0 {
            return Ok(Self::default());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| SamplerError::InvalidConfig(format!("cannot start worker pool: {e}")))?;
        Ok(Self { pool: Some(Arc::new(pool)) })
    }

    pub fn threads(&self) -> usize {
        match &self.pool {
            Some(pool) => pool.current_num_threads(),
            None => rayon::current_num_threads(),
        }
    }

    pub fn install<R: Send, F: FnOnce() -> R + Send>(&self, f: F) -> R {
        match &self.pool {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }

    /// `(0..n).map(f)` evaluated in parallel, results in index order.
    pub fn map<R: Send, F: Fn(usize) -> R + Sync + Send>(&self, n: usize, f: F) -> Vec<R> {
        self.install(|| (0..n).into_par_iter().map(&f).collect())
    }
}

/// Outcome of one stochastic-search iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub min_cost: f64,
    /// All weights vanished and the mean was left unchanged.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: Vec<IterationStats>,
    /// Objective at the mean before the first iteration and after each one.
    pub mean_costs: Vec<f64>,
    pub best_cost: f64,
    pub best_controls: Vec<f64>,
}

impl SolveReport {
    pub fn degenerate_batches(&self) -> usize {
        self.iterations.iter().filter(|i| i.degenerate).count()
    }
}

/// Runs `cfg.iterations` stochastic-search iterations from `dist`.
///
/// `objective` scores one flat control sequence; non-finite results are
/// treated as infinite cost and receive zero weight.
pub fn optimize<F>(
    dist: &ControlDistribution,
    shape: &ShapeFunction,
    cfg: &SamplerConfig,
    rngs: &mut [SamplerRng],
    workers: &Workers,
    objective: F,
) -> Result<(ControlDistribution, SolveReport), SamplerError>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    cfg.validate()?;
    shape.validate()?;
    let coupling = match (cfg.mppi_control_coupling, shape) {
        (true, ShapeFunction::Exponential { eta }) => Some(*eta),
        _ => None,
    };
    let mut dist = dist.clone();
    let mut report = SolveReport {
        iterations: Vec::with_capacity(cfg.iterations),
        mean_costs: vec![sanitize(objective(&dist.mean))],
        best_cost: f64::INFINITY,
        best_controls: dist.mean.clone(),
    };
    for _ in 0..cfg.iterations {
        let samples = sample_controls(&dist, cfg.samples, rngs);
        let mut costs = workers.map(samples.count, |m| sanitize(objective(samples.control(m))));
        if let Some(eta) = coupling {
            for (m, c) in costs.iter_mut().enumerate() {
                *c += eta * control_coupling(&dist, samples.noise(m));
            }
        }
        let (best, min_cost) = costs
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("batch has at least two samples");
        if min_cost < report.best_cost {
            report.best_cost = min_cost;
            report.best_controls = samples.control(best).to_vec();
        }
        let degenerate = match ss_update(&dist, &samples, &costs, shape, cfg.alpha) {
            Ok(next) => {
                dist = next;
                false
            }
            Err(SamplerError::DegenerateBatch) => true,
            Err(e) => return Err(e),
        };
        report.iterations.push(IterationStats { min_cost, degenerate });
        report.mean_costs.push(sanitize(objective(&dist.mean)));
    }
    Ok((dist, report))
}

/// `Σ_t ½ ζ_tᵀ Σ⁻¹ (ζ_t + 2 ε_t)`, the negative log likelihood ratio of the
/// sample under the zero-mean and the ζ-mean Gaussians.
pub fn control_coupling(dist: &ControlDistribution, noise: &[f64]) -> f64 {
    let mut total = 0.0;
    for (t, eps) in noise.chunks_exact(dist.dim).enumerate() {
        for ((z, e), s) in dist.mean_at(t).iter().zip(eps).zip(&dist.std) {
            total += 0.5 * z * (z + 2.0 * e) / (s * s);
        }
    }
    total
}

/// A single agent planning from `x0` against a tracking cost and constraints.
#[derive(Debug, Clone)]
pub struct SingleAgentProblem {
    pub model: DynamicsModel,
    pub cost: QuadraticCost,
    pub constraints: ConstraintConfig,
    pub x0: Vec<f64>,
    pub dt: f64,
}

/// Stochastic search on one agent. `extra` adds a caller-defined term to
/// every sample's cost (consensus terms, shaping); divergent rollouts are
/// scored `+∞`.
pub fn solve<E>(
    problem: &SingleAgentProblem,
    dist0: &ControlDistribution,
    shape: &ShapeFunction,
    cfg: &SamplerConfig,
    rng: &mut SamplerRng,
    workers: &Workers,
    extra: E,
) -> Result<(ControlDistribution, SolveReport), SamplerError>
where
    E: Fn(&Trajectory, &[f64]) -> f64 + Sync + Send,
{
    let du = problem.model.control_dim();
    if dist0.dim != du {
        return Err(SamplerError::DimensionMismatch {
            what: "control distribution",
            expected: du,
            got: dist0.dim,
        });
    }
    problem
        .cost
        .check_model(&problem.model)
        .map_err(|e| SamplerError::InvalidConfig(e.to_string()))?;
    let horizon = dist0.horizon;
    let objective = |u: &[f64]| -> f64 {
        match dynamics::rollout_with(&problem.model, &problem.x0, horizon, problem.dt, |t| &u[t * du..(t + 1) * du]) {
            Ok(traj) => {
                problem.cost.evaluate_with(&traj, |t| &u[t * du..(t + 1) * du])
                    + cost::planning_penalty(&problem.constraints, &traj, &[])
                    + extra(&traj, u)
            }
            Err(_) => f64::INFINITY,
        }
    };
    optimize(dist0, shape, cfg, std::slice::from_mut(rng), workers, objective)
}
