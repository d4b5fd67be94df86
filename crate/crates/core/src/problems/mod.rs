//! Local objectives and their gradient oracles.
//!
//! A [`Problem`] is a collection of n smooth local objectives f_i over a
//! shared parameter vector θ ∈ R^d; the network-wide objective is
//! f(θ) = (1/n) Σ_i f_i(θ). Implementations provide exact values and
//! gradients plus stochastic gradients driven by an explicit random stream.
//! The paired oracle [`Problem::stoch_grad_pair`] evaluates the same draw
//! (same minibatch, same noise) at two points — the property that makes
//! recursive momentum estimators variance-reduced.

pub mod quadratic;
pub mod sigmoid;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use sigmoid::generate_synthetic;

/// How many draws seed the initial momentum estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitBatch {
    /// Per-agent full coverage: dataset problems use every local sample
    /// (making the initial estimate the exact local gradient), noise
    /// problems take a single draw.
    FullLocal,
    /// A fixed number of draws (clamped to the local dataset size for
    /// dataset problems).
    Count(usize),
}

impl InitBatch {
    pub fn validate(&self) -> crate::Result<()> {
        match self {
            InitBatch::Count(0) => Err(crate::Error::invalid(
                "b0",
                "initial batch count must be at least 1",
            )),
            _ => Ok(()),
        }
    }
}

/// Optional analytic facts about a problem instance.
#[derive(Debug, Clone, Default)]
pub struct ProblemMeta {
    /// Smoothness constant L (exact where available).
    pub lipschitz: Option<f64>,
    /// Polyak-Lojasiewicz constant μ: 2μ(f(θ) − f*) ≤ ‖∇f(θ)‖².
    pub pl_mu: Option<f64>,
    /// Global minimum value of f.
    pub f_star: Option<f64>,
    /// Bound on E‖∇f_i(θ;ζ) − ∇f_i(θ)‖² for a single draw.
    pub noise_bound: Option<f64>,
}

pub trait Problem: Send + Sync {
    fn n_agents(&self) -> usize;

    fn dim(&self) -> usize;

    /// Local sample count m_i (1 for distribution-backed problems).
    fn local_size(&self, agent: usize) -> usize;

    /// Exact local objective f_i(θ).
    fn value(&self, agent: usize, theta: &[f64]) -> f64;

    /// Exact local gradient ∇f_i(θ).
    fn full_grad(&self, agent: usize, theta: &[f64]) -> Vec<f64>;

    /// One stochastic gradient from a fresh draw of `batch_size` samples
    /// (without replacement for dataset problems).
    fn stoch_grad(
        &self,
        agent: usize,
        theta: &[f64],
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64>;

    /// Both gradients from one shared draw: (∇f̂(θ_new; ζ), ∇f̂(θ_old; ζ)).
    fn stoch_grad_pair(
        &self,
        agent: usize,
        theta_new: &[f64],
        theta_old: &[f64],
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> (Vec<f64>, Vec<f64>);

    /// Average of b0 draws at θ, used to seed momentum.
    fn init_grad(
        &self,
        agent: usize,
        theta: &[f64],
        b0: InitBatch,
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64>;

    fn meta(&self) -> &ProblemMeta;

    /// Classification accuracy over the pooled dataset, where defined.
    fn accuracy(&self, _theta: &[f64]) -> Option<f64> {
        None
    }
}

/// f(θ) = (1/n) Σ_i f_i(θ).
pub fn global_value(problem: &dyn Problem, theta: &[f64]) -> f64 {
    let n = problem.n_agents();
    (0..n).map(|i| problem.value(i, theta)).sum::<f64>() / n as f64
}

/// ∇f(θ) = (1/n) Σ_i ∇f_i(θ).
pub fn global_grad(problem: &dyn Problem, theta: &[f64]) -> Vec<f64> {
    let n = problem.n_agents();
    let mut acc = vec![0.0; problem.dim()];
    for i in 0..n {
        for (a, g) in acc.iter_mut().zip(problem.full_grad(i, theta)) {
            *a += g;
        }
    }
    for a in &mut acc {
        *a /= n as f64;
    }
    acc
}

/// Probe the smoothness constant: the largest observed gradient-difference
/// ratio ‖∇f_i(θ) − ∇f_i(θ')‖ / ‖θ − θ'‖ over sampled pairs, times a 1.2
/// safety factor. Each trial refines the pair direction with a few
/// finite-difference power iterations so the ratio approaches the local
/// curvature's operator norm instead of an average eigenvalue.
pub fn estimate_lipschitz(
    problem: &dyn Problem,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> crate::Result<f64> {
    if trials == 0 {
        return Err(crate::Error::invalid("trials", "need at least one trial"));
    }
    let d = problem.dim();
    let n = problem.n_agents();
    let mut best: f64 = 0.0;
    for _ in 0..trials {
        let theta: Vec<f64> = (0..d)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        let scale = theta.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        let h = 1e-4 * scale;
        for i in 0..n {
            let g0 = problem.full_grad(i, &theta);
            let mut u: Vec<f64> = (0..d)
                .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                .collect();
            normalize(&mut u);
            let mut ratio = 0.0;
            for _ in 0..30 {
                let shifted: Vec<f64> =
                    theta.iter().zip(&u).map(|(t, ui)| t + h * ui).collect();
                let g1 = problem.full_grad(i, &shifted);
                let mut diff: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| a - b).collect();
                let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                ratio = norm / h;
                if norm == 0.0 {
                    break;
                }
                for v in &mut diff {
                    *v /= norm;
                }
                u = diff;
            }
            best = best.max(ratio);
        }
    }
    Ok(1.2 * best)
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    } else if !v.is_empty() {
        v[0] = 1.0;
    }
}

/// Sorted minibatch indices drawn uniformly without replacement; a batch at
/// least as large as the population returns every index.
pub(crate) fn sample_batch(m: usize, batch: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if batch >= m {
        return (0..m).collect();
    }
    let mut idx = rand::seq::index::sample(rng, m, batch).into_vec();
    idx.sort_unstable();
    idx
}
