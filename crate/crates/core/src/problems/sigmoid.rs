//! Multi-class sigmoid-loss classifier on synthetic class-skewed shards.
//!
//! With θ split into one block θ_k per class, the local objective of agent
//! i holding samples (x_j, label_j) is
//!
//! ```text
//! f_i(θ) = (1/m_i) Σ_j Σ_k φ(ℓ_{j,k} ⟨x_j, θ_k⟩) + (λ/2)‖θ‖²,
//! φ(z) = 1 / (1 + e^{−z}),   φ'(z) = φ(z)(1 − φ(z))
//! ```
//!
//! a smooth, bounded, non-convex loss. The label code ℓ controls which
//! margins carry gradient: the signed encoding (+1 on the true class, −1
//! elsewhere) trains every block on every sample and yields a working
//! classifier whose decision rule is argmin_k ⟨x, θ_k⟩ (the loss pushes the
//! true class's margin down); the 0/1 encoding freezes off-class terms at
//! φ(0) and trains only the true class's block.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{sample_batch, InitBatch, Problem, ProblemMeta};
use crate::error::Error;
use crate::Result;

/// Local dataset sizes used by the bundled experiment: 25 agents, 1443
/// samples, heavily imbalanced.
pub const DEFAULT_PARTITION: [usize; 25] = [
    470, 403, 91, 84, 79, 51, 51, 38, 31, 25, 24, 19, 14, 10, 9, 6, 6, 5, 5, 4, 4, 4, 4, 3, 3,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelEncoding {
    /// ℓ = +1 on the true class, −1 elsewhere (default).
    PlusMinus,
    /// ℓ = 1 on the true class, 0 elsewhere.
    ZeroOne,
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub d_feat: usize,
    pub classes: usize,
    pub partition: Vec<usize>,
    /// How many classes dominate each agent's shard (assigned cyclically).
    pub dominant_classes: usize,
    /// Probability mass a sample's label falls in the dominant set.
    pub dominant_frac: f64,
    /// Standard deviation of the class-mean draw.
    pub mean_scale: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            d_feat: 1000,
            classes: 5,
            partition: DEFAULT_PARTITION.to_vec(),
            dominant_classes: 2,
            dominant_frac: 0.9,
            mean_scale: 1.0,
        }
    }
}

/// Class-conditional Gaussian samples sharded across agents.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub d_feat: usize,
    pub classes: usize,
    /// Row-major m_i × d_feat features per agent.
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Vec<u8>>,
}

impl SyntheticDataset {
    pub fn n_agents(&self) -> usize {
        self.features.len()
    }

    pub fn local_size(&self, agent: usize) -> usize {
        self.labels[agent].len()
    }

    pub fn total_samples(&self) -> usize {
        self.labels.iter().map(Vec::len).sum()
    }
}

/// Draw a dataset: class means are N(0, mean_scale²·I); a sample of class c
/// is (mean_c + N(0, I)) / √(2·d_feat), so feature vectors have roughly
/// unit norm regardless of d_feat; labels are skewed toward each agent's
/// dominant classes. All draws come from the supplied stream in a fixed
/// order, so the dataset is a pure function of the stream.
pub fn generate_synthetic(
    config: &SyntheticConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SyntheticDataset> {
    let c = config.classes;
    let d = config.d_feat;
    if c < 2 {
        return Err(Error::invalid("classes", "need at least two classes"));
    }
    if d == 0 {
        return Err(Error::invalid("d_feat", "need at least one feature"));
    }
    if config.partition.is_empty() {
        return Err(Error::invalid("partition", "need at least one agent"));
    }
    if let Some(agent) = config.partition.iter().position(|&m| m == 0) {
        return Err(Error::EmptyShard { agent });
    }
    if config.dominant_classes == 0 || config.dominant_classes > c {
        return Err(Error::invalid(
            "dominant_classes",
            format!("must be in [1, {c}]"),
        ));
    }
    if !(0.0..=1.0).contains(&config.dominant_frac) {
        return Err(Error::invalid("dominant_frac", "must be in [0, 1]"));
    }

    let means: Vec<Vec<f64>> = (0..c)
        .map(|_| (0..d).map(|_| sample_normal(rng) * config.mean_scale).collect())
        .collect();
    let scale = 1.0 / ((2 * d) as f64).sqrt();

    let mut features = Vec::with_capacity(config.partition.len());
    let mut labels = Vec::with_capacity(config.partition.len());
    for (agent, &m) in config.partition.iter().enumerate() {
        let dominants: Vec<usize> = (0..config.dominant_classes)
            .map(|t| (agent + t) % c)
            .collect();
        let mut feat = Vec::with_capacity(m * d);
        let mut lab = Vec::with_capacity(m);
        for _ in 0..m {
            let label = if rand::Rng::random::<f64>(rng) < config.dominant_frac {
                dominants[rand::Rng::random_range(rng, 0..dominants.len())]
            } else {
                rand::Rng::random_range(rng, 0..c)
            };
            let mean = &means[label];
            for f in 0..d {
                feat.push((mean[f] + sample_normal(rng)) * scale);
            }
            lab.push(label as u8);
        }
        features.push(feat);
        labels.push(lab);
    }
    Ok(SyntheticDataset {
        d_feat: d,
        classes: c,
        features,
        labels,
    })
}

fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// The classifier problem over a synthetic dataset.
#[derive(Debug, Clone)]
pub struct SigmoidProblem {
    data: SyntheticDataset,
    lambda: f64,
    encoding: LabelEncoding,
    meta: ProblemMeta,
}

impl SigmoidProblem {
    pub fn new(
        data: SyntheticDataset,
        lambda: f64,
        encoding: LabelEncoding,
    ) -> Result<Self> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(Error::invalid("lambda", "must be finite and >= 0"));
        }
        if let Some(agent) = data.labels.iter().position(Vec::is_empty) {
            return Err(Error::EmptyShard { agent });
        }
        Ok(SigmoidProblem {
            data,
            lambda,
            encoding,
            meta: ProblemMeta::default(),
        })
    }

    pub fn dataset(&self) -> &SyntheticDataset {
        &self.data
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn label_code(&self, label: u8, class: usize) -> f64 {
        match self.encoding {
            LabelEncoding::PlusMinus => {
                if label as usize == class {
                    1.0
                } else {
                    -1.0
                }
            }
            LabelEncoding::ZeroOne => {
                if label as usize == class {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Gradient of the minibatch estimate (1/|B|) Σ_{j∈B} per-sample loss
    /// plus the regularizer. Indices must be valid for the agent's shard.
    pub fn batch_grad(&self, agent: usize, theta: &[f64], batch: &[usize]) -> Vec<f64> {
        let d = self.data.d_feat;
        let c = self.data.classes;
        debug_assert_eq!(theta.len(), c * d);
        let feats = &self.data.features[agent];
        let labs = &self.data.labels[agent];
        let mut grad = vec![0.0; c * d];
        let inv = 1.0 / batch.len() as f64;
        for &j in batch {
            let x = &feats[j * d..(j + 1) * d];
            for k in 0..c {
                let code = self.label_code(labs[j], k);
                if code == 0.0 {
                    continue;
                }
                let block = &theta[k * d..(k + 1) * d];
                let z: f64 = x.iter().zip(block).map(|(a, b)| a * b).sum();
                let s = sigmoid(code * z);
                let coef = s * (1.0 - s) * code * inv;
                let gblock = &mut grad[k * d..(k + 1) * d];
                for (g, xi) in gblock.iter_mut().zip(x) {
                    *g += coef * xi;
                }
            }
        }
        for (g, t) in grad.iter_mut().zip(theta) {
            *g += self.lambda * t;
        }
        grad
    }

    /// Minibatch loss estimate for the same batch convention as
    /// [`Self::batch_grad`].
    pub fn batch_value(&self, agent: usize, theta: &[f64], batch: &[usize]) -> f64 {
        let d = self.data.d_feat;
        let c = self.data.classes;
        let feats = &self.data.features[agent];
        let labs = &self.data.labels[agent];
        let mut acc = 0.0;
        for &j in batch {
            let x = &feats[j * d..(j + 1) * d];
            for k in 0..c {
                let code = self.label_code(labs[j], k);
                let z: f64 = x.iter().zip(&theta[k * d..(k + 1) * d]).map(|(a, b)| a * b).sum();
                acc += sigmoid(code * z);
            }
        }
        let reg: f64 = theta.iter().map(|t| t * t).sum::<f64>();
        acc / batch.len() as f64 + 0.5 * self.lambda * reg
    }
}

impl Problem for SigmoidProblem {
    fn n_agents(&self) -> usize {
        self.data.n_agents()
    }

    fn dim(&self) -> usize {
        self.data.classes * self.data.d_feat
    }

    fn local_size(&self, agent: usize) -> usize {
        self.data.local_size(agent)
    }

    fn value(&self, agent: usize, theta: &[f64]) -> f64 {
        let all: Vec<usize> = (0..self.local_size(agent)).collect();
        self.batch_value(agent, theta, &all)
    }

    fn full_grad(&self, agent: usize, theta: &[f64]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.local_size(agent)).collect();
        self.batch_grad(agent, theta, &all)
    }

    fn stoch_grad(
        &self,
        agent: usize,
        theta: &[f64],
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64> {
        let batch = sample_batch(self.local_size(agent), batch_size.max(1), rng);
        self.batch_grad(agent, theta, &batch)
    }

    fn stoch_grad_pair(
        &self,
        agent: usize,
        theta_new: &[f64],
        theta_old: &[f64],
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> (Vec<f64>, Vec<f64>) {
        let batch = sample_batch(self.local_size(agent), batch_size.max(1), rng);
        (
            self.batch_grad(agent, theta_new, &batch),
            self.batch_grad(agent, theta_old, &batch),
        )
    }

    fn init_grad(
        &self,
        agent: usize,
        theta: &[f64],
        b0: InitBatch,
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64> {
        let m = self.local_size(agent);
        let count = match b0 {
            InitBatch::FullLocal => m,
            InitBatch::Count(c) => c.min(m),
        };
        let batch = sample_batch(m, count, rng);
        self.batch_grad(agent, theta, &batch)
    }

    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    /// Pooled train accuracy of the decision rule argmin_k ⟨x, θ_k⟩ (the
    /// loss drives the true class's margin toward −∞). For the 0/1
    /// encoding the rule is the same: only the true margin is trained, and
    /// it is trained downward.
    fn accuracy(&self, theta: &[f64]) -> Option<f64> {
        let d = self.data.d_feat;
        let c = self.data.classes;
        let mut correct = 0usize;
        let mut total = 0usize;
        for agent in 0..self.n_agents() {
            let feats = &self.data.features[agent];
            for (j, &lab) in self.data.labels[agent].iter().enumerate() {
                let x = &feats[j * d..(j + 1) * d];
                let mut best = 0usize;
                let mut best_z = f64::INFINITY;
                for k in 0..c {
                    let z: f64 = x
                        .iter()
                        .zip(&theta[k * d..(k + 1) * d])
                        .map(|(a, b)| a * b)
                        .sum();
                    if z < best_z {
                        best_z = z;
                        best = k;
                    }
                }
                total += 1;
                if best == lab as usize {
                    correct += 1;
                }
            }
        }
        Some(correct as f64 / total as f64)
    }
}
