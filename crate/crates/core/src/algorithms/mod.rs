//! Decentralized optimization algorithms as pure state transitions.
//!
//! Every algorithm is a function `step(problem, topology, ..., &mut
//! NetworkState)` advancing all n agents through one synchronous round.
//! Communication is simulated: a transmitted compressed message is applied
//! to every replica of the sender's auxiliary variable, at the sender and
//! all receivers, so the replicas stay bit-identical without any shared
//! mutable state. Randomness comes only from per-(agent, iteration,
//! purpose) counter streams, which makes trajectories independent of
//! thread count and scheduling.

mod choco;
mod docom;
mod dsgd;
mod stepsizes;

pub use choco::choco_step;
pub use docom::{docom_step, hsgd_step, tracking_step};
pub use dsgd::dsgd_step;
pub use stepsizes::{safe_step_sizes, theory_constants, SafeStepSizes, TheoryConstants};

pub use crate::problems::InitBatch;

use rayon::prelude::*;

use crate::compression::CompressorSpec;
use crate::error::Error;
use crate::problems::Problem;
use crate::rng::{stream, Purpose};
use crate::topology::MixingMatrix;
use crate::Result;

/// Shared hyperparameters. Algorithms read only the fields they use:
/// `gamma` scales gossip corrections (unused by plain gossip descent),
/// `beta` is the momentum mixing weight (1 disables variance reduction),
/// `b0` seeds the initial momentum estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub eta: f64,
    pub gamma: f64,
    pub beta: f64,
    pub b0: InitBatch,
    pub batch_size: usize,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", "must be finite and > 0"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid("gamma", "must lie in (0, 1]"));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::invalid("beta", "must lie in (0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        self.b0.validate()
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            eta: 0.01,
            gamma: 1.0,
            beta: 1.0,
            b0: InitBatch::FullLocal,
            batch_size: 1,
        }
    }
}

/// Which step function drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmKind {
    Docom,
    Choco,
    Dsgd,
    Gnsd,
    GtHsgd,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 5] = [
        AlgorithmKind::Docom,
        AlgorithmKind::Choco,
        AlgorithmKind::Dsgd,
        AlgorithmKind::Gnsd,
        AlgorithmKind::GtHsgd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmKind::Docom => "docom",
            AlgorithmKind::Choco => "choco",
            AlgorithmKind::Dsgd => "dsgd",
            AlgorithmKind::Gnsd => "gnsd",
            AlgorithmKind::GtHsgd => "gt_hsgd",
        }
    }

    /// Whether the algorithm maintains momentum/tracking buffers.
    pub fn uses_tracking(self) -> bool {
        matches!(
            self,
            AlgorithmKind::Docom | AlgorithmKind::Gnsd | AlgorithmKind::GtHsgd
        )
    }
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "docom" => Ok(AlgorithmKind::Docom),
            "choco" => Ok(AlgorithmKind::Choco),
            "dsgd" => Ok(AlgorithmKind::Dsgd),
            "gnsd" => Ok(AlgorithmKind::Gnsd),
            "gt_hsgd" => Ok(AlgorithmKind::GtHsgd),
            other => Err(Error::Parse {
                input: other.to_string(),
                what: "algorithm",
                reason: "expected one of docom, choco, dsgd, gnsd, gt_hsgd".to_string(),
            }),
        }
    }
}

/// Everything agent i owns: its iterate, tracking buffers, and one replica
/// of the auxiliary variable of every closed-neighborhood member
/// (including its own). Algorithms that do not use a buffer leave it
/// empty.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub theta: Vec<f64>,
    /// Momentum-corrected stochastic gradient estimate v_i.
    pub v: Vec<f64>,
    /// Tracked global-gradient estimate g_i.
    pub g: Vec<f64>,
    /// Sorted closed neighborhood (neighbors plus self).
    pub hood: Vec<usize>,
    /// Index of the agent's own id inside `hood`.
    pub self_pos: usize,
    /// θ̂ replicas, one per `hood` entry, in `hood` order.
    pub theta_hat: Vec<Vec<f64>>,
    /// ĝ replicas, same layout.
    pub g_hat: Vec<Vec<f64>>,
}

/// The whole network plus run counters. `seed` is the root of every
/// random stream; `iter` addresses the streams of the next step.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub agents: Vec<AgentState>,
    pub iter: u64,
    pub seed: u64,
    /// Cumulative floats sent, counting payload values only.
    pub floats_values_only: u64,
    /// Cumulative floats sent, counting sparse index words as floats.
    pub floats_with_indices: u64,
}

impl NetworkState {
    /// Start a gossip-only algorithm: every agent at the common initial
    /// point (zeros unless given), with θ̂ replicas of the same point when
    /// the algorithm error-compensates, and no tracking buffers.
    pub fn init_gossip(
        problem: &dyn Problem,
        topology: &MixingMatrix,
        seed: u64,
        theta0: Option<&[f64]>,
        keep_replicas: bool,
    ) -> Result<Self> {
        let base = common_start(problem, topology, theta0)?;
        let agents = (0..problem.n_agents())
            .map(|i| {
                let hood = topology.closed_neighborhood(i);
                let self_pos = self_position(&hood, i);
                let theta_hat = if keep_replicas {
                    vec![base.clone(); hood.len()]
                } else {
                    Vec::new()
                };
                AgentState {
                    theta: base.clone(),
                    v: Vec::new(),
                    g: Vec::new(),
                    hood,
                    self_pos,
                    theta_hat,
                    g_hat: Vec::new(),
                }
            })
            .collect();
        Ok(NetworkState {
            agents,
            iter: 0,
            seed,
            floats_values_only: 0,
            floats_with_indices: 0,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.agents.first().map_or(0, |a| a.theta.len())
    }

    /// Network-average iterate θ̄.
    pub fn mean_theta(&self) -> Vec<f64> {
        mean_of(self.agents.iter().map(|a| &a.theta), self.dim())
    }

    /// Network-average tracked gradient ḡ (tracking algorithms only).
    pub fn mean_g(&self) -> Vec<f64> {
        mean_of(self.agents.iter().map(|a| &a.g), self.dim())
    }

    /// Network-average momentum estimate v̄ (tracking algorithms only).
    pub fn mean_v(&self) -> Vec<f64> {
        mean_of(self.agents.iter().map(|a| &a.v), self.dim())
    }
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a Vec<f64>>, d: usize) -> Vec<f64> {
    let mut acc = vec![0.0; d];
    let mut count = 0usize;
    for row in rows {
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x;
        }
        count += 1;
    }
    if count > 0 {
        for a in &mut acc {
            *a /= count as f64;
        }
    }
    acc
}

/// Momentum-tracking initialization shared by the compressed and
/// identity-communication tracking algorithms: consensus start, θ̂
/// replicas at the start point, ĝ replicas at zero, and the momentum
/// buffer seeded with a b₀-draw gradient estimate so that g⁰ = v⁰.
pub fn docom_init(
    problem: &dyn Problem,
    topology: &MixingMatrix,
    hyper: &HyperParams,
    compressor: &CompressorSpec,
    seed: u64,
    theta0: Option<&[f64]>,
) -> Result<NetworkState> {
    hyper.validate()?;
    let d = problem.dim();
    if compressor.d() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: compressor.d(),
            context: "compressor dimension",
        });
    }
    let base = common_start(problem, topology, theta0)?;
    let agents: Vec<AgentState> = (0..problem.n_agents())
        .into_par_iter()
        .map(|i| {
            let hood = topology.closed_neighborhood(i);
            let self_pos = self_position(&hood, i);
            let mut rng = stream(seed, i as u64, 0, Purpose::InitBatch);
            let v = problem.init_grad(i, &base, hyper.b0, &mut rng);
            AgentState {
                theta: base.clone(),
                g: v.clone(),
                v,
                theta_hat: vec![base.clone(); hood.len()],
                g_hat: vec![vec![0.0; d]; hood.len()],
                self_pos,
                hood,
            }
        })
        .collect();
    Ok(NetworkState {
        agents,
        iter: 0,
        seed,
        floats_values_only: 0,
        floats_with_indices: 0,
    })
}

fn common_start(
    problem: &dyn Problem,
    topology: &MixingMatrix,
    theta0: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = problem.n_agents();
    if topology.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: topology.n(),
            context: "topology size vs agent count",
        });
    }
    let d = problem.dim();
    match theta0 {
        None => Ok(vec![0.0; d]),
        Some(t0) if t0.len() == d => Ok(t0.to_vec()),
        Some(t0) => Err(Error::DimensionMismatch {
            expected: d,
            got: t0.len(),
            context: "initial point dimension",
        }),
    }
}

fn self_position(hood: &[usize], i: usize) -> usize {
    hood.iter()
        .position(|&j| j == i)
        .expect("closed neighborhood contains self")
}

pub(crate) fn check_network(
    problem: &dyn Problem,
    topology: &MixingMatrix,
    state: &NetworkState,
) -> Result<()> {
    if state.agents.len() != problem.n_agents() || topology.n() != problem.n_agents() {
        return Err(Error::DimensionMismatch {
            expected: problem.n_agents(),
            got: state.agents.len().min(topology.n()),
            context: "agent count across problem, topology, state",
        });
    }
    Ok(())
}

pub(crate) type View = fn(&AgentState) -> (&Vec<f64>, &Vec<Vec<f64>>);
pub(crate) type ViewMut = fn(&mut AgentState) -> (&mut Vec<f64>, &mut Vec<Vec<f64>>);

pub(crate) fn theta_view(a: &AgentState) -> (&Vec<f64>, &Vec<Vec<f64>>) {
    (&a.theta, &a.theta_hat)
}

pub(crate) fn theta_view_mut(a: &mut AgentState) -> (&mut Vec<f64>, &mut Vec<Vec<f64>>) {
    (&mut a.theta, &mut a.theta_hat)
}

pub(crate) fn grad_view(a: &AgentState) -> (&Vec<f64>, &Vec<Vec<f64>>) {
    (&a.g, &a.g_hat)
}

pub(crate) fn grad_view_mut(a: &mut AgentState) -> (&mut Vec<f64>, &mut Vec<Vec<f64>>) {
    (&mut a.g, &mut a.g_hat)
}

/// Build every agent's broadcast for one compressed round: the compressed
/// difference between its current variable and its own replica of it.
pub(crate) fn round_messages(
    agents: &[AgentState],
    compressor: &CompressorSpec,
    seed: u64,
    t: u64,
    purpose: Purpose,
    view: View,
) -> Result<Vec<Vec<f64>>> {
    agents
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let (x, hats) = view(a);
            let own = &hats[a.self_pos];
            let diff: Vec<f64> = x.iter().zip(own).map(|(xi, oi)| xi - oi).collect();
            compressor.compress(&diff, &mut stream(seed, i as u64, t, purpose))
        })
        .collect()
}

/// Deliver one round of broadcasts: every replica of sender j advances by
/// the same message q[j] (the sender's own copy included, keeping all
/// copies bit-identical), then each agent applies the weighted gossip
/// correction x += γ Σ_j W_ij (x̂_{i,j} − x̂_{i,i}).
pub(crate) fn apply_round(
    agents: &mut [AgentState],
    q: &[Vec<f64>],
    topology: &MixingMatrix,
    gamma: f64,
    view_mut: ViewMut,
) {
    agents.par_iter_mut().enumerate().for_each(|(i, a)| {
        let hood = a.hood.clone();
        let self_pos = a.self_pos;
        let (x, hats) = view_mut(a);
        for (pos, &j) in hood.iter().enumerate() {
            for (r, dq) in hats[pos].iter_mut().zip(&q[j]) {
                *r += dq;
            }
        }
        for (pos, &j) in hood.iter().enumerate() {
            if pos == self_pos {
                continue;
            }
            let scale = gamma * topology.w(i, j);
            for ((xk, other), own) in x.iter_mut().zip(&hats[pos]).zip(&hats[self_pos]) {
                *xk += scale * (other - own);
            }
        }
    });
}

/// Account one network-wide exchange round: every agent sends one payload
/// to each neighbor (self excluded).
pub(crate) fn charge_rounds(
    state: &mut NetworkState,
    topology: &MixingMatrix,
    compressor: &CompressorSpec,
    rounds: u64,
) {
    let links = topology.sum_degrees() as u64;
    state.floats_values_only += rounds * links * compressor.payload_floats() as u64;
    state.floats_with_indices += rounds * links * compressor.payload_floats_with_indices() as u64;
}
