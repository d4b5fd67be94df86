//! Experiment driver: runs one configured algorithm on one problem and
//! topology, records communication-indexed metrics, and hosts the two
//! offline diagnostics (the potential-function evaluator and the momentum
//! variance probe).
//!
//! Everything here is deterministic for a fixed `RunSetup`: the metric
//! rows an observer-less [`run`] returns are byte-for-byte reproducible
//! across reruns and across rayon pool sizes, because every random draw
//! inside the steps comes from counter-addressed streams and every
//! parallel reduction used for metrics is order-independent.

use std::time::Instant;

use rayon::prelude::*;

use crate::algorithms::{
    choco_step, docom_init, docom_step, dsgd_step, hsgd_step, tracking_step, AlgorithmKind,
    HyperParams, NetworkState, TheoryConstants,
};
use crate::compression::CompressorSpec;
use crate::error::Error;
use crate::Result;
use crate::problems::{global_grad, global_value, Problem};
use crate::rng::{stream, Purpose};
use crate::topology::MixingMatrix;

/// Complete description of a single experiment run.
///
/// All fields are public so callers can build one literally; [`RunSetup::new`]
/// fills in the common defaults (stride 1, zero start, no decay, no timing).
///
/// The `compressor` field is only consulted by the algorithms that actually
/// quantize their exchanges (`docom`, `choco`). `gnsd` and `gt_hsgd` always
/// exchange exact vectors, and `dsgd` gossips raw iterates, so for those the
/// field only has to pass the dimension check.
pub struct RunSetup<'a> {
    pub problem: &'a dyn Problem,
    pub topology: &'a MixingMatrix,
    pub algorithm: AlgorithmKind,
    pub compressor: CompressorSpec,
    pub hyper: HyperParams,
    /// Number of iterations to execute. Zero is allowed and yields a single
    /// metrics row describing the initial state.
    pub iters: u64,
    /// Record metrics every `stride` iterations (plus always at start and
    /// finish). Must be at least 1.
    pub stride: u64,
    pub seed: u64,
    /// Common starting point; `None` means the origin.
    pub theta0: Option<Vec<f64>>,
    /// Piecewise-constant step-size decay, as `(iteration, multiplier)`
    /// breakpoints sorted by iteration. The multiplier of the latest
    /// breakpoint at or before `t` scales `hyper.eta` during iteration `t`;
    /// before the first breakpoint the multiplier is 1. Empty means the step
    /// size stays constant.
    pub lr_decay: Vec<(u64, f64)>,
    /// When true, each metrics row carries the wall-clock time since the run
    /// started. Off by default because it breaks byte-identical output.
    pub timing: bool,
}

impl<'a> RunSetup<'a> {
    pub fn new(
        problem: &'a dyn Problem,
        topology: &'a MixingMatrix,
        algorithm: AlgorithmKind,
        compressor: CompressorSpec,
        hyper: HyperParams,
        iters: u64,
        seed: u64,
    ) -> Self {
        RunSetup {
            problem,
            topology,
            algorithm,
            compressor,
            hyper,
            iters,
            stride: 1,
            seed,
            theta0: None,
            lr_decay: Vec::new(),
            timing: false,
        }
    }
}

/// One sampled row of run metrics.
///
/// Losses and gradients are measured on the global objective: `worst_loss`
/// evaluates it at the worst agent's iterate, `mean_loss` at the network
/// average. `consensus_gap` is the largest squared distance of any agent
/// from that average. The float counters are cumulative over the whole run,
/// so plotting a loss column against one of them gives the
/// communication-cost view of convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub iter: u64,
    pub floats_values_only: u64,
    pub floats_with_indices: u64,
    pub worst_loss: f64,
    pub mean_loss: f64,
    pub consensus_gap: f64,
    pub grad_norm_sq: f64,
    /// `mean_loss` minus the known optimal value, when the problem has one.
    pub optimality_gap: Option<f64>,
    /// Classification accuracy at the averaged iterate, for problems that
    /// define it.
    pub train_accuracy: Option<f64>,
    /// Milliseconds since the run started; populated only when timing was
    /// requested.
    pub wallclock_ms: Option<f64>,
}

/// Runs the experiment and returns the sampled metric rows.
pub fn run(setup: &RunSetup) -> Result<Vec<MetricsRecord>> {
    run_observed(setup, |_| {})
}

/// Like [`run`], but invokes `observer` on the freshly initialized network
/// and again after every iteration, so callers can track per-iteration
/// quantities (conservation identities, potential values, final iterates)
/// without changing how the run itself unfolds.
pub fn run_observed(
    setup: &RunSetup,
    mut observer: impl FnMut(&NetworkState),
) -> Result<Vec<MetricsRecord>> {
    setup.hyper.validate()?;
    if setup.stride == 0 {
        return Err(Error::invalid("stride", "must be at least 1"));
    }
    validate_decay(&setup.lr_decay)?;
    if setup.compressor.d() != setup.problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: setup.problem.dim(),
            got: setup.compressor.d(),
            context: "compressor dimension",
        });
    }

    let start = Instant::now();
    let theta0 = setup.theta0.as_deref();
    let mut state = match setup.algorithm {
        AlgorithmKind::Docom => docom_init(
            setup.problem,
            setup.topology,
            &setup.hyper,
            &setup.compressor,
            setup.seed,
            theta0,
        )?,
        // The exact-exchange trackers replicate full vectors, so their
        // initial replica tables are built for the identity compressor
        // regardless of what the setup carries.
        AlgorithmKind::Gnsd | AlgorithmKind::GtHsgd => {
            let identity = CompressorSpec::identity(setup.problem.dim())?;
            docom_init(
                setup.problem,
                setup.topology,
                &setup.hyper,
                &identity,
                setup.seed,
                theta0,
            )?
        }
        AlgorithmKind::Choco => {
            NetworkState::init_gossip(setup.problem, setup.topology, setup.seed, theta0, true)?
        }
        AlgorithmKind::Dsgd => {
            NetworkState::init_gossip(setup.problem, setup.topology, setup.seed, theta0, false)?
        }
    };

    observer(&state);
    let mut records = Vec::with_capacity(2 + (setup.iters / setup.stride) as usize);
    records.push(measure(setup, &state, start));

    let mut hyper = setup.hyper;
    for t in 0..setup.iters {
        hyper.eta = setup.hyper.eta * decay_multiplier(&setup.lr_decay, t);
        match setup.algorithm {
            AlgorithmKind::Docom => docom_step(
                setup.problem,
                setup.topology,
                &setup.compressor,
                &hyper,
                &mut state,
            )?,
            AlgorithmKind::Gnsd => {
                tracking_step(setup.problem, setup.topology, &hyper, &mut state)?
            }
            AlgorithmKind::GtHsgd => {
                hsgd_step(setup.problem, setup.topology, &hyper, &mut state)?
            }
            AlgorithmKind::Choco => choco_step(
                setup.problem,
                setup.topology,
                &setup.compressor,
                &hyper,
                &mut state,
            )?,
            AlgorithmKind::Dsgd => {
                dsgd_step(setup.problem, setup.topology, &hyper, &mut state)?
            }
        }
        check_finite(&state)?;
        observer(&state);
        let done = t + 1 == setup.iters;
        if done || (t + 1) % setup.stride == 0 {
            records.push(measure(setup, &state, start));
        }
    }
    Ok(records)
}

fn validate_decay(decay: &[(u64, f64)]) -> Result<()> {
    let mut prev: Option<u64> = None;
    for &(iter, mult) in decay {
        if !(mult.is_finite() && mult > 0.0) {
            return Err(Error::invalid(
                "lr_decay",
                "multipliers must be positive and finite",
            ));
        }
        if let Some(p) = prev {
            if iter <= p {
                return Err(Error::invalid(
                    "lr_decay",
                    "breakpoints must have strictly increasing iterations",
                ));
            }
        }
        prev = Some(iter);
    }
    Ok(())
}

fn decay_multiplier(decay: &[(u64, f64)], t: u64) -> f64 {
    let mut mult = 1.0;
    for &(iter, m) in decay {
        if iter <= t {
            mult = m;
        } else {
            break;
        }
    }
    mult
}

/// Fails with the offending iteration, agent, and buffer name as soon as any
/// iterate or tracker entry stops being finite, so diverging runs surface a
/// diagnosable error instead of propagating NaNs into the output.
fn check_finite(state: &NetworkState) -> Result<()> {
    for (i, agent) in state.agents.iter().enumerate() {
        for (field, buf) in [("theta", &agent.theta), ("v", &agent.v), ("g", &agent.g)] {
            if buf.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    iter: state.iter,
                    agent: i,
                    field,
                });
            }
        }
    }
    Ok(())
}

fn measure(setup: &RunSetup, state: &NetworkState, start: Instant) -> MetricsRecord {
    let problem = setup.problem;
    let theta_bar = state.mean_theta();

    // Max-reductions over agents are exact and order-independent, so these
    // two can fan out across the pool without hurting reproducibility.
    let worst_loss = state
        .agents
        .par_iter()
        .map(|a| global_value(problem, &a.theta))
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let consensus_gap = state
        .agents
        .par_iter()
        .map(|a| {
            a.theta
                .iter()
                .zip(&theta_bar)
                .map(|(x, m)| (x - m) * (x - m))
                .sum::<f64>()
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);

    let mean_loss = global_value(problem, &theta_bar);
    let grad_norm_sq = global_grad(problem, &theta_bar)
        .iter()
        .map(|x| x * x)
        .sum::<f64>();
    let meta = problem.meta();

    MetricsRecord {
        iter: state.iter,
        floats_values_only: state.floats_values_only,
        floats_with_indices: state.floats_with_indices,
        worst_loss,
        mean_loss,
        consensus_gap,
        grad_norm_sq,
        optimality_gap: meta.f_star.map(|fs| mean_loss - fs),
        train_accuracy: problem.accuracy(&theta_bar),
        wallclock_ms: setup
            .timing
            .then(|| start.elapsed().as_secs_f64() * 1e3),
    }
}

/// Evaluates the convergence potential of a tracker state under the given
/// constants: consensus error, mean-estimator error, per-agent estimator
/// error, tracker disagreement, and the two replica-drift terms, each with
/// its theoretical weight. The value is a diagnostic to log and eyeball; it
/// is not guaranteed to decrease monotonically along stochastic runs.
///
/// Requires a state with tracking buffers (one produced for `docom`, `gnsd`,
/// or `gt_hsgd`) and a problem exposing exact full gradients.
pub fn lyapunov_diagnostic(
    problem: &dyn Problem,
    state: &NetworkState,
    constants: &TheoryConstants,
) -> Result<f64> {
    let n = state.n_agents();
    if n == 0 {
        return Err(Error::invalid("state", "network has no agents"));
    }
    if state.agents.iter().any(|a| {
        a.v.is_empty() || a.g.is_empty() || a.theta_hat.is_empty() || a.g_hat.is_empty()
    }) {
        return Err(Error::invalid(
            "state",
            "potential evaluation needs tracking buffers and replica tables",
        ));
    }
    let dim = state.dim();
    if problem.dim() != dim || problem.n_agents() != n {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: dim,
            context: "problem versus state",
        });
    }

    let grads: Vec<Vec<f64>> = state
        .agents
        .par_iter()
        .enumerate()
        .map(|(i, a)| problem.full_grad(i, &a.theta))
        .collect();
    let grad_bar = mean_rows(&grads);
    let theta_bar = state.mean_theta();
    let v_bar = state.mean_v();
    let g_bar = state.mean_g();

    let nf = n as f64;
    let l2 = constants.lipschitz * constants.lipschitz;
    let eta = constants.eta;

    let mut consensus = 0.0;
    let mut estimator_err = 0.0;
    let mut tracker_spread = 0.0;
    let mut grad_drift = 0.0;
    let mut theta_drift = 0.0;
    for (i, a) in state.agents.iter().enumerate() {
        consensus += sq_dist(&a.theta, &theta_bar);
        estimator_err += sq_dist(&a.v, &grads[i]);
        tracker_spread += sq_dist(&a.g, &g_bar);
        grad_drift += sq_dist(&a.g, &a.g_hat[a.self_pos]);
        let target = &a.theta_hat[a.self_pos];
        theta_drift += a
            .theta
            .iter()
            .zip(&a.g)
            .zip(target)
            .map(|((x, g), h)| {
                let e = x - eta * g - h;
                e * e
            })
            .sum::<f64>();
    }
    let mean_err = sq_dist(&v_bar, &grad_bar);

    Ok(l2 * consensus
        + nf * mean_err
        + estimator_err / nf
        + constants.a * tracker_spread
        + constants.b * grad_drift
        + constants.c * theta_drift)
}

/// Result of [`momentum_variance_probe`]: the mean squared deviation of the
/// network-averaged gradient estimator from the exact average gradient,
/// with and without variance reduction, each with the standard error of its
/// mean over the replicas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceProbe {
    pub var_with: f64,
    pub se_with: f64,
    pub var_without: f64,
    pub se_without: f64,
}

/// Measures, at a frozen set of iterates, how much the recursive momentum
/// estimator shrinks gradient noise relative to plain minibatch averaging.
///
/// Each replica seeds fresh streams, runs `burn_in` estimator updates with
/// paired draws at the fixed point (so the correction term is pure noise
/// cancellation), and then records the squared deviation of the averaged
/// estimator from the exact averaged gradient; the comparison arm draws one
/// ordinary minibatch gradient per agent from the same streams. At least 30
/// replicas are required so the reported standard errors mean something.
pub fn momentum_variance_probe(
    problem: &dyn Problem,
    thetas: &[Vec<f64>],
    beta: f64,
    batch_size: usize,
    burn_in: u64,
    replicas: u64,
    seed: u64,
) -> Result<VarianceProbe> {
    let n = problem.n_agents();
    if thetas.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: thetas.len(),
            context: "one iterate per agent",
        });
    }
    let dim = problem.dim();
    for th in thetas {
        if th.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: th.len(),
                context: "iterate length",
            });
        }
    }
    if !(beta.is_finite() && beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid("beta", "must lie in (0, 1]"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be at least 1"));
    }
    if replicas < 30 {
        return Err(Error::invalid(
            "replicas",
            "need at least 30 for meaningful standard errors",
        ));
    }

    let grad_bar = {
        let grads: Vec<Vec<f64>> = (0..n).map(|i| problem.full_grad(i, &thetas[i])).collect();
        mean_rows(&grads)
    };

    // One independent stream per (agent, replica); the replica index rides in
    // the iteration slot. Aggregation happens after the parallel section, in
    // replica order, so the result is independent of scheduling.
    let samples: Vec<(f64, f64)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut v_sum = vec![0.0; dim];
            let mut fresh_sum = vec![0.0; dim];
            for (i, theta) in thetas.iter().enumerate() {
                let mut rng = stream(seed, i as u64, r, Purpose::Probe);
                let mut v = problem.stoch_grad(i, theta, batch_size, &mut rng);
                for _ in 0..burn_in {
                    let (fresh, stale) =
                        problem.stoch_grad_pair(i, theta, theta, batch_size, &mut rng);
                    for k in 0..dim {
                        v[k] = beta * fresh[k] + (1.0 - beta) * (v[k] + fresh[k] - stale[k]);
                    }
                }
                let plain = problem.stoch_grad(i, theta, batch_size, &mut rng);
                for k in 0..dim {
                    v_sum[k] += v[k];
                    fresh_sum[k] += plain[k];
                }
            }
            let nf = n as f64;
            let with = grad_bar
                .iter()
                .enumerate()
                .map(|(k, gb)| {
                    let e = v_sum[k] / nf - gb;
                    e * e
                })
                .sum::<f64>();
            let without = grad_bar
                .iter()
                .enumerate()
                .map(|(k, gb)| {
                    let e = fresh_sum[k] / nf - gb;
                    e * e
                })
                .sum::<f64>();
            (with, without)
        })
        .collect();

    let (var_with, se_with) = mean_and_se(samples.iter().map(|s| s.0));
    let (var_without, se_without) = mean_and_se(samples.iter().map(|s| s.1));
    Ok(VarianceProbe {
        var_with,
        se_with,
        var_without,
        se_without,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let dim = rows.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dim];
    for row in rows {
        for (o, x) in out.iter_mut().zip(row) {
            *o += x;
        }
    }
    for o in &mut out {
        *o /= n;
    }
    out
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let xs: Vec<f64> = values.collect();
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}
