//! Compressed momentum-tracking descent and its identity-communication
//! reductions.

use rayon::prelude::*;

use super::{
    apply_round, charge_rounds, check_network, grad_view, grad_view_mut, round_messages,
    theta_view, theta_view_mut, HyperParams, NetworkState,
};
use crate::compression::CompressorSpec;
use crate::error::Error;
use crate::problems::Problem;
use crate::rng::{stream, Purpose};
use crate::topology::MixingMatrix;
use crate::Result;

/// One synchronous round of doubly compressed momentum tracking:
///
/// 1. descent half-step θ^{t+½} = θᵗ − η gᵗ;
/// 2. compressed θ round: broadcast Q(θ^{t+½} − θ̂ own copy), advance every
///    replica, then θᵗ⁺¹ = θ^{t+½} + γ Σ_j W_ij (θ̂_j − θ̂_i);
/// 3. momentum refresh from one fresh minibatch evaluated at both θᵗ⁺¹
///    and θᵗ: vᵗ⁺¹ = β ∇f̂(θᵗ⁺¹) + (1−β)(vᵗ + ∇f̂(θᵗ⁺¹) − ∇f̂(θᵗ));
/// 4. tracking half-step g^{t+½} = gᵗ + vᵗ⁺¹ − vᵗ;
/// 5. compressed g round, symmetric to step 2.
///
/// Two compressed exchanges are charged to the float counters per
/// iteration. The network averages obey ḡ = v̄ and
/// θ̄ᵗ⁺¹ = θ̄ᵗ − η ḡᵗ exactly (up to rounding), which the metrics layer
/// exposes for verification.
pub fn docom_step(
    problem: &dyn Problem,
    topology: &MixingMatrix,
    compressor: &CompressorSpec,
    hyper: &HyperParams,
    state: &mut NetworkState,
) -> Result<()> {
    check_network(problem, topology, state)?;
    hyper.validate()?;
    let d = problem.dim();
    if compressor.d() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: compressor.d(),
            context: "compressor dimension",
        });
    }
    let t = state.iter;
    let seed = state.seed;
    let (eta, gamma, beta, batch) = (hyper.eta, hyper.gamma, hyper.beta, hyper.batch_size);

    let theta_old: Vec<Vec<f64>> = state.agents.iter().map(|a| a.theta.clone()).collect();

    state.agents.par_iter_mut().for_each(|a| {
        for (th, g) in a.theta.iter_mut().zip(&a.g) {
            *th -= eta * g;
        }
    });

    let q_theta = round_messages(
        &state.agents,
        compressor,
        seed,
        t,
        Purpose::ThetaCompress,
        theta_view,
    )?;
    apply_round(&mut state.agents, &q_theta, topology, gamma, theta_view_mut);

    state.agents.par_iter_mut().enumerate().for_each(|(i, a)| {
        let mut rng = stream(seed, i as u64, t, Purpose::Batch);
        let (fresh, stale) =
            problem.stoch_grad_pair(i, &a.theta, &theta_old[i], batch, &mut rng);
        for k in 0..a.v.len() {
            let v_next = beta * fresh[k] + (1.0 - beta) * (a.v[k] + fresh[k] - stale[k]);
            a.g[k] += v_next - a.v[k];
            a.v[k] = v_next;
        }
    });

    let q_g = round_messages(
        &state.agents,
        compressor,
        seed,
        t,
        Purpose::GradCompress,
        grad_view,
    )?;
    apply_round(&mut state.agents, &q_g, topology, gamma, grad_view_mut);

    charge_rounds(state, topology, compressor, 2);
    state.iter += 1;
    Ok(())
}

/// Momentum tracking with exact (uncompressed) neighbor exchange; the
/// compressed machinery degenerates to full-vector messages of d floats.
pub fn hsgd_step(
    problem: &dyn Problem,
    topology: &MixingMatrix,
    hyper: &HyperParams,
    state: &mut NetworkState,
) -> Result<()> {
    let identity = CompressorSpec::identity(problem.dim())?;
    docom_step(problem, topology, &identity, hyper, state)
}

/// Plain stochastic gradient tracking: exact exchange and no momentum
/// memory (the estimator is always the freshest minibatch gradient).
/// Overrides whatever `beta` the caller supplies.
pub fn tracking_step(
    problem: &dyn Problem,
    topology: &MixingMatrix,
    hyper: &HyperParams,
    state: &mut NetworkState,
) -> Result<()> {
    let hp = HyperParams { beta: 1.0, ..*hyper };
    hsgd_step(problem, topology, &hp, state)
}
