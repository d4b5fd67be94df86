//! Compressed gossip descent with error compensation (a CHOCO-SGD-style
//! update): one stochastic descent step, then one compressed consensus
//! round over replicated θ̂ variables.

use rayon::prelude::*;

use super::{
    apply_round, charge_rounds, check_network, round_messages, theta_view, theta_view_mut,
    HyperParams, NetworkState,
};
use crate::compression::CompressorSpec;
use crate::error::Error;
use crate::problems::Problem;
use crate::rng::{stream, Purpose};
use crate::topology::MixingMatrix;
use crate::Result;

/// One round:
///
/// 1. half-step θ^{t+½} = θᵗ − η ∇f̂(θᵗ) from one fresh minibatch;
/// 2. broadcast Q(θ^{t+½} − θ̂ own copy) and advance every replica;
/// 3. θᵗ⁺¹ = θ^{t+½} + γ Σ_j W_ij (θ̂_j − θ̂_i).
///
/// One compressed exchange is charged per iteration — half the traffic of
/// the doubly compressed tracking step at the same sparsity.
pub fn choco_step(
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

    state.agents.par_iter_mut().enumerate().for_each(|(i, a)| {
        let mut rng = stream(seed, i as u64, t, Purpose::Batch);
        let grad = problem.stoch_grad(i, &a.theta, hyper.batch_size, &mut rng);
        for (th, g) in a.theta.iter_mut().zip(&grad) {
            *th -= hyper.eta * g;
        }
    });

    let q = round_messages(
        &state.agents,
        compressor,
        seed,
        t,
        Purpose::ThetaCompress,
        theta_view,
    )?;
    apply_round(&mut state.agents, &q, topology, hyper.gamma, theta_view_mut);

    charge_rounds(state, topology, compressor, 1);
    state.iter += 1;
    Ok(())
}
