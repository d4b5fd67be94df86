//! Uncompressed gossip descent: mix neighbors' iterates, then take a
//! local stochastic gradient step.

use rayon::prelude::*;

use super::{check_network, HyperParams, NetworkState};
use crate::problems::Problem;
use crate::rng::{stream, Purpose};
use crate::topology::MixingMatrix;
use crate::Result;

/// θ_iᵗ⁺¹ = Σ_j W_ij θ_jᵗ − η ∇f̂_i(θ_iᵗ), with full d-float messages to
/// every neighbor charged to both counters.
pub fn dsgd_step(
    problem: &dyn Problem,
    topology: &MixingMatrix,
    hyper: &HyperParams,
    state: &mut NetworkState,
) -> Result<()> {
    check_network(problem, topology, state)?;
    hyper.validate()?;
    let t = state.iter;
    let seed = state.seed;
    let theta_old: Vec<Vec<f64>> = state.agents.iter().map(|a| a.theta.clone()).collect();

    state.agents.par_iter_mut().enumerate().for_each(|(i, a)| {
        let mut rng = stream(seed, i as u64, t, Purpose::Batch);
        let grad = problem.stoch_grad(i, &theta_old[i], hyper.batch_size, &mut rng);
        for (k, th) in a.theta.iter_mut().enumerate() {
            let mixed: f64 = a
                .hood
                .iter()
                .map(|&j| topology.w(i, j) * theta_old[j][k])
                .sum();
            *th = mixed - hyper.eta * grad[k];
        }
    });

    let d = problem.dim() as u64;
    let links = topology.sum_degrees() as u64;
    state.floats_values_only += links * d;
    state.floats_with_indices += links * d;
    state.iter += 1;
    Ok(())
}
