//! Step-size and constant calculators derived from the convergence
//! analysis of the doubly compressed tracking method.
//!
//! All inputs are raw scalars so the calculators can be driven from a
//! concrete mixing matrix (via its ρ and ω̄) or swept over hypothetical
//! grids. The admissible consensus step γ is defined implicitly —
//! its own bound contains √(1−γ) — and is resolved here by fixed-point
//! iteration from 0; only the last min-term depends on γ, decreasing, so
//! the iteration settles quickly.

use crate::error::Error;
use crate::Result;

const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_ITERS: usize = 10_000;

/// Largest theory-admissible step sizes for a given problem/network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeStepSizes {
    /// Consensus step γ_max, the fixed point of its own bound.
    pub gamma: f64,
    /// Descent step η_max at γ = γ_max (the binding minimum of the
    /// consensus-limited and drift-limited bounds).
    pub eta: f64,
    /// Per-iteration contraction margin β̄ = min{ργ/8, δγ/8, β}.
    pub beta_bar: f64,
    /// Gradient-energy amplification constant multiplying η²‖ḡ‖².
    pub c_gbar: f64,
}

/// Constants of the descent analysis evaluated at explicit step sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants {
    /// Noise amplification constant multiplying β²σ².
    pub c_sigma: f64,
    /// Gradient-energy amplification constant multiplying η²‖ḡ‖².
    pub c_gbar: f64,
    /// Weight of the tracked-gradient disagreement in the potential.
    pub a: f64,
    /// Weight of the g-replica mismatch in the potential.
    pub b: f64,
    /// Weight of the θ-replica mismatch in the potential.
    pub c: f64,
    /// Contraction margin β̄ = min{ργ/8, δγ/8, β}.
    pub beta_bar: f64,
    /// Echoes of the evaluation point, kept for downstream diagnostics.
    pub lipschitz: f64,
    pub eta: f64,
    pub gamma: f64,
}

fn check_common(
    lipschitz: f64,
    rho: f64,
    delta: f64,
    omega_bar: f64,
    n: usize,
) -> Result<()> {
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::invalid("lipschitz", "must be finite and > 0"));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::invalid("rho", "must lie in (0, 1]"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid("delta", "must lie in (0, 1]"));
    }
    if !(omega_bar.is_finite() && omega_bar >= 0.0) {
        return Err(Error::invalid("omega_bar", "must be finite and >= 0"));
    }
    if omega_bar == 0.0 {
        return Err(Error::DegenerateTopology);
    }
    if n == 0 {
        return Err(Error::invalid("n", "need at least one agent"));
    }
    Ok(())
}

fn gamma_bound(gamma: f64, rho: f64, delta: f64, omega_bar: f64, n: usize) -> f64 {
    let w2 = omega_bar * omega_bar;
    (1.0 / (4.0 * rho))
        .min(rho * n as f64 / (64.0 * w2))
        .min(delta / (10.0 * omega_bar))
        .min(delta * rho * (1.0 - gamma).max(0.0).sqrt() / (259.0 * w2))
}

fn c_gbar_value(lipschitz: f64, rho: f64, omega_bar: f64, n: usize, beta: f64, gamma: f64) -> f64 {
    let l2 = lipschitz * lipschitz;
    8.0 * (1.0 - beta).powi(2) * l2 * (1.0 - rho * gamma).powi(2)
        + (l2 * n as f64 / (rho * gamma))
            * (96.0 + (141.0 / 400.0) * rho * rho / (omega_bar * omega_bar))
}

fn beta_bar_value(rho: f64, delta: f64, gamma: f64, beta: f64) -> f64 {
    (rho * gamma / 8.0).min(delta * gamma / 8.0).min(beta)
}

/// Largest (η, γ) the analysis admits, for smoothness constant L,
/// spectral gap ρ, compressor quality δ, deviation radius ω̄ = max|λ−1|
/// over the mixing spectrum, network size n, and momentum β ∈ (0, 1).
pub fn safe_step_sizes(
    lipschitz: f64,
    rho: f64,
    delta: f64,
    omega_bar: f64,
    n: usize,
    beta: f64,
) -> Result<SafeStepSizes> {
    check_common(lipschitz, rho, delta, omega_bar, n)?;
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(
            "beta",
            "must lie strictly inside (0, 1) for the step-size bounds",
        ));
    }

    let mut gamma = 0.0f64;
    let mut converged = false;
    for _ in 0..FIXED_POINT_MAX_ITERS {
        let next = gamma_bound(gamma, rho, delta, omega_bar, n).clamp(0.0, 1.0);
        let done = (next - gamma).abs() <= FIXED_POINT_TOL;
        gamma = next;
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::invalid(
            "gamma",
            "fixed-point iteration for the consensus step did not settle",
        ));
    }

    let eta_consensus = (gamma / lipschitz)
        * (((1.0 - beta) / (beta * n as f64)).sqrt() * (gamma * rho.powi(3)).sqrt() / 45.0)
            .min(rho * rho / (240.0 * omega_bar));
    let beta_bar = beta_bar_value(rho, delta, gamma, beta);
    let c_gbar = c_gbar_value(lipschitz, rho, omega_bar, n, beta, gamma);
    let eta_drift = (beta_bar * n as f64 / (8.0 * c_gbar)).sqrt();
    Ok(SafeStepSizes {
        gamma,
        eta: eta_consensus.min(eta_drift),
        beta_bar,
        c_gbar,
    })
}

/// The analysis constants at explicit (η, γ). γ = 1 is rejected: the
/// replica-mismatch weights divide by 1 − γ.
#[allow(clippy::too_many_arguments)]
pub fn theory_constants(
    lipschitz: f64,
    rho: f64,
    delta: f64,
    omega_bar: f64,
    n: usize,
    beta: f64,
    eta: f64,
    gamma: f64,
) -> Result<TheoryConstants> {
    check_common(lipschitz, rho, delta, omega_bar, n)?;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid("beta", "must lie in (0, 1]"));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid("eta", "must be finite and > 0"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid("gamma", "must lie strictly inside (0, 1)"));
    }
    let l2 = lipschitz * lipschitz;
    let nf = n as f64;
    let w2 = omega_bar * omega_bar;
    let eta2 = eta * eta;
    let c_sigma = 4.0
        + (eta2 / gamma.powi(3)) * (672.0 * l2 * nf / rho.powi(3))
        + (eta2 / gamma) * (6.0 * l2 * nf * rho.powi(4) * delta / (25.0 * w2))
        + (eta2 / (gamma * gamma)) * (4.0 * l2 * nf / w2);
    let a = 96.0 * l2 * eta2 / (rho * rho * gamma * gamma);
    let b = (eta2 / (gamma * (1.0 - gamma))) * (3072.0 * w2 * l2 / (delta * rho.powi(3)));
    let c = (gamma / (1.0 - gamma)) * (48.0 * l2 * w2 / (delta * rho));
    Ok(TheoryConstants {
        c_sigma,
        c_gbar: c_gbar_value(lipschitz, rho, omega_bar, n, beta, gamma),
        a,
        b,
        c,
        beta_bar: beta_bar_value(rho, delta, gamma, beta),
        lipschitz,
        eta,
        gamma,
    })
}
