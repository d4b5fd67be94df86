//! Least-squares local objectives f_i(θ) = ½‖A_i θ − b_i‖².
//!
//! The network objective f = (1/n) Σ f_i is convex quadratic with Hessian
//! H̄ = (1/n) Σ A_iᵀA_i. Even when individual A_i are rank-deficient (so f
//! has a flat subspace and no unique minimizer), f satisfies the
//! Polyak-Lojasiewicz inequality 2μ(f − f*) ≤ ‖∇f‖² with μ the smallest
//! positive eigenvalue of H̄ — the family is the standard torture test for
//! linear-rate claims that do not need strong convexity.
//!
//! Stochasticity is synthetic: a stochastic gradient is the exact
//! gradient plus isotropic Gaussian noise with E‖noise‖² = σ²/batch_size,
//! and a paired evaluation shares one noise draw so the pair difference is
//! noise-free. With σ = 0 the oracles reproduce the exact gradient
//! bit for bit.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{InitBatch, Problem, ProblemMeta};
use crate::error::Error;
use crate::Result;

/// Relative eigenvalue threshold below which H̄ directions count as flat.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    a: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
    dim: usize,
    sigma: f64,
    meta: ProblemMeta,
}

impl QuadraticProblem {
    /// Build from explicit per-agent systems: `a[i]` is the row list of
    /// A_i (all agents share the column count), `b[i]` its target vector.
    pub fn from_parts(
        n: usize,
        a: Vec<Vec<Vec<f64>>>,
        b: Vec<Vec<f64>>,
        sigma: f64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "need at least one agent"));
        }
        if a.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.len(),
                context: "system matrix count",
            });
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.len(),
                context: "target vector count",
            });
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", "must be finite and >= 0"));
        }
        let dim = a
            .first()
            .and_then(|rows| rows.first())
            .map(Vec::len)
            .unwrap_or(0);
        if dim == 0 {
            return Err(Error::invalid("a", "agent 0 has no rows or empty rows"));
        }
        let mut mats = Vec::with_capacity(n);
        let mut vecs = Vec::with_capacity(n);
        for (i, (rows, target)) in a.into_iter().zip(b.into_iter()).enumerate() {
            if rows.is_empty() {
                return Err(Error::EmptyShard { agent: i });
            }
            if rows.len() != target.len() {
                return Err(Error::DimensionMismatch {
                    expected: rows.len(),
                    got: target.len(),
                    context: "target length vs row count",
                });
            }
            if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: bad.len(),
                    context: "row length",
                });
            }
            let m = rows.len();
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            mats.push(DMatrix::from_row_slice(m, dim, &flat));
            vecs.push(DVector::from_vec(target));
        }
        let meta = exact_meta(&mats, &vecs, sigma)?;
        Ok(QuadraticProblem {
            a: mats,
            b: vecs,
            dim,
            sigma,
            meta,
        })
    }

    /// Random instance: A_i entries are N(0, 1/rows) (so the Gram matrices
    /// have O(1) spectrum as rows grow) and b_i entries are N(0, 1).
    pub fn new_random(
        n: usize,
        dim: usize,
        rows: usize,
        sigma: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if dim == 0 || rows == 0 {
            return Err(Error::invalid("dim/rows", "must be positive"));
        }
        let row_scale = 1.0 / (rows as f64).sqrt();
        let a: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| {
                (0..rows)
                    .map(|_| {
                        (0..dim)
                            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng) * row_scale)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let b: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..rows)
                    .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                    .collect()
            })
            .collect();
        Self::from_parts(n, a, b, sigma)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn residual(&self, agent: usize, theta: &[f64]) -> DVector<f64> {
        let th = DVector::from_column_slice(theta);
        &self.a[agent] * th - &self.b[agent]
    }

    /// Exact gradient plus one shared isotropic noise draw scaled for an
    /// averaged batch of the given size.
    fn noisy_grad(
        &self,
        agent: usize,
        theta: &[f64],
        batch_size: usize,
        noise: Option<&[f64]>,
    ) -> Vec<f64> {
        let mut g = self.full_grad(agent, theta);
        if let Some(xi) = noise {
            let scale = self.sigma / ((self.dim * batch_size.max(1)) as f64).sqrt();
            for (gi, ni) in g.iter_mut().zip(xi) {
                *gi += scale * ni;
            }
        }
        g
    }

    fn draw_noise(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        if self.sigma == 0.0 {
            return None;
        }
        Some(
            (0..self.dim)
                .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                .collect(),
        )
    }
}

/// Exact smoothness, PL, and optimum facts straight from the spectra.
fn exact_meta(a: &[DMatrix<f64>], b: &[DVector<f64>], sigma: f64) -> Result<ProblemMeta> {
    let n = a.len();
    let dim = a[0].ncols();
    let mut h_bar = DMatrix::<f64>::zeros(dim, dim);
    let mut c = DVector::<f64>::zeros(dim);
    let mut lipschitz: f64 = 0.0;
    for (ai, bi) in a.iter().zip(b) {
        let gram = ai.transpose() * ai;
        let local_lmax = gram
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, &l| m.max(l));
        lipschitz = lipschitz.max(local_lmax);
        h_bar += gram / n as f64;
        c += ai.transpose() * bi / n as f64;
    }
    let eig = h_bar.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l));
    if lmax <= 0.0 {
        return Err(Error::invalid("a", "all system matrices are zero"));
    }
    let threshold = RANK_TOL * lmax;
    let mu = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l > threshold)
        .fold(f64::INFINITY, |m, &l| m.min(l));
    // θ* = H̄⁺ c: invert only the non-flat directions. c lies in the span
    // of the row spaces, so the normal equations are consistent and this
    // is a true minimizer even for rank-deficient instances.
    let coeffs = eig.eigenvectors.transpose() * &c;
    let mut sol = DVector::<f64>::zeros(dim);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > threshold {
            sol += eig.eigenvectors.column(k) * (coeffs[k] / l);
        }
    }
    let f_star = a
        .iter()
        .zip(b)
        .map(|(ai, bi)| {
            let r = ai * &sol - bi;
            0.5 * r.norm_squared()
        })
        .sum::<f64>()
        / n as f64;
    Ok(ProblemMeta {
        lipschitz: Some(lipschitz),
        pl_mu: Some(mu),
        f_star: Some(f_star),
        noise_bound: Some(sigma * sigma),
    })
}

impl Problem for QuadraticProblem {
    fn n_agents(&self) -> usize {
        self.a.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn local_size(&self, _agent: usize) -> usize {
        1
    }

    fn value(&self, agent: usize, theta: &[f64]) -> f64 {
        0.5 * self.residual(agent, theta).norm_squared()
    }

    fn full_grad(&self, agent: usize, theta: &[f64]) -> Vec<f64> {
        let r = self.residual(agent, theta);
        (self.a[agent].transpose() * r).data.into()
    }

    fn stoch_grad(
        &self,
        agent: usize,
        theta: &[f64],
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64> {
        let noise = self.draw_noise(rng);
        self.noisy_grad(agent, theta, batch_size, noise.as_deref())
    }

    fn stoch_grad_pair(
        &self,
        agent: usize,
        theta_new: &[f64],
        theta_old: &[f64],
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> (Vec<f64>, Vec<f64>) {
        let noise = self.draw_noise(rng);
        (
            self.noisy_grad(agent, theta_new, batch_size, noise.as_deref()),
            self.noisy_grad(agent, theta_old, batch_size, noise.as_deref()),
        )
    }

    fn init_grad(
        &self,
        agent: usize,
        theta: &[f64],
        b0: InitBatch,
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64> {
        let count = match b0 {
            InitBatch::FullLocal => 1,
            InitBatch::Count(c) => c.max(1),
        };
        // Averaging `count` independent draws is one draw at batch size
        // `count`; take the equivalent single draw.
        let noise = self.draw_noise(rng);
        self.noisy_grad(agent, theta, count, noise.as_deref())
    }

    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{global_grad, global_value};
    use crate::rng::{stream, Purpose};

    fn norm_sq(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum()
    }

    #[test]
    fn identity_instance_has_exact_meta() {
        // f_i = ½‖θ − b_i‖²: L = 1, μ = 1, θ* = mean(b_i),
        // f* = mean ½‖b̄ − b_i‖².
        let eye: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let p = QuadraticProblem::from_parts(
            2,
            vec![eye.clone(), eye],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            0.0,
        )
        .unwrap();
        let meta = p.meta();
        assert!((meta.lipschitz.unwrap() - 1.0).abs() < 1e-12);
        assert!((meta.pl_mu.unwrap() - 1.0).abs() < 1e-12);
        assert!((meta.f_star.unwrap() - 0.25).abs() < 1e-12);
        let at_mean = global_value(&p, &[0.5, 0.5]);
        assert!((at_mean - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gradient_is_normal_equations_residual() {
        let p = QuadraticProblem::from_parts(
            1,
            vec![vec![vec![2.0, 0.0], vec![0.0, 3.0], vec![1.0, 1.0]]],
            vec![vec![1.0, -1.0, 0.5]],
            0.0,
        )
        .unwrap();
        let theta = [0.25, -0.75];
        // r = Aθ − b = (0.5−1, −2.25+1, −0.5−0.5) = (−0.5, −1.25, −1.0)
        // ∇ = Aᵀ r = (2·−0.5 + 1·−1.0, 3·−1.25 + 1·−1.0) = (−2.0, −4.75)
        let g = p.full_grad(0, &theta);
        assert!((g[0] + 2.0).abs() < 1e-14 && (g[1] + 4.75).abs() < 1e-14, "{g:?}");
        let v = p.value(0, &theta);
        let expect = 0.5 * (0.25 + 1.5625 + 1.0);
        assert!((v - expect).abs() < 1e-14);
    }

    #[test]
    fn pl_inequality_holds_including_rank_deficient_instances() {
        let mut rng = stream(11, 0, 0, Purpose::Probe);
        for (dim, rows) in [(4usize, 6usize), (6, 3), (5, 1), (3, 3)] {
            let p = QuadraticProblem::new_random(4, dim, rows, 0.0, &mut rng).unwrap();
            let mu = p.meta().pl_mu.unwrap();
            let f_star = p.meta().f_star.unwrap();
            assert!(mu > 0.0);
            for _ in 0..25 {
                let theta: Vec<f64> = (0..dim)
                    .map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0))
                    .collect();
                let gap = global_value(&p, &theta) - f_star;
                let gn = norm_sq(&global_grad(&p, &theta));
                assert!(gap >= -1e-10, "f* must lower-bound f (gap {gap})");
                assert!(
                    2.0 * mu * gap <= gn * (1.0 + 1e-9) + 1e-12,
                    "dim {dim} rows {rows}: 2μ·gap = {} > ‖∇f‖² = {gn}",
                    2.0 * mu * gap
                );
            }
        }
    }

    #[test]
    fn f_star_matches_direct_normal_equation_solve() {
        // Full-rank instance: the eigen pseudo-inverse must agree with an
        // LU solve of H̄ θ = c.
        let mut rng = stream(12, 0, 0, Purpose::Probe);
        let p = QuadraticProblem::new_random(3, 5, 8, 0.0, &mut rng).unwrap();
        let n = p.n_agents();
        let mut h = DMatrix::<f64>::zeros(5, 5);
        let mut c = DVector::<f64>::zeros(5);
        for i in 0..n {
            h += p.a[i].transpose() * &p.a[i] / n as f64;
            c += p.a[i].transpose() * &p.b[i] / n as f64;
        }
        let sol = h.lu().solve(&c).expect("full-rank instance");
        let f_at_sol = global_value(&p, sol.as_slice());
        let f_star = p.meta().f_star.unwrap();
        assert!(
            (f_at_sol - f_star).abs() <= 1e-10 * (1.0 + f_star.abs()),
            "{f_at_sol} vs {f_star}"
        );
        // And the gradient vanishes there.
        assert!(norm_sq(&global_grad(&p, sol.as_slice())) < 1e-18);
    }

    #[test]
    fn rank_deficient_optimum_has_zero_gradient() {
        let mut rng = stream(13, 0, 0, Purpose::Probe);
        let p = QuadraticProblem::new_random(3, 7, 2, 0.0, &mut rng).unwrap();
        // Recover θ* the same way meta does, then verify first-order
        // optimality independently of the pseudo-inverse construction.
        let n = p.n_agents();
        let mut h = DMatrix::<f64>::zeros(7, 7);
        let mut c = DVector::<f64>::zeros(7);
        for i in 0..n {
            h += p.a[i].transpose() * &p.a[i] / n as f64;
            c += p.a[i].transpose() * &p.b[i] / n as f64;
        }
        let svd = h.clone().svd(true, true);
        let sol = svd.solve(&c, 1e-10).unwrap();
        let f_at_sol = global_value(&p, sol.as_slice());
        let f_star = p.meta().f_star.unwrap();
        assert!((f_at_sol - f_star).abs() <= 1e-9 * (1.0 + f_star.abs()));
        assert!(norm_sq(&global_grad(&p, sol.as_slice())) < 1e-16);
    }

    #[test]
    fn zero_sigma_oracles_reproduce_exact_gradient_bitwise() {
        let mut rng = stream(14, 0, 0, Purpose::Probe);
        let p = QuadraticProblem::new_random(2, 4, 5, 0.0, &mut rng).unwrap();
        let theta = [0.3, -0.2, 0.9, 0.0];
        let exact = p.full_grad(1, &theta);
        let st = p.stoch_grad(1, &theta, 3, &mut stream(1, 1, 7, Purpose::Batch));
        assert_eq!(exact, st);
        let init = p.init_grad(1, &theta, InitBatch::FullLocal, &mut stream(1, 1, 0, Purpose::InitBatch));
        assert_eq!(exact, init);
    }

    #[test]
    fn paired_draw_difference_carries_no_noise() {
        let mut rng = stream(15, 0, 0, Purpose::Probe);
        let p = QuadraticProblem::new_random(2, 6, 6, 2.5, &mut rng).unwrap();
        let theta_new = [0.1, 0.2, -0.3, 0.4, 0.0, -0.1];
        let theta_old = [0.0; 6];
        let (gn, go) = p.stoch_grad_pair(0, &theta_new, &theta_old, 4, &mut rng);
        let exact_diff: Vec<f64> = p
            .full_grad(0, &theta_new)
            .iter()
            .zip(p.full_grad(0, &theta_old))
            .map(|(a, b)| a - b)
            .collect();
        for k in 0..6 {
            let got = gn[k] - go[k];
            assert!(
                (got - exact_diff[k]).abs() < 1e-12,
                "coordinate {k}: {got} vs {}",
                exact_diff[k]
            );
        }
        // But each side individually is noisy.
        let noise: f64 = gn
            .iter()
            .zip(p.full_grad(0, &theta_new))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!(noise > 0.0);
    }

    #[test]
    fn noise_second_moment_scales_as_sigma_sq_over_batch() {
        let sigma = 0.8;
        let batch = 4usize;
        let mut rng = stream(16, 0, 0, Purpose::Probe);
        let p = QuadraticProblem::new_random(1, 6, 6, sigma, &mut rng).unwrap();
        let theta = [0.0; 6];
        let exact = p.full_grad(0, &theta);
        let trials = 4000;
        let mut mean_sq = 0.0;
        for t in 0..trials {
            let g = p.stoch_grad(0, &theta, batch, &mut stream(2, 0, t, Purpose::Batch));
            mean_sq += g
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / trials as f64;
        }
        let expect = sigma * sigma / batch as f64;
        // Var(‖ξ‖²) = 2dσ⁴/(d·batch)² · d = 2σ⁴/(d·batch²); four standard
        // errors of the empirical mean bound the check.
        let se = (2.0 * sigma.powi(4) / (6.0 * (batch * batch) as f64) / trials as f64).sqrt();
        assert!(
            (mean_sq - expect).abs() < 4.0 * se,
            "mean ‖noise‖² = {mean_sq}, expected {expect} ± {}",
            4.0 * se
        );
    }

    #[test]
    fn rejects_malformed_parts() {
        assert!(QuadraticProblem::from_parts(0, vec![], vec![], 0.0).is_err());
        assert!(QuadraticProblem::from_parts(
            1,
            vec![vec![vec![1.0, 2.0], vec![3.0]]],
            vec![vec![0.0, 0.0]],
            0.0
        )
        .is_err());
        assert!(QuadraticProblem::from_parts(
            1,
            vec![vec![vec![1.0]]],
            vec![vec![0.0, 1.0]],
            0.0
        )
        .is_err());
        assert!(
            QuadraticProblem::from_parts(1, vec![vec![vec![1.0]]], vec![vec![0.0]], -1.0).is_err()
        );
        assert!(
            QuadraticProblem::from_parts(1, vec![vec![vec![0.0]]], vec![vec![1.0]], 0.0).is_err()
        );
    }
}
