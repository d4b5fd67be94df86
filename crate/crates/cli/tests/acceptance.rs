//! Acceptance gate: ten end-to-end checks, each printing one summary line
//! of the form `A# PASS ...` or `A# FAIL ...` with the measured values and
//! tolerances. Run with
//!
//! ```text
//! cargo test -p docom-cli --test acceptance -- --nocapture --test-threads=1
//! ```
//!
//! to see the lines in order. A4 is expected to fail: it drives the
//! noiseless compressed run with the step sizes the convergence guarantee
//! derives, and on an 8-agent ring with delta = 0.2 those bounds are around
//! 5e-9 / L, far too small to show measurable decay within the iteration
//! budget. The companion property test
//! `noiseless_compressed_run_converges_linearly_at_practical_steps` (core
//! crate) demonstrates the linear decay itself at practical step sizes.

use rand::Rng;
use rayon::prelude::*;

use docom_core::rng::{stream, Purpose};
use docom_core::{
    docom_init, docom_step, generate_synthetic, momentum_variance_probe, run, run_observed,
    safe_step_sizes, CompressorSpec, HyperParams, InitBatch, LabelEncoding, MixingMatrix, Problem,
    QuadraticProblem, RunSetup, SigmoidProblem, SyntheticConfig, SyntheticDataset,
};

use docom_cli::config::{resolve, ExperimentConfig};
use docom_cli::{presets, runner};

fn pairs(list: &[(&str, &str)]) -> Vec<(String, String)> {
    list.iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn preset_config(name: &str, overrides: &[(&str, &str)]) -> ExperimentConfig {
    let preset = presets::preset(name).expect("known preset");
    resolve(&[preset, pairs(overrides)]).expect("config resolves")
}

fn hyper_of(cfg: &ExperimentConfig) -> HyperParams {
    HyperParams {
        eta: cfg.eta,
        gamma: cfg.gamma,
        beta: cfg.beta,
        b0: cfg.b0,
        batch_size: cfg.batch,
    }
}

fn setup_of<'a>(
    cfg: &ExperimentConfig,
    problem: &'a dyn Problem,
    topology: &'a MixingMatrix,
) -> RunSetup<'a> {
    RunSetup {
        problem,
        topology,
        algorithm: cfg.algo,
        compressor: cfg.compressor.build(problem.dim()).expect("compressor fits"),
        hyper: hyper_of(cfg),
        iters: cfg.iters,
        stride: cfg.stride,
        seed: cfg.seed,
        theta0: None,
        lr_decay: cfg.lr_decay.clone(),
        timing: cfg.timing,
    }
}

fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// max_k |a_k - b_k| / max(1, max_k |b_k|): relative where the reference is
/// large, absolute where it is small.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / max_abs(b).max(1.0)
}

#[test]
fn a01_tracker_and_iterate_averages_are_conserved() {
    let cfg = preset_config(
        "syn-linear-docom",
        &[("iters", "2000"), ("stride", "2000")],
    );
    let problem = runner::build_problem(&cfg).unwrap();
    let topology = runner::build_topology(&cfg).unwrap();
    let setup = setup_of(&cfg, problem.as_ref(), &topology);
    let (n, d, eta) = (problem.n_agents() as f64, problem.dim(), cfg.eta);

    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut err_gv = 0.0f64;
    let mut err_rec = 0.0f64;
    run_observed(&setup, |state| {
        let mut tb = vec![0.0; d];
        let mut gb = vec![0.0; d];
        let mut vb = vec![0.0; d];
        for a in &state.agents {
            for k in 0..d {
                tb[k] += a.theta[k];
                gb[k] += a.g[k];
                vb[k] += a.v[k];
            }
        }
        for k in 0..d {
            tb[k] /= n;
            gb[k] /= n;
            vb[k] /= n;
        }
        err_gv = err_gv.max(rel_err(&gb, &vb));
        if let Some((pt, pg)) = &prev {
            let expect: Vec<f64> = pt.iter().zip(pg).map(|(t, g)| t - eta * g).collect();
            err_rec = err_rec.max(rel_err(&tb, &expect));
        }
        prev = Some((tb, gb));
    })
    .expect("run succeeds");

    let pass = err_gv <= 1e-9 && err_rec <= 1e-9;
    println!(
        "A1 {} tracker_vs_momentum_avg_err={err_gv:.3e}, iterate_avg_recursion_err={err_rec:.3e} (tol 1e-9, 2000 iterations, n=25 ring)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "conservation identities exceeded 1e-9");
}

#[test]
fn a02_compressors_contract_as_promised() {
    // Deterministic hard bound for top-k on 1,000 random vectors.
    let mut worst_slack = f64::NEG_INFINITY;
    for case in 0..1000u64 {
        let mut rng = stream(1100, case, 0, Purpose::Probe);
        let d = rng.random_range(2..=64usize);
        let k = rng.random_range(1..=d);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = CompressorSpec::top_k(k, d).unwrap();
        let q = spec.compress(&x, &mut rng).unwrap();
        let err: f64 = x.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
        let norm: f64 = x.iter().map(|v| v * v).sum();
        let bound = (1.0 - k as f64 / d as f64) * norm;
        let slack = err - bound - 1e-12 * norm.max(1.0);
        worst_slack = worst_slack.max(slack);
        assert!(
            slack <= 0.0,
            "top-k contraction violated: err {err} > bound {bound} at d={d}, k={k}"
        );
    }

    // Statistical mean bound for rand-k over 10^4 trials.
    let (d, k, trials) = (32usize, 7usize, 10_000u64);
    let mut rng = stream(1200, 0, 0, Purpose::Probe);
    let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm: f64 = x.iter().map(|v| v * v).sum();
    let spec = CompressorSpec::rand_k(k, d).unwrap();
    let samples: Vec<f64> = (0..trials)
        .map(|t| {
            let mut trial_rng = stream(1201, t, 0, Purpose::Probe);
            let q = spec.compress(&x, &mut trial_rng).unwrap();
            x.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum()
        })
        .collect();
    let mean: f64 = samples.iter().sum::<f64>() / trials as f64;
    let var: f64 =
        samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (trials - 1) as f64;
    let se = (var / trials as f64).sqrt();
    let target = (1.0 - k as f64 / d as f64) * norm;
    let z = (mean - target).abs() / se;

    let pass = z <= 3.0;
    println!(
        "A2 {} top_k hard bound held on 1000 vectors (worst slack {worst_slack:.2e}); rand_k mean={mean:.6} vs target={target:.6}, |z|={z:.2} (tol 3 SE over 10^4 trials)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "rand-k mean contraction off by more than 3 standard errors");
}

// Dense power-iteration oracle for the two spectral quantities, independent
// of the library's own eigensolver. Both operators annihilate the all-ones
// direction analytically, so plain power iteration on the squared operator
// finds the magnitude of the relevant extreme eigenvalue.
fn power_extreme_magnitude(apply: &dyn Fn(&[f64]) -> Vec<f64>, n: usize, seed: u64) -> f64 {
    let mut rng = stream(seed, 0, 0, Purpose::Probe);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut last = f64::INFINITY;
    for _ in 0..200_000 {
        let ax = apply(&x);
        let aax = apply(&ax);
        let num: f64 = x.iter().zip(&aax).map(|(a, b)| a * b).sum();
        let den: f64 = x.iter().map(|v| v * v).sum();
        if den < 1e-280 {
            return 0.0;
        }
        let lambda_sq = (num / den).max(0.0);
        let norm = aax.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-280 {
            return 0.0;
        }
        x = aax.iter().map(|v| v / norm).collect();
        if (lambda_sq - last).abs() <= 1e-14 * lambda_sq.max(1e-300) {
            return lambda_sq.sqrt();
        }
        last = lambda_sq;
    }
    last.max(0.0).sqrt()
}

fn random_metropolis(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, 1, 0, Purpose::Probe);
    let mut adj = vec![vec![false; n]; n];
    for v in 1..n {
        let u = rng.random_range(0..v);
        adj[u][v] = true;
        adj[v][u] = true;
    }
    for u in 0..n {
        for v in (u + 1)..n {
            if !adj[u][v] && rng.random_range(0.0..1.0) < 0.3 {
                adj[u][v] = true;
                adj[v][u] = true;
            }
        }
    }
    let deg: Vec<usize> = (0..n).map(|u| (0..n).filter(|&v| adj[u][v]).count()).collect();
    let mut w = vec![vec![0.0; n]; n];
    for u in 0..n {
        let mut off = 0.0;
        for v in 0..n {
            if adj[u][v] {
                w[u][v] = 1.0 / (1.0 + deg[u].max(deg[v]) as f64);
                off += w[u][v];
            }
        }
        w[u][u] = 1.0 - off;
    }
    w
}

#[test]
fn a03_spectral_quantities_match_an_independent_oracle() {
    let ring4 = MixingMatrix::ring(4).unwrap();
    let rho_err = (ring4.rho() - 2.0 / 3.0).abs();
    let omega_err = (ring4.omega_bar() - 4.0 / 3.0).abs();
    assert!(rho_err <= 1e-9 && omega_err <= 1e-9, "ring(4) spectra off");

    let mut max_rho_diff = 0.0f64;
    let mut max_omega_diff = 0.0f64;
    for trial in 0..20u64 {
        let n = 3 + (trial as usize % 10);
        let dense = random_metropolis(n, 3000 + trial);
        let flat: Vec<f64> = dense.iter().flatten().copied().collect();
        let w = MixingMatrix::from_weights(n, flat).expect("valid mixing matrix");

        let wd = dense.clone();
        let apply_b = move |x: &[f64]| -> Vec<f64> {
            let mean: f64 = x.iter().sum::<f64>() / x.len() as f64;
            (0..x.len())
                .map(|i| (0..x.len()).map(|j| wd[i][j] * x[j]).sum::<f64>() - mean)
                .collect()
        };
        let wd2 = dense.clone();
        let apply_m = move |x: &[f64]| -> Vec<f64> {
            (0..x.len())
                .map(|i| (0..x.len()).map(|j| wd2[i][j] * x[j]).sum::<f64>() - x[i])
                .collect()
        };
        let rho_oracle = 1.0 - power_extreme_magnitude(&apply_b, n, 500 + trial);
        let omega_oracle = power_extreme_magnitude(&apply_m, n, 600 + trial);
        max_rho_diff = max_rho_diff.max((rho_oracle - w.rho()).abs());
        max_omega_diff = max_omega_diff.max((omega_oracle - w.omega_bar()).abs());
    }

    let pass = max_rho_diff <= 1e-6 && max_omega_diff <= 1e-6;
    println!(
        "A3 {} ring(4) rho_err={rho_err:.2e}, omega_err={omega_err:.2e} (tol 1e-9); power-iteration oracle max diffs rho={max_rho_diff:.2e}, omega={max_omega_diff:.2e} over 20 random graphs (tol 1e-6)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "spectral oracle disagreement above 1e-6");
}

#[test]
fn a04_guarantee_step_sizes_give_linear_decay_without_noise() {
    let mut rng = stream(99, 0, 0, Purpose::DataGen);
    let problem = QuadraticProblem::new_random(8, 10, 14, 0.0, &mut rng).unwrap();
    let topology = MixingMatrix::ring(8).unwrap();
    let lipschitz = problem.meta().lipschitz.expect("quadratic knows L");
    let delta = 0.2;
    let safe = safe_step_sizes(
        lipschitz,
        topology.rho(),
        delta,
        topology.omega_bar(),
        8,
        0.5,
    )
    .unwrap();

    let setup = RunSetup {
        problem: &problem,
        topology: &topology,
        algorithm: docom_core::AlgorithmKind::Docom,
        compressor: CompressorSpec::top_k(2, 10).unwrap(),
        hyper: HyperParams {
            eta: safe.eta,
            gamma: safe.gamma,
            beta: 0.5,
            b0: InitBatch::FullLocal,
            batch_size: 1,
        },
        iters: 2000,
        stride: 100,
        seed: 11,
        theta0: None,
        lr_decay: vec![],
        timing: false,
    };
    let records = run(&setup).unwrap();
    let gap0 = records.first().unwrap().optimality_gap.unwrap();
    let gap_t = records.last().unwrap().optimality_gap.unwrap();
    let ratio = gap_t / gap0;

    // Least-squares slope of ln(gap) against the iteration index.
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| {
            r.optimality_gap
                .filter(|g| *g > 0.0)
                .map(|g| (r.iter as f64, g.ln()))
        })
        .collect();
    let m = points.len() as f64;
    let (sx, sy): (f64, f64) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);

    let pass = slope < 0.0 && ratio <= 1e-6;
    println!(
        "A4 {} gap_ratio={ratio:.3e} (needed <= 1e-6), log_gap_slope={slope:.3e} (needed < 0) at eta={:.3e}, gamma={:.3e}; the guarantee-derived steps are too small to move the iterates measurably in 2000 iterations, see the practical-step companion test in the core crate for the linear decay itself",
        if pass { "PASS" } else { "FAIL" },
        safe.eta,
        safe.gamma
    );
    assert!(
        pass,
        "no measurable linear decay at the guarantee-derived step sizes (ratio {ratio:.3e}, slope {slope:.3e})"
    );
}

#[test]
fn a05_equal_budget_comparison_favors_the_compressed_tracker() {
    // Equal values-only float budget: 75,000,000 floats for every method.
    let runs: Vec<(&str, u64, u64)> = vec![
        ("syn-linear-docom", 3000, 1),
        ("syn-linear-docom", 3000, 2),
        ("syn-linear-docom", 3000, 3),
        ("syn-linear-choco", 3000, 1),
        ("syn-linear-choco", 3000, 2),
        ("syn-linear-choco", 3000, 3),
        ("syn-linear-dsgd", 300, 1),
        ("syn-linear-dsgd", 300, 2),
        ("syn-linear-dsgd", 300, 3),
    ];
    let finals: Vec<(String, u64, docom_core::MetricsRecord)> = runs
        .par_iter()
        .map(|(preset, iters, seed)| {
            let it = iters.to_string();
            let sd = seed.to_string();
            let cfg = preset_config(
                preset,
                &[
                    ("iters", it.as_str()),
                    ("stride", it.as_str()),
                    ("seed", sd.as_str()),
                    ("data_seed", sd.as_str()),
                ],
            );
            let records = runner::execute(&cfg).expect("run succeeds");
            (preset.to_string(), *seed, records.last().unwrap().clone())
        })
        .collect();

    for (preset, seed, rec) in &finals {
        assert_eq!(
            rec.floats_values_only, 75_000_000,
            "{preset} seed {seed} spent a different budget"
        );
    }
    let median = |preset: &str, pick: &dyn Fn(&docom_core::MetricsRecord) -> f64| -> f64 {
        let mut vals: Vec<f64> = finals
            .iter()
            .filter(|(p, _, _)| p == preset)
            .map(|(_, _, r)| pick(r))
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals[vals.len() / 2]
    };
    let gap = |r: &docom_core::MetricsRecord| r.consensus_gap;
    let worst = |r: &docom_core::MetricsRecord| r.worst_loss;
    let docom_gap = median("syn-linear-docom", &gap);
    let choco_gap = median("syn-linear-choco", &gap);
    let docom_worst = median("syn-linear-docom", &worst);
    let choco_worst = median("syn-linear-choco", &worst);
    let dsgd_worst = median("syn-linear-dsgd", &worst);

    let pass = docom_gap <= choco_gap / 5.0
        && docom_worst <= dsgd_worst
        && docom_worst <= choco_worst;
    println!(
        "A5 {} at 75,000,000 floats (medians over seeds 1..3): consensus_gap docom={docom_gap:.3e} vs choco={choco_gap:.3e} (need <= 1/5), worst_loss docom={docom_worst:.6} vs choco={choco_worst:.6} and dsgd={dsgd_worst:.6} (need <= both)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "equal-budget ordering not reproduced");
}

// Straight-line dense reference: full n x n replica tables, no shared state
// machinery, plain loops. Written independently of the library so the two
// can only agree if both implement the same update.
struct DenseRef {
    theta: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    theta_hat: Vec<Vec<Vec<f64>>>, // [holder][owner][coord]
    g_hat: Vec<Vec<Vec<f64>>>,
    iter: u64,
    seed: u64,
}

impl DenseRef {
    fn init(
        problem: &dyn Problem,
        n: usize,
        d: usize,
        hyper: &HyperParams,
        seed: u64,
    ) -> DenseRef {
        let theta = vec![vec![0.0; d]; n];
        let v: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut rng = stream(seed, i as u64, 0, Purpose::InitBatch);
                problem.init_grad(i, &theta[i], hyper.b0, &mut rng)
            })
            .collect();
        DenseRef {
            g: v.clone(),
            v,
            theta_hat: vec![vec![vec![0.0; d]; n]; n],
            g_hat: vec![vec![vec![0.0; d]; n]; n],
            iter: 0,
            seed,
            theta,
        }
    }

    fn holds(w: &MixingMatrix, holder: usize, owner: usize) -> bool {
        holder == owner || w.w(holder, owner) != 0.0
    }

    fn step(
        &mut self,
        problem: &dyn Problem,
        w: &MixingMatrix,
        comp: &CompressorSpec,
        hyper: &HyperParams,
    ) {
        let n = self.theta.len();
        let d = self.theta[0].len();
        let t = self.iter;
        let theta_old = self.theta.clone();

        // Descent half step.
        for i in 0..n {
            for k in 0..d {
                self.theta[i][k] -= hyper.eta * self.g[i][k];
            }
        }
        // Iterate round: compress the residual against the sender's own
        // replica, deliver to every holder, then gossip-correct.
        let mut q = Vec::with_capacity(n);
        for i in 0..n {
            let diff: Vec<f64> = (0..d)
                .map(|k| self.theta[i][k] - self.theta_hat[i][i][k])
                .collect();
            let mut rng = stream(self.seed, i as u64, t, Purpose::ThetaCompress);
            q.push(comp.compress(&diff, &mut rng).unwrap());
        }
        for holder in 0..n {
            for owner in 0..n {
                if Self::holds(w, holder, owner) {
                    for k in 0..d {
                        self.theta_hat[holder][owner][k] += q[owner][k];
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if j == i || w.w(i, j) == 0.0 {
                    continue;
                }
                let scale = hyper.gamma * w.w(i, j);
                for k in 0..d {
                    self.theta[i][k] +=
                        scale * (self.theta_hat[i][j][k] - self.theta_hat[i][i][k]);
                }
            }
        }
        // Momentum refresh and tracker accumulation from one shared batch.
        for i in 0..n {
            let mut rng = stream(self.seed, i as u64, t, Purpose::Batch);
            let (fresh, stale) = problem.stoch_grad_pair(
                i,
                &self.theta[i],
                &theta_old[i],
                hyper.batch_size,
                &mut rng,
            );
            for k in 0..d {
                let v_next = hyper.beta * fresh[k]
                    + (1.0 - hyper.beta) * (self.v[i][k] + fresh[k] - stale[k]);
                self.g[i][k] += v_next - self.v[i][k];
                self.v[i][k] = v_next;
            }
        }
        // Tracker round, same shape as the iterate round.
        let mut qg = Vec::with_capacity(n);
        for i in 0..n {
            let diff: Vec<f64> = (0..d).map(|k| self.g[i][k] - self.g_hat[i][i][k]).collect();
            let mut rng = stream(self.seed, i as u64, t, Purpose::GradCompress);
            qg.push(comp.compress(&diff, &mut rng).unwrap());
        }
        for holder in 0..n {
            for owner in 0..n {
                if Self::holds(w, holder, owner) {
                    for k in 0..d {
                        self.g_hat[holder][owner][k] += qg[owner][k];
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if j == i || w.w(i, j) == 0.0 {
                    continue;
                }
                let scale = hyper.gamma * w.w(i, j);
                for k in 0..d {
                    self.g[i][k] += scale * (self.g_hat[i][j][k] - self.g_hat[i][i][k]);
                }
            }
        }
        self.iter += 1;
    }
}

#[test]
fn a06_library_step_matches_the_dense_reference_and_the_no_memory_reduction() {
    // Part 1: identity compressor on a 3-agent quadratic, 50 iterations,
    // per-coordinate agreement within 1e-12.
    let mut rng = stream(42, 0, 0, Purpose::DataGen);
    let problem = QuadraticProblem::new_random(3, 7, 9, 0.0, &mut rng).unwrap();
    let topology = MixingMatrix::ring(3).unwrap();
    let comp = CompressorSpec::identity(7).unwrap();
    let hyper = HyperParams {
        eta: 0.05,
        gamma: 0.6,
        beta: 0.4,
        b0: InitBatch::FullLocal,
        batch_size: 1,
    };
    let seed = 5;
    let mut state = docom_init(&problem, &topology, &hyper, &comp, seed, None).unwrap();
    let mut dense = DenseRef::init(&problem, 3, 7, &hyper, seed);
    let mut max_dev = 0.0f64;
    for step in 0..50 {
        docom_step(&problem, &topology, &comp, &hyper, &mut state).unwrap();
        dense.step(&problem, &topology, &comp, &hyper);
        for i in 0..3 {
            for k in 0..7 {
                max_dev = max_dev
                    .max((state.agents[i].theta[k] - dense.theta[i][k]).abs())
                    .max((state.agents[i].v[k] - dense.v[i][k]).abs())
                    .max((state.agents[i].g[k] - dense.g[i][k]).abs());
            }
        }
        assert!(
            max_dev <= 1e-12,
            "dense reference deviates by {max_dev:.3e} at step {step}"
        );
    }

    // Part 2: with beta = 1 the momentum estimator must equal the fresh
    // minibatch gradient bit for bit, every agent, every iteration.
    let mut rng = stream(43, 0, 0, Purpose::DataGen);
    let noisy = QuadraticProblem::new_random(4, 6, 8, 0.5, &mut rng).unwrap();
    let ring4 = MixingMatrix::ring(4).unwrap();
    let comp4 = CompressorSpec::top_k(2, 6).unwrap();
    let hyper1 = HyperParams {
        eta: 0.03,
        gamma: 0.4,
        beta: 1.0,
        b0: InitBatch::Count(3),
        batch_size: 2,
    };
    let seed1 = 77;
    let mut state = docom_init(&noisy, &ring4, &hyper1, &comp4, seed1, None).unwrap();
    let mut checked = 0u64;
    for _ in 0..40 {
        let theta_old: Vec<Vec<f64>> =
            state.agents.iter().map(|a| a.theta.clone()).collect();
        docom_step(&noisy, &ring4, &comp4, &hyper1, &mut state).unwrap();
        let t_used = state.iter - 1;
        for (i, agent) in state.agents.iter().enumerate() {
            let mut rng = stream(seed1, i as u64, t_used, Purpose::Batch);
            let (fresh, _) =
                noisy.stoch_grad_pair(i, &agent.theta, &theta_old[i], 2, &mut rng);
            for k in 0..6 {
                assert_eq!(
                    agent.v[k].to_bits(),
                    fresh[k].to_bits(),
                    "agent {i} coord {k} not bit-identical at t={t_used}"
                );
                checked += 1;
            }
        }
    }

    println!(
        "A6 PASS dense reference max deviation {max_dev:.3e} over 50 iterations (tol 1e-12); no-memory reduction bit-identical on {checked} coordinates"
    );
}

#[test]
fn a07_gradient_oracles_agree_with_finite_differences_and_are_unbiased() {
    let mut worst_fd = 0.0f64;

    // Finite differences on both problem families: the directional
    // derivative along the gradient direction and along the steepest
    // coordinate, centered, h = 1e-5.
    let mut rng = stream(71, 0, 0, Purpose::DataGen);
    let quad = QuadraticProblem::new_random(3, 8, 12, 0.7, &mut rng).unwrap();
    let synth = generate_synthetic(
        &SyntheticConfig {
            d_feat: 8,
            classes: 3,
            partition: vec![20, 15, 15],
            dominant_classes: 2,
            dominant_frac: 0.9,
            mean_scale: 1.0,
        },
        &mut stream(72, 0, 0, Purpose::DataGen),
    )
    .unwrap();
    let sig = SigmoidProblem::new(synth, 1e-4, LabelEncoding::PlusMinus).unwrap();
    let problems: [&dyn Problem; 2] = [&quad, &sig];

    for (pi, problem) in problems.iter().enumerate() {
        let d = problem.dim();
        for point in 0..5u64 {
            let mut rng = stream(73 + pi as u64, point, 0, Purpose::Probe);
            let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
            for agent in 0..problem.n_agents() {
                let grad = problem.full_grad(agent, &theta);
                let gnorm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(gnorm > 0.0, "stationary probe point, pick another seed");
                let steepest = (0..d)
                    .max_by(|&a, &b| grad[a].abs().partial_cmp(&grad[b].abs()).unwrap())
                    .unwrap();
                let mut dirs: Vec<Vec<f64>> = Vec::new();
                dirs.push(grad.iter().map(|g| g / gnorm).collect());
                let mut e = vec![0.0; d];
                e[steepest] = 1.0;
                dirs.push(e);
                for u in dirs {
                    let h = 1e-5;
                    let plus: Vec<f64> =
                        theta.iter().zip(&u).map(|(t, uu)| t + h * uu).collect();
                    let minus: Vec<f64> =
                        theta.iter().zip(&u).map(|(t, uu)| t - h * uu).collect();
                    let fd =
                        (problem.value(agent, &plus) - problem.value(agent, &minus)) / (2.0 * h);
                    let analytic: f64 = grad.iter().zip(&u).map(|(g, uu)| g * uu).sum();
                    let rel = (fd - analytic).abs() / analytic.abs().max(1e-3 * gnorm);
                    worst_fd = worst_fd.max(rel);
                    assert!(
                        rel <= 1e-4,
                        "finite-difference mismatch {rel:.3e} (family {pi}, agent {agent})"
                    );
                }
            }
        }
    }

    // Unbiasedness on a 50-sample dataset by exhaustive enumeration: split
    // the one-agent dataset into 50 single-sample agents, whose exact local
    // gradients are precisely the possible singleton draws.
    let pooled_data = generate_synthetic(
        &SyntheticConfig {
            d_feat: 8,
            classes: 3,
            partition: vec![50],
            dominant_classes: 2,
            dominant_frac: 0.9,
            mean_scale: 1.0,
        },
        &mut stream(74, 0, 0, Purpose::DataGen),
    )
    .unwrap();
    let lambda = 1e-4;
    let split_data = SyntheticDataset {
        d_feat: pooled_data.d_feat,
        classes: pooled_data.classes,
        features: (0..50)
            .map(|s| {
                pooled_data.features[0][s * pooled_data.d_feat..(s + 1) * pooled_data.d_feat]
                    .to_vec()
            })
            .collect(),
        labels: (0..50).map(|s| vec![pooled_data.labels[0][s]]).collect(),
    };
    let pooled = SigmoidProblem::new(pooled_data, lambda, LabelEncoding::PlusMinus).unwrap();
    let split = SigmoidProblem::new(split_data, lambda, LabelEncoding::PlusMinus).unwrap();

    let d = pooled.dim();
    let mut rng = stream(75, 0, 0, Purpose::Probe);
    let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-0.4..0.4)).collect();
    let candidates: Vec<Vec<f64>> = (0..50).map(|s| split.full_grad(s, &theta)).collect();
    let mut mean = vec![0.0; d];
    for c in &candidates {
        for k in 0..d {
            mean[k] += c[k] / 50.0;
        }
    }
    let full = pooled.full_grad(0, &theta);
    let bias = rel_err(&mean, &full);
    assert!(bias <= 1e-10, "singleton enumeration bias {bias:.3e}");

    // Every singleton draw must be one of the enumerated candidates, and a
    // modest number of draws must visit all 50 of them.
    let mut seen = vec![false; 50];
    for draw in 0..600u64 {
        let mut rng = stream(76, draw, 0, Purpose::Batch);
        let sample = pooled.stoch_grad(0, &theta, 1, &mut rng);
        let hit = candidates.iter().position(|c| {
            c.iter()
                .zip(&sample)
                .all(|(a, b)| (a - b).abs() <= 1e-13 * a.abs().max(1.0))
        });
        match hit {
            Some(idx) => seen[idx] = true,
            None => panic!("a singleton draw matched no enumerated sample gradient"),
        }
    }
    let coverage = seen.iter().filter(|s| **s).count();
    assert_eq!(coverage, 50, "singleton draws did not cover the dataset");

    println!(
        "A7 PASS finite-difference worst relative error {worst_fd:.3e} (tol 1e-4, 5 points x 2 families); singleton enumeration bias {bias:.3e} (tol 1e-10) with all 50 samples visited"
    );
}

#[test]
fn a08_momentum_measurably_reduces_gradient_noise() {
    let mut rng = stream(81, 0, 0, Purpose::DataGen);
    let problem = QuadraticProblem::new_random(4, 10, 12, 1.0, &mut rng).unwrap();
    let mut point_rng = stream(82, 0, 0, Purpose::Probe);
    let theta: Vec<f64> = (0..10).map(|_| point_rng.random_range(-1.0..1.0)).collect();
    let thetas = vec![theta; 4];

    let probe = momentum_variance_probe(&problem, &thetas, 0.01, 1, 200, 400, 83).unwrap();
    let sep = probe.var_without - probe.var_with;
    let se = (probe.se_with * probe.se_with + probe.se_without * probe.se_without).sqrt();

    let pass = sep > 3.0 * se;
    println!(
        "A8 {} var_with={:.4e} (se {:.1e}) vs var_without={:.4e} (se {:.1e}), separation {:.2} SE (need > 3) at beta=0.01, burn-in 200, 400 replicas",
        if pass { "PASS" } else { "FAIL" },
        probe.var_with,
        probe.se_with,
        probe.var_without,
        probe.se_without,
        sep / se
    );
    assert!(pass, "momentum did not separate from plain sampling at 3 SE");
}

#[test]
fn a09_runs_are_byte_identical_across_reruns_workers_and_echoes() {
    use std::process::Command;
    let bin = env!("CARGO_BIN_EXE_docom");
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("base.cfg");
    std::fs::write(
        &cfg_path,
        "algo = docom\niters = 60\nproblem = quadratic\nn = 4\ndim = 6\nrows = 8\nsigma = 0.4\n\
         eta = 0.05\ngamma = 0.4\nbeta = 0.5\ncompressor = top_k:0.5\nstride = 10\nseed = 7\n",
    )
    .unwrap();

    let run = |extra: &[&str]| {
        let status = Command::new(bin)
            .args(["run", "--config", cfg_path.to_str().unwrap()])
            .args(extra)
            .status()
            .expect("binary runs");
        assert!(status.success(), "run {extra:?} failed");
    };
    let out = |name: &str| dir.path().join(name);

    run(&["--out", out("a").to_str().unwrap()]);
    run(&["--out", out("b").to_str().unwrap()]);
    run(&["--out", out("c").to_str().unwrap(), "--workers", "4"]);
    // Feed the echoed configuration back in; only the destination changes.
    let echoed = out("a").join("resolved.cfg");
    let status = Command::new(bin)
        .args([
            "run",
            "--config",
            echoed.to_str().unwrap(),
            "--out",
            out("d").to_str().unwrap(),
        ])
        .status()
        .expect("binary runs");
    assert!(status.success(), "echo rerun failed");

    let csv_a = std::fs::read(out("a").join("metrics.csv")).unwrap();
    let csv_b = std::fs::read(out("b").join("metrics.csv")).unwrap();
    let csv_c = std::fs::read(out("c").join("metrics.csv")).unwrap();
    let csv_d = std::fs::read(out("d").join("metrics.csv")).unwrap();

    let pass = csv_a == csv_b && csv_a == csv_c && csv_a == csv_d;
    println!(
        "A9 {} metrics.csv byte-identical across rerun, --workers 4, and echoed-config rerun ({} bytes)",
        if pass { "PASS" } else { "FAIL" },
        csv_a.len()
    );
    assert!(pass, "determinism broken across reruns");
}

#[test]
fn a10_consensus_step_calculator_matches_a_bisection_oracle() {
    // Independent oracle: the binding bound is non-increasing in gamma, so
    // its unique fixed point is where bound(gamma) - gamma changes sign.
    let bound = |gamma: f64, rho: f64, delta: f64, wbar: f64, n: f64| -> f64 {
        let w2 = wbar * wbar;
        (1.0 / (4.0 * rho))
            .min(rho * n / (64.0 * w2))
            .min(delta / (10.0 * wbar))
            .min(delta * rho * (1.0 - gamma).max(0.0).sqrt() / (259.0 * w2))
    };
    let (rho, delta, wbar, n) = (1.0, 1.0, 1.0, 8.0);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bound(mid, rho, delta, wbar, n) > mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let oracle = 0.5 * (lo + hi);
    let safe = safe_step_sizes(1.0, rho, delta, wbar, 8, 0.5).unwrap();
    let diff = (safe.gamma - oracle).abs();
    assert!(diff <= 1e-9, "fixed point {} vs bisection {}", safe.gamma, oracle);

    // Monotonicity in the spectral gap and the compression quality.
    let grid: Vec<Vec<f64>> = (1..=10)
        .map(|i| {
            (1..=10)
                .map(|j| {
                    safe_step_sizes(1.0, 0.1 * i as f64, 0.1 * j as f64, 1.0, 8, 0.5)
                        .unwrap()
                        .gamma
                })
                .collect()
        })
        .collect();
    for i in 0..10 {
        for j in 0..10 {
            if i + 1 < 10 {
                assert!(
                    grid[i + 1][j] >= grid[i][j] - 1e-15,
                    "gamma not monotone in rho at ({i},{j})"
                );
            }
            if j + 1 < 10 {
                assert!(
                    grid[i][j + 1] >= grid[i][j] - 1e-15,
                    "gamma not monotone in delta at ({i},{j})"
                );
            }
        }
    }

    println!(
        "A10 PASS gamma fixed point {:.12e} vs bisection oracle diff {diff:.2e} (tol 1e-9); monotone in rho and delta on the 10x10 grid",
        safe.gamma
    );
}
