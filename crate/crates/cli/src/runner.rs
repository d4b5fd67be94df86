//! Turns a resolved configuration into a finished run with artifacts.

use std::fs;
use std::path::Path;

use docom_core::rng::{stream, Purpose};
use docom_core::{
    estimate_lipschitz, generate_synthetic, run, HyperParams, InitBatch, MetricsRecord,
    MixingMatrix, Problem, QuadraticProblem, RunSetup, SigmoidProblem, SyntheticConfig,
};

use crate::config::{ExperimentConfig, ProblemSpec, TopologyKind};
use crate::{csv_out, svg_out};

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Instantiates the objective named by the configuration. Data generation is
/// keyed by `data_seed` alone, so two runs that differ only in the algorithm
/// seed optimize the same instance.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<Box<dyn Problem>, String> {
    let mut rng = stream(cfg.data_seed, 0, 0, Purpose::DataGen);
    match &cfg.problem {
        ProblemSpec::Sigmoid {
            d_feat,
            classes,
            partition,
            dominant_classes,
            dominant_frac,
            mean_scale,
            lambda,
            encoding,
        } => {
            let synth = SyntheticConfig {
                d_feat: *d_feat,
                classes: *classes,
                partition: partition.clone(),
                dominant_classes: *dominant_classes,
                dominant_frac: *dominant_frac,
                mean_scale: *mean_scale,
            };
            let data = generate_synthetic(&synth, &mut rng).map_err(err)?;
            Ok(Box::new(
                SigmoidProblem::new(data, *lambda, *encoding).map_err(err)?,
            ))
        }
        ProblemSpec::Quadratic { dim, rows, sigma } => Ok(Box::new(
            QuadraticProblem::new_random(cfg.n, *dim, *rows, *sigma, &mut rng).map_err(err)?,
        )),
    }
}

pub fn build_topology(cfg: &ExperimentConfig) -> Result<MixingMatrix, String> {
    match cfg.topology {
        TopologyKind::Ring => MixingMatrix::ring(cfg.n).map_err(err),
        TopologyKind::Complete => MixingMatrix::complete(cfg.n).map_err(err),
    }
}

/// Applies the horizon-dependent schedules, when enabled, on top of the
/// explicit hyperparameters. Each schedule key holds a multiplicative
/// constant c for the corresponding rate-optimal scaling in (n, T):
/// β = c·n^(1/3)/T^(2/3), η = c·n^(2/3)/(L·T^(1/3)), b0 = ⌈c·T^(1/3)/n^(2/3)⌉.
pub fn effective_hyper(
    cfg: &ExperimentConfig,
    problem: &dyn Problem,
) -> Result<HyperParams, String> {
    let n = cfg.n as f64;
    let t = (cfg.iters.max(1)) as f64;
    let mut hyper = HyperParams {
        eta: cfg.eta,
        gamma: cfg.gamma,
        beta: cfg.beta,
        b0: cfg.b0,
        batch_size: cfg.batch,
    };
    if let Some(c) = cfg.schedule_beta {
        hyper.beta = (c * n.cbrt() / t.powf(2.0 / 3.0)).min(1.0);
        if hyper.beta <= 0.0 {
            return Err("schedule_beta produced a non-positive momentum weight".into());
        }
    }
    if let Some(c) = cfg.schedule_b0 {
        let count = (c * t.cbrt() / n.powf(2.0 / 3.0)).ceil().max(1.0);
        hyper.b0 = InitBatch::Count(count as usize);
    }
    if let Some(c) = cfg.schedule_eta {
        let lipschitz = match problem.meta().lipschitz {
            Some(l) => l,
            None => {
                let mut rng = stream(cfg.data_seed, 0, 0, Purpose::Probe);
                estimate_lipschitz(problem, 64, &mut rng).map_err(err)?
            }
        };
        hyper.eta = c * n.powf(2.0 / 3.0) / (lipschitz * t.cbrt());
        if !(hyper.eta > 0.0 && hyper.eta.is_finite()) {
            return Err(format!(
                "schedule_eta produced an unusable step size {} (L = {lipschitz})",
                hyper.eta
            ));
        }
    }
    Ok(hyper)
}

/// Runs the configured experiment and returns the metric rows.
pub fn execute(cfg: &ExperimentConfig) -> Result<Vec<MetricsRecord>, String> {
    let problem = build_problem(cfg)?;
    let topology = build_topology(cfg)?;
    let hyper = effective_hyper(cfg, problem.as_ref())?;
    let compressor = cfg.compressor.build(problem.dim()).map_err(err)?;
    let setup = RunSetup {
        problem: problem.as_ref(),
        topology: &topology,
        algorithm: cfg.algo,
        compressor,
        hyper,
        iters: cfg.iters,
        stride: cfg.stride,
        seed: cfg.seed,
        theta0: None,
        lr_decay: cfg.lr_decay.clone(),
        timing: cfg.timing,
    };
    run(&setup).map_err(err)
}

/// Writes the echo, the CSV table, and the two charts into `dir`.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    records: &[MetricsRecord],
    dir: &Path,
) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(err)?;
    fs::write(dir.join("resolved.cfg"), cfg.echo_text()).map_err(err)?;
    fs::write(dir.join("metrics.csv"), csv_out::to_csv(records)).map_err(err)?;
    let title = format!(
        "{} / {} / n={}",
        cfg.raw("algo").unwrap_or("?"),
        cfg.raw("problem").unwrap_or("?"),
        cfg.n
    );
    fs::write(
        dir.join("metrics-iterations.svg"),
        svg_out::run_chart(records, &title, svg_out::XAxis::Iteration),
    )
    .map_err(err)?;
    fs::write(
        dir.join("metrics-floats.svg"),
        svg_out::run_chart(records, &title, svg_out::XAxis::Floats),
    )
    .map_err(err)?;
    Ok(())
}

/// Runs the experiment and, when an output directory is configured, writes
/// the artifacts there.
pub fn run_to_completion(cfg: &ExperimentConfig) -> Result<Vec<MetricsRecord>, String> {
    let records = execute(cfg)?;
    if let Some(dir) = &cfg.out {
        write_outputs(cfg, &records, dir)?;
    }
    Ok(records)
}

/// One-line digest of the last metrics row.
pub fn final_summary(records: &[MetricsRecord]) -> String {
    match records.last() {
        None => "no metrics recorded".to_string(),
        Some(r) => {
            let mut line = format!(
                "iter={} floats={} worst_loss={:.6e} mean_loss={:.6e} consensus_gap={:.6e} grad_norm_sq={:.6e}",
                r.iter,
                r.floats_values_only,
                r.worst_loss,
                r.mean_loss,
                r.consensus_gap,
                r.grad_norm_sq
            );
            if let Some(gap) = r.optimality_gap {
                line.push_str(&format!(" optimality_gap={gap:.6e}"));
            }
            if let Some(acc) = r.train_accuracy {
                line.push_str(&format!(" train_accuracy={acc:.4}"));
            }
            line
        }
    }
}
