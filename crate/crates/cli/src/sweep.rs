//! Batch comparison runs: a cross product of presets and seeds, executed in
//! parallel, with per-run artifact directories plus combined charts and a
//! final-iterate summary table.

use std::fs;
use std::path::{Path, PathBuf};

use docom_core::MetricsRecord;
use rayon::prelude::*;

use crate::config::{resolve, ConfigError, ExperimentConfig};
use crate::presets;
use crate::runner;
use crate::svg_out::{plot, Series, XAxis};

pub struct SweepRun {
    pub name: String,
    pub dir: PathBuf,
    pub outcome: Result<Vec<MetricsRecord>, String>,
}

pub struct SweepReport {
    pub runs: Vec<SweepRun>,
    pub summary: String,
}

impl SweepReport {
    pub fn all_succeeded(&self) -> bool {
        self.runs.iter().all(|r| r.outcome.is_ok())
    }
}

/// Resolves one sweep member: the named preset, then shared overrides, then
/// the per-run seed and output directory.
fn member_config(
    preset_name: &str,
    overrides: &[(String, String)],
    seed: u64,
    dir: &Path,
) -> Result<ExperimentConfig, ConfigError> {
    let preset = presets::preset(preset_name)
        .ok_or_else(|| ConfigError::UnknownKey(format!("preset `{preset_name}`")))?;
    let mut tail: Vec<(String, String)> = vec![
        ("seed".to_string(), seed.to_string()),
        ("out".to_string(), dir.display().to_string()),
    ];
    let layers = vec![preset, overrides.to_vec(), tail.drain(..).collect()];
    resolve(&layers)
}

/// Runs every (preset, seed) pair under `out_dir`, one subdirectory each,
/// and writes the combined artifacts. Individual failures are isolated: the
/// remaining runs still execute and the report lists each error.
pub fn run_sweep(
    preset_names: &[String],
    seeds: &[u64],
    overrides: &[(String, String)],
    out_dir: &Path,
) -> Result<SweepReport, String> {
    if preset_names.is_empty() || seeds.is_empty() {
        return Err("a sweep needs at least one preset and one seed".to_string());
    }
    fs::create_dir_all(out_dir).map_err(|e| e.to_string())?;

    let members: Vec<(String, PathBuf, u64)> = preset_names
        .iter()
        .flat_map(|p| {
            seeds.iter().map(move |&s| {
                let name = format!("{p}-seed{s}");
                (p.clone(), out_dir.join(&name), s)
            })
        })
        .collect();

    let runs: Vec<SweepRun> = members
        .par_iter()
        .map(|(preset_name, dir, seed)| {
            let outcome = member_config(preset_name, overrides, *seed, dir)
                .map_err(|e| e.to_string())
                .and_then(|cfg| runner::run_to_completion(&cfg));
            SweepRun {
                name: dir.file_name().unwrap().to_string_lossy().into_owned(),
                dir: dir.clone(),
                outcome,
            }
        })
        .collect();

    write_combined_charts(&runs, out_dir)?;
    let summary = summary_table(&runs);
    fs::write(out_dir.join("summary.txt"), &summary).map_err(|e| e.to_string())?;
    Ok(SweepReport { runs, summary })
}

/// One chart per metric, every successful run as a series, x measured in
/// transmitted floats so compressed and dense methods line up fairly.
fn write_combined_charts(runs: &[SweepRun], out_dir: &Path) -> Result<(), String> {
    let metrics: [(&str, fn(&MetricsRecord) -> f64); 4] = [
        ("worst_loss", |r| r.worst_loss),
        ("mean_loss", |r| r.mean_loss),
        ("consensus_gap", |r| r.consensus_gap),
        ("grad_norm_sq", |r| r.grad_norm_sq),
    ];
    for (name, pick) in metrics {
        let series: Vec<Series> = runs
            .iter()
            .filter_map(|run| {
                run.outcome.as_ref().ok().map(|records| Series {
                    label: run.name.clone(),
                    points: records
                        .iter()
                        .map(|r| (XAxis::Floats.of(r), pick(r)))
                        .collect(),
                })
            })
            .collect();
        let svg = plot(&series, name, XAxis::Floats.label());
        fs::write(out_dir.join(format!("combined-{name}.svg")), svg)
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn summary_table(runs: &[SweepRun]) -> String {
    let mut out = String::from(
        "run                                iter      floats_values_only  worst_loss    mean_loss     consensus_gap  grad_norm_sq\n",
    );
    for run in runs {
        match &run.outcome {
            Ok(records) => {
                if let Some(r) = records.last() {
                    out.push_str(&format!(
                        "{:<34} {:<9} {:<19} {:<13.6e} {:<13.6e} {:<14.6e} {:<13.6e}\n",
                        run.name,
                        r.iter,
                        r.floats_values_only,
                        r.worst_loss,
                        r.mean_loss,
                        r.consensus_gap,
                        r.grad_norm_sq
                    ));
                } else {
                    out.push_str(&format!("{:<34} (no rows)\n", run.name));
                }
            }
            Err(e) => out.push_str(&format!("{:<34} FAILED: {e}\n", run.name)),
        }
    }
    out
}
