//! Experiment orchestration: runs the (condition × seed × method) grid,
//! persists CSV traces, a summary table, a reproducibility manifest, and
//! SVG plots. All cell outputs are written atomically (temp file +
//! rename) and every byte is a pure function of the config.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ExperimentMode};
use crate::env::make_env;
use crate::error::{QboError, Result};
use crate::estimators::{EstimatorConfig, EstimatorMethod};
use crate::optimizer::{compute_f_star, run_staged, Domain, RunConfig, RunTrace};
use crate::plot::{bundle_curves, render_svg, CurveInput, PlotKind};

pub const TRACE_HEADER: &str =
    "query_index,stage,method,charged_regret,cumulative_regret,incumbent_mae,epsilon_s,queries_in_stage";

/// One row of the Table-1-style summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub sigma: f64,
    pub mean_best_mae: f64,
    /// Population standard deviation across runs.
    pub std_best_mae: f64,
    pub n_runs: usize,
}

/// Identifies one run cell within an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellId {
    pub condition: usize,
    pub seed: u64,
    pub method: EstimatorMethod,
}

impl CellId {
    pub fn file_name(&self) -> String {
        format!("trace_{}_c{}_s{}.csv", self.method, self.condition, self.seed)
    }
}

fn run_config_from(cfg: &ExperimentConfig, seed: u64) -> RunConfig {
    RunConfig {
        budget: cfg.budget,
        lambda: cfg.lambda,
        lengthscale: cfg.lengthscale,
        n_features: cfg.rff_features,
        beta: cfg.beta_schedule(),
        eta: cfg.eta,
        delta: cfg.delta,
        estimator: EstimatorConfig {
            c1: cfg.c1,
            c2: cfg.c2,
            emulation: cfg.emulation,
        },
        epsilon0: cfg.epsilon0,
        acq_restarts: cfg.acq_restarts,
        acq_sweeps: cfg.acq_sweeps,
        seed,
    }
}

fn condition_seed(cfg: &ExperimentConfig, condition: usize) -> u64 {
    cfg.condition_seed_base.wrapping_add(condition as u64)
}

/// Run seed: independent per (condition, run seed) pair.
fn cell_seed(condition: usize, seed: u64) -> u64 {
    seed.wrapping_add(1_000_003u64.wrapping_mul(condition as u64 + 1))
}

fn build_domain(cfg: &ExperimentConfig, env: &crate::env::Environment) -> Result<Domain> {
    match cfg.mode {
        ExperimentMode::Discrete2 => Ok(Domain::Discrete(env.discrete_grid((0, 1), cfg.levels)?)),
        ExperimentMode::Continuous8 => Ok(Domain::Continuous),
    }
}

/// Executes one cell; exposed for the acceptance suite.
pub fn run_cell(cfg: &ExperimentConfig, cell: CellId, f_star: Option<f64>) -> Result<RunTrace> {
    let env = make_env(
        cfg.n_points,
        cfg.m_actuators,
        condition_seed(cfg, cell.condition),
        cfg.sigma,
    )?;
    let domain = build_domain(cfg, &env)?;
    let run_cfg = run_config_from(cfg, cell_seed(cell.condition, cell.seed));
    run_staged(&env, &domain, &run_cfg, cell.method, f_star)
}

/// Serializes a trace to the documented CSV schema: one row per charged
/// query, UTF-8, LF line endings, header row.
pub fn trace_to_csv(trace: &RunTrace) -> String {
    let mut out = String::with_capacity(trace.per_query_regret.len() * 48);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    let method = trace.method.to_string();
    let mut query_index = 0usize;
    for stage in &trace.stages {
        for _ in 0..stage.queries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                query_index,
                stage.stage_index,
                method,
                trace.per_query_regret[query_index],
                trace.cumulative_regret[query_index],
                trace.incumbent_mae[query_index],
                stage.epsilon_s,
                stage.queries
            ));
            query_index += 1;
        }
    }
    out
}

/// Minimal trace view parsed back from a persisted CSV.
#[derive(Debug, Clone)]
pub struct CsvTrace {
    pub method: String,
    pub cumulative_regret: Vec<f64>,
    pub incumbent_mae: Vec<f64>,
}

impl CsvTrace {
    pub fn best_mae(&self) -> f64 {
        self.incumbent_mae.last().copied().unwrap_or(f64::NAN)
    }
}

pub fn parse_trace_csv(text: &str) -> Result<CsvTrace> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| QboError::Domain("empty trace CSV".into()))?;
    if header != TRACE_HEADER {
        return Err(QboError::Domain(format!("unexpected trace header `{header}`")));
    }
    let mut method = String::new();
    let mut cumulative = Vec::new();
    let mut incumbent = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(QboError::Domain(format!(
                "trace row {} has {} fields, expected 8",
                i + 1,
                fields.len()
            )));
        }
        if method.is_empty() {
            method = fields[2].to_string();
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| QboError::Domain(format!("bad numeric field `{s}` in trace row {}", i + 1)))
        };
        cumulative.push(parse(fields[4])?);
        incumbent.push(parse(fields[5])?);
    }
    Ok(CsvTrace {
        method,
        cumulative_regret: cumulative,
        incumbent_mae: incumbent,
    })
}

/// Table-1-style aggregation: per (method, sigma), the mean and
/// population std of each run's best MAE.
pub fn summarize(best_maes: &[(String, f64, f64)]) -> Vec<SummaryRow> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut sigmas: BTreeMap<(String, String), f64> = BTreeMap::new();
    for (method, sigma, best) in best_maes {
        let key = (method.clone(), format!("{sigma}"));
        groups.entry(key.clone()).or_default().push(*best);
        sigmas.insert(key, *sigma);
    }
    groups
        .into_iter()
        .map(|(key, vals)| {
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            // Identical values must report exactly zero spread; the general
            // formula would leak mean-rounding noise into the result.
            let var = if vals.iter().all(|v| *v == vals[0]) {
                0.0
            } else {
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
            };
            SummaryRow {
                method: key.0.clone(),
                sigma: sigmas[&key],
                mean_best_mae: mean,
                std_best_mae: var.sqrt(),
                n_runs: n,
            }
        })
        .collect()
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("method,sigma,mean_best_mae,std_best_mae,n_runs\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.method, r.sigma, r.mean_best_mae, r.std_best_mae, r.n_runs
        ));
    }
    out
}

/// Temp-file-then-rename write; keeps partially written cells invisible.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn manifest_text(cfg: &ExperimentConfig) -> String {
    let effective = cfg.effective_text();
    let mut hasher = Sha256::new();
    hasher.update(effective.as_bytes());
    let hash = hasher.finalize();
    let mut hex = String::new();
    for b in hash {
        hex.push_str(&format!("{b:02x}"));
    }
    format!("config_sha256 = {hex}\n\n{effective}")
}

/// Runs the full experiment grid and writes all artifacts under
/// `out_dir`. Cells run in parallel (bounded by the ambient rayon pool);
/// partial outputs are removed if any cell fails.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let result = run_experiment_inner(cfg, out_dir);
    if result.is_err() {
        // Remove anything this invocation may have written.
        for entry in fs::read_dir(out_dir).into_iter().flatten().flatten() {
            let name = entry.file_name().to_string_lossy().to_string();
            if name.starts_with("trace_")
                || name == "summary.csv"
                || name == "manifest.txt"
                || name.ends_with(".svg")
                || name.ends_with(".tmp")
            {
                let _ = fs::remove_file(entry.path());
            }
        }
    }
    result
}

fn run_experiment_inner(cfg: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    // f_star is noise-free, so it is shared across methods and run seeds
    // of one condition.
    let f_stars: Vec<f64> = (0..cfg.n_conditions)
        .map(|c| {
            let env = make_env(cfg.n_points, cfg.m_actuators, condition_seed(cfg, c), cfg.sigma)?;
            let domain = build_domain(cfg, &env)?;
            compute_f_star(&env, &domain, condition_seed(cfg, c))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    for condition in 0..cfg.n_conditions {
        for &seed in &cfg.seeds {
            for method in [EstimatorMethod::Quantum, EstimatorMethod::Classical] {
                cells.push(CellId { condition, seed, method });
            }
        }
    }

    let traces: Vec<(CellId, RunTrace)> = cells
        .par_iter()
        .map(|cell| {
            let trace = run_cell(cfg, *cell, Some(f_stars[cell.condition]))?;
            write_atomic(&out_dir.join(cell.file_name()), &trace_to_csv(&trace))?;
            Ok((*cell, trace))
        })
        .collect::<Result<Vec<_>>>()?;

    let best: Vec<(String, f64, f64)> = traces
        .iter()
        .map(|(cell, t)| (cell.method.to_string(), cfg.sigma, t.best_mae()))
        .collect();
    let rows = summarize(&best);
    write_atomic(&out_dir.join("summary.csv"), &summary_to_csv(&rows))?;
    write_atomic(&out_dir.join("manifest.txt"), &manifest_text(cfg))?;

    for (kind, name) in [
        (PlotKind::CumulativeRegret, "regret.svg"),
        (PlotKind::IncumbentMae, "mae.svg"),
    ] {
        let curves: Vec<CurveInput> = traces
            .iter()
            .map(|(cell, t)| CurveInput {
                method: cell.method.to_string(),
                values: match kind {
                    PlotKind::CumulativeRegret => t.cumulative_regret.clone(),
                    PlotKind::IncumbentMae => t.incumbent_mae.clone(),
                },
            })
            .collect();
        let bundles = bundle_curves(&curves)?;
        write_atomic(&out_dir.join(name), &render_svg(&bundles, kind)?)?;
    }
    Ok(out_dir.to_path_buf())
}

/// Loads every `trace_*.csv` in a directory.
pub fn load_traces(dir: &Path) -> Result<Vec<CsvTrace>> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("trace_") && n.ends_with(".csv"))
                .unwrap_or(false)
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(QboError::Domain(format!(
            "no trace CSVs found in {}",
            dir.display()
        )));
    }
    names
        .iter()
        .map(|p| parse_trace_csv(&fs::read_to_string(p)?))
        .collect()
}

/// Reads the sigma recorded in a run directory's manifest.
pub fn manifest_sigma(dir: &Path) -> Result<f64> {
    let text = fs::read_to_string(dir.join("manifest.txt"))?;
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            if k.trim() == "sigma" {
                return v.trim().parse::<f64>().map_err(|_| {
                    QboError::Domain(format!("bad sigma in manifest: `{}`", v.trim()))
                });
            }
        }
    }
    Err(QboError::Domain("manifest has no sigma".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summarize_hand_case() {
        let rows = summarize(&[
            ("qbo".into(), 0.1, 0.02),
            ("qbo".into(), 0.1, 0.04),
        ]);
        assert_eq!(rows.len(), 1);
        assert!((rows[0].mean_best_mae - 0.03).abs() < 1e-15);
        assert!((rows[0].std_best_mae - 0.01).abs() < 1e-15);
    }

    #[test]
    fn summarize_identical_runs_zero_std() {
        let rows = summarize(&[
            ("classic".into(), 0.2, 0.05),
            ("classic".into(), 0.2, 0.05),
            ("classic".into(), 0.2, 0.05),
        ]);
        assert_eq!(rows[0].std_best_mae, 0.0);
    }

    #[test]
    fn summarize_matches_spreadsheet_recompute() {
        let vals = [0.031, 0.027, 0.044];
        let rows = summarize(&[
            ("qbo".into(), 0.1, vals[0]),
            ("qbo".into(), 0.1, vals[1]),
            ("qbo".into(), 0.1, vals[2]),
        ]);
        let mean = vals.iter().sum::<f64>() / 3.0;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0;
        assert!((rows[0].mean_best_mae - mean).abs() < 1e-15);
        assert!((rows[0].std_best_mae - var.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn summarize_groups_by_method_and_sigma() {
        let rows = summarize(&[
            ("qbo".into(), 0.1, 0.02),
            ("qbo".into(), 0.2, 0.03),
            ("classic".into(), 0.1, 0.04),
        ]);
        assert_eq!(rows.len(), 3);
    }

    #[test]
    fn trace_csv_round_trip_schema() {
        use crate::env::ForceVector;
        use crate::optimizer::StageRecord;
        let trace = RunTrace {
            method: EstimatorMethod::Quantum,
            stages: vec![StageRecord {
                stage_index: 0,
                chosen_force: ForceVector::zeros(2),
                epsilon_s: 0.05,
                beta_s: 2.0,
                queries: 3,
                estimate: -0.9,
                posterior_std_at_choice: 0.05,
            }],
            per_query_regret: vec![0.1, 0.1, 0.1],
            cumulative_regret: vec![0.1, 0.2, 0.30000000000000004],
            incumbent_mae: vec![0.3, 0.3, 0.3],
            budget: 100,
            f_star: -0.9,
            sigma_loss: 0.01,
            calibration_queries: 1000,
            zero_stage_warning: false,
        };
        let csv = trace_to_csv(&trace);
        assert!(csv.starts_with(TRACE_HEADER));
        assert_eq!(csv.lines().count(), 4);
        let parsed = parse_trace_csv(&csv).unwrap();
        assert_eq!(parsed.method, "qbo");
        assert_eq!(parsed.cumulative_regret, trace.cumulative_regret);
        assert_eq!(parsed.incumbent_mae, trace.incumbent_mae);
    }

    #[test]
    fn parse_trace_rejects_bad_header() {
        assert!(parse_trace_csv("a,b,c\n1,2,3\n").is_err());
    }
}
