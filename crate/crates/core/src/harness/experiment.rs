//! Seeded experiment matrices: per-cell success rates, stage-failure
//! breakdowns, and timing percentiles, written as JSON (source of truth)
//! plus a CSV for spreadsheets, with every record archived for replay.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::gen::{generate_h, generate_host, HostSpec, SubgraphSpec};
use crate::harness::pipeline::{run_pipeline, ExperimentRecord, PipelineConfig};

/// One cell: a host family crossed with a subgraph family.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub label: String,
    pub host: HostSpec,
    pub h: SubgraphSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentMatrix {
    pub cells: Vec<ExperimentCell>,
    pub trials: usize,
    pub base_seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CellSummary {
    pub label: String,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    pub stage_failures: BTreeMap<String, usize>,
    pub t_p50_ms: u128,
    pub t_p90_ms: u128,
    pub t_max_ms: u128,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentSummary {
    pub cells: Vec<CellSummary>,
}

/// Stable stage list for the fixed CSV columns.
pub const STAGE_NAMES: [&str; 11] = [
    "validate",
    "coloring",
    "separate",
    "decompose",
    "factor",
    "super-regularize",
    "distribute-v0",
    "map",
    "reassign",
    "balance",
    "restrictions",
];

/// Runs every cell; when `out_dir` is given, writes `summary.json`,
/// `summary.csv`, and `records.jsonl` there.
pub fn run_experiment(
    matrix: &ExperimentMatrix,
    cfg_for_cell: impl Fn(&ExperimentCell) -> PipelineConfig,
    out_dir: Option<&Path>,
) -> Result<ExperimentSummary> {
    let mut cells = Vec::new();
    let mut all_records: Vec<(String, ExperimentRecord)> = Vec::new();
    for (ci, cell) in matrix.cells.iter().enumerate() {
        let cfg = cfg_for_cell(cell);
        let mut successes = 0;
        let mut stage_failures: BTreeMap<String, usize> = BTreeMap::new();
        let mut times: Vec<u128> = Vec::new();
        for trial in 0..matrix.trials {
            let seed = matrix
                .base_seed
                .wrapping_add(1_000_003u64.wrapping_mul(ci as u64))
                .wrapping_add(trial as u64);
            let mut host_spec = cell.host.clone();
            host_spec.seed = seed;
            let record = match generate_host(&host_spec) {
                Ok(host) => {
                    let mut h_spec = cell.h.clone();
                    h_spec.n = host.graph.n();
                    h_spec.seed = seed.wrapping_add(0x5EED);
                    match generate_h(&h_spec) {
                        Ok(hgen) => run_pipeline(
                            &hgen.graph,
                            &host.graph,
                            host.clusters.clone(),
                            Some(&hgen.witness),
                            &cfg,
                            seed,
                        ),
                        Err(e) => synthetic_failure(seed, "generate-h", e.to_string()),
                    }
                }
                Err(e) => synthetic_failure(seed, "generate-host", e.to_string()),
            };
            times.push(record.stages.iter().map(|s| s.millis).sum());
            if record.success {
                successes += 1;
            } else if let Some(stage) = record.failed_stage() {
                *stage_failures.entry(stage.to_string()).or_default() += 1;
            }
            all_records.push((cell.label.clone(), record));
        }
        times.sort_unstable();
        let pct = |p: f64| -> u128 {
            if times.is_empty() {
                0
            } else {
                times[(((times.len() - 1) as f64) * p).round() as usize]
            }
        };
        cells.push(CellSummary {
            label: cell.label.clone(),
            trials: matrix.trials,
            successes,
            rate: if matrix.trials == 0 {
                0.0
            } else {
                successes as f64 / matrix.trials as f64
            },
            stage_failures,
            t_p50_ms: pct(0.5),
            t_p90_ms: pct(0.9),
            t_max_ms: times.last().copied().unwrap_or(0),
        });
    }
    let summary = ExperimentSummary { cells };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("summary.json"),
            serde_json::to_string_pretty(&summary)?,
        )?;
        fs::write(dir.join("summary.csv"), summary_csv(&summary))?;
        let mut jsonl = fs::File::create(dir.join("records.jsonl"))?;
        for (label, record) in &all_records {
            let mut line = serde_json::to_value(record)?;
            line["cell"] = serde_json::Value::String(label.clone());
            writeln!(jsonl, "{}", serde_json::to_string(&line)?)?;
        }
    }
    Ok(summary)
}

fn synthetic_failure(seed: u64, stage: &str, detail: String) -> ExperimentRecord {
    use crate::harness::pipeline::{PipelineMetrics, StageRecord, StageStatus};
    ExperimentRecord {
        seed,
        success: false,
        stages: vec![StageRecord {
            stage: stage.into(),
            status: StageStatus::Failed,
            detail,
            millis: 0,
        }],
        metrics: PipelineMetrics::default(),
        assignment: None,
        embedding: None,
    }
}

/// Fixed columns: label, trials, successes, rate, one failure column per
/// stage, then timing percentiles.
pub fn summary_csv(summary: &ExperimentSummary) -> String {
    let mut out = String::from("label,trials,successes,rate");
    for s in STAGE_NAMES {
        out.push_str(&format!(",fail_{}", s.replace('-', "_")));
    }
    out.push_str(",fail_embed,fail_verify,t_p50_ms,t_p90_ms,t_max_ms\n");
    for cell in &summary.cells {
        out.push_str(&format!(
            "{},{},{},{:.4}",
            cell.label, cell.trials, cell.successes, cell.rate
        ));
        for s in STAGE_NAMES {
            out.push_str(&format!(
                ",{}",
                cell.stage_failures.get(s).copied().unwrap_or(0)
            ));
        }
        for s in ["embed", "verify"] {
            out.push_str(&format!(
                ",{}",
                cell.stage_failures.get(s).copied().unwrap_or(0)
            ));
        }
        out.push_str(&format!(
            ",{},{},{}\n",
            cell.t_p50_ms, cell.t_p90_ms, cell.t_max_ms
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::Parameters;
    use crate::harness::gen::{HFamily, ReducedPattern};

    fn cell() -> ExperimentCell {
        ExperimentCell {
            label: "paths-4x25-k2".into(),
            host: HostSpec {
                ell: 4,
                m: 25,
                k: 2,
                gamma: 0.1,
                pattern: ReducedPattern::Complete,
                d_pair: 0.5,
                v0_frac: 0.01,
                seed: 0,
            },
            h: SubgraphSpec {
                family: HFamily::ComponentPaths { max_len: 8 },
                n: 0,
                seed: 0,
            },
        }
    }

    #[test]
    fn empty_matrix_empty_summary() {
        let matrix = ExperimentMatrix {
            cells: vec![],
            trials: 3,
            base_seed: 1,
        };
        let summary = run_experiment(
            &matrix,
            |_| PipelineConfig::for_params(Parameters::derived(2, 0.1).unwrap()),
            None,
        )
        .unwrap();
        assert!(summary.cells.is_empty());
        assert!(summary_csv(&summary).starts_with("label,"));
    }

    #[test]
    fn single_cell_single_trial() {
        let matrix = ExperimentMatrix {
            cells: vec![cell()],
            trials: 1,
            base_seed: 42,
        };
        let dir = std::env::temp_dir().join("wellsep-experiment-test");
        let _ = std::fs::remove_dir_all(&dir);
        let summary = run_experiment(
            &matrix,
            |_| PipelineConfig::for_params(Parameters::derived(2, 0.1).unwrap()),
            Some(&dir),
        )
        .unwrap();
        assert_eq!(summary.cells.len(), 1);
        assert_eq!(summary.cells[0].trials, 1);
        assert!(dir.join("summary.json").exists());
        assert!(dir.join("summary.csv").exists());
        assert!(dir.join("records.jsonl").exists());
        let csv = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
        let _ = std::fs::remove_dir_all(&dir);
    }
}
