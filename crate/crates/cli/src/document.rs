//! Serialized result artifacts: the JSON result document plus flat CSV
//! traces for plotting. Empty centroid slots appear as JSON `null`;
//! infinities never reach a file.

use dkm_core::dkmeans::{ClusteringResult, ExitReason, PhaseRounds, RunConfig};
use dkm_core::sim::Trace;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: RunConfig,
    pub n: usize,
    pub d: usize,
    pub exit_reason: ExitReason,
    pub steps_taken: usize,
    pub centroids: Vec<Option<Vec<f64>>>,
    pub labels: Vec<u32>,
    pub d_trace: Vec<f64>,
    pub init_rounds: u64,
    pub phase_rounds: Vec<PhaseRounds>,
    pub repair_rounds: Vec<u64>,
    pub total_rounds: u64,
    pub message_count: u64,
}

impl ResultDocument {
    pub fn new(config: &RunConfig, n: usize, d: usize, result: &ClusteringResult) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            n,
            d,
            exit_reason: result.exit_reason,
            steps_taken: result.steps_taken,
            centroids: result.centroids.clone(),
            labels: result.labels.clone(),
            d_trace: result.d_trace.clone(),
            init_rounds: result.init_rounds,
            phase_rounds: result.phase_rounds.clone(),
            repair_rounds: result.repair_rounds.clone(),
            total_rounds: result.total_rounds(),
            message_count: result.message_count,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("document serializes");
        text.push('\n');
        text
    }
}

/// `step,d` rows of the objective trace.
pub fn dtrace_csv(result: &ClusteringResult) -> String {
    let mut out = String::from("step,d\n");
    for (idx, value) in result.d_trace.iter().enumerate() {
        out.push_str(&format!("{},{}\n", idx + 1, value));
    }
    out
}

/// `step,phase,rounds` rows matching the trace records (step 0 is
/// initialization).
pub fn phases_csv(trace: &Trace) -> String {
    let mut out = String::from("step,phase,rounds\n");
    for record in &trace.records {
        let phase = match record.phase {
            dkm_core::sim::Phase::I => "I",
            dkm_core::sim::Phase::C => "C",
            dkm_core::sim::Phase::R => "R",
            dkm_core::sim::Phase::E => "E",
        };
        out.push_str(&format!("{},{},{}\n", record.step, phase, record.rounds));
    }
    out
}
