//! Experiment harness: dataset generation, the synchronous experiment
//! runner, and round/message accounting.
//!
//! Everything here is deterministic in `(dataset, graph, config, seed)`;
//! wall-clock time is measured for information only and is kept out of every
//! serialized artifact so that output files are byte-identical across runs.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dkmeans::{self, ClusteringResult, ProtocolError, RunConfig};
use crate::graph::{self, Graph, GraphError, Topology};
use crate::oracle::{self, OracleTrace};
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown field '{0}' (available: two-bumps, constant)")]
    UnknownField(String),
    #[error("no connected unit-disk instance within {attempts} attempts")]
    ConnectivityExhausted { attempts: usize },
    #[error("dataset holds {rows} rows, graph has {vertices} vertices")]
    RowCountMismatch { rows: usize, vertices: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// In-memory dataset: one observation and one planar position per agent.
/// When observations are 2-dimensional and no field is involved they double
/// as the positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<u64>,
    pub observations: Vec<Vec<f64>>,
    pub positions: Vec<Vec<f64>>,
}

/// Uniform i.i.d. positions in the unit square, agent-major draw order.
pub fn gen_uniform_positions(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|_| vec![rng.next_f64(), rng.next_f64()])
        .collect()
}

/// Built-in scalar fields over the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FieldSpec {
    /// Mean of two Gaussian bumps centered at (0.25, 0.25) and (0.75, 0.75).
    TwoBumps,
    /// Constant field of the given level.
    Constant(f64),
}

impl FieldSpec {
    pub fn parse(name: &str) -> Result<Self, SimError> {
        match name {
            "two-bumps" => Ok(Self::TwoBumps),
            "constant" => Ok(Self::Constant(0.5)),
            other => Err(SimError::UnknownField(other.to_string())),
        }
    }
}

/// Evaluates the field at each position; values are clipped to `[0, 1]`.
pub fn gen_scalar_field(positions: &[Vec<f64>], spec: &FieldSpec) -> Vec<f64> {
    match spec {
        FieldSpec::Constant(level) => vec![level.clamp(0.0, 1.0); positions.len()],
        FieldSpec::TwoBumps => {
            let bump = |p: &[f64], cx: f64, cy: f64| {
                let sigma = 0.18_f64;
                let r2 = (p[0] - cx) * (p[0] - cx) + (p[1] - cy) * (p[1] - cy);
                (-r2 / (2.0 * sigma * sigma)).exp()
            };
            positions
                .iter()
                .map(|p| {
                    let v = 0.5 * (bump(p, 0.25, 0.25) + bump(p, 0.75, 0.75));
                    v.clamp(0.0, 1.0)
                })
                .collect()
        }
    }
}

/// Draws one dataset from a single stream: positions first (agent-major),
/// then observations when they are neither the positions themselves nor a
/// field of them.
pub fn generate_dataset(n: usize, d: usize, seed: u64, field: Option<&FieldSpec>) -> Dataset {
    let mut rng = SplitMix64::new(seed);
    generate_dataset_from(&mut rng, n, d, field)
}

fn generate_dataset_from(
    rng: &mut SplitMix64,
    n: usize,
    d: usize,
    field: Option<&FieldSpec>,
) -> Dataset {
    let positions: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.next_f64(), rng.next_f64()])
        .collect();
    let observations = match field {
        Some(spec) => gen_scalar_field(&positions, spec)
            .into_iter()
            .map(|v| vec![v])
            .collect(),
        None if d == 2 => positions.clone(),
        None => (0..n)
            .map(|_| (0..d).map(|_| rng.next_f64()).collect())
            .collect(),
    };
    Dataset {
        ids: (0..n as u64).collect(),
        observations,
        positions,
    }
}

/// Rejection-samples positions until the unit-disk graph is connected (the
/// protocol assumes connectivity). The draw stream continues across
/// attempts, so the result is still a pure function of the seed. Returns the
/// dataset, the graph, and the number of rejected attempts.
pub fn generate_connected_unit_disk(
    n: usize,
    d: usize,
    seed: u64,
    rho: f64,
    field: Option<&FieldSpec>,
    max_attempts: usize,
) -> Result<(Dataset, Graph, usize), SimError> {
    let mut rng = SplitMix64::new(seed);
    for attempt in 0..max_attempts {
        let positions: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.next_f64(), rng.next_f64()])
            .collect();
        let g = graph::unit_disk(&positions, rho)?;
        if !graph::is_connected(&g) {
            continue;
        }
        let observations = match field {
            Some(spec) => gen_scalar_field(&positions, spec)
                .into_iter()
                .map(|v| vec![v])
                .collect(),
            None if d == 2 => positions.clone(),
            None => (0..n)
                .map(|_| (0..d).map(|_| rng.next_f64()).collect())
                .collect(),
        };
        let dataset = Dataset {
            ids: (0..n as u64).collect(),
            observations,
            positions,
        };
        return Ok((dataset, g, attempt));
    }
    Err(SimError::ConnectivityExhausted {
        attempts: max_attempts,
    })
}

/// Phase taxonomy for iteration accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Initialization: leader election and network-size computation.
    I,
    /// Centroid choice: propagation (with repairs) and the choice broadcast.
    C,
    /// Centroid refinement: sub-cluster resolution and centroid calculation.
    R,
    /// Exit condition evaluation.
    E,
}

/// Rounds consumed by one phase of one step; step 0 is initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub phase: Phase,
    pub rounds: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub message_count: u64,
    /// Rejected topology draws before a connected instance, when known.
    pub rejections: Option<usize>,
    /// Informational only; never serialized.
    pub wall_time: Duration,
}

impl Trace {
    pub fn total_rounds(&self) -> u64 {
        self.records.iter().map(|r| r.rounds).sum()
    }

    /// JSON-lines rendering: one record per line, then an aggregate line.
    /// Deterministic per run; wall time is deliberately excluded.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("trace records serialize"));
            out.push('\n');
        }
        let aggregate = serde_json::json!({
            "total_rounds": self.total_rounds(),
            "message_count": self.message_count,
            "rejections": self.rejections,
        });
        out.push_str(&aggregate.to_string());
        out.push('\n');
        out
    }
}

/// Percentage of total consensus rounds per phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseShares {
    pub initialization: f64,
    pub choice: f64,
    pub refinement: f64,
    pub exit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub result: ClusteringResult,
    pub trace: Trace,
    pub oracle: OracleTrace,
    pub shares: PhaseShares,
}

fn build_trace(result: &ClusteringResult, wall_time: Duration) -> Trace {
    let mut records = vec![TraceRecord {
        step: 0,
        phase: Phase::I,
        rounds: result.init_rounds,
    }];
    for (idx, step) in result.phase_rounds.iter().enumerate() {
        let t = idx + 1;
        records.push(TraceRecord {
            step: t,
            phase: Phase::C,
            rounds: step.propagation + result.repair_rounds[idx] + step.choice,
        });
        records.push(TraceRecord {
            step: t,
            phase: Phase::R,
            rounds: step.refinement,
        });
        records.push(TraceRecord {
            step: t,
            phase: Phase::E,
            rounds: step.exit,
        });
    }
    Trace {
        records,
        message_count: result.message_count,
        rejections: None,
        wall_time,
    }
}

fn phase_shares(trace: &Trace) -> PhaseShares {
    let total = trace.total_rounds().max(1) as f64;
    let sum_phase = |phase: Phase| -> f64 {
        trace
            .records
            .iter()
            .filter(|r| r.phase == phase)
            .map(|r| r.rounds)
            .sum::<u64>() as f64
            / total
            * 100.0
    };
    PhaseShares {
        initialization: sum_phase(Phase::I),
        choice: sum_phase(Phase::C),
        refinement: sum_phase(Phase::R),
        exit: sum_phase(Phase::E),
    }
}

/// Runs the distributed protocol with accounting enabled, then the
/// centralized oracle with the matched seed, and reports both together with
/// the per-phase round breakdown.
pub fn run_experiment(
    dataset: &Dataset,
    g: &Graph,
    config: &RunConfig,
) -> Result<ExperimentOutput, SimError> {
    if dataset.observations.len() != g.vertex_count() {
        return Err(SimError::RowCountMismatch {
            rows: dataset.observations.len(),
            vertices: g.vertex_count(),
        });
    }
    let start = Instant::now();
    let result = dkmeans::run(&dataset.observations, &dataset.ids, g, config)?;
    let wall_time = start.elapsed();
    let oracle = oracle::kmeans_seeded(&dataset.observations, config);
    let trace = build_trace(&result, wall_time);
    let shares = phase_shares(&trace);
    Ok(ExperimentOutput {
        result,
        trace,
        oracle,
        shares,
    })
}

/// Step-for-step comparison of a distributed run against the oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub steps_match: bool,
    pub exit_reasons_match: bool,
    pub max_centroid_deviation: f64,
    pub max_objective_deviation: f64,
    pub first_divergent_step: Option<usize>,
    pub ok: bool,
}

/// Scaled relative deviation `|a - b| / max(1, |a|, |b|)`.
pub fn relative_deviation(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Checks distributed-vs-centralized equivalence at tolerance `tol`: per-step labels must
/// match exactly, per-step centroids and objectives within `tol`.
pub fn equivalence_report(
    result: &ClusteringResult,
    oracle: &OracleTrace,
    tol: f64,
) -> EquivalenceReport {
    let mut report = EquivalenceReport {
        steps_match: result.snapshots.len() == oracle.steps.len(),
        exit_reasons_match: result.exit_reason == oracle.exit_reason,
        max_centroid_deviation: 0.0,
        max_objective_deviation: 0.0,
        first_divergent_step: None,
        ok: true,
    };
    let diverge = |report: &mut EquivalenceReport, step: usize| {
        report.ok = false;
        if report.first_divergent_step.is_none() {
            report.first_divergent_step = Some(step);
        }
    };
    for (idx, (snap, step)) in result.snapshots.iter().zip(&oracle.steps).enumerate() {
        let t = idx + 1;
        let labels: Vec<u32> = step.assignments.iter().map(|&a| a as u32 + 1).collect();
        if snap.labels != labels {
            diverge(&mut report, t);
        }
        for (got, want) in snap.centroids.iter().zip(&step.centroids) {
            match (got, want) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    for (&x, &y) in a.iter().zip(b) {
                        let dev = relative_deviation(x, y);
                        report.max_centroid_deviation = report.max_centroid_deviation.max(dev);
                        if dev >= tol {
                            diverge(&mut report, t);
                        }
                    }
                }
                _ => diverge(&mut report, t),
            }
        }
        let dev = relative_deviation(snap.objective, step.objective);
        report.max_objective_deviation = report.max_objective_deviation.max(dev);
        if dev >= tol {
            diverge(&mut report, t);
        }
    }
    if !report.steps_match || !report.exit_reasons_match {
        report.ok = false;
        if report.first_divergent_step.is_none() {
            let steps = result.snapshots.len().min(oracle.steps.len());
            report.first_divergent_step = Some(steps + 1);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dkmeans::ExitMode;

    fn base_config(k: usize, d: usize, n_upper: usize, exit_mode: ExitMode) -> RunConfig {
        RunConfig {
            k,
            max_steps: 25,
            delta_max: 1e-6,
            exit_mode,
            n_upper,
            seed: 33,
            init_low: vec![0.0; d],
            init_high: vec![1.0; d],
            norm_weights: None,
        }
    }

    #[test]
    fn positions_are_deterministic_and_in_the_unit_square() {
        let a = gen_uniform_positions(50, 7);
        let b = gen_uniform_positions(50, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        assert!(a.iter().flatten().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn unknown_field_name_is_rejected() {
        assert!(matches!(
            FieldSpec::parse("vortex"),
            Err(SimError::UnknownField(_))
        ));
    }

    #[test]
    fn field_values_are_clipped_to_unit_interval() {
        let positions = gen_uniform_positions(200, 3);
        for spec in [FieldSpec::TwoBumps, FieldSpec::Constant(0.5)] {
            let values = gen_scalar_field(&positions, &spec);
            assert!(values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn two_bump_field_groups_far_agents_into_one_cluster() {
        // Agents sitting on either bump read nearly identical field values,
        // so they cluster together despite being far apart spatially.
        let mut positions = vec![
            vec![0.25, 0.25],
            vec![0.26, 0.24],
            vec![0.75, 0.75],
            vec![0.74, 0.76],
            vec![0.50, 0.50],
            vec![0.45, 0.55],
        ];
        // chain them for connectivity
        positions.push(vec![0.35, 0.35]);
        positions.push(vec![0.62, 0.62]);
        let g = graph::unit_disk(&positions, 0.45).unwrap();
        assert!(graph::is_connected(&g));
        let values = gen_scalar_field(&positions, &FieldSpec::TwoBumps);
        let observations: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        let dataset = Dataset {
            ids: (0..8).collect(),
            observations,
            positions,
        };
        let cfg = base_config(2, 1, 10, ExitMode::C1);
        let out = run_experiment(&dataset, &g, &cfg).unwrap();
        assert_eq!(out.result.labels[0], out.result.labels[2]);
        let spatial_dist = ((0.75 - 0.25_f64).powi(2) * 2.0).sqrt();
        assert!(spatial_dist > 0.45, "the shared-cluster pair is far apart");
    }

    #[test]
    fn constant_field_collapses_into_one_cluster() {
        let (dataset, g, _) = generate_connected_unit_disk(
            8,
            1,
            15,
            0.6,
            Some(&FieldSpec::Constant(0.5)),
            200,
        )
        .unwrap();
        let cfg = base_config(2, 1, 10, ExitMode::C1);
        let out = run_experiment(&dataset, &g, &cfg).unwrap();
        let first = out.result.labels[0];
        assert!(out.result.labels.iter().all(|&l| l == first));
    }

    #[test]
    fn experiment_is_deterministic_per_seed() {
        let (dataset, g, _) = generate_connected_unit_disk(10, 2, 4, 0.5, None, 200).unwrap();
        let cfg = base_config(3, 2, 12, ExitMode::C1);
        let a = run_experiment(&dataset, &g, &cfg).unwrap();
        let b = run_experiment(&dataset, &g, &cfg).unwrap();
        assert_eq!(a.result, b.result);
        assert_eq!(a.trace.to_jsonl(), b.trace.to_jsonl());
    }

    #[test]
    fn trace_rounds_sum_to_the_run_total() {
        let (dataset, g, _) = generate_connected_unit_disk(9, 2, 8, 0.55, None, 200).unwrap();
        let cfg = base_config(2, 2, 11, ExitMode::C2);
        let out = run_experiment(&dataset, &g, &cfg).unwrap();
        assert_eq!(out.trace.total_rounds(), out.result.total_rounds());
        let share_sum = out.shares.initialization
            + out.shares.choice
            + out.shares.refinement
            + out.shares.exit;
        assert!((share_sum - 100.0).abs() < 1e-9);
    }

    #[test]
    fn per_step_round_totals_grow_quadratically() {
        // Round budgets depend only on n; complete graphs keep the averaging
        // numerics trivial across sizes.
        let step_total = |n: usize| -> u64 {
            let edges = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)));
            let g = Graph::from_edges(n, edges).unwrap();
            let observations: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64]).collect();
            let dataset = Dataset {
                ids: (0..n as u64).collect(),
                observations,
                positions: vec![vec![0.0, 0.0]; n],
            };
            let mut cfg = base_config(2, 1, n, ExitMode::C1);
            cfg.max_steps = 2;
            cfg.exit_mode = ExitMode::None;
            let out = run_experiment(&dataset, &g, &cfg).unwrap();
            out.result.phase_rounds[0].total()
        };
        let t10 = step_total(10) as f64;
        let t20 = step_total(20) as f64;
        let t40 = step_total(40) as f64;
        assert!((3.0..4.2).contains(&(t20 / t10)), "t20/t10 = {}", t20 / t10);
        assert!((3.0..4.2).contains(&(t40 / t20)), "t40/t20 = {}", t40 / t20);
    }

    #[test]
    fn equivalence_report_flags_injected_faults() {
        let (dataset, g, _) = generate_connected_unit_disk(8, 2, 21, 0.55, None, 200).unwrap();
        let cfg = base_config(2, 2, 9, ExitMode::C1);
        let out = run_experiment(&dataset, &g, &cfg).unwrap();
        let clean = equivalence_report(&out.result, &out.oracle, 1e-9);
        assert!(clean.ok, "clean run must be equivalent: {clean:?}");

        let mut faulty = out.result.clone();
        if let Some(slot) = faulty.snapshots[0].centroids.iter_mut().flatten().next() {
            slot[0] += 1e-3;
        }
        let report = equivalence_report(&faulty, &out.oracle, 1e-9);
        assert!(!report.ok);
        assert_eq!(report.first_divergent_step, Some(1));
    }
}
