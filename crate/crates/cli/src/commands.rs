//! Subcommand implementations.

use std::fs;

use dkm_core::dkmeans::{ExitMode, ProtocolError, RunConfig};
use dkm_core::graph::Graph;
use dkm_core::sim::{self, Dataset, FieldSpec, SimError};

use crate::csvio;
use crate::document::{self, ResultDocument};
use crate::{CliError, CompareArgs, GenerateArgs, ProtocolArgs, RunArgs};

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn protocol_error(err: ProtocolError) -> CliError {
    match err {
        ProtocolError::Disconnected
        | ProtocolError::KExceedsN { .. }
        | ProtocolError::BoundTooSmall { .. }
        | ProtocolError::InvalidConfig(_)
        | ProtocolError::InvalidDataset(_) => input(err.to_string()),
        ProtocolError::RepairCapExceeded { .. }
        | ProtocolError::NegativeClusterMass { .. }
        | ProtocolError::SplitExitVerdict { .. }
        | ProtocolError::SizeCalculationFailed { .. }
        | ProtocolError::Consensus(_) => CliError::Internal(err.to_string()),
    }
}

fn sim_error(err: SimError) -> CliError {
    match err {
        SimError::Protocol(inner) => protocol_error(inner),
        other => input(other.to_string()),
    }
}

fn write_file(path: &str, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| input(format!("cannot write {path}: {e}")))
}

fn read_file(path: &str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| input(format!("cannot read {path}: {e}")))
}

pub fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    if args.topology != "unit-disk" {
        return Err(input(format!(
            "unknown topology '{}'; available: unit-disk",
            args.topology
        )));
    }
    let field = match args.field.as_str() {
        "none" => None,
        name => Some(FieldSpec::parse(name).map_err(|e| input(e.to_string()))?),
    };
    if field.is_some() && args.d != 1 {
        println!("note: --field produces scalar observations; ignoring --d {}", args.d);
    }
    let (dataset, graph, rejections) = sim::generate_connected_unit_disk(
        args.n,
        args.d,
        args.seed,
        args.rho,
        field.as_ref(),
        args.max_attempts,
    )
    .map_err(sim_error)?;

    write_file(&args.out_data, &csvio::dataset_to_csv(&dataset))?;
    write_file(&args.out_graph, &graph.to_edge_list())?;
    println!(
        "connected unit-disk graph: n={}, edges={}, rejected draws={}",
        args.n,
        graph.edges().count(),
        rejections
    );
    Ok(())
}

fn parse_float_list(text: &str, d: usize, what: &str) -> Result<Vec<f64>, CliError> {
    let values: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| input(format!("bad {what} '{text}': {e}")))?;
    if values.len() != d {
        return Err(input(format!(
            "{what} lists {} values, observations have {d} components",
            values.len()
        )));
    }
    Ok(values)
}

struct PreparedRun {
    dataset: Dataset,
    graph: Graph,
    config: RunConfig,
    d: usize,
}

fn prepare(args: &ProtocolArgs) -> Result<PreparedRun, CliError> {
    let loaded = csvio::dataset_from_csv(&read_file(&args.data)?).map_err(input)?;
    let n = loaded.ids.len();
    let d = loaded.observations[0].len();
    let edges = csvio::edges_from_text(&read_file(&args.graph)?, n).map_err(input)?;
    let graph = Graph::from_edges(n, edges).map_err(|e| input(e.to_string()))?;

    let exit_mode = match args.exit.as_str() {
        "c1" => ExitMode::C1,
        "c2" => ExitMode::C2,
        "none" => ExitMode::None,
        other => return Err(input(format!("unknown exit mode '{other}'"))),
    };
    let norm_weights = args
        .weights
        .as_deref()
        .map(|w| parse_float_list(w, d, "--weights"))
        .transpose()?;
    let init_low = args
        .init_low
        .as_deref()
        .map(|s| parse_float_list(s, d, "--init-low"))
        .transpose()?
        .unwrap_or_else(|| vec![0.0; d]);
    let init_high = args
        .init_high
        .as_deref()
        .map(|s| parse_float_list(s, d, "--init-high"))
        .transpose()?
        .unwrap_or_else(|| vec![1.0; d]);

    let config = RunConfig {
        k: args.k,
        max_steps: args.max_steps,
        delta_max: args.delta_max,
        exit_mode,
        n_upper: args.n_upper,
        seed: args.seed,
        init_low,
        init_high,
        norm_weights,
    };
    let positions = loaded
        .positions
        .unwrap_or_else(|| vec![vec![0.0, 0.0]; n]);
    Ok(PreparedRun {
        dataset: Dataset {
            ids: loaded.ids,
            observations: loaded.observations,
            positions,
        },
        graph,
        config,
        d,
    })
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let prepared = prepare(&args.protocol)?;
    let out = sim::run_experiment(&prepared.dataset, &prepared.graph, &prepared.config)
        .map_err(sim_error)?;
    let document = ResultDocument::new(
        &prepared.config,
        prepared.dataset.ids.len(),
        prepared.d,
        &out.result,
    );
    write_file(&args.out_json, &document.to_json())?;
    let derived = |suffix: &str| {
        args.out_json
            .strip_suffix(".json")
            .unwrap_or(&args.out_json)
            .to_string()
            + suffix
    };
    let dtrace_path = args.out_dtrace.clone().unwrap_or_else(|| derived(".dtrace.csv"));
    write_file(&dtrace_path, &document::dtrace_csv(&out.result))?;
    let phases_path = args.out_phases.clone().unwrap_or_else(|| derived(".phases.csv"));
    write_file(&phases_path, &document::phases_csv(&out.trace))?;
    if let Some(path) = &args.out_trace {
        write_file(path, &out.trace.to_jsonl())?;
    }
    println!(
        "exit={:?} steps={} final_d={} rounds={} messages={}",
        out.result.exit_reason,
        out.result.steps_taken,
        out.result.d_trace.last().copied().unwrap_or(f64::NAN),
        out.result.total_rounds(),
        out.result.message_count,
    );
    Ok(())
}

pub fn compare(args: &CompareArgs) -> Result<(), CliError> {
    let prepared = prepare(&args.protocol)?;
    let mut out = sim::run_experiment(&prepared.dataset, &prepared.graph, &prepared.config)
        .map_err(sim_error)?;

    if let Some(step) = args.inject_fault {
        let snapshot = out
            .result
            .snapshots
            .get_mut(step.wrapping_sub(1))
            .ok_or_else(|| input(format!("--inject-fault {step}: run has fewer steps")))?;
        let slot = snapshot
            .centroids
            .iter_mut()
            .flatten()
            .next()
            .ok_or_else(|| input("no finite centroid slot to perturb".to_string()))?;
        slot[0] += 1e-3;
        println!("injected fault: centroid perturbation at step {step}");
    }

    println!("step  centroid_dev  d_dev        labels");
    for (idx, (snap, reference)) in out
        .result
        .snapshots
        .iter()
        .zip(&out.oracle.steps)
        .enumerate()
    {
        let mut centroid_dev = 0.0_f64;
        for (got, want) in snap.centroids.iter().zip(&reference.centroids) {
            match (got, want) {
                (Some(a), Some(b)) => {
                    for (&x, &y) in a.iter().zip(b) {
                        centroid_dev = centroid_dev.max(sim::relative_deviation(x, y));
                    }
                }
                (None, None) => {}
                _ => centroid_dev = f64::INFINITY,
            }
        }
        let d_dev = sim::relative_deviation(snap.objective, reference.objective);
        let labels: Vec<u32> = reference.assignments.iter().map(|&a| a as u32 + 1).collect();
        let labels_ok = snap.labels == labels;
        println!(
            "{:<5} {:<13.3e} {:<12.3e} {}",
            idx + 1,
            centroid_dev,
            d_dev,
            if labels_ok { "ok" } else { "DIVERGENT" }
        );
    }

    let shares = &out.shares;
    println!(
        "phase shares: I={:.1}% C={:.1}% R={:.1}% E={:.1}%",
        shares.initialization, shares.choice, shares.refinement, shares.exit
    );

    let report = sim::equivalence_report(&out.result, &out.oracle, args.tolerance);
    println!(
        "max deviations: centroids={:.3e} objective={:.3e}",
        report.max_centroid_deviation, report.max_objective_deviation
    );
    if report.ok {
        println!(
            "EQUIVALENT within {:.1e} over {} steps",
            args.tolerance, out.result.steps_taken
        );
        Ok(())
    } else {
        println!(
            "DIVERGENT at step {}",
            report.first_divergent_step.unwrap_or(0)
        );
        Err(CliError::Equivalence {
            first_divergent_step: report.first_divergent_step.unwrap_or(0),
        })
    }
}
