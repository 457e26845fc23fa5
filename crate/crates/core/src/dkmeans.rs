//! The distributed k-means protocol.
//!
//! Every agent runs the same synchronous program: after a leader election and
//! a network-size computation, the main cycle repeats four phases until an
//! exit criterion fires or the step budget runs out.
//!
//! 1. **Centroid propagation** — each agent contributes its chosen centroid
//!    (the leader contributes the whole initial block at step 1) into a
//!    stacked `k*d` vector whose other slots hold `-inf`; `n` rounds of
//!    max-consensus leave every agent with the identical full block. Slots
//!    chosen by nobody surface as all-`-inf` and are repaired by a leader
//!    redraw plus one extra propagation.
//! 2. **Nearest-centroid choice** — a local argmin under the shared distance
//!    rule, followed by a one-round broadcast of the choice, which induces
//!    the cluster subgraph.
//! 3. **Refinement** — clusters need not be connected, so each connected
//!    sub-cluster first computes its own mean, leader, and size over the
//!    cluster subgraph; sub-cluster leaders then inject size-weighted means
//!    into a network-wide averaging pass whose per-slot ratios reproduce the
//!    exact cluster means regardless of how clusters fragment.
//! 4. **Exit evaluation** — either a max-consensus on "did any assignment
//!    change" (C1) or an averaging pass that reveals the objective `D(T)` for
//!    comparison against `D(T-1)` (C2).
//!
//! Finite-time consensus coefficients depend on the topology in use, and an
//! agent's persistent memory stays `O(k*d)`, so the preparatory runs are
//! executed afresh for every averaging topology each step: once per cluster
//! subgraph and once per full graph.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{self, ConsensusError};
use crate::graph::{self, Graph, Topology};
use crate::metric;
use crate::rng::SplitMix64;

/// Redraw attempts per step before a run aborts as pathological.
pub const REPAIR_ATTEMPT_CAP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitMode {
    /// Stop when no assignment changed since the previous step.
    C1,
    /// Stop when `|D(T) - D(T-1)| < delta_max`.
    C2,
    /// Run the full step budget.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    C1,
    C2,
    MExhausted,
}

/// All protocol parameters. Every agent holds the same configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Cluster count k.
    pub k: usize,
    /// Main-cycle step budget M.
    pub max_steps: usize,
    /// Exit threshold for C2.
    pub delta_max: f64,
    pub exit_mode: ExitMode,
    /// Upper bound on the agent count, used until the exact size is known.
    pub n_upper: usize,
    pub seed: u64,
    /// Per-component sampling range for initial and repaired centroids.
    pub init_low: Vec<f64>,
    pub init_high: Vec<f64>,
    /// Diagonal of the norm weight matrix A; `None` means the plain norm.
    pub norm_weights: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn validate(&self, d: usize) -> Result<(), ProtocolError> {
        let fail = |msg: String| Err(ProtocolError::InvalidConfig(msg));
        if self.k == 0 {
            return fail("k must be positive".into());
        }
        if self.max_steps == 0 {
            return fail("max_steps must be positive".into());
        }
        if !(self.delta_max > 0.0) {
            return fail(format!("delta_max must be positive, got {}", self.delta_max));
        }
        if self.init_low.len() != d || self.init_high.len() != d {
            return fail(format!(
                "init range covers {} components, observations have {}",
                self.init_low.len(),
                d
            ));
        }
        for (lo, hi) in self.init_low.iter().zip(&self.init_high) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return fail(format!("invalid init range [{lo}, {hi}]"));
            }
        }
        if let Some(w) = &self.norm_weights {
            if w.len() != d {
                return fail(format!(
                    "norm weights cover {} components, observations have {d}",
                    w.len()
                ));
            }
            if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return fail("norm weights must be positive".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("graph must be connected")]
    Disconnected,
    #[error("k = {k} exceeds the agent count n = {n}")]
    KExceedsN { k: usize, n: usize },
    #[error("size bound n_upper = {n_upper} is below the agent count n = {n}")]
    BoundTooSmall { n_upper: usize, n: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("empty-slot repair exceeded {cap} attempts at step {step}")]
    RepairCapExceeded { step: usize, cap: usize },
    #[error("cluster {slot} accumulated negative mass {mass} at step {step}")]
    NegativeClusterMass { step: usize, slot: usize, mass: f64 },
    #[error("agent {agent} computed network size {got}, actual size is {expected}")]
    SizeCalculationFailed {
        agent: usize,
        got: usize,
        expected: usize,
    },
    #[error("agents disagree on the exit verdict at step {step}")]
    SplitExitVerdict { step: usize },
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
}

/// Sub-cluster metadata an agent gathers during refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubclusterInfo {
    /// SCC: mean observation of the agent's sub-cluster.
    pub centroid: Vec<f64>,
    /// SCS: number of agents in the sub-cluster.
    pub size: u64,
    pub is_subleader: bool,
    pub subleader_id: u64,
}

/// One agent's full protocol state. Deliberately free of anything that grows
/// with the network size; the neighbor list lives in the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: u64,
    pub observation: Vec<f64>,
    /// Stacked `k*d` centroid estimates; `-inf` marks unknown or empty slots.
    pub centroid_block: Vec<f64>,
    /// Chosen cluster slot (0-based); `None` before the first choice.
    pub choice: Option<usize>,
    /// Choice encoding: 1 at the chosen slot, 0 elsewhere.
    pub mu: Vec<f64>,
    /// Complementary encoding: 0 at the chosen slot, `-inf` elsewhere.
    pub mu_hat: Vec<f64>,
    pub prev_choice: Option<usize>,
    pub subcluster: Option<SubclusterInfo>,
    pub leader_flag: bool,
    /// `D(T-1)` as seen by this agent; only maintained under C2.
    pub prev_objective: Option<f64>,
}

/// Consensus rounds consumed by one main-cycle step, split by phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseRounds {
    pub propagation: u64,
    pub choice: u64,
    pub refinement: u64,
    pub exit: u64,
}

impl PhaseRounds {
    pub fn total(&self) -> u64 {
        self.propagation + self.choice + self.refinement + self.exit
    }
}

/// Per-step instrumentation snapshot used by equivalence checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSnapshot {
    /// Post-refinement centroids; `None` marks a slot no agent chose.
    pub centroids: Vec<Option<Vec<f64>>>,
    /// 1-based cluster labels.
    pub labels: Vec<u32>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    /// Final centroids; `None` marks a slot that ended empty.
    pub centroids: Vec<Option<Vec<f64>>>,
    /// Final 1-based labels, one per agent.
    pub labels: Vec<u32>,
    /// `D(T)` per executed step.
    pub d_trace: Vec<f64>,
    pub steps_taken: usize,
    pub exit_reason: ExitReason,
    /// Rounds spent before the main cycle (leader election, size
    /// computation).
    pub init_rounds: u64,
    /// Per-step phase budgets; identical across steps by construction.
    pub phase_rounds: Vec<PhaseRounds>,
    /// Extra propagation rounds spent repairing empty slots, per step.
    pub repair_rounds: Vec<u64>,
    /// Agent-to-neighbor vector transmissions over the whole run.
    pub message_count: u64,
    /// Per-step centroid/label/objective snapshots.
    pub snapshots: Vec<StepSnapshot>,
}

impl ClusteringResult {
    pub fn total_rounds(&self) -> u64 {
        self.init_rounds
            + self.phase_rounds.iter().map(PhaseRounds::total).sum::<u64>()
            + self.repair_rounds.iter().sum::<u64>()
    }
}

/// One centroid draw: components in order, each uniform over its configured
/// range. The protocol leader and the centralized oracle both consume draws
/// through this function so their streams stay aligned.
pub fn draw_centroid(rng: &mut SplitMix64, low: &[f64], high: &[f64]) -> Vec<f64> {
    low.iter()
        .zip(high)
        .map(|(&lo, &hi)| rng.uniform(lo, hi))
        .collect()
}

/// Initial block of k centroid draws, in slot order.
pub fn draw_centroid_block(
    rng: &mut SplitMix64,
    k: usize,
    low: &[f64],
    high: &[f64],
) -> Vec<Vec<f64>> {
    (0..k).map(|_| draw_centroid(rng, low, high)).collect()
}

/// Runs the protocol and returns the clustering result.
pub fn run(
    observations: &[Vec<f64>],
    ids: &[u64],
    g: &Graph,
    config: &RunConfig,
) -> Result<ClusteringResult, ProtocolError> {
    run_with_final_states(observations, ids, g, config).map(|(result, _)| result)
}

/// Runs the protocol and additionally returns the final per-agent states.
pub fn run_with_final_states(
    observations: &[Vec<f64>],
    ids: &[u64],
    g: &Graph,
    config: &RunConfig,
) -> Result<(ClusteringResult, Vec<AgentState>), ProtocolError> {
    let n = g.vertex_count();
    if observations.len() != n {
        return Err(ProtocolError::InvalidDataset(format!(
            "{} observations for {} vertices",
            observations.len(),
            n
        )));
    }
    let d = observations[0].len();
    if observations.iter().any(|x| x.len() != d) {
        return Err(ProtocolError::InvalidDataset(
            "observations must share one dimension".into(),
        ));
    }
    if ids.len() != n {
        return Err(ProtocolError::InvalidDataset(format!(
            "{} identifiers for {} vertices",
            ids.len(),
            n
        )));
    }
    config.validate(d)?;
    if config.k > n {
        return Err(ProtocolError::KExceedsN { k: config.k, n });
    }
    if config.n_upper < n {
        return Err(ProtocolError::BoundTooSmall {
            n_upper: config.n_upper,
            n,
        });
    }
    if !graph::is_connected(g) {
        return Err(ProtocolError::Disconnected);
    }

    let k = config.k;
    let n_upper = config.n_upper;
    let weights = config.norm_weights.as_deref();
    let links_g = 2 * g.edge_count() as u64;
    let mut messages = 0u64;
    let mut init_rounds = 0u64;

    let mut agents: Vec<AgentState> = observations
        .iter()
        .zip(ids)
        .map(|(x, &id)| AgentState {
            id,
            observation: x.clone(),
            centroid_block: vec![f64::NEG_INFINITY; k * d],
            choice: None,
            mu: vec![0.0; k],
            mu_hat: vec![f64::NEG_INFINITY; k],
            prev_choice: None,
            subcluster: None,
            leader_flag: false,
            prev_objective: None,
        })
        .collect();

    // Leader election: max-consensus challenge on identifiers, n_upper
    // rounds because n is still unknown.
    let id_vecs: Vec<Vec<f64>> = ids.iter().map(|&i| vec![i as f64]).collect();
    let winners = consensus::max_consensus(&id_vecs, g, n_upper);
    init_rounds += n_upper as u64;
    messages += n_upper as u64 * links_g;
    for (agent, w) in agents.iter_mut().zip(&winners) {
        agent.leader_flag = agent.id as f64 == w[0];
    }
    let leader_idx = agents
        .iter()
        .position(|a| a.leader_flag)
        .expect("identifiers are unique, one maximum exists");

    // Network size from the leader indicator; afterwards every budget uses
    // the exact n.
    let set_init = consensus::fta_setup(g, n_upper, ids)?;
    init_rounds += set_init.setup_rounds();
    messages += set_init.setup_rounds() * links_g;
    let flags: Vec<bool> = agents.iter().map(|a| a.leader_flag).collect();
    let sizes = consensus::network_size(g, &flags, &set_init)?;
    init_rounds += set_init.run_rounds();
    messages += set_init.run_rounds() * links_g;
    if let Some(agent) = sizes.iter().position(|&s| s != n) {
        return Err(ProtocolError::SizeCalculationFailed {
            agent,
            got: sizes[agent],
            expected: n,
        });
    }

    // Initial centroids: leader draws, everyone else stays at -inf.
    let mut rng = SplitMix64::new(config.seed);
    let initial_block = draw_centroid_block(&mut rng, k, &config.init_low, &config.init_high);
    for (j, c) in initial_block.iter().enumerate() {
        agents[leader_idx].centroid_block[j * d..(j + 1) * d].copy_from_slice(c);
    }

    let mut phase_rounds: Vec<PhaseRounds> = Vec::new();
    let mut repair_rounds: Vec<u64> = Vec::new();
    let mut d_trace: Vec<f64> = Vec::new();
    let mut snapshots: Vec<StepSnapshot> = Vec::new();
    let mut exit_reason = ExitReason::MExhausted;
    let mut steps_taken = 0;

    for step in 1..=config.max_steps {
        steps_taken = step;
        let mut rounds = PhaseRounds::default();
        let mut step_repair = 0u64;

        // -- centroid propagation ----------------------------------------
        let seeds: Vec<Vec<f64>> = agents
            .iter()
            .map(|a| {
                if step == 1 {
                    a.centroid_block.clone()
                } else {
                    // mu (x) c_chosen + mu_hat (x) 1_d: the chosen slot
                    // carries the agent's current centroid, the rest -inf.
                    let mut v = vec![f64::NEG_INFINITY; k * d];
                    let j = a.choice.expect("choice exists after step 1");
                    v[j * d..(j + 1) * d].copy_from_slice(&a.centroid_block[j * d..(j + 1) * d]);
                    v
                }
            })
            .collect();
        let mut blocks = consensus::max_consensus(&seeds, g, n);
        rounds.propagation += n as u64;
        messages += n as u64 * links_g;

        // -- repair of slots nobody chose ----------------------------------
        let mut attempts = 0;
        loop {
            let empty: Vec<usize> = (0..k)
                .filter(|&j| {
                    blocks[0][j * d..(j + 1) * d]
                        .iter()
                        .all(|&v| v == f64::NEG_INFINITY)
                })
                .collect();
            if empty.is_empty() {
                break;
            }
            attempts += 1;
            if attempts > REPAIR_ATTEMPT_CAP {
                return Err(ProtocolError::RepairCapExceeded {
                    step,
                    cap: REPAIR_ATTEMPT_CAP,
                });
            }
            for &j in &empty {
                let c = draw_centroid(&mut rng, &config.init_low, &config.init_high);
                blocks[leader_idx][j * d..(j + 1) * d].copy_from_slice(&c);
            }
            blocks = consensus::max_consensus(&blocks, g, n);
            step_repair += n as u64;
            messages += n as u64 * links_g;
        }
        debug_assert!(
            blocks.windows(2).all(|w| w[0] == w[1]),
            "propagation must leave identical blocks everywhere"
        );
        for (a, b) in agents.iter_mut().zip(&blocks) {
            a.centroid_block.clone_from(b);
        }

        // -- nearest centroid choice + one-round broadcast ------------------
        for a in &mut agents {
            a.prev_choice = a.choice;
            let j = metric::nearest_centroid(
                &a.observation,
                (0..k).map(|j| &a.centroid_block[j * d..(j + 1) * d]),
                weights,
            );
            a.choice = Some(j);
            a.mu = (0..k).map(|s| if s == j { 1.0 } else { 0.0 }).collect();
            a.mu_hat = (0..k)
                .map(|s| if s == j { 0.0 } else { f64::NEG_INFINITY })
                .collect();
        }
        rounds.choice += 1;
        messages += links_g;

        let choices: Vec<usize> = agents.iter().map(|a| a.choice.unwrap()).collect();
        let gc = graph::induce_cluster_graph(g, &choices).expect("choices cover all vertices");
        let links_gc = 2 * gc.edge_count() as u64;

        // -- sub-cluster identification over the cluster subgraph -----------
        let set_gc = consensus::fta_setup(&gc, n, ids)?;
        rounds.refinement += set_gc.setup_rounds();
        messages += set_gc.setup_rounds() * links_gc;

        let obs: Vec<Vec<f64>> = agents.iter().map(|a| a.observation.clone()).collect();
        let scc = consensus::fta_consensus(&obs, &gc, &set_gc);
        rounds.refinement += set_gc.run_rounds();
        messages += set_gc.run_rounds() * links_gc;

        let sub_winners = consensus::max_consensus(&id_vecs, &gc, n);
        rounds.refinement += n as u64;
        messages += n as u64 * links_gc;
        let sub_flags: Vec<bool> = agents
            .iter()
            .zip(&sub_winners)
            .map(|(a, w)| a.id as f64 == w[0])
            .collect();

        let scs = consensus::network_size(&gc, &sub_flags, &set_gc)?;
        rounds.refinement += set_gc.run_rounds();
        messages += set_gc.run_rounds() * links_gc;

        for (i, a) in agents.iter_mut().enumerate() {
            a.subcluster = Some(SubclusterInfo {
                centroid: scc[i].clone(),
                size: scs[i] as u64,
                is_subleader: sub_flags[i],
                subleader_id: sub_winners[i][0] as u64,
            });
        }

        // -- centroid calculation over the full graph -----------------------
        let set_g = consensus::fta_setup(g, n, ids)?;
        rounds.refinement += set_g.setup_rounds();
        messages += set_g.setup_rounds() * links_g;

        let eta0: Vec<Vec<f64>> = agents
            .iter()
            .map(|a| {
                let mut v = vec![0.0; k * (d + 1)];
                let sub = a.subcluster.as_ref().unwrap();
                if sub.is_subleader {
                    let base = a.choice.unwrap() * (d + 1);
                    let size = sub.size as f64;
                    for (c, &m) in sub.centroid.iter().enumerate() {
                        v[base + c] = m * size;
                    }
                    v[base + d] = size;
                }
                v
            })
            .collect();
        let eta = consensus::fta_consensus(&eta0, g, &set_g);
        rounds.refinement += set_g.run_rounds();
        messages += set_g.run_rounds() * links_g;

        // sigma_j / eps_j per slot; nonempty clusters have eps >= 1/n, so
        // half that separates real mass from averaging noise.
        let eps_floor = 0.5 / n as f64;
        for (i, a) in agents.iter_mut().enumerate() {
            for j in 0..k {
                let base = j * (d + 1);
                let eps = eta[i][base + d];
                if eps > eps_floor {
                    for c in 0..d {
                        a.centroid_block[j * d + c] = eta[i][base + c] / eps;
                    }
                } else if eps < -eps_floor {
                    return Err(ProtocolError::NegativeClusterMass {
                        step,
                        slot: j,
                        mass: eps,
                    });
                } else {
                    for c in 0..d {
                        a.centroid_block[j * d + c] = f64::NEG_INFINITY;
                    }
                }
            }
        }

        // -- exit condition evaluation --------------------------------------
        let mut exit_now = false;
        let d_value: f64;
        match config.exit_mode {
            ExitMode::C1 | ExitMode::None => {
                if config.exit_mode == ExitMode::C1 {
                    let nu0: Vec<Vec<f64>> = agents
                        .iter()
                        .map(|a| vec![if a.choice == a.prev_choice && a.prev_choice.is_some() {
                            0.0
                        } else {
                            1.0
                        }])
                        .collect();
                    let nu = consensus::max_consensus(&nu0, g, n);
                    rounds.exit += n as u64;
                    messages += n as u64 * links_g;
                    exit_now = step >= 2 && nu[0][0] == 0.0;
                }
                // D(T) is not part of the protocol under C1/none; the
                // simulator instruments it from the agents' own state.
                d_value = agents
                    .iter()
                    .map(|a| {
                        let j = a.choice.unwrap();
                        metric::weighted_sq_dist(
                            &a.observation,
                            &a.centroid_block[j * d..(j + 1) * d],
                            weights,
                        )
                    })
                    .sum();
            }
            ExitMode::C2 => {
                let nu0: Vec<Vec<f64>> = agents
                    .iter()
                    .map(|a| {
                        let j = a.choice.unwrap();
                        vec![
                            n as f64
                                * metric::weighted_sq_dist(
                                    &a.observation,
                                    &a.centroid_block[j * d..(j + 1) * d],
                                    weights,
                                ),
                        ]
                    })
                    .collect();
                let dvals = consensus::fta_consensus(&nu0, g, &set_g);
                rounds.exit += set_g.run_rounds();
                messages += set_g.run_rounds() * links_g;
                let verdicts: Vec<bool> = agents
                    .iter()
                    .zip(&dvals)
                    .map(|(a, v)| match a.prev_objective {
                        Some(prev) => (v[0] - prev).abs() < config.delta_max,
                        None => false,
                    })
                    .collect();
                if verdicts.windows(2).any(|w| w[0] != w[1]) {
                    return Err(ProtocolError::SplitExitVerdict { step });
                }
                for (a, v) in agents.iter_mut().zip(&dvals) {
                    a.prev_objective = Some(v[0]);
                }
                exit_now = step >= 2 && verdicts[0];
                d_value = dvals[leader_idx][0];
            }
        }

        d_trace.push(d_value);
        snapshots.push(StepSnapshot {
            centroids: block_to_slots(&agents[0].centroid_block, k, d),
            labels: agents.iter().map(|a| a.choice.unwrap() as u32 + 1).collect(),
            objective: d_value,
        });
        phase_rounds.push(rounds);
        repair_rounds.push(step_repair);

        if exit_now {
            exit_reason = match config.exit_mode {
                ExitMode::C1 => ExitReason::C1,
                ExitMode::C2 => ExitReason::C2,
                ExitMode::None => unreachable!(),
            };
            break;
        }
    }

    let last = snapshots.last().expect("at least one step ran");
    let result = ClusteringResult {
        centroids: last.centroids.clone(),
        labels: last.labels.clone(),
        d_trace,
        steps_taken,
        exit_reason,
        init_rounds,
        phase_rounds,
        repair_rounds,
        message_count: messages,
        snapshots,
    };
    Ok((result, agents))
}

/// Splits a flat block into per-slot centroids, turning all-`-inf` slots
/// into `None`.
fn block_to_slots(block: &[f64], k: usize, d: usize) -> Vec<Option<Vec<f64>>> {
    (0..k)
        .map(|j| {
            let slot = &block[j * d..(j + 1) * d];
            if slot.iter().all(|&v| v == f64::NEG_INFINITY) {
                None
            } else {
                Some(slot.to_vec())
            }
        })
        .collect()
}
