//! Consensus primitives over synchronous undirected networks.
//!
//! Three mechanisms cooperate here:
//!
//! - **Max-consensus**: each agent repeatedly replaces its state with the
//!   component-wise maximum over its closed neighborhood. After `rounds >=
//!   diameter` synchronous updates every agent holds the maximum over its
//!   connected component; `rounds = n` always suffices.
//! - **Linear averaging iteration**: `z(t+1) = (W (x) I_d) z(t)` with the
//!   uniform weight rule `w_ij = 1/n` on edges and a diagonal that makes each
//!   row sum to one. `W` is symmetric and doubly stochastic, and on every
//!   connected component it has a simple eigenvalue at 1 with all other
//!   eigenvalues strictly inside the unit circle, so the iteration converges
//!   to the per-component average.
//! - **Finite-time average consensus (FTA)**: instead of waiting for the
//!   asymptotic limit, each agent i recovers the exact average as a fixed
//!   linear combination of its own first iterates `z_i(0..delta_i)`. The
//!   combination comes from the minimal polynomial `q_i(g)` of `W` with
//!   respect to `e_i`: writing `q_i(g) = (g - 1) p_i(g)`, the average equals
//!   `sum_t beta_t z_i(t) / p_i(1)` where `beta` are the coefficients of
//!   `p_i`.
//!
//! [`fta_setup`] discovers the combination distributedly: the network
//! executes one preparatory averaging run per candidate seed (run `j` starts
//! with a one at the agent of j-th greatest identifier and zeros elsewhere),
//! each agent stacks its own iterates from all runs and grows the window
//! `delta` until the stack loses column rank. The kernel at the rank loss
//! carries the polynomial coefficients.
//!
//! Two numerical refinements keep the recovery usable in double precision,
//! where the raw iterate matrix `Z_{i,delta}` becomes singular long before
//! the slow spectral clusters of `W` are resolved:
//!
//! - rank detection and extraction run on the matrix of *differences*
//!   `z(t+1) - z(t)`, which cancels the eigenvalue-1 component exactly, so
//!   the combination weights `gamma` solve `min ||D gamma||` subject to
//!   `sum gamma = 1` with singular values floored at the noise scale;
//! - a rank loss is only accepted once the extracted weights are stable
//!   (`||gamma||_1 <= 100`, bounding noise amplification near eps-level);
//!   until then the agent keeps deepening the window, falling back to the
//!   full preparatory window when no earlier stable kernel exists.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Topology;

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("weight rule expects n = {expected} (vertex count), got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("size bound {n_upper} is below the vertex count {n}")]
    InsufficientBound { n_upper: usize, n: usize },
    #[error("invalid agent identifiers: {0}")]
    InvalidIds(String),
    #[error(
        "no rank loss up to delta = {n_upper} - 1 for agent {agent}: weights are broken or the \
         size bound is below the component size"
    )]
    NoRankLoss { agent: usize, n_upper: usize },
    #[error("numerical failure in minimal-polynomial recovery: {0}")]
    NumericalFailure(String),
    #[error("network-size consensus produced a non-positive value {value} at agent {agent}")]
    NonPositiveSizeEstimate { agent: usize, value: f64 },
    #[error("network-size reciprocal {reciprocal} at agent {agent} is not near an integer")]
    NonIntegerSize { agent: usize, reciprocal: f64 },
    #[error("component containing vertex {vertex} holds {count} leader flags, expected exactly 1")]
    InvalidLeaderIndicator { vertex: usize, count: usize },
}

/// Averaging weights for one topology: `w_ij = 1/n` on edges, zero off edges,
/// and `w_ii = 1 - deg(i)/n`. Symmetric, doubly stochastic, positive diagonal.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    n: usize,
    diag: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
}

impl WeightMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if self.neighbors[i].binary_search(&j).is_ok() {
            1.0 / self.n as f64
        } else {
            0.0
        }
    }

    /// One synchronous update of scalar states.
    pub fn apply_scalar(&self, state: &[f64]) -> Vec<f64> {
        let inv_n = 1.0 / self.n as f64;
        (0..self.n)
            .map(|i| {
                let neighbor_sum: f64 = self.neighbors[i].iter().map(|&j| state[j]).sum();
                self.diag[i] * state[i] + inv_n * neighbor_sum
            })
            .collect()
    }

    /// One synchronous update of d-dimensional states, component-wise.
    pub fn apply(&self, state: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let inv_n = 1.0 / self.n as f64;
        let d = state.first().map_or(0, Vec::len);
        (0..self.n)
            .map(|i| {
                let mut next = vec![0.0; d];
                for (c, slot) in next.iter_mut().enumerate() {
                    *slot = self.diag[i] * state[i][c];
                }
                for &j in &self.neighbors[i] {
                    for (c, slot) in next.iter_mut().enumerate() {
                        *slot += inv_n * state[j][c];
                    }
                }
                next
            })
            .collect()
    }
}

/// Per-agent vector states plus the round counter of a running iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    pub values: Vec<Vec<f64>>,
    pub round: usize,
}

impl ConsensusState {
    pub fn new(values: Vec<Vec<f64>>) -> Self {
        Self { values, round: 0 }
    }
}

/// Builds the uniform averaging weights for `g`. `n` must equal the vertex
/// count; the parameter is taken explicitly because every agent must use the
/// same value for the rows to agree.
pub fn build_weights<T: Topology + ?Sized>(g: &T, n: usize) -> Result<WeightMatrix, ConsensusError> {
    if n != g.vertex_count() {
        return Err(ConsensusError::SizeMismatch {
            expected: g.vertex_count(),
            got: n,
        });
    }
    let neighbors: Vec<Vec<usize>> = (0..n).map(|v| g.neighbors(v).to_vec()).collect();
    let diag = neighbors
        .iter()
        .map(|list| 1.0 - list.len() as f64 / n as f64)
        .collect();
    Ok(WeightMatrix { n, diag, neighbors })
}

/// One step of `z(t+1) = (W (x) I_d) z(t)`.
pub fn linear_iteration(w: &WeightMatrix, state: &ConsensusState) -> ConsensusState {
    assert!(
        state.values.len() == w.size(),
        "state holds {} agents, weights expect {}",
        state.values.len(),
        w.size()
    );
    ConsensusState {
        values: w.apply(&state.values),
        round: state.round + 1,
    }
}

/// Runs `rounds` synchronous max-consensus updates and returns the final
/// per-agent states. With `rounds >= n` every agent holds the component-wise
/// maximum over its connected component.
pub fn max_consensus<T: Topology + ?Sized>(
    initial: &[Vec<f64>],
    g: &T,
    rounds: usize,
) -> Vec<Vec<f64>> {
    assert!(rounds >= 1, "max-consensus needs at least one round");
    assert_eq!(initial.len(), g.vertex_count());
    let d = initial.first().map_or(0, Vec::len);
    assert!(
        initial.iter().all(|v| v.len() == d),
        "all agent vectors must share one dimension"
    );
    let mut state = initial.to_vec();
    for _ in 0..rounds {
        let next: Vec<Vec<f64>> = (0..state.len())
            .map(|i| {
                let mut best = state[i].clone();
                for &j in g.neighbors(i) {
                    for (c, slot) in best.iter_mut().enumerate() {
                        if state[j][c] > *slot {
                            *slot = state[j][c];
                        }
                    }
                }
                best
            })
            .collect();
        state = next;
    }
    state
}

/// Coefficients agent i derives from an annihilating polynomial of `W` with
/// respect to `e_i`, `q_i(g) = g^(delta+1) + alpha_delta g^delta + ... +
/// alpha_0 = (g - 1) p_i(g)`. On well-conditioned topologies this is the
/// minimal polynomial; on ill-conditioned ones it is the stabilized
/// annihilator of everything the window resolves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FtaCoefficients {
    /// delta_i: the agent needs its iterates `z_i(0..=delta_i)`.
    pub degree: usize,
    /// Non-leading coefficients of `q_i` in ascending powers (`alpha_0 ..
    /// alpha_delta`); the leading coefficient is 1.
    pub alpha: Vec<f64>,
    /// Coefficients of `p_i` in ascending powers (`beta_0 .. beta_delta`),
    /// with `beta_delta = 1`.
    pub beta: Vec<f64>,
    /// Combination weights `gamma_t = beta_t / p_i(1)`; `sum_t gamma_t
    /// z_i(t)` is the exact component average.
    pub gamma: Vec<f64>,
    /// `p_i(1)`, nonzero because `g = 1` is a simple root of `q_i`.
    pub p_at_one: f64,
}

/// Output of [`fta_setup`]: one coefficient set per agent plus the round
/// budget bookkeeping of the preparatory phase.
#[derive(Debug, Clone)]
pub struct FtaSet {
    n_upper: usize,
    vertex_count: usize,
    edge_count: usize,
    pub coeffs: Vec<FtaCoefficients>,
    setup_rounds: u64,
}

impl FtaSet {
    pub fn n_upper(&self) -> usize {
        self.n_upper
    }

    /// Rounds consumed by the preparatory runs: `n_upper` runs of `n_upper +
    /// 1` iterations each.
    pub fn setup_rounds(&self) -> u64 {
        self.setup_rounds
    }

    /// Synchronous round budget of one consensus execution with these
    /// coefficients. Agents cannot know `max_i delta_i`, so every execution
    /// runs the full `n_upper + 1` iterations.
    pub fn run_rounds(&self) -> u64 {
        self.n_upper as u64 + 1
    }
}

fn validate_ids(ids: &[u64], n: usize) -> Result<(), ConsensusError> {
    if ids.len() != n {
        return Err(ConsensusError::InvalidIds(format!(
            "{} identifiers for {} vertices",
            ids.len(),
            n
        )));
    }
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(ConsensusError::InvalidIds("identifiers not unique".into()));
    }
    if ids.iter().any(|&id| id >= (1u64 << 53)) {
        return Err(ConsensusError::InvalidIds(
            "identifiers must stay below 2^53 to survive float transport".into(),
        ));
    }
    Ok(())
}

/// Seed schedule from the global identifier order: run `j` starts with a one
/// at the agent holding the j-th greatest identifier. Runs beyond the agent
/// count start from all zeros.
pub fn ranked_seeds_global(ids: &[u64], n_upper: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(ids[i]));
    (0..n_upper)
        .map(|j| order.get(j).map(|&v| vec![v]).unwrap_or_default())
        .collect()
}

/// Seed schedule obtained the way deployed agents would: repeated
/// max-consensus challenges on identifiers, excluding past winners. On a
/// disconnected topology run `j` seeds the j-th greatest surviving identifier
/// of every component, which spans the same per-component constraints as the
/// global order and yields the same coefficients.
pub fn ranked_seeds_via_max_consensus<T: Topology + ?Sized>(
    g: &T,
    ids: &[u64],
    n_upper: usize,
) -> Result<Vec<Vec<usize>>, ConsensusError> {
    let n = g.vertex_count();
    validate_ids(ids, n)?;
    let mut active = vec![true; n];
    let mut seeds = Vec::with_capacity(n_upper);
    for _ in 0..n_upper {
        let initial: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![if active[i] { ids[i] as f64 } else { f64::NEG_INFINITY }])
            .collect();
        let winners = max_consensus(&initial, g, n);
        let run_seeds: Vec<usize> = (0..n)
            .filter(|&i| active[i] && winners[i][0] == ids[i] as f64)
            .collect();
        for &s in &run_seeds {
            active[s] = false;
        }
        seeds.push(run_seeds);
    }
    Ok(seeds)
}

/// Distributed minimal-polynomial discovery with the default (global
/// identifier order) seed schedule.
pub fn fta_setup<T: Topology + ?Sized>(
    g: &T,
    n_upper: usize,
    ids: &[u64],
) -> Result<FtaSet, ConsensusError> {
    validate_ids(ids, g.vertex_count())?;
    fta_setup_with_seeds(g, n_upper, &ranked_seeds_global(ids, n_upper))
}

/// Per-agent iterate traces of the preparatory runs: `traces[i][j][t]` is
/// agent i's scalar state at iteration t of run j, `t = 0..=n_upper + 1`.
fn preparatory_traces<T: Topology + ?Sized>(
    g: &T,
    n_upper: usize,
    seeds: &[Vec<usize>],
    w: &WeightMatrix,
) -> Vec<Vec<Vec<f64>>> {
    let n = g.vertex_count();
    let steps = n_upper + 1;
    let mut traces = vec![vec![vec![0.0_f64; steps + 1]; seeds.len()]; n];
    for (j, seed_set) in seeds.iter().enumerate() {
        let mut state = vec![0.0_f64; n];
        for &s in seed_set {
            state[s] = 1.0;
        }
        for (i, trace) in traces.iter_mut().enumerate() {
            trace[j][0] = state[i];
        }
        for t in 1..=steps {
            state = w.apply_scalar(&state);
            for (i, trace) in traces.iter_mut().enumerate() {
                trace[j][t] = state[i];
            }
        }
    }
    traces
}

/// Distributed minimal-polynomial discovery with an explicit seed schedule.
pub fn fta_setup_with_seeds<T: Topology + ?Sized>(
    g: &T,
    n_upper: usize,
    seeds: &[Vec<usize>],
) -> Result<FtaSet, ConsensusError> {
    let n = g.vertex_count();
    if n_upper < n {
        return Err(ConsensusError::InsufficientBound { n_upper, n });
    }
    let w = build_weights(g, n)?;
    let traces = preparatory_traces(g, n_upper, seeds, &w);
    let coeffs = traces
        .iter()
        .enumerate()
        .map(|(agent, trace)| minimal_polynomial(trace, n_upper, agent))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FtaSet {
        n_upper,
        vertex_count: n,
        edge_count: g.edge_count(),
        coeffs,
        setup_rounds: (n_upper * (n_upper + 1)) as u64,
    })
}

/// Stability gate: a kernel is accepted once its combination weights have
/// l1 norm at most this bound, keeping the noise amplification of the final
/// linear combination at the 1e-14 level.
const GAMMA_L1_GATE: f64 = 100.0;

/// Stacks the agent's iterate differences into `D_{i,delta}`: one row per
/// preparatory run, columns `dz(delta), dz(delta-1), ..., dz(0)` with
/// `dz(t) = z(t+1) - z(t)`. Rows are zero-padded to at least `cols` so the
/// SVD always exposes the kernel.
fn build_diff(trace: &[Vec<f64>], delta: usize) -> DMatrix<f64> {
    let cols = delta + 1;
    let rows = trace.len().max(cols);
    DMatrix::from_fn(rows, cols, |r, c| {
        if r < trace.len() {
            let t = delta - c;
            trace[r][t + 1] - trace[r][t]
        } else {
            0.0
        }
    })
}

/// Scale-relative rank threshold `tau = max(n_upper + 2, cols) * eps *
/// sigma_max` applied to the difference stack.
fn rank_threshold(n_upper: usize, cols: usize, sigma_max: f64) -> f64 {
    (n_upper + 2).max(cols) as f64 * f64::EPSILON * sigma_max
}

fn is_rank_deficient(trace: &[Vec<f64>], n_upper: usize, delta: usize) -> bool {
    let d = build_diff(trace, delta);
    let sigma = d.singular_values();
    let sigma_max = sigma.iter().cloned().fold(0.0_f64, f64::max);
    let tau = rank_threshold(n_upper, delta + 1, sigma_max);
    sigma.iter().filter(|&&s| s > tau).count() < delta + 1
}

/// A kernel is only accepted once its constrained residual sits within this
/// factor of the regularization floor, i.e. it annihilates everything the
/// window resolves instead of merging unresolved spectral clusters.
const RESIDUAL_GATE: f64 = 8.0;

struct Extraction {
    gamma: Vec<f64>,
    deficient: bool,
    /// Predicted `||D gamma||` of the constrained minimizer.
    residual: f64,
    /// Regularization floor `4 eps sigma_max`.
    floor: f64,
}

/// Combination weights from the window `z(0..=delta)`: the minimizer of
/// `||D gamma||` subject to `sum gamma = 1`, solved in the SVD basis with
/// singular values floored at `4 eps sigma_max`. When the rank gap is wide
/// this reduces to the plain kernel vector; on ill-conditioned windows the
/// floor regularizes the trade between residual and weight growth.
fn extract_gamma(
    trace: &[Vec<f64>],
    n_upper: usize,
    delta: usize,
) -> Result<Extraction, ConsensusError> {
    let cols = delta + 1;
    let d = build_diff(trace, delta);
    let svd = d.svd(false, true);
    let sigma = svd.singular_values;
    let sigma_max = sigma.iter().cloned().fold(0.0_f64, f64::max);
    if sigma_max == 0.0 {
        // The iteration is already stationary: z(0) is the average.
        let mut gamma = vec![0.0; cols];
        gamma[0] = 1.0;
        return Ok(Extraction {
            gamma,
            deficient: true,
            residual: 0.0,
            floor: 0.0,
        });
    }
    let tau = rank_threshold(n_upper, cols, sigma_max);
    let deficient = sigma.iter().filter(|&&s| s > tau).count() < cols;
    let v_t = svd
        .v_t
        .ok_or_else(|| ConsensusError::NumericalFailure("SVD did not return V^T".into()))?;
    let ones = DVector::from_element(cols, 1.0);
    let c1 = &v_t * &ones;
    let floor = 4.0 * f64::EPSILON * sigma_max;
    let dinv: Vec<f64> = sigma
        .iter()
        .map(|&s| 1.0 / (s.max(floor) * s.max(floor)))
        .collect();
    let denom: f64 = dinv.iter().zip(c1.iter()).map(|(d, o)| d * o * o).sum();
    if denom <= 0.0 || !denom.is_finite() {
        return Err(ConsensusError::NumericalFailure(format!(
            "degenerate normalization at delta = {delta}"
        )));
    }
    // Column c multiplies dz(delta - c); gamma is returned in ascending t.
    let mut gamma_desc = vec![0.0_f64; cols];
    for k in 0..cols {
        let s_k = dinv[k] * c1[k] / denom;
        for (c, slot) in gamma_desc.iter_mut().enumerate() {
            *slot += s_k * v_t[(k, c)];
        }
    }
    let gamma: Vec<f64> = (0..cols).map(|t| gamma_desc[delta - t]).collect();
    Ok(Extraction {
        gamma,
        deficient,
        residual: 1.0 / denom.sqrt(),
        floor,
    })
}

impl Extraction {
    /// True when the kernel both reaches the noise floor and keeps the
    /// combination weights small enough not to amplify rounding noise.
    fn is_reliable(&self) -> bool {
        let l1: f64 = self.gamma.iter().map(|g| g.abs()).sum();
        l1.is_finite()
            && l1 <= GAMMA_L1_GATE
            && self.residual <= RESIDUAL_GATE * self.floor.max(f64::MIN_POSITIVE) * l1.max(1.0)
    }
}

/// Finds the agent's combination window and weights: the smallest `delta`
/// whose difference stack is rank-deficient *and* yields a reliable kernel,
/// falling back to the full preparatory window. Rank deficiency is monotone
/// in `delta`, so the first deficiency is located by bisection before the
/// reliability scan.
fn minimal_polynomial(
    trace: &[Vec<f64>],
    n_upper: usize,
    agent: usize,
) -> Result<FtaCoefficients, ConsensusError> {
    let last = n_upper - 1;
    let first_deficient = if is_rank_deficient(trace, n_upper, 0) {
        0
    } else {
        // invariant: lo is full rank, hi is deficient (the full window
        // always is, because rank cannot exceed n minus the component count)
        let mut lo = 0usize;
        let mut hi = last;
        if !is_rank_deficient(trace, n_upper, hi) {
            hi = n_upper; // treat the final window as the boundary
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if is_rank_deficient(trace, n_upper, mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    if first_deficient > last {
        return Err(ConsensusError::NoRankLoss { agent, n_upper });
    }
    for delta in first_deficient..=last {
        let extraction = extract_gamma(trace, n_upper, delta)?;
        if delta < last && !(extraction.deficient && extraction.is_reliable()) {
            continue;
        }
        return coefficients_from_gamma(extraction.gamma, delta, agent);
    }
    Err(ConsensusError::NoRankLoss { agent, n_upper })
}

/// Expands the combination weights into the stored coefficient records:
/// `gamma` are the weights of `p(g)/p(1)`, so the monic `p` is `gamma`
/// rescaled by its leading entry and `q = (g - 1) p`.
fn coefficients_from_gamma(
    mut gamma: Vec<f64>,
    delta: usize,
    agent: usize,
) -> Result<FtaCoefficients, ConsensusError> {
    let gamma_sum: f64 = gamma.iter().sum();
    if !gamma.iter().all(|g| g.is_finite()) || (gamma_sum - 1.0).abs() > 0.1 {
        return Err(ConsensusError::NumericalFailure(format!(
            "agent {agent}: combination weights do not sum to one (sum = {gamma_sum})"
        )));
    }
    // Large-norm fallback windows accumulate rounding in the constraint;
    // re-impose it exactly.
    for g in &mut gamma {
        *g /= gamma_sum;
    }
    let lead = gamma[delta];
    if lead == 0.0 || !lead.is_finite() {
        return Err(ConsensusError::NumericalFailure(format!(
            "agent {agent}: degenerate leading coefficient at delta = {delta}"
        )));
    }
    let beta: Vec<f64> = gamma.iter().map(|&g| g / lead).collect();
    let p_at_one: f64 = beta.iter().sum();
    // q = (g - 1) p by convolution, ascending powers; the leading 1 of q is
    // implicit in the stored alpha.
    let mut alpha = vec![0.0; delta + 1];
    alpha[0] = -beta[0];
    for p in 1..=delta {
        alpha[p] = beta[p - 1] - beta[p];
    }
    Ok(FtaCoefficients {
        degree: delta,
        alpha,
        beta,
        gamma,
        p_at_one,
    })
}

/// Finite-time average consensus: runs the synchronous averaging budget and
/// returns each agent's combination `sum_t gamma_t z_i(t)`, the exact mean of
/// the initial values over the agent's connected component.
pub fn fta_consensus<T: Topology + ?Sized>(
    initial: &[Vec<f64>],
    g: &T,
    set: &FtaSet,
) -> Vec<Vec<f64>> {
    let n = g.vertex_count();
    assert_eq!(initial.len(), n);
    assert_eq!(
        (set.vertex_count, set.edge_count),
        (n, g.edge_count()),
        "coefficients were built for a different topology"
    );
    let d = initial.first().map_or(0, Vec::len);
    assert!(initial.iter().all(|v| v.len() == d));
    let w = build_weights(g, n).expect("vertex count already checked");

    let mut acc: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let g0 = set.coeffs[i].gamma[0];
            initial[i].iter().map(|&x| g0 * x).collect()
        })
        .collect();
    let mut state = initial.to_vec();
    for t in 1..=(set.n_upper + 1) {
        state = w.apply(&state);
        for i in 0..n {
            let coeff = &set.coeffs[i];
            if t <= coeff.degree {
                let gt = coeff.gamma[t];
                for (slot, &x) in acc[i].iter_mut().zip(&state[i]) {
                    *slot += gt * x;
                }
            }
        }
    }
    acc
}

/// Distributed network-size computation: averaging the one-per-component
/// leader indicator yields `1/n_c`; the nearest integer of the reciprocal is
/// the component size.
pub fn network_size<T: Topology + ?Sized>(
    g: &T,
    leader_flag: &[bool],
    set: &FtaSet,
) -> Result<Vec<usize>, ConsensusError> {
    assert_eq!(leader_flag.len(), g.vertex_count());
    for part in crate::graph::connected_components(g) {
        let count = part.iter().filter(|&&v| leader_flag[v]).count();
        if count != 1 {
            return Err(ConsensusError::InvalidLeaderIndicator {
                vertex: part[0],
                count,
            });
        }
    }
    let initial: Vec<Vec<f64>> = leader_flag
        .iter()
        .map(|&f| vec![if f { 1.0 } else { 0.0 }])
        .collect();
    let values = fta_consensus(&initial, g, set);
    values
        .iter()
        .enumerate()
        .map(|(agent, v)| {
            let value = v[0];
            if value <= 0.0 {
                return Err(ConsensusError::NonPositiveSizeEstimate { agent, value });
            }
            let reciprocal = 1.0 / value;
            let rounded = reciprocal.round();
            // An estimate far from any integer signals broken coefficients
            // rather than averaging noise.
            if (reciprocal - rounded).abs() > 0.1 {
                return Err(ConsensusError::NonIntegerSize { agent, reciprocal });
            }
            Ok(rounded as usize)
        })
        .collect()
}

/// Re-derived rank picture around an agent's detected boundary, for
/// validation. `first_deficient` is the smallest window at which the
/// difference stack loses column rank under the threshold rule; windows
/// below it must be full rank, and the accepted `degree` never precedes it
/// (it can exceed it when early kernels fail the stability gate).
pub struct RankBoundary {
    pub first_deficient: usize,
    pub degree: usize,
    /// `None` when `first_deficient == 0` (no window below the boundary).
    pub full_rank_below: Option<bool>,
    pub deficient_at_first: bool,
}

pub fn rank_boundary_check<T: Topology + ?Sized>(
    g: &T,
    ids: &[u64],
    set: &FtaSet,
) -> Result<Vec<RankBoundary>, ConsensusError> {
    let n = g.vertex_count();
    validate_ids(ids, n)?;
    let w = build_weights(g, n)?;
    let seeds = ranked_seeds_global(ids, set.n_upper);
    let traces = preparatory_traces(g, set.n_upper, &seeds, &w);
    (0..n)
        .map(|i| {
            let degree = set.coeffs[i].degree;
            let first_deficient = (0..set.n_upper)
                .find(|&d| is_rank_deficient(&traces[i], set.n_upper, d))
                .unwrap_or(set.n_upper - 1);
            let full_rank_below = (first_deficient > 0)
                .then(|| !is_rank_deficient(&traces[i], set.n_upper, first_deficient - 1));
            Ok(RankBoundary {
                first_deficient,
                degree,
                full_rank_below,
                deficient_at_first: is_rank_deficient(&traces[i], set.n_upper, first_deficient),
            })
        })
        .collect()
}
