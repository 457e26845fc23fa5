//! Centralized k-means reference implementation.
//!
//! The distributed protocol is proven to reproduce centralized k-means
//! step-for-step when both start from the same initial centroids. This module
//! is the ground truth for that equivalence: it shares the distance and
//! tie-breaking rules with the protocol through [`crate::metric`], consumes
//! the same draw stream for initial centroids and empty-cluster repairs, and
//! applies the same exit criteria.

use crate::dkmeans::{draw_centroid, draw_centroid_block, ExitMode, ExitReason, RunConfig};
use crate::metric;
use crate::rng::SplitMix64;

/// One step of the reference run: post-refinement centroids (`None` marks an
/// empty cluster), the assignments that produced them, and the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansState {
    pub centroids: Vec<Option<Vec<f64>>>,
    pub assignments: Vec<usize>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTrace {
    pub steps: Vec<KMeansState>,
    pub exit_reason: ExitReason,
}

/// Assignment phase: each observation goes to the nearest centroid, ties to
/// the smallest index.
pub fn assign(
    x: &[Vec<f64>],
    centroids: &[Vec<f64>],
    norm_weights: Option<&[f64]>,
) -> Vec<usize> {
    x.iter()
        .map(|obs| metric::nearest_centroid(obs, centroids.iter().map(Vec::as_slice), norm_weights))
        .collect()
}

/// Refinement phase: each centroid becomes the mean of its assigned
/// observations; clusters with no members come back as `None`.
pub fn refine(x: &[Vec<f64>], assignments: &[usize], k: usize) -> Vec<Option<Vec<f64>>> {
    let d = x.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (obs, &j) in x.iter().zip(assignments) {
        counts[j] += 1;
        for (slot, &v) in sums[j].iter_mut().zip(obs) {
            *slot += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(sum, count)| {
            (count > 0).then(|| sum.into_iter().map(|s| s / count as f64).collect())
        })
        .collect()
}

/// Objective `D = sum_i ||x_i - c_{j(i)}||^2_A`. Empty slots carry no
/// assigned observations and contribute nothing.
pub fn objective(
    x: &[Vec<f64>],
    centroids: &[Option<Vec<f64>>],
    assignments: &[usize],
    norm_weights: Option<&[f64]>,
) -> f64 {
    x.iter()
        .zip(assignments)
        .map(|(obs, &j)| {
            let c = centroids[j]
                .as_deref()
                .expect("assigned cluster cannot be empty");
            metric::weighted_sq_dist(obs, c, norm_weights)
        })
        .sum()
}

/// Full reference run from explicit initial centroids. `rng` must sit at the
/// same stream position as the protocol's generator after its initial draws,
/// so that empty-cluster repair draws interleave identically.
pub fn kmeans(
    x: &[Vec<f64>],
    initial_centroids: Vec<Vec<f64>>,
    config: &RunConfig,
    rng: &mut SplitMix64,
) -> OracleTrace {
    let k = config.k;
    assert_eq!(initial_centroids.len(), k);
    let weights = config.norm_weights.as_deref();

    let mut centroids: Vec<Option<Vec<f64>>> =
        initial_centroids.into_iter().map(Some).collect();
    let mut steps: Vec<KMeansState> = Vec::new();
    let mut prev_assignments: Option<Vec<usize>> = None;
    let mut prev_objective = f64::NAN;
    let mut exit_reason = ExitReason::MExhausted;

    for step in 1..=config.max_steps {
        // Repair slots left empty by the previous refinement, in slot order,
        // mirroring the leader's redraw during centroid propagation.
        for slot in centroids.iter_mut() {
            if slot.is_none() {
                *slot = Some(draw_centroid(rng, &config.init_low, &config.init_high));
            }
        }
        let finite: Vec<Vec<f64>> = centroids
            .iter()
            .map(|c| c.clone().expect("repaired above"))
            .collect();
        let assignments = assign(x, &finite, weights);
        let new_centroids = refine(x, &assignments, k);
        let d_value = objective(x, &new_centroids, &assignments, weights);
        steps.push(KMeansState {
            centroids: new_centroids.clone(),
            assignments: assignments.clone(),
            objective: d_value,
        });

        let exit = step >= 2
            && match config.exit_mode {
                ExitMode::C1 => prev_assignments.as_ref() == Some(&assignments),
                ExitMode::C2 => (d_value - prev_objective).abs() < config.delta_max,
                ExitMode::None => false,
            };
        centroids = new_centroids;
        prev_assignments = Some(assignments);
        prev_objective = d_value;
        if exit {
            exit_reason = match config.exit_mode {
                ExitMode::C1 => ExitReason::C1,
                ExitMode::C2 => ExitReason::C2,
                ExitMode::None => unreachable!(),
            };
            break;
        }
    }
    OracleTrace { steps, exit_reason }
}

/// Reference run that derives the initial centroids from the configured seed
/// exactly the way the protocol's leader does.
pub fn kmeans_seeded(x: &[Vec<f64>], config: &RunConfig) -> OracleTrace {
    let mut rng = SplitMix64::new(config.seed);
    let initial = draw_centroid_block(&mut rng, config.k, &config.init_low, &config.init_high);
    kmeans(x, initial, config, &mut rng)
}
