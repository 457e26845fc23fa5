//! Distance and assignment rules shared by the distributed protocol and the
//! centralized oracle. Keeping a single implementation means an equivalence
//! failure points at the protocol, not at drifting conventions.

/// Squared Euclidean distance, optionally weighted by a diagonal matrix `A`:
/// `||x - c||_A^2 = sum_i (a_i * (x_i - c_i))^2`.
pub fn weighted_sq_dist(x: &[f64], c: &[f64], weights: Option<&[f64]>) -> f64 {
    debug_assert_eq!(x.len(), c.len());
    match weights {
        None => x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum(),
        Some(w) => {
            debug_assert_eq!(w.len(), x.len());
            x.iter()
                .zip(c)
                .zip(w)
                .map(|((a, b), wi)| {
                    let e = wi * (a - b);
                    e * e
                })
                .sum()
        }
    }
}

/// Index of the nearest centroid under the weighted squared norm.
/// Ties break to the smallest index.
pub fn nearest_centroid<'a>(
    x: &[f64],
    centroids: impl Iterator<Item = &'a [f64]>,
    weights: Option<&[f64]>,
) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (j, c) in centroids.enumerate() {
        let dist = weighted_sq_dist(x, c, weights);
        if dist < best_dist {
            best_dist = dist;
            best = j;
        }
    }
    best
}
