//! Undirected network topologies.
//!
//! Vertices are dense 0-based indices; external agent identifiers live in the
//! dataset and are mapped through row order. A [`ClusterGraph`] is a filtered
//! view of a base [`Graph`] that keeps only edges between vertices sharing a
//! cluster choice, so the full topology stays available for the global
//! consensus phases while per-cluster consensus runs on the induced subgraph.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one vertex")]
    Empty,
    #[error("vertex {0} out of range for {1} vertices")]
    VertexOutOfRange(usize, usize),
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("point {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("negative unit-disk radius")]
    NegativeRadius,
    #[error("choices cover {got} vertices, graph has {expected}")]
    ChoiceLengthMismatch { got: usize, expected: usize },
}

/// Read access to an undirected topology: the base graph and its filtered
/// cluster views both implement this, so consensus routines run on either.
pub trait Topology {
    fn vertex_count(&self) -> usize;
    fn neighbors(&self, v: usize) -> &[usize];

    fn degree(&self, v: usize) -> usize {
        self.neighbors(v).len()
    }

    /// Number of undirected edges.
    fn edge_count(&self) -> usize {
        (0..self.vertex_count()).map(|v| self.degree(v)).sum::<usize>() / 2
    }
}

/// Undirected graph as per-vertex sorted neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph on `n` vertices from unordered edge pairs. Duplicate
    /// pairs collapse; self-loops and out-of-range endpoints are rejected.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut neighbors = vec![Vec::new(); n];
        for (i, j) in edges {
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            for v in [i, j] {
                if v >= n {
                    return Err(GraphError::VertexOutOfRange(v, n));
                }
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { neighbors })
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| i < j).map(move |&j| (i, j)))
    }

    /// Edge-list export, one sorted `i j` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (i, j) in self.edges() {
            out.push_str(&format!("{i} {j}\n"));
        }
        out
    }
}

impl Topology for Graph {
    fn vertex_count(&self) -> usize {
        self.neighbors.len()
    }

    fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }
}

/// Unit-disk graph: an edge joins two points at Euclidean distance strictly
/// below `rho`. Boundary equality is excluded.
pub fn unit_disk(positions: &[Vec<f64>], rho: f64) -> Result<Graph, GraphError> {
    if positions.is_empty() {
        return Err(GraphError::Empty);
    }
    if rho < 0.0 {
        return Err(GraphError::NegativeRadius);
    }
    let dim = positions[0].len();
    for (index, p) in positions.iter().enumerate() {
        if p.len() != dim {
            return Err(GraphError::DimensionMismatch {
                index,
                got: p.len(),
                expected: dim,
            });
        }
    }
    let n = positions.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let dist_sq: f64 = positions[i]
                .iter()
                .zip(&positions[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist_sq < rho * rho {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges)
}

/// Subgraph view keeping only edges whose endpoints share a cluster choice.
/// The base graph is borrowed, not copied.
#[derive(Debug)]
pub struct ClusterGraph<'a> {
    base: &'a Graph,
    kept: Vec<Vec<usize>>,
}

impl<'a> ClusterGraph<'a> {
    pub fn base(&self) -> &'a Graph {
        self.base
    }

    /// Kept edges as `(i, j)` with `i < j`.
    pub fn kept_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.kept
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| i < j).map(move |&j| (i, j)))
    }
}

impl Topology for ClusterGraph<'_> {
    fn vertex_count(&self) -> usize {
        self.base.vertex_count()
    }

    fn neighbors(&self, v: usize) -> &[usize] {
        &self.kept[v]
    }
}

/// Induces the cluster graph of `choices`: the spanning subgraph of `g` whose
/// edges join vertices with equal choice index.
pub fn induce_cluster_graph<'a>(
    g: &'a Graph,
    choices: &[usize],
) -> Result<ClusterGraph<'a>, GraphError> {
    if choices.len() != g.vertex_count() {
        return Err(GraphError::ChoiceLengthMismatch {
            got: choices.len(),
            expected: g.vertex_count(),
        });
    }
    let kept = (0..g.vertex_count())
        .map(|v| {
            g.neighbors(v)
                .iter()
                .copied()
                .filter(|&u| choices[u] == choices[v])
                .collect()
        })
        .collect();
    Ok(ClusterGraph { base: g, kept })
}

/// True iff a traversal from vertex 0 reaches every vertex.
pub fn is_connected<T: Topology + ?Sized>(g: &T) -> bool {
    connected_components(g).len() == 1
}

/// Connected components as a disjoint cover of all vertices. Each component
/// is sorted; components are ordered by smallest member.
pub fn connected_components<T: Topology + ?Sized>(g: &T) -> Vec<Vec<usize>> {
    let n = g.vertex_count();
    let mut seen = vec![false; n];
    let mut parts = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut part = vec![start];
        let mut queue = vec![start];
        seen[start] = true;
        while let Some(v) = queue.pop() {
            for &u in g.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    part.push(u);
                    queue.push(u);
                }
            }
        }
        part.sort_unstable();
        parts.push(part);
    }
    parts
}
