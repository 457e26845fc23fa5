//! Distributed k-means for synchronous multi-agent networks.
//!
//! Each agent of a connected, undirected network holds one observation and
//! cooperates with its one-hop neighbors to compute the same clustering a
//! centralized k-means would produce from the pooled data. The building
//! blocks are max-consensus, the doubly stochastic averaging iteration, and
//! finite-time average consensus obtained from per-agent minimal polynomials
//! of the weight matrix.
//!
//! Crate layout:
//!
//! - [`graph`]: undirected topologies, unit-disk construction, cluster
//!   subgraphs, connectivity queries.
//! - [`consensus`]: max-consensus, the linear averaging iteration, finite-time
//!   average consensus setup/execution, and network-size estimation.
//! - [`dkmeans`]: the per-agent protocol state machine and its synchronous
//!   round driver.
//! - [`oracle`]: the centralized k-means reference the protocol is checked
//!   against, sharing initialization, tie-breaking, and exit logic.
//! - [`sim`]: dataset generators, the experiment harness, and round/message
//!   accounting traces.
//! - [`rng`]: the seedable generator all random draws flow through.

pub mod consensus;
pub mod dkmeans;
pub mod graph;
pub mod metric;
pub mod oracle;
pub mod rng;
pub mod sim;
