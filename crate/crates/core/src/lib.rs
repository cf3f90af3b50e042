//! Probabilistic forwarding of MDS-coded packets over ad-hoc topologies.
//!
//! A source holding `k` message packets encodes them into `n >= k` coded
//! packets and broadcasts all of them; every other node rebroadcasts each
//! packet it hears for the first time with probability `p`. A node decodes
//! once it holds any `k` packets.
//!
//! - [`graph`]: topologies (grids and row-pruned grids, random geometric
//!   graphs, complete trees) and their JSON form.
//! - [`engine`]: one simulated trial, with quantile-coupled variants.
//! - [`estimator`]: Monte Carlo coverage and load, minimum forwarding
//!   probability search and redundancy sweeps.
//! - [`oracle`]: exact enumeration on small graphs.
//! - [`tree`]: exact and closed-form analysis on complete trees.

pub mod engine;
pub mod error;
pub mod estimator;
pub mod graph;
pub mod oracle;
pub mod tree;

pub use engine::{CodingConfig, ProtocolParams, RandomStream, TrialOutcome, UniformTable};
pub use error::{Error, Result};
pub use estimator::{Estimate, MinProbability, SearchConfig, SearchMode, SweepPoint};
pub use graph::{Graph, GridSpec, RggSpec, TreeSpec};
