//! Synthetic interval-based event stream generation.
//!
//! The crate turns a handful of generator parameters into an event stream
//! whose measured characteristics (temporal, long-term and non-linear
//! dependency, out-of-order arrivals, nested sub-processes) can be steered
//! toward user-given targets:
//!
//! ```text
//! TreeGenParams > generate_tree > sample_log > MarkovChain > simulate > Stream
//!                                                                        |
//!        optimize <------ feature_distance <------ extract <------ tumble
//! ```
//!
//! Modules:
//! - [`stream`]: events, arrival-ordered streams, interval pairing, concurrency.
//! - [`tree`]: random process trees and trace sampling.
//! - [`markov`]: order-k Markov chains fitted to sampled traces.
//! - [`sim`]: discrete-event simulation, disorder, nesting and drift.
//! - [`features`]: tumbling windows and the per-window feature metrics.
//! - [`optimizer`]: Bayesian optimization over the generator parameters.
//! - [`analysis`]: PCA projection, convex hulls and coverage comparison.
//! - [`io`]: file formats, static-log streamification and event sinks.

pub mod analysis;
pub mod error;
pub mod features;
pub mod io;
pub mod markov;
pub mod optimizer;
pub mod rng;
pub mod sim;
pub mod stream;
pub mod tree;

pub use error::{Error, Result};
pub use features::{FeatureId, FeatureVector, Grouping, WindowConfig};
pub use markov::MarkovChain;
pub use sim::{SimulationParams, StreamDefinition};
pub use stream::{Event, Lifecycle, Stream};
pub use tree::{ProcessTree, TreeGenParams};
