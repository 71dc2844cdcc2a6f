//! Growing echo state reservoirs with developmental graph cellular automata.
//!
//! The pipeline: a genome (an action MLP plus a state SLP) repeatedly rewrites
//! a small directed state graph, the grown graph is converted into a reservoir
//! with signed unit weights, and a linear readout trained by Bayesian ridge
//! regression scores the reservoir on NARMA benchmarks or on reservoir-quality
//! metrics. A microbial GA evolves the genomes; the experiment layer runs
//! independent evolution batches and the statistics to compare them against
//! random control reservoirs.

pub mod classify;
pub mod dgca;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod mga;
pub mod narma;
pub mod reservoir;
pub mod ridge;
pub mod seeds;
pub mod stats;

pub use classify::{classify, Classification, StructureClass};
pub use dgca::{grow, Genome, GrowthConfig, GrowthResult};
pub use experiment::{control_esn, run_experiment, ExperimentConfig, ExperimentRecord};
pub use graph::{NodeId, StateGraph};
pub use metrics::{metric_fitness, metric_suite, spectral_radius, MetricConfig, MetricKind, MetricSuite};
pub use mga::{mga_run, FitnessSpec, MgaConfig, MgaRunResult};
pub use narma::{narma_series, NarmaParams};
pub use reservoir::{build_reservoir, evaluate_task, EvalConfig, ReservoirSystem};
pub use stats::{mann_whitney_u, summarize, Alternative};
