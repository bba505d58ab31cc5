//! Simulation and estimation toolkit for mixture self-interacting random
//! walks `M(d_1, ..., d_m)` on `Z^d`.
//!
//! On the `i`-th visit to a site only the `i`-th block of coordinates takes a
//! simple random walk step (the last block from visit `m` on). The crate
//! provides the step engine ([`walk`]), exact small-horizon laws
//! ([`enumeration`]), planar simple random walk references ([`srw`]),
//! Monte Carlo estimators ([`estimators`]) and a configuration-driven
//! experiment runner ([`experiment`]).

pub mod enumeration;
pub mod environment;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod lattice;
pub mod law;
pub mod replicas;
pub mod rng;
pub mod srw;
pub mod stats;
pub mod strategy;
pub mod walk;

pub use enumeration::{
    enumerate_paths, exact_distribution, exact_reconstruction_distribution, exact_return_window,
    exact_window_probability, ExactDistribution,
};
pub use environment::Environment;
pub use error::{Error, Result};
pub use lattice::{Partition, Site, MAX_DIM};
pub use law::StepLaw;
pub use replicas::Replicas;
pub use stats::{fit_scaling, Estimate, ScalingFit};
pub use strategy::StrategyKind;
pub use walk::{component_for_visit, BoundingBox, Recording, RunSummary, Strategy, WalkState};
pub use experiment::{
    merge_results, run_experiment, simulate, ExperimentConfig, ExperimentKind, Grid, Report, SrwMeasure,
};
