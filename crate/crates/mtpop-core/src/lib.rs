//! Two-layer population-coding model of visual motion direction, trained by
//! maximizing an asymptotic (Fisher-information) approximation of the Shannon
//! mutual information between random motion stimuli and Poisson spike counts.
//!
//! The pipeline:
//!
//! 1. [`stimulus`] — discrete direction grid, single/bidirectional stimuli,
//!    seeded training-set sampling.
//! 2. [`v1`] — von Mises direction tuning and the linear stimulus encoding.
//! 3. [`mt`] — sigmoid responses with squared divisive normalization, plus the
//!    analytic input Jacobian.
//! 4. [`info`] — Poisson Fisher information matrices, the regularized log-det
//!    information estimate, and a Monte Carlo validator.
//! 5. [`optim`] — the trainable objective (negative log-det plus an energy
//!    penalty), simplex-projected density optimization, and stochastic
//!    training of weights and thresholds.
//! 6. [`analysis`] — tuning-curve extraction and four-way shape
//!    classification of the trained cells.
//! 7. [`config`] / [`snapshot`] — run configuration files and exact-roundtrip
//!    model persistence, shared with the CLI.

pub mod analysis;
pub mod circ;
pub mod config;
pub mod density;
pub mod error;
pub mod info;
pub mod model;
pub mod mt;
pub mod optim;
pub mod runner;
pub mod snapshot;
pub mod stimulus;
pub mod util;
pub mod v1;
pub mod validate;

pub use analysis::{
    bidirectional_curve, classify_shape, population_summary, unidirectional_curve, CellReport,
    ClassifyThresholds, CurveKind, PopulationSummary, ShapeClass, ShapeKind, TuningCurve,
};
pub use config::RunConfig;
pub use density::{project_simplex, DensityVector};
pub use error::{Error, Result};
pub use info::{
    fisher_direction, fisher_from_parts, fisher_matrix, mc_fisher_validate,
    mc_fisher_validate_direction, mi_asymptotic, mi_asymptotic_in, FisherReport, FisherSpace,
    InfoConfig, InfoEstimate,
};
pub use model::Model;
pub use mt::{MTActivations, MTForward, MTParams};
pub use optim::{
    grad_q, kkt_residual, objective_q, optimize_density, train, DensityOptOptions, EncodedBatch,
    EncodedView, Gradients, QParts, TraceRow, TrainConfig, TrainOutcome, TrainTrace,
};
pub use runner::{run_training, run_training_with_hook, RunArtifacts};
pub use snapshot::{ModelSnapshot, Provenance};
pub use stimulus::{sample_training_set, DirectionGrid, Stimulus, StimulusBatch};
pub use v1::{direction_jacobian, von_mises_derivative, von_mises_response, V1Params};
pub use validate::{run_all, Level, SuiteResult, ValidationReport};
