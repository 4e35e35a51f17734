//! The synthetic oracle experiment: oracle, datasets, perturbation traces,
//! exposure-bias measurement, and the one-dimensional Gaussian toy.

mod data;
mod exacc;
mod experiment;
mod oracle;
mod perturb;
mod toy;

pub use data::{
    read_dataset, sample_terminated, split_seed, synthesize, write_dataset, DatasetManifest, Datasets,
    SplitInfo, DATASET_FORMAT_VERSION,
};
pub use exacc::{exacc_err, ExAccConfig, ExAccReport};
pub use experiment::{
    evaluate, learner_exacc, learner_exacc_at, learner_samples, learner_slope, learner_traces, make_datasets, prepare, run_learner,
    train_learner, DatasetSizes, ExperimentConfig, LearnerMetrics, LearnerRun,
};
pub use oracle::{build_oracle, corpus_vocabulary, Oracle, OracleMode, OracleSpec};
pub use perturb::{
    build_traces, error_map, max_overestimation_by_length, max_overestimation_points, overestimation_slope,
    perturb, read_traces_csv, write_traces_csv, ErrorCell, LengthRow, PerturbKind, PerturbationTrace, TraceRow,
    DEFAULT_BUCKETS,
};
pub use toy::{
    normal_pdf, toy_gaussian_fit, void_interval, DescentSpec, GaussianMixture, GridSpec, Quadrature, ToyFit,
    ToyObjective,
};
