//! Experiment orchestration: data preparation, defenses, training,
//! evaluation and reports.

mod config;
mod data;
mod report;
mod run;

pub use config::{ExperimentConfig, FileData, ModeChoice, Seeds, SynthData};
pub use data::{
    check_disjoint, defend, file_dataset, load_dataset, sessions, subsample, synth_corpus, synth_dataset, Dataset, GraphStats,
    SynthCorpus,
};
pub use report::{deviations, Confusion, LabelAccuracy, MetricsReport, SweepPoint, SweepReport, REPORT_VERSION};
pub use run::{
    decode_windows, report_for, run_experiment, score, session_length_curve, session_length_sweep, train_on,
    train_size_sweep, Scored,
};
