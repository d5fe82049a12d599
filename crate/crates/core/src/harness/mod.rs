//! Experiment orchestration: uniform runs, reference solutions, EOC tables,
//! sensitivity sweeps, adaptive reports and output files.

pub mod adaptive_report;
pub mod compare;
pub mod eoc;
pub mod observables;
pub mod output;
pub mod reference;
pub mod sensitivity;
pub mod spectral;
pub mod sweep;
pub mod tridiag;
pub mod uniform;

pub use adaptive_report::{run_adaptive_experiment, AdaptiveParams, AdaptiveReport, MatchedUniform};
pub use eoc::eoc;
pub use output::{OutputDir, PlotDescription, SummaryRow};
pub use observables::{run_observables, FineReference, ObservableReport};
pub use reference::{Reference, ReferenceParams};
pub use sensitivity::{run_sensitivity, SensitivitySweep, SweepKind};
pub use sweep::{preset, run_preset, run_table, EocTable, SweepRow, TablePreset};
pub use uniform::{run_uniform, run_uniform_with, TrajectoryFrame, UniformParams, UniformRun};
