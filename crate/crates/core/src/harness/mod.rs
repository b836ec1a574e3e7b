//! Synthetic data, experiment runners, file formats.

pub mod config;
pub mod design;
pub mod experiments;
pub mod io;

pub use config::{AuditConfig, Estimator, ExperimentConfig, PhaseConfig, PhasePreset, TauRule};
pub use design::{generate_sample, plan_noise, DesignMode, DesignModel, NoisePlan, SampleGenerator, XiKind};
pub use experiments::{
    population_transport_stability, run_bound_audit, run_diagnose, run_envelope, run_phase_simulation,
    run_rate_experiment, AuditRecord, DiagnoseRecord, EnvelopeRecord, PhaseRecord, RateRecord,
};
pub use io::{emit_csv, emit_json_summary, ingest_matrix_file, read_csv, write_matrix_file, CsvRecord};
