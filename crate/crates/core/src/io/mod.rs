//! Scenario documents, CSV and SVG encodings and run persistence.

mod document;
mod store;
pub mod svg;
mod tables;

pub use document::{
    load_scenario, AblationSection, ConstraintSection, NetworkSection, OutputSection, PowerSection, ProfileKind,
    PropagationSection, ScenarioDocument, SolverSection, SweepSection, TrafficSection, SCHEMA_VERSION,
};
pub use store::{save_results, sha256_hex, Artifact, Manifest, ManifestEntry, RunInfo, MANIFEST_NAME};
pub use tables::{
    baseline_csv, channel_csv, comparison_csv, field_csv, gradient_csv, key_values, metrics_csv, num, read_columns,
    read_field_csv, surface_csv, trace_csv,
};
