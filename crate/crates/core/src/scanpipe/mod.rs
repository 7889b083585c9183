//! Grid-scan pipeline: ingest per-position sweeps, fit and invert each
//! pixel in parallel, aggregate, and write maps. Also hosts the CLI.

pub mod cli;
pub mod config;
pub mod emit;
pub mod ingest;
pub mod process;
pub mod synth;

pub use config::{GridSteps, PipelineConfig, Region};
pub use emit::{emit, read_field_map, read_freq_map, EmitOptions, FIELD_HEADER};
pub use ingest::{grid_report, ingest, write_scan_csv, GridReport, Ingested, ScanRecord};
pub use process::{
    central_stats, process, process_record, CentralStats, FailureReason, FieldMap, FieldRow, MapSummary, Pixel,
};
pub use synth::{synth_scan, FieldProfile, SynthConfig, SynthPixel};
