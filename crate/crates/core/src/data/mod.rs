//! Procedural clips, training samples, 2D pose ingestion, and record files.

pub mod ingest;
pub mod procedural;
pub mod records;
pub mod samples;

pub use ingest::{ingest_2d, moving_average, IngestConfig, IngestRecord};
pub use procedural::{gen_procedural, synth_dataset, LabeledMotion, MotionKind, ProceduralSpec};
pub use records::{read_jsonl, write_jsonl, LocalRecord, MotionRecord, MultiViewRecord};
pub use samples::{build_samples, SampleMode, Samples, SourceMotion, TrainingSample2D, TrainingSampleMV};
