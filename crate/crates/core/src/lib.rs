pub mod geometry;
pub mod ingest;
pub mod matching;
pub mod metrics;
pub mod regression;
pub mod synth;
pub mod table;
