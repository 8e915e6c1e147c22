//! Instance generators, the end-to-end pipeline driver, and the
//! experiment runner.

pub mod experiment;
pub mod gen;
pub mod pipeline;

pub use experiment::{run_experiment, CellSummary, ExperimentCell, ExperimentMatrix, ExperimentSummary};
pub use gen::{generate_h, generate_host, GeneratedH, HFamily, HostReport, HostSpec, PlantedHost, ReducedPattern, SepWitness, SubgraphSpec};
pub use pipeline::{run_pipeline, run_pipeline_degenerate, ExperimentRecord, PipelineConfig, StageRecord, StageStatus};
