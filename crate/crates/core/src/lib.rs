//! Hereditary cancer risk workbench: pedigree model, knowledge base and a
//! Mendelian peeling engine with genotype paring.
//!
//! The crate is organised around four modules:
//!
//! * [`kb`] loads and serves the versioned gene/cancer knowledge bundle.
//! * [`pedigree`] holds the fully linked family model, the builder
//!   operations, validation, loop breaking and the model input table.
//! * [`engine`] computes posterior carrier probabilities and future risks.
//! * [`report`] turns a run into CSV/JSON/SVG artifacts.

pub mod engine;
pub mod fixtures;
pub mod kb;
pub mod pedigree;
pub mod report;
mod types;

pub use engine::{
    prepare, run_model, run_model_with, run_table, run_table_with, EngineError, GenotypeState, ModelName, PenetranceMode, PosteriorMethod, RunResult, RunSettings,
    StateSpace,
};
pub use kb::{KbError, KnowledgeBase};
pub use pedigree::{
    ModelInputTable, Mutation, Pedigree, PedigreeError, ValidationReport,
};
pub use types::{IndividualId, MarkerStatus, Sex, SurgeryKind, TriState};
