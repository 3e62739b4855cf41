//! Synthesis of semantic label maps for laryngeal endoscopy augmentation.
//!
//! Background label maps are decomposed into blocks and sub-blocks; dynamic
//! objects (pathologies, intubation tubes, surgical tools) are placed by
//! guessing contour pivots, connecting them through minimum-cost sub-block
//! paths, and filling the enclosed region.

pub mod grid;
pub mod metadata;
pub mod palette;
pub mod pipeline;
pub mod scene;
pub mod seed;
pub mod synth;
pub mod synthetic;
pub mod verify;

pub use grid::{Adjacency, BlockRef, CellGrid, GridError, GridGeometry, Rect, SemClass, SubBlockRef};
pub use palette::{ClassPalette, LabelImage, PaletteError};
pub use scene::{compile, parse_scene_spec, Diagnostic, GenerationPlan, ObjectSpec, SceneSpec};
pub use synth::{ObjectInstance, SearchMode, SynthConfig, SynthError};
pub use metadata::{emit_metadata, MetadataRecord};
pub use pipeline::{run_batch, BatchSummary, PipelineError, RunConfig};
pub use verify::{verify_output, VerificationReport, VerifyError};
