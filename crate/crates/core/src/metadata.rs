//! Per-image provenance records, stored as JSON next to each label image.

use serde::{Deserialize, Serialize};

use crate::grid::{Adjacency, GridGeometry, SemClass};
use crate::scene::{GenerationPlan, ObjectSpec};
use crate::synth::{ContourPivot, ObjectInstance, ObjectShape, SearchMode, SynthConfig};

pub const META_FORMAT: &str = "labelsynth-meta/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeometryRecord {
    pub width: usize,
    pub height: usize,
    pub block_dim: usize,
    pub sub_dim: usize,
}

impl From<GridGeometry> for GeometryRecord {
    fn from(g: GridGeometry) -> Self {
        GeometryRecord { width: g.width, height: g.height, block_dim: g.block_dim, sub_dim: g.sub_dim }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub mode: SearchMode,
    pub adjacency: Adjacency,
    pub column_penalty: bool,
    pub retries: usize,
    pub exact_limit: usize,
    pub node_budget: usize,
}

impl From<&SynthConfig> for SearchRecord {
    fn from(c: &SynthConfig) -> Self {
        SearchRecord {
            mode: c.mode,
            adjacency: c.adjacency,
            column_penalty: c.cost.column_penalty,
            retries: c.retries,
            exact_limit: c.exact_limit,
            node_budget: c.node_budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeRecord {
    Contour {
        pivots: Vec<ContourPivot>,
        cyclic: bool,
        /// `[idb, idsb]` pairs.
        selected: Vec<[usize; 2]>,
        cost: u64,
        pair_costs: Vec<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        row_limit: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        extension: Option<[usize; 2]>,
    },
    Rod {
        entry: [usize; 2],
        tip: [usize; 2],
        half_width: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub class: SemClass,
    pub placement: Vec<SemClass>,
    pub task_index: usize,
    pub seed: u64,
    pub attempt: usize,
    pub chosen_block: usize,
    pub center: [usize; 2],
    pub filled_cells: usize,
    pub shape: ShapeRecord,
    pub params: ObjectSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub format: String,
    /// File name of the label image this record describes.
    pub image: String,
    /// File name of the background the objects were placed on.
    pub background: String,
    /// SHA-256 of the background file bytes.
    pub background_sha256: String,
    pub scene_digest: String,
    pub group: Option<u8>,
    pub expected_classes: Vec<SemClass>,
    pub master_seed: u64,
    pub image_seed: u64,
    pub geometry: GeometryRecord,
    pub search: SearchRecord,
    pub objects: Vec<ObjectRecord>,
}

/// Image-level facts that are not part of the generation plan.
#[derive(Debug, Clone)]
pub struct ImageContext<'a> {
    pub image: &'a str,
    pub background: &'a str,
    pub background_sha256: &'a str,
    pub master_seed: u64,
    pub expected_classes: Vec<SemClass>,
    pub geometry: GridGeometry,
    pub config: &'a SynthConfig,
}

/// Builds the record for one image. `instances` are in plan-task order.
pub fn emit_metadata(ctx: &ImageContext<'_>, plan: &GenerationPlan, instances: &[ObjectInstance]) -> MetadataRecord {
    let objects = plan
        .tasks
        .iter()
        .zip(instances)
        .map(|(task, inst)| ObjectRecord {
            class: inst.cls,
            placement: inst.placement.clone(),
            task_index: task.index,
            seed: inst.seed,
            attempt: inst.attempt,
            chosen_block: inst.chosen_block.idb,
            center: [inst.center.0, inst.center.1],
            filled_cells: inst.filled_cells.len(),
            shape: shape_record(&inst.shape),
            params: task.spec.clone(),
        })
        .collect();
    MetadataRecord {
        format: META_FORMAT.to_string(),
        image: ctx.image.to_string(),
        background: ctx.background.to_string(),
        background_sha256: ctx.background_sha256.to_string(),
        scene_digest: plan.spec_digest.clone(),
        group: plan.group,
        expected_classes: ctx.expected_classes.clone(),
        master_seed: ctx.master_seed,
        image_seed: plan.master_seed,
        geometry: ctx.geometry.into(),
        search: ctx.config.into(),
        objects,
    }
}

fn shape_record(shape: &ObjectShape) -> ShapeRecord {
    match shape {
        ObjectShape::Contour { pivots, cyclic, selection, row_limit, extension } => ShapeRecord::Contour {
            pivots: pivots.clone(),
            cyclic: *cyclic,
            selected: selection.chosen.iter().map(|s| [s.idb, s.idsb]).collect(),
            cost: selection.cost,
            pair_costs: selection.pair_costs.clone(),
            row_limit: *row_limit,
            extension: extension.map(|(a, b)| [a, b]),
        },
        ObjectShape::Rod { entry, tip, half_width } => ShapeRecord::Rod {
            entry: [entry.0, entry.1],
            tip: [tip.0, tip.1],
            half_width: *half_width,
        },
    }
}

impl MetadataRecord {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metadata is always serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
