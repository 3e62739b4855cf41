//! Guess-and-check object synthesis.
//!
//! Every contour object follows the same pipeline: pick a host block, pick a
//! center inside it, guess one contour pivot per direction around the center,
//! connect consecutive pivots with minimum-cost connected sets of sub-blocks,
//! and finally recolor the selected sub-blocks plus the region they enclose.
//! Surgical tools are modelled separately as thick rods entering from a border.

mod fill;
mod generate;
mod path;
mod pivots;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Adjacency, BlockRef, SemClass, SubBlockRef};

pub use fill::{rasterize_and_fill, FillRequest};
pub use generate::{
    generate_intubation, generate_object, generate_pathology, generate_tool, paint_rod, precheck, rod_segment,
};
pub use path::{
    bounding_rect, brute_force_min_cost, connect_pair, connect_pivots, guessable_region, path_cost, PairSelection,
    PathProblem, ORACLE_LIMIT,
};
pub use pivots::{choose_block, choose_center, direction_steps, guess_contour_pivots, LineKind, PivotRequest};

/// Pipeline stage, used to attribute failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Block,
    Center,
    Pivots,
    Path,
    Fill,
    Rod,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Block => "block",
            Stage::Center => "center",
            Stage::Pivots => "pivots",
            Stage::Path => "path",
            Stage::Fill => "fill",
            Stage::Rod => "rod",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("{stage}: {reason}")]
    Infeasible { stage: Stage, reason: String },
    #[error("contour around ({x}, {y}) is not closed")]
    OpenContour { x: usize, y: usize },
    #[error("oracle region has {size} sub-blocks; the limit is {limit}")]
    OracleBound { size: usize, limit: usize },
    #[error("{cls} generation failed after {attempts} attempt(s); failures by stage: {}", fmt_failures(.failures))]
    GenerationFailed { cls: SemClass, attempts: usize, failures: BTreeMap<Stage, usize>, last: String },
}

fn fmt_failures(f: &BTreeMap<Stage, usize>) -> String {
    f.iter().map(|(s, n)| format!("{s}={n}")).collect::<Vec<_>>().join(", ")
}

impl SynthError {
    pub(crate) fn infeasible(stage: Stage, reason: impl Into<String>) -> Self {
        SynthError::Infeasible { stage, reason: reason.into() }
    }

    /// Stage a failure is attributed to.
    pub fn stage(&self) -> Stage {
        match self {
            SynthError::Infeasible { stage, .. } => *stage,
            SynthError::OpenContour { .. } => Stage::Fill,
            SynthError::OracleBound { .. } => Stage::Path,
            SynthError::GenerationFailed { failures, .. } => {
                failures.iter().max_by_key(|(_, n)| **n).map(|(s, _)| *s).unwrap_or(Stage::Block)
            }
        }
    }
}

/// How pivot pairs are connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Exact search on small regions, budgeted branch-and-bound on larger ones.
    #[default]
    Heuristic,
    /// Exact search regardless of region size.
    Exhaustive,
}

/// Soft-cost configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostModel {
    /// Also penalize non-adjacent pairs sharing a column band.
    pub column_penalty: bool,
}

/// Engine-wide knobs that are not part of a scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub mode: SearchMode,
    pub adjacency: Adjacency,
    pub cost: CostModel,
    /// Attempts per object before giving up.
    pub retries: usize,
    /// Regions up to this many sub-blocks are always searched exactly.
    pub exact_limit: usize,
    /// Node budget of the heuristic search on larger regions.
    pub node_budget: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            mode: SearchMode::Heuristic,
            adjacency: Adjacency::Eight,
            cost: CostModel::default(),
            retries: 32,
            exact_limit: 20,
            node_budget: 50_000,
        }
    }
}

/// One guessed contour point around a center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContourPivot {
    /// Counterclockwise index starting at east.
    pub idfp: usize,
    pub x: usize,
    pub y: usize,
    pub line_kind: LineKind,
    /// Chebyshev distance to the center.
    pub distance: usize,
}

/// Union of the per-pair sub-block paths of a contour.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PathSelection {
    pub chosen: Vec<SubBlockRef>,
    /// Soft cost of the union.
    pub cost: u64,
    /// Soft cost of each pair's own path, in pair order.
    pub pair_costs: Vec<u64>,
}

/// Shape-specific part of a generated object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectShape {
    Contour {
        pivots: Vec<ContourPivot>,
        /// Whether the last pivot connects back to the first.
        cyclic: bool,
        selection: PathSelection,
        /// Interior flooding stops below this row; cells underneath are
        /// produced by the downward extension instead.
        row_limit: Option<usize>,
        /// Inclusive column span of the downward extension.
        extension: Option<(usize, usize)>,
    },
    Rod {
        entry: (usize, usize),
        tip: (usize, usize),
        half_width: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectInstance {
    pub cls: SemClass,
    pub placement: Vec<SemClass>,
    pub chosen_block: BlockRef,
    pub center: (usize, usize),
    pub shape: ObjectShape,
    /// Cells recolored by this object, sorted.
    pub filled_cells: Vec<(usize, usize)>,
    pub seed: u64,
    /// Zero-based attempt that succeeded.
    pub attempt: usize,
}
