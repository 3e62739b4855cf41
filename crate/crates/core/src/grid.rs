//! Label grids and their block / sub-block partitioning.
//!
//! A [`CellGrid`] is a dense row-major matrix of [`SemClass`] labels. Cells are
//! addressed as `(x, y)` with `x` the row (0 at the top) and `y` the column.
//! The grid is tiled by square blocks, and each block by square sub-blocks.
//! Block and sub-block ids are assigned row-major, so
//!
//! ```text
//! idb  = (x / block_dim) * (width / block_dim) + (y / block_dim)
//! idsb = ((x % block_dim) / sub_dim) * (block_dim / sub_dim) + (y % block_dim) / sub_dim
//! ```

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("cell ({x}, {y}) is outside the {height}x{width} grid")]
    CellOutOfBounds { x: usize, y: usize, width: usize, height: usize },
    #[error("block id {idb} out of range (grid has {blocks} blocks)")]
    BlockOutOfBounds { idb: usize, blocks: usize },
    #[error("sub-block id {idsb} out of range (blocks have {subs} sub-blocks)")]
    SubBlockOutOfBounds { idsb: usize, subs: usize },
    #[error("cell buffer holds {got} cells, geometry needs {expected}")]
    CellCount { got: usize, expected: usize },
}

/// The seven semantic classes of the laryngeal label space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemClass {
    Void,
    VocalFolds,
    OtherTissue,
    GlottalSpace,
    Pathology,
    SurgicalTool,
    Intubation,
}

impl SemClass {
    pub const ALL: [SemClass; 7] = [
        SemClass::Void,
        SemClass::VocalFolds,
        SemClass::OtherTissue,
        SemClass::GlottalSpace,
        SemClass::Pathology,
        SemClass::SurgicalTool,
        SemClass::Intubation,
    ];

    /// Classes that are removed from source labels and generated from scratch.
    pub const DYNAMIC: [SemClass; 3] =
        [SemClass::Pathology, SemClass::Intubation, SemClass::SurgicalTool];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<SemClass> {
        SemClass::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SemClass::Void => "void",
            SemClass::VocalFolds => "vocal_folds",
            SemClass::OtherTissue => "other_tissue",
            SemClass::GlottalSpace => "glottal_space",
            SemClass::Pathology => "pathology",
            SemClass::SurgicalTool => "surgical_tool",
            SemClass::Intubation => "intubation",
        }
    }

    pub fn from_name(name: &str) -> Option<SemClass> {
        SemClass::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn is_dynamic(self) -> bool {
        SemClass::DYNAMIC.contains(&self)
    }
}

impl fmt::Display for SemClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Neighborhood used for sub-block adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjacency {
    /// Edge-sharing neighbors only.
    Four,
    /// Edge- or corner-sharing neighbors.
    #[default]
    Eight,
}

/// Grid dimensions and the block / sub-block tiling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub block_dim: usize,
    pub sub_dim: usize,
}

impl Default for GridGeometry {
    fn default() -> Self {
        GridGeometry { width: 512, height: 512, block_dim: 64, sub_dim: 8 }
    }
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, block_dim: usize, sub_dim: usize) -> Result<Self, GridError> {
        if width == 0 || height == 0 || block_dim == 0 || sub_dim == 0 {
            return Err(GridError::Geometry("all dimensions must be positive".into()));
        }
        if !width.is_multiple_of(block_dim) || !height.is_multiple_of(block_dim) {
            return Err(GridError::Geometry(format!(
                "block dimension {block_dim} does not divide {height}x{width}"
            )));
        }
        if !block_dim.is_multiple_of(sub_dim) {
            return Err(GridError::Geometry(format!(
                "sub-block dimension {sub_dim} does not divide block dimension {block_dim}"
            )));
        }
        Ok(GridGeometry { width, height, block_dim, sub_dim })
    }

    /// Blocks per grid row.
    pub fn blocks_across(&self) -> usize {
        self.width / self.block_dim
    }

    pub fn blocks_down(&self) -> usize {
        self.height / self.block_dim
    }

    pub fn block_count(&self) -> usize {
        self.blocks_across() * self.blocks_down()
    }

    /// Sub-blocks along one side of a block.
    pub fn subs_per_side(&self) -> usize {
        self.block_dim / self.sub_dim
    }

    pub fn subs_per_block(&self) -> usize {
        self.subs_per_side() * self.subs_per_side()
    }

    /// Sub-blocks per grid row / column, across all blocks.
    pub fn sub_cols(&self) -> usize {
        self.width / self.sub_dim
    }

    pub fn sub_rows(&self) -> usize {
        self.height / self.sub_dim
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x < self.height && y < self.width
    }

    pub fn contains_signed(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.height && (y as usize) < self.width
    }

    pub fn check_block(&self, b: BlockRef) -> Result<(), GridError> {
        if b.idb >= self.block_count() {
            return Err(GridError::BlockOutOfBounds { idb: b.idb, blocks: self.block_count() });
        }
        Ok(())
    }

    pub fn check_sub(&self, s: SubBlockRef) -> Result<(), GridError> {
        self.check_block(s.block())?;
        if s.idsb >= self.subs_per_block() {
            return Err(GridError::SubBlockOutOfBounds { idsb: s.idsb, subs: self.subs_per_block() });
        }
        Ok(())
    }

    /// Cell rectangle covered by a block.
    pub fn block_rect(&self, b: BlockRef) -> Rect {
        let row = b.idb / self.blocks_across();
        let col = b.idb % self.blocks_across();
        let x0 = row * self.block_dim;
        let y0 = col * self.block_dim;
        Rect::new(x0, y0, x0 + self.block_dim - 1, y0 + self.block_dim - 1)
    }

    /// Global (row, col) position of a sub-block in the grid-wide sub-block lattice.
    pub fn sub_position(&self, s: SubBlockRef) -> (usize, usize) {
        let per = self.subs_per_side();
        let brow = s.idb / self.blocks_across();
        let bcol = s.idb % self.blocks_across();
        (brow * per + s.idsb / per, bcol * per + s.idsb % per)
    }

    /// Inverse of [`GridGeometry::sub_position`]. Caller guarantees the position is in range.
    pub fn sub_at(&self, row: usize, col: usize) -> SubBlockRef {
        let per = self.subs_per_side();
        let idb = (row / per) * self.blocks_across() + col / per;
        let idsb = (row % per) * per + col % per;
        SubBlockRef { idb, idsb }
    }

    /// Cell rectangle covered by a sub-block.
    pub fn sub_rect(&self, s: SubBlockRef) -> Rect {
        let (r, c) = self.sub_position(s);
        let x0 = r * self.sub_dim;
        let y0 = c * self.sub_dim;
        Rect::new(x0, y0, x0 + self.sub_dim - 1, y0 + self.sub_dim - 1)
    }

    /// Sub-block containing a cell. Caller guarantees the cell is in range.
    pub fn sub_of(&self, x: usize, y: usize) -> SubBlockRef {
        self.sub_at(x / self.sub_dim, y / self.sub_dim)
    }

    pub fn block_of(&self, x: usize, y: usize) -> BlockRef {
        BlockRef { idb: (x / self.block_dim) * self.blocks_across() + y / self.block_dim }
    }

    /// Every valid sub-block, in ascending (idb, idsb) order.
    pub fn all_subs(&self) -> impl Iterator<Item = SubBlockRef> + '_ {
        (0..self.block_count())
            .flat_map(move |idb| (0..self.subs_per_block()).map(move |idsb| SubBlockRef { idb, idsb }))
    }

    /// Sub-blocks of one block, in ascending idsb order.
    pub fn subs_in_block(&self, b: BlockRef) -> impl Iterator<Item = SubBlockRef> {
        let idb = b.idb;
        (0..self.subs_per_block()).map(move |idsb| SubBlockRef { idb, idsb })
    }

    pub fn are_adjacent(&self, a: SubBlockRef, b: SubBlockRef, adjacency: Adjacency) -> bool {
        let (ar, ac) = self.sub_position(a);
        let (br, bc) = self.sub_position(b);
        let dr = ar.abs_diff(br);
        let dc = ac.abs_diff(bc);
        match adjacency {
            Adjacency::Eight => dr.max(dc) == 1,
            Adjacency::Four => dr + dc == 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockRef {
    pub idb: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubBlockRef {
    pub idb: usize,
    pub idsb: usize,
}

impl SubBlockRef {
    pub fn new(idb: usize, idsb: usize) -> Self {
        SubBlockRef { idb, idsb }
    }

    pub fn block(self) -> BlockRef {
        BlockRef { idb: self.idb }
    }
}

impl fmt::Display for SubBlockRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.idb, self.idsb)
    }
}

/// Inclusive axis-aligned cell rectangle: rows `x0..=x1`, columns `y0..=y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        debug_assert!(x0 <= x1 && y0 <= y1);
        Rect { x0, y0, x1, y1 }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x0 <= other.x1 && other.x0 <= self.x1 && self.y0 <= other.y1 && other.y0 <= self.y1
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        if !self.intersects(other) {
            return None;
        }
        Some(Rect::new(
            self.x0.max(other.x0),
            self.y0.max(other.y0),
            self.x1.min(other.x1),
            self.y1.min(other.y1),
        ))
    }

    pub fn rows(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn cols(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.x0..=self.x1).flat_map(move |x| (self.y0..=self.y1).map(move |y| (x, y)))
    }
}

/// Dense matrix of class labels over a [`GridGeometry`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellGrid {
    geometry: GridGeometry,
    cells: Vec<SemClass>,
}

impl CellGrid {
    pub fn filled(geometry: GridGeometry, cls: SemClass) -> Self {
        CellGrid { geometry, cells: vec![cls; geometry.width * geometry.height] }
    }

    pub fn from_cells(geometry: GridGeometry, cells: Vec<SemClass>) -> Result<Self, GridError> {
        let expected = geometry.width * geometry.height;
        if cells.len() != expected {
            return Err(GridError::CellCount { got: cells.len(), expected });
        }
        Ok(CellGrid { geometry, cells })
    }

    /// Builds a grid by evaluating `f(x, y)` for every cell.
    pub fn from_fn(geometry: GridGeometry, mut f: impl FnMut(usize, usize) -> SemClass) -> Self {
        let mut cells = Vec::with_capacity(geometry.width * geometry.height);
        for x in 0..geometry.height {
            for y in 0..geometry.width {
                cells.push(f(x, y));
            }
        }
        CellGrid { geometry, cells }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn cells(&self) -> &[SemClass] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> SemClass {
        self.cells[x * self.geometry.width + y]
    }

    pub fn try_get(&self, x: usize, y: usize) -> Option<SemClass> {
        self.geometry.contains(x, y).then(|| self.get(x, y))
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, cls: SemClass) {
        let w = self.geometry.width;
        self.cells[x * w + y] = cls;
    }

    /// True when every cell of the sub-block holds `cls`.
    pub fn sub_is_pure(&self, s: SubBlockRef, cls: SemClass) -> bool {
        self.geometry.sub_rect(s).cells().all(|(x, y)| self.get(x, y) == cls)
    }

    /// Number of cells with class `cls` inside a rectangle.
    pub fn count_in(&self, rect: &Rect, cls: SemClass) -> usize {
        rect.cells().filter(|&(x, y)| self.get(x, y) == cls).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), SemClass)> + '_ {
        let w = self.geometry.width;
        self.cells.iter().enumerate().map(move |(i, &c)| ((i / w, i % w), c))
    }
}

/// Maps a cell to the block and sub-block containing it.
pub fn cell_to_refs(g: &GridGeometry, x: usize, y: usize) -> Result<(BlockRef, SubBlockRef), GridError> {
    if !g.contains(x, y) {
        return Err(GridError::CellOutOfBounds { x, y, width: g.width, height: g.height });
    }
    let idb = (x / g.block_dim) * g.blocks_across() + y / g.block_dim;
    let lx = x % g.block_dim;
    let ly = y % g.block_dim;
    let idsb = (lx / g.sub_dim) * g.subs_per_side() + ly / g.sub_dim;
    Ok((BlockRef { idb }, SubBlockRef { idb, idsb }))
}

/// All cells of a sub-block, row-major.
pub fn subblock_cells(g: &GridGeometry, s: SubBlockRef) -> Result<Vec<(usize, usize)>, GridError> {
    g.check_sub(s)?;
    Ok(g.sub_rect(s).cells().collect())
}

/// Sub-blocks touching `s` under the given neighborhood, across block boundaries.
pub fn adjacent_subblocks(
    g: &GridGeometry,
    s: SubBlockRef,
    adjacency: Adjacency,
) -> Result<BTreeSet<SubBlockRef>, GridError> {
    g.check_sub(s)?;
    Ok(neighbors(g, s, adjacency).collect())
}

/// Unchecked neighbor iterator used by the search code.
pub(crate) fn neighbors(
    g: &GridGeometry,
    s: SubBlockRef,
    adjacency: Adjacency,
) -> impl Iterator<Item = SubBlockRef> + '_ {
    let (r, c) = g.sub_position(s);
    let (rows, cols) = (g.sub_rows() as i64, g.sub_cols() as i64);
    const OFFSETS: [(i64, i64); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
    OFFSETS.iter().filter_map(move |&(dr, dc)| {
        if adjacency == Adjacency::Four && dr != 0 && dc != 0 {
            return None;
        }
        let nr = r as i64 + dr;
        let nc = c as i64 + dc;
        if nr < 0 || nc < 0 || nr >= rows || nc >= cols {
            return None;
        }
        Some(g.sub_at(nr as usize, nc as usize))
    })
}

/// Blocks whose share of `cls` cells is at least `min_fraction`, ascending by id.
pub fn eligible_blocks(grid: &CellGrid, cls: SemClass, min_fraction: f64) -> Vec<BlockRef> {
    let g = grid.geometry();
    let area = (g.block_dim * g.block_dim) as f64;
    (0..g.block_count())
        .map(|idb| BlockRef { idb })
        .filter(|&b| {
            let n = grid.count_in(&g.block_rect(b), cls) as f64;
            // compare as counts to avoid rounding at fraction 1.0
            n >= (min_fraction * area) - 1e-9
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GridGeometry {
        GridGeometry::new(16, 16, 8, 2).unwrap()
    }

    #[test]
    fn geometry_rejects_bad_tiling() {
        assert!(GridGeometry::new(512, 512, 60, 8).is_err());
        assert!(GridGeometry::new(512, 512, 64, 7).is_err());
        assert!(GridGeometry::new(0, 512, 64, 8).is_err());
        assert!(GridGeometry::new(512, 256, 64, 8).is_ok());
    }

    #[test]
    fn cell_refs_examples() {
        let g = GridGeometry::default();
        assert_eq!(cell_to_refs(&g, 0, 0).unwrap(), (BlockRef { idb: 0 }, SubBlockRef::new(0, 0)));
        assert_eq!(cell_to_refs(&g, 511, 511).unwrap(), (BlockRef { idb: 63 }, SubBlockRef::new(63, 63)));
        // 100/64 = 1, 200/64 = 3 -> idb 11; local (36, 8) -> 4*8 + 1
        assert_eq!(cell_to_refs(&g, 100, 200).unwrap(), (BlockRef { idb: 11 }, SubBlockRef::new(11, 33)));
        assert!(matches!(cell_to_refs(&g, 512, 0), Err(GridError::CellOutOfBounds { .. })));
    }

    #[test]
    fn subblock_cells_examples() {
        let g = GridGeometry::default();
        let cells = subblock_cells(&g, SubBlockRef::new(0, 0)).unwrap();
        assert_eq!(cells.len(), 64);
        assert!(cells.iter().all(|&(x, y)| x < 8 && y < 8));

        let cells = subblock_cells(&g, SubBlockRef::new(11, 33)).unwrap();
        let expected: Vec<_> = (96..104).flat_map(|x| (200..208).map(move |y| (x, y))).collect();
        assert_eq!(cells, expected);

        // block 3 is the lower-right 8x8 block; sub-block 3 is its top-right 2x2 corner
        let cells = subblock_cells(&small(), SubBlockRef::new(3, 3)).unwrap();
        assert_eq!(cells, vec![(8, 14), (8, 15), (9, 14), (9, 15)]);
        let cells = subblock_cells(&small(), SubBlockRef::new(3, 5)).unwrap();
        assert_eq!(cells, vec![(10, 10), (10, 11), (11, 10), (11, 11)]);

        assert!(subblock_cells(&g, SubBlockRef::new(64, 0)).is_err());
        assert!(subblock_cells(&g, SubBlockRef::new(0, 64)).is_err());
    }

    #[test]
    fn adjacency_counts() {
        let g = GridGeometry::default();
        let interior = g.sub_at(10, 10);
        assert_eq!(adjacent_subblocks(&g, interior, Adjacency::Eight).unwrap().len(), 8);
        assert_eq!(adjacent_subblocks(&g, interior, Adjacency::Four).unwrap().len(), 4);
        assert_eq!(adjacent_subblocks(&g, SubBlockRef::new(0, 0), Adjacency::Eight).unwrap().len(), 3);
        let n = adjacent_subblocks(&g, SubBlockRef::new(0, 7), Adjacency::Eight).unwrap();
        assert!(n.contains(&SubBlockRef::new(1, 0)));
        assert!(!n.contains(&SubBlockRef::new(0, 7)));
    }

    #[test]
    fn eligibility_examples() {
        let g = GridGeometry::default();
        let vf = CellGrid::filled(g, SemClass::VocalFolds);
        assert_eq!(eligible_blocks(&vf, SemClass::VocalFolds, 1.0).len(), 64);
        let void = CellGrid::filled(g, SemClass::Void);
        assert!(eligible_blocks(&void, SemClass::VocalFolds, 1.0).is_empty());

        let checker = CellGrid::from_fn(g, |x, y| {
            if (x / 64 + y / 64) % 2 == 0 { SemClass::VocalFolds } else { SemClass::Void }
        });
        let blocks = eligible_blocks(&checker, SemClass::VocalFolds, 1.0);
        assert_eq!(blocks.len(), 32);
        assert!(blocks.iter().all(|b| {
            let r = g.block_rect(*b);
            checker.get(r.x0, r.y0) == SemClass::VocalFolds
        }));
        assert!(blocks.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn round_trip_and_tiling_exhaustive_small() {
        let g = small();
        let mut seen = vec![0u8; g.width * g.height];
        for s in g.all_subs() {
            for (x, y) in subblock_cells(&g, s).unwrap() {
                assert_eq!(cell_to_refs(&g, x, y).unwrap().1, s);
                seen[x * g.width + y] += 1;
            }
        }
        assert!(seen.iter().all(|&n| n == 1));
    }

    #[test]
    fn adjacency_symmetric_irreflexive_small() {
        let g = small();
        for adjacency in [Adjacency::Four, Adjacency::Eight] {
            for s in g.all_subs() {
                let ns = adjacent_subblocks(&g, s, adjacency).unwrap();
                assert!(!ns.contains(&s));
                for t in ns {
                    assert!(adjacent_subblocks(&g, t, adjacency).unwrap().contains(&s));
                }
            }
        }
    }

    #[test]
    fn class_names_round_trip() {
        for c in SemClass::ALL {
            assert_eq!(SemClass::from_name(c.name()), Some(c));
            assert_eq!(SemClass::from_index(c.index()), Some(c));
        }
        assert_eq!(SemClass::from_name("tumor"), None);
    }
}
