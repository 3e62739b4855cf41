use std::collections::VecDeque;

use super::{Stage, SynthError};
use crate::grid::{CellGrid, Rect, SemClass, SubBlockRef};

/// Inputs of [`rasterize_and_fill`].
#[derive(Debug, Clone)]
pub struct FillRequest<'a> {
    pub cls: SemClass,
    pub placement: &'a [SemClass],
    /// Flood seed; must be a placement cell outside the selection.
    pub center: (usize, usize),
    /// When set, the flood never descends below this row and may touch the
    /// bottom of the selection box without counting as an escape.
    pub row_limit: Option<usize>,
}

/// Bounding box of a set of sub-blocks.
pub(crate) fn selection_box(grid: &CellGrid, selection: &[SubBlockRef]) -> Option<Rect> {
    let g = grid.geometry();
    selection.iter().map(|&s| g.sub_rect(s)).reduce(|a, b| {
        Rect::new(a.x0.min(b.x0), a.y0.min(b.y0), a.x1.max(b.x1), a.y1.max(b.y1))
    })
}

/// Recolors the placement cells of the selected sub-blocks and the region they
/// enclose around the center. Returns the recolored cells in row-major order.
///
/// The enclosed region is the 4-connected flood from the center through
/// placement cells outside the selection. If that flood reaches the edge of
/// the selection's bounding box, the contour is open and the grid is left
/// untouched.
pub fn rasterize_and_fill(
    grid: &mut CellGrid,
    selection: &[SubBlockRef],
    req: &FillRequest<'_>,
) -> Result<Vec<(usize, usize)>, SynthError> {
    let g = *grid.geometry();
    let bx = selection_box(grid, selection)
        .ok_or_else(|| SynthError::infeasible(Stage::Fill, "empty selection"))?;
    let (cx, cy) = req.center;
    if !bx.contains(cx, cy) {
        return Err(SynthError::OpenContour { x: cx, y: cy });
    }
    let (rows, cols) = (bx.rows(), bx.cols());
    let local = |x: usize, y: usize| (x - bx.x0) * cols + (y - bx.y0);
    let mut selected = vec![false; rows * cols];
    for &s in selection {
        for (x, y) in g.sub_rect(s).cells() {
            selected[local(x, y)] = true;
        }
    }
    if selected[local(cx, cy)] {
        return Err(SynthError::infeasible(Stage::Fill, "center lies on the contour"));
    }
    if !req.placement.contains(&grid.get(cx, cy)) {
        return Err(SynthError::infeasible(Stage::Fill, "center is not a placement cell"));
    }

    let bottom = req.row_limit.map_or(bx.x1, |r| r.min(bx.x1));
    let mut inside = vec![false; rows * cols];
    inside[local(cx, cy)] = true;
    let mut queue = VecDeque::from([(cx, cy)]);
    while let Some((x, y)) = queue.pop_front() {
        let on_edge = x == bx.x0 || y == bx.y0 || y == bx.y1 || (req.row_limit.is_none() && x == bx.x1);
        if on_edge {
            return Err(SynthError::OpenContour { x: cx, y: cy });
        }
        let steps = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
        for (nx, ny) in steps {
            if nx < bx.x0 || nx > bottom || ny < bx.y0 || ny > bx.y1 {
                continue;
            }
            let i = local(nx, ny);
            if inside[i] || selected[i] || !req.placement.contains(&grid.get(nx, ny)) {
                continue;
            }
            inside[i] = true;
            queue.push_back((nx, ny));
        }
    }

    let mut filled = Vec::new();
    for x in bx.x0..=bx.x1 {
        for y in bx.y0..=bx.y1 {
            let i = local(x, y);
            if (selected[i] || inside[i]) && req.placement.contains(&grid.get(x, y)) {
                filled.push((x, y));
            }
        }
    }
    for &(x, y) in &filled {
        grid.set(x, y, req.cls);
    }
    Ok(filled)
}
