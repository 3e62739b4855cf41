use std::f64::consts::PI;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ContourPivot, Stage, SynthError};
use crate::grid::{eligible_blocks, BlockRef, CellGrid, Rect, SemClass, SubBlockRef};

/// Which line through the center a pivot lies on. Rows run down, so the main
/// diagonal goes north-west to south-east.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Row,
    SecDiag,
    Col,
    MainDiag,
}

/// Summed-area table of cells whose class is in a given set.
pub(crate) struct ClassMask {
    width: usize,
    sums: Vec<u32>,
}

impl ClassMask {
    pub(crate) fn new(grid: &CellGrid, classes: &[SemClass]) -> Self {
        let (h, w) = (grid.height(), grid.width());
        let mut sums = vec![0u32; (h + 1) * (w + 1)];
        for x in 0..h {
            let mut row = 0u32;
            for y in 0..w {
                row += classes.contains(&grid.get(x, y)) as u32;
                sums[(x + 1) * (w + 1) + y + 1] = sums[x * (w + 1) + y + 1] + row;
            }
        }
        ClassMask { width: w, sums }
    }

    pub(crate) fn count(&self, r: &Rect) -> u32 {
        let w = self.width + 1;
        let at = |x: usize, y: usize| self.sums[x * w + y];
        at(r.x1 + 1, r.y1 + 1) + at(r.x0, r.y0) - at(r.x0, r.y1 + 1) - at(r.x1 + 1, r.y0)
    }

    pub(crate) fn full(&self, r: &Rect) -> bool {
        self.count(r) as usize == r.rows() * r.cols()
    }
}

/// Uniformly picks a block whose `placement` share reaches `min_fraction`.
pub fn choose_block<R: Rng>(
    grid: &CellGrid,
    placement: SemClass,
    min_fraction: f64,
    rng: &mut R,
) -> Result<BlockRef, SynthError> {
    let blocks = eligible_blocks(grid, placement, min_fraction);
    blocks
        .choose(rng)
        .copied()
        .ok_or_else(|| SynthError::infeasible(Stage::Block, format!("no block is at least {min_fraction} {placement}")))
}

/// Cells of `block` whose whole `margin`-neighborhood stays in the block and holds `placement`.
pub(crate) fn center_candidates(
    grid: &CellGrid,
    block: BlockRef,
    margin: usize,
    placement: SemClass,
) -> Vec<(usize, usize)> {
    let r = grid.geometry().block_rect(block);
    if 2 * margin >= r.rows() {
        return Vec::new();
    }
    let mask = ClassMask::new(grid, &[placement]);
    let mut out = Vec::new();
    for x in (r.x0 + margin)..=(r.x1 - margin) {
        for y in (r.y0 + margin)..=(r.y1 - margin) {
            if mask.full(&Rect::new(x - margin, y - margin, x + margin, y + margin)) {
                out.push((x, y));
            }
        }
    }
    out
}

pub fn choose_center<R: Rng>(
    grid: &CellGrid,
    block: BlockRef,
    margin: usize,
    placement: SemClass,
    rng: &mut R,
) -> Result<(usize, usize), SynthError> {
    center_candidates(grid, block, margin, placement)
        .choose(rng)
        .copied()
        .ok_or_else(|| SynthError::infeasible(Stage::Center, format!("block {} has no center with margin {margin}", block.idb)))
}

/// Per-unit-distance steps of `count` equally spaced half-lines, counterclockwise
/// from east, as `(row step, col step)` with Chebyshev length 1. With
/// `upper_only`, only the half-lines pointing east through north to west are kept.
pub fn direction_steps(count: usize, upper_only: bool) -> Vec<((f64, f64), LineKind)> {
    let snap = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
    (0..count)
        .filter(|&k| !upper_only || 2 * k <= count)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / count as f64;
            let (dr, dc) = (-theta.sin(), theta.cos());
            let scale = dr.abs().max(dc.abs());
            let step = (snap(dr / scale), snap(dc / scale));
            (step, line_kind(k, count))
        })
        .collect()
}

/// Line through the center nearest to half-line `k` of `count`; exact ties
/// (possible from 16 directions up) go to the earlier kind.
fn line_kind(k: usize, count: usize) -> LineKind {
    // angle in units of 1/count degree, folded onto [0, 180)
    let a = (360 * k) % (180 * count);
    let kinds = [LineKind::Row, LineKind::SecDiag, LineKind::Col, LineKind::MainDiag, LineKind::Row];
    let best = (0..5).min_by_key(|&i| a.abs_diff(45 * i * count)).expect("non-empty");
    kinds[best]
}

pub(crate) fn ray_cell(center: (usize, usize), step: (f64, f64), t: usize) -> (i64, i64) {
    (
        center.0 as i64 + (t as f64 * step.0).round() as i64,
        center.1 as i64 + (t as f64 * step.1).round() as i64,
    )
}

/// Inputs of [`guess_contour_pivots`].
#[derive(Debug, Clone)]
pub struct PivotRequest<'a> {
    pub center: (usize, usize),
    /// Pivots and every cell on the way to them must stay in here.
    pub scope: Rect,
    pub placement: &'a [SemClass],
    pub count: usize,
    pub upper_only: bool,
    pub min_dist: usize,
    pub max_dist: usize,
}

/// Guesses one pivot per half-line at a uniformly drawn feasible distance.
///
/// A distance is feasible when every ray cell up to it is a placement cell in
/// scope, and the pivot's sub-block is purely placement and differs from the
/// center's sub-block.
pub fn guess_contour_pivots<R: Rng>(
    grid: &CellGrid,
    req: &PivotRequest<'_>,
    rng: &mut R,
) -> Result<Vec<ContourPivot>, SynthError> {
    let g = grid.geometry();
    let center_sub = g.sub_of(req.center.0, req.center.1);
    let mut pivots: Vec<ContourPivot> = Vec::new();
    for (idfp, (step, kind)) in direction_steps(req.count, req.upper_only).into_iter().enumerate() {
        let mut limit = 0;
        for t in 1..=req.max_dist {
            let (x, y) = ray_cell(req.center, step, t);
            if x < 0 || y < 0 || !req.scope.contains(x as usize, y as usize) {
                break;
            }
            if !req.placement.contains(&grid.get(x as usize, y as usize)) {
                break;
            }
            limit = t;
        }
        let candidates: Vec<usize> = (req.min_dist..=limit)
            .filter(|&t| {
                let (x, y) = ray_cell(req.center, step, t);
                let s = g.sub_of(x as usize, y as usize);
                s != center_sub && sub_guessable(grid, s, req.placement, &req.scope)
            })
            .collect();
        let Some(&d) = candidates.choose(rng) else {
            return Err(SynthError::infeasible(
                Stage::Pivots,
                format!("no feasible distance for pivot {idfp} (ray limit {limit}, minimum {})", req.min_dist),
            ));
        };
        let (x, y) = ray_cell(req.center, step, d);
        let p = ContourPivot { idfp, x: x as usize, y: y as usize, line_kind: kind, distance: d };
        if pivots.iter().any(|q| (q.x, q.y) == (p.x, p.y)) {
            return Err(SynthError::infeasible(Stage::Pivots, format!("pivot {idfp} coincides with an earlier pivot")));
        }
        pivots.push(p);
    }
    Ok(pivots)
}

pub(crate) fn sub_guessable(grid: &CellGrid, s: SubBlockRef, placement: &[SemClass], scope: &Rect) -> bool {
    let r = grid.geometry().sub_rect(s);
    scope.contains(r.x0, r.y0)
        && scope.contains(r.x1, r.y1)
        && r.cells().all(|(x, y)| placement.contains(&grid.get(x, y)))
}
