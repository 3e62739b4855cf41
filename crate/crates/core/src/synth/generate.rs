use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fill::selection_box;
use super::pivots::ClassMask;
use super::{
    choose_block, choose_center, connect_pivots, guess_contour_pivots, rasterize_and_fill, FillRequest, ObjectInstance,
    ObjectShape, PathProblem, PivotRequest, Stage, SynthConfig, SynthError,
};
use crate::grid::{eligible_blocks, CellGrid, Rect, SemClass};
use crate::scene::ObjectSpec;
use crate::seed::derive_seed;

/// Cheap feasibility test run while compiling a scene against a background.
/// Catches objects that could never be placed, whatever the seed.
pub fn precheck(grid: &CellGrid, spec: &ObjectSpec) -> Result<(), String> {
    match spec.cls {
        SemClass::Pathology => {
            if eligible_blocks(grid, spec.primary_placement(), spec.coverage).is_empty() {
                return Err("no eligible block for pathology".into());
            }
        }
        SemClass::Intubation => {
            if intubation_centers(grid, spec).is_empty() {
                return Err("no glottal column reaches the bottom border".into());
            }
        }
        SemClass::SurgicalTool => {
            if border_entries(grid, &spec.placement).is_empty() {
                return Err("no border cell to enter from".into());
            }
        }
        other => return Err(format!("{other} is not a generated class")),
    }
    Ok(())
}

/// Places one object, retrying with fresh derived seeds. The grid is only
/// modified when an attempt succeeds.
pub fn generate_object(
    grid: &mut CellGrid,
    spec: &ObjectSpec,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<ObjectInstance, SynthError> {
    let attempts = cfg.retries.max(1);
    let mut failures = BTreeMap::new();
    let mut last = String::new();
    for attempt in 0..attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, attempt as u64));
        let result = match spec.cls {
            SemClass::Pathology => generate_pathology(grid, spec, cfg, &mut rng),
            SemClass::Intubation => generate_intubation(grid, spec, cfg, &mut rng),
            SemClass::SurgicalTool => generate_tool(grid, spec, &mut rng),
            other => return Err(SynthError::infeasible(Stage::Block, format!("{other} is not a generated class"))),
        };
        match result {
            Ok(mut inst) => {
                inst.seed = seed;
                inst.attempt = attempt;
                return Ok(inst);
            }
            Err(e) => {
                let stage = e.stage();
                *failures.entry(stage).or_insert(0) += 1;
                last = e.to_string();
                // no block qualifies: no other seed can change that
                if stage == Stage::Block {
                    return Err(SynthError::GenerationFailed { cls: spec.cls, attempts: attempt + 1, failures, last });
                }
            }
        }
    }
    Err(SynthError::GenerationFailed { cls: spec.cls, attempts, failures, last })
}

fn problem<'a>(grid: &'a CellGrid, spec: &'a ObjectSpec, cfg: &SynthConfig, scope: Rect, center: (usize, usize)) -> PathProblem<'a> {
    PathProblem {
        grid,
        placement: &spec.placement,
        scope,
        padding: spec.padding,
        excluded: Some(grid.geometry().sub_of(center.0, center.1)),
        adjacency: cfg.adjacency,
        cost: cfg.cost,
        mode: cfg.mode,
        exact_limit: cfg.exact_limit,
        node_budget: cfg.node_budget,
    }
}

/// One attempt at a closed contour confined to a single block.
pub fn generate_pathology<R: Rng>(
    grid: &mut CellGrid,
    spec: &ObjectSpec,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<ObjectInstance, SynthError> {
    let host = spec.primary_placement();
    let block = choose_block(grid, host, spec.coverage, rng)?;
    let center = choose_center(grid, block, spec.center_margin, host, rng)?;
    let scope = grid.geometry().block_rect(block);
    let req = PivotRequest {
        center,
        scope,
        placement: &spec.placement,
        count: spec.pivots,
        upper_only: false,
        min_dist: spec.min_pivot_dist,
        max_dist: spec.max_pivot_dist,
    };
    let pivots = guess_contour_pivots(grid, &req, rng)?;
    let cells: Vec<(usize, usize)> = pivots.iter().map(|p| (p.x, p.y)).collect();
    let selection = connect_pivots(&problem(grid, spec, cfg, scope, center), &cells, true, rng)?;
    let fill = FillRequest { cls: spec.cls, placement: &spec.placement, center, row_limit: None };
    let filled_cells = rasterize_and_fill(grid, &selection.chosen, &fill)?;
    Ok(ObjectInstance {
        cls: spec.cls,
        placement: spec.placement.clone(),
        chosen_block: block,
        center,
        shape: ObjectShape::Contour { pivots, cyclic: true, selection, row_limit: None, extension: None },
        filled_cells,
        seed: 0,
        attempt: 0,
    })
}

/// Cells in the bottom band from which a tube can descend: the cell and its
/// whole column below are glottal, and so is the margin window around it.
pub(crate) fn intubation_centers(grid: &CellGrid, spec: &ObjectSpec) -> Vec<(usize, usize)> {
    let (h, w) = (grid.height(), grid.width());
    let mask = ClassMask::new(grid, &spec.placement);
    let m = spec.center_margin;
    let mut out = Vec::new();
    for x in h.saturating_sub(spec.band)..h {
        for y in 0..w {
            let column = Rect::new(x, y, h - 1, y);
            let window = Rect::new(x.saturating_sub(m), y.saturating_sub(m), (x + m).min(h - 1), (y + m).min(w - 1));
            if mask.full(&column) && mask.full(&window) {
                out.push((x, y));
            }
        }
    }
    out
}

/// One attempt at an intubation: an arch of pivots above a center in the
/// bottom band, filled down to the center row, plus a straight downward
/// extension to the bottom border across the arch's column span.
pub fn generate_intubation<R: Rng>(
    grid: &mut CellGrid,
    spec: &ObjectSpec,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<ObjectInstance, SynthError> {
    let g = *grid.geometry();
    let center = *intubation_centers(grid, spec)
        .choose(rng)
        .ok_or_else(|| SynthError::infeasible(Stage::Center, "no glottal column reaches the bottom border"))?;
    let scope = Rect::new(0, 0, g.height - 1, g.width - 1);
    let req = PivotRequest {
        center,
        scope,
        placement: &spec.placement,
        count: spec.pivots,
        upper_only: true,
        min_dist: spec.min_pivot_dist,
        max_dist: spec.max_pivot_dist,
    };
    let pivots = guess_contour_pivots(grid, &req, rng)?;
    let cells: Vec<(usize, usize)> = pivots.iter().map(|p| (p.x, p.y)).collect();
    let selection = connect_pivots(&problem(grid, spec, cfg, scope, center), &cells, false, rng)?;
    let span = selection_box(grid, &selection.chosen).map(|b| (b.y0, b.y1)).expect("selection is never empty");
    let fill = FillRequest { cls: spec.cls, placement: &spec.placement, center, row_limit: Some(center.0) };
    let mut filled_cells = rasterize_and_fill(grid, &selection.chosen, &fill)?;
    for x in (center.0 + 1)..g.height {
        for y in span.0..=span.1 {
            if spec.placement.contains(&grid.get(x, y)) {
                grid.set(x, y, spec.cls);
                filled_cells.push((x, y));
            }
        }
    }
    filled_cells.sort_unstable();
    Ok(ObjectInstance {
        cls: spec.cls,
        placement: spec.placement.clone(),
        chosen_block: g.block_of(center.0, center.1),
        center,
        shape: ObjectShape::Contour { pivots, cyclic: false, selection, row_limit: Some(center.0), extension: Some(span) },
        filled_cells,
        seed: 0,
        attempt: 0,
    })
}

fn border_entries(grid: &CellGrid, placement: &[SemClass]) -> Vec<(usize, usize)> {
    let (h, w) = (grid.height(), grid.width());
    grid.iter()
        .filter(|&((x, y), c)| (x == 0 || y == 0 || x == h - 1 || y == w - 1) && placement.contains(&c))
        .map(|(p, _)| p)
        .collect()
}

/// Cells of the digital segment from `a` to `b`, endpoints included.
pub fn rod_segment(a: (usize, usize), b: (usize, usize)) -> Vec<(usize, usize)> {
    let (mut x, mut y) = (a.0 as i64, a.1 as i64);
    let (x1, y1) = (b.0 as i64, b.1 as i64);
    let (dx, dy) = ((x1 - x).abs(), -(y1 - y).abs());
    let (sx, sy) = ((x1 - x).signum(), (y1 - y).signum());
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy) as usize + 1);
    loop {
        out.push((x as usize, y as usize));
        if x == x1 && y == y1 {
            return out;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Recolors every `placement` cell within Chebyshev distance `half_width` of
/// the segment. Returns the recolored cells in row-major order.
pub fn paint_rod(
    grid: &mut CellGrid,
    entry: (usize, usize),
    tip: (usize, usize),
    half_width: usize,
    cls: SemClass,
    placement: &[SemClass],
) -> Vec<(usize, usize)> {
    let (h, w) = (grid.height(), grid.width());
    let mut hit = vec![false; h * w];
    for (x, y) in rod_segment(entry, tip) {
        for bx in x.saturating_sub(half_width)..=(x + half_width).min(h - 1) {
            for by in y.saturating_sub(half_width)..=(y + half_width).min(w - 1) {
                hit[bx * w + by] = true;
            }
        }
    }
    let mut out = Vec::new();
    for (i, _) in hit.iter().enumerate().filter(|(_, &m)| m) {
        let (x, y) = (i / w, i % w);
        if placement.contains(&grid.get(x, y)) {
            grid.set(x, y, cls);
            out.push((x, y));
        }
    }
    out
}

/// One attempt at a surgical tool: a straight rod from a border cell to an
/// interior tip, both on placement cells.
pub fn generate_tool<R: Rng>(grid: &mut CellGrid, spec: &ObjectSpec, rng: &mut R) -> Result<ObjectInstance, SynthError> {
    let (h, w) = (grid.height(), grid.width());
    let entry = *border_entries(grid, &spec.placement)
        .choose(rng)
        .ok_or_else(|| SynthError::infeasible(Stage::Rod, "no border cell to enter from"))?;
    let (lo, hi) = ((spec.min_length * spec.min_length) as f64, (spec.max_length * spec.max_length) as f64);
    let tips: Vec<(usize, usize)> = grid
        .iter()
        .filter(|&((x, y), c)| {
            let d2 = (x.abs_diff(entry.0).pow(2) + y.abs_diff(entry.1).pow(2)) as f64;
            x > 0 && y > 0 && x < h - 1 && y < w - 1 && spec.placement.contains(&c) && d2 >= lo && d2 <= hi
        })
        .map(|(p, _)| p)
        .collect();
    let tip = *tips
        .choose(rng)
        .ok_or_else(|| SynthError::infeasible(Stage::Rod, format!("no tip within reach of entry {entry:?}")))?;
    let filled_cells = paint_rod(grid, entry, tip, spec.half_width, spec.cls, &spec.placement);
    Ok(ObjectInstance {
        cls: spec.cls,
        placement: spec.placement.clone(),
        chosen_block: grid.geometry().block_of(tip.0, tip.1),
        center: tip,
        shape: ObjectShape::Rod { entry, tip, half_width: spec.half_width },
        filled_cells,
        seed: 0,
        attempt: 0,
    })
}
