//! Post-hoc verification of an emitted (label image, metadata) pair.
//!
//! Everything here is recomputed from the two files. Apart from the grid and
//! palette modules, no generation code is reused: flood fill, adjacency,
//! direction vectors, line rasterization and the soft cost are written out
//! again so that a bug in the generator is not silently mirrored.

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::{Adjacency, BlockRef, CellGrid, GridGeometry, Rect, SemClass, SubBlockRef};
use crate::metadata::{MetadataRecord, ObjectRecord, ShapeRecord, META_FORMAT};
use crate::palette::{decode_label_image, strip_dynamic, ClassPalette, LabelImage, PaletteError};

/// The inputs could not be checked at all.
#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot decode {path}: {source}")]
    Image { path: String, source: PaletteError },
    #[error("malformed metadata: {0}")]
    Metadata(String),
    #[error("image and metadata disagree: {0}")]
    Mismatch(String),
}

/// Result of one named constraint. Empty `failures` means it holds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Check {
    pub failures: Vec<String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn fail(&mut self, msg: impl Into<String>) {
        // keep reports readable on badly broken inputs
        if self.failures.len() < 20 {
            self.failures.push(msg.into());
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub placement_safety: Check,
    pub containment: Check,
    pub pivot_geometry: Check,
    pub connectivity: Check,
    pub contour_closure: Check,
    pub class_presence: Check,
    pub soft_cost: Check,
    /// Only when the background is supplied.
    pub background_diff: Option<Check>,
    /// Recomputed soft cost per object; `None` for rods.
    pub recomputed_costs: Vec<Option<u64>>,
    /// Cells holding a generated class (or differing from the background, when given).
    pub diff_cells: usize,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.passed())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    pub fn checks(&self) -> Vec<(&'static str, &Check)> {
        let mut v = vec![
            ("placement_safety", &self.placement_safety),
            ("containment", &self.containment),
            ("pivot_geometry", &self.pivot_geometry),
            ("connectivity", &self.connectivity),
            ("contour_closure", &self.contour_closure),
            ("class_presence", &self.class_presence),
            ("soft_cost", &self.soft_cost),
        ];
        if let Some(c) = &self.background_diff {
            v.push(("background_diff", c));
        }
        v
    }
}

/// Checks `image` against `meta`. With `background`, additionally requires
/// the image to equal that background (after removing generated classes)
/// everywhere except the recolored cells.
pub fn verify_output(
    image: &Path,
    meta: &Path,
    palette: &ClassPalette,
    background: Option<&Path>,
) -> Result<VerificationReport, VerifyError> {
    let text = fs::read_to_string(meta).map_err(|source| VerifyError::Io { path: meta.display().to_string(), source })?;
    let record = MetadataRecord::from_json(&text).map_err(|e| VerifyError::Metadata(e.to_string()))?;
    let grid = decode(image, palette, &record)?;
    let bg = match background {
        Some(p) => {
            let bytes = fs::read(p).map_err(|source| VerifyError::Io { path: p.display().to_string(), source })?;
            let sha = hex::encode(Sha256::digest(&bytes));
            if sha != record.background_sha256 {
                return Err(VerifyError::Mismatch(format!("background digest {sha} differs from the recorded one")));
            }
            Some(strip_dynamic(&decode(p, palette, &record)?))
        }
        None => None,
    };
    verify_grid(&grid, &record, bg.as_ref())
}

fn decode(path: &Path, palette: &ClassPalette, record: &MetadataRecord) -> Result<CellGrid, VerifyError> {
    let wrap = |source| VerifyError::Image { path: path.display().to_string(), source };
    let img = LabelImage::read(path).map_err(wrap)?;
    let gm = &record.geometry;
    if (img.width, img.height) != (gm.width, gm.height) {
        return Err(VerifyError::Mismatch(format!(
            "{} is {}x{}, metadata says {}x{}",
            path.display(),
            img.width,
            img.height,
            gm.width,
            gm.height
        )));
    }
    decode_label_image(&img, palette, gm.block_dim, gm.sub_dim).map_err(wrap)
}

/// Verification on an already decoded grid.
pub fn verify_grid(
    grid: &CellGrid,
    record: &MetadataRecord,
    background: Option<&CellGrid>,
) -> Result<VerificationReport, VerifyError> {
    if record.format != META_FORMAT {
        return Err(VerifyError::Metadata(format!("unsupported format {:?}", record.format)));
    }
    let g = *grid.geometry();
    let gm = &record.geometry;
    if (g.width, g.height, g.block_dim, g.sub_dim) != (gm.width, gm.height, gm.block_dim, gm.sub_dim) {
        return Err(VerifyError::Mismatch("grid geometry differs from metadata".into()));
    }
    let adjacency = record.search.adjacency;
    let mut report = VerificationReport::default();

    // Region each object is allowed to occupy, and whether the object owns it.
    let mut explained = vec![false; g.width * g.height];
    for (k, obj) in record.objects.iter().enumerate() {
        if !obj.class.is_dynamic() || obj.placement.iter().any(|c| c.is_dynamic()) || obj.placement.is_empty() {
            return Err(VerifyError::Metadata(format!("object {k} has invalid classes")));
        }
        if g.check_block(BlockRef { idb: obj.chosen_block }).is_err() || !g.contains(obj.center[0], obj.center[1]) {
            return Err(VerifyError::Metadata(format!("object {k} lies outside the grid")));
        }
        let region = match &obj.shape {
            ShapeRecord::Contour { .. } => {
                let (region, cost) = check_contour(grid, obj, k, adjacency, record.search.column_penalty, &mut report)?;
                report.recomputed_costs.push(Some(cost));
                region
            }
            ShapeRecord::Rod { entry, tip, half_width } => {
                report.recomputed_costs.push(None);
                check_rod(grid, obj, k, (entry[0], entry[1]), (tip[0], tip[1]), *half_width, &mut report)?
            }
        };
        for &(x, y) in &region {
            let c = grid.get(x, y);
            if obj.placement.contains(&c) {
                report.placement_safety.fail(format!("object {k}: ({x},{y}) still holds {c}"));
            }
            if c == obj.class {
                explained[x * g.width + y] = true;
            }
        }
        if obj.class == SemClass::Pathology {
            let block = g.block_rect(BlockRef { idb: obj.chosen_block });
            for &(x, y) in &region {
                if grid.get(x, y) == obj.class && !block.contains(x, y) {
                    report.containment.fail(format!("object {k}: ({x},{y}) outside block {}", obj.chosen_block));
                }
            }
        }
    }

    let mut present = BTreeSet::new();
    for ((x, y), c) in grid.iter() {
        if c.is_dynamic() {
            present.insert(c);
            report.diff_cells += 1;
            if !explained[x * g.width + y] {
                report.placement_safety.fail(format!("({x},{y}) holds {c} but no object accounts for it"));
            }
        }
        if c == SemClass::Pathology {
            let inside = record
                .objects
                .iter()
                .any(|o| o.class == c && g.block_rect(BlockRef { idb: o.chosen_block }).contains(x, y));
            if !inside {
                report.containment.fail(format!("pathology cell ({x},{y}) outside every chosen block"));
            }
        }
    }
    let expected: BTreeSet<SemClass> = record.expected_classes.iter().copied().collect();
    let generated: BTreeSet<SemClass> = record.objects.iter().map(|o| o.class).collect();
    if present != expected {
        report.class_presence.fail(format!("present {present:?}, expected {expected:?}"));
    }
    if generated != expected {
        report.class_presence.fail(format!("objects cover {generated:?}, expected {expected:?}"));
    }

    if let Some(bg) = background {
        report.background_diff = Some(check_background(grid, bg, record, &mut report.diff_cells)?);
    }
    Ok(report)
}

fn check_background(
    grid: &CellGrid,
    bg: &CellGrid,
    record: &MetadataRecord,
    diff_cells: &mut usize,
) -> Result<Check, VerifyError> {
    if bg.geometry() != grid.geometry() {
        return Err(VerifyError::Mismatch("background geometry differs from the image".into()));
    }
    let mut check = Check::default();
    *diff_cells = 0;
    for ((x, y), c) in grid.iter() {
        let before = bg.get(x, y);
        if c == before {
            continue;
        }
        *diff_cells += 1;
        let lawful = record.objects.iter().any(|o| o.class == c && o.placement.contains(&before));
        if !lawful {
            check.fail(format!("({x},{y}) changed {before} -> {c}"));
        }
    }
    Ok(check)
}

fn sub_cells(g: &GridGeometry, s: SubBlockRef) -> Vec<(usize, usize)> {
    let per = g.block_dim / g.sub_dim;
    let (bx, by) = (s.idb / g.blocks_across() * g.block_dim, s.idb % g.blocks_across() * g.block_dim);
    let (sx, sy) = (bx + s.idsb / per * g.sub_dim, by + s.idsb % per * g.sub_dim);
    (sx..sx + g.sub_dim).flat_map(|x| (sy..sy + g.sub_dim).map(move |y| (x, y))).collect()
}

/// Global lattice position of a sub-block.
fn lattice(g: &GridGeometry, s: SubBlockRef) -> (usize, usize) {
    let (x, y) = sub_cells(g, s)[0];
    (x / g.sub_dim, y / g.sub_dim)
}

fn touching(a: (usize, usize), b: (usize, usize), adjacency: Adjacency) -> bool {
    let dr = a.0.abs_diff(b.0);
    let dc = a.1.abs_diff(b.1);
    match adjacency {
        Adjacency::Four => dr + dc == 1,
        Adjacency::Eight => (dr, dc) != (0, 0) && dr <= 1 && dc <= 1,
    }
}

fn row_band_cost(cells: &[(usize, usize)], adjacency: Adjacency, column_penalty: bool) -> u64 {
    let mut total = 0;
    for (i, &a) in cells.iter().enumerate() {
        for &b in &cells[i + 1..] {
            if touching(a, b, adjacency) {
                continue;
            }
            if a.0 == b.0 || (column_penalty && a.1 == b.1) {
                total += 1;
            }
        }
    }
    total
}

/// Unit steps of `n` evenly spaced rays, counterclockwise from east, as (row, col).
fn ray_steps(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            let (r, c) = (-a.sin(), a.cos());
            let m = r.abs().max(c.abs());
            (r / m, c / m)
        })
        .collect()
}

fn line_kind_name(k: usize, n: usize) -> &'static str {
    // twice the angle in 1/n-degree units, so that half-way cases stay integral
    let twice = (720 * k) % (360 * n);
    let mut best = 0;
    for i in 1..5 {
        if twice.abs_diff(90 * i * n) < twice.abs_diff(90 * best * n) {
            best = i;
        }
    }
    ["row", "sec_diag", "col", "main_diag", "row"][best]
}

fn check_contour(
    grid: &CellGrid,
    obj: &ObjectRecord,
    k: usize,
    adjacency: Adjacency,
    column_penalty: bool,
    report: &mut VerificationReport,
) -> Result<(Vec<(usize, usize)>, u64), VerifyError> {
    let ShapeRecord::Contour { pivots, cyclic, selected, cost, row_limit, extension, .. } = &obj.shape else {
        unreachable!("caller matched the contour shape");
    };
    let g = *grid.geometry();
    let p = &obj.params;
    let center = (obj.center[0], obj.center[1]);
    let upper = obj.class == SemClass::Intubation;
    let mut subs = Vec::with_capacity(selected.len());
    for &[idb, idsb] in selected {
        let s = SubBlockRef { idb, idsb };
        g.check_sub(s).map_err(|e| VerifyError::Metadata(format!("object {k}: {e}")))?;
        subs.push(s);
    }
    let sel_set: BTreeSet<SubBlockRef> = subs.iter().copied().collect();
    let scope = if upper {
        Rect::new(0, 0, g.height - 1, g.width - 1)
    } else {
        g.block_rect(BlockRef { idb: obj.chosen_block })
    };

    // pivots
    let steps = ray_steps(p.pivots);
    let wanted: Vec<usize> = (0..p.pivots).filter(|&i| !upper || 2 * i <= p.pivots).collect();
    if pivots.len() != wanted.len() {
        report.pivot_geometry.fail(format!("object {k}: {} pivots, expected {}", pivots.len(), wanted.len()));
    }
    let mut seen = BTreeSet::new();
    for (pv, &dir) in pivots.iter().zip(&wanted) {
        let step = steps[dir];
        let at = (
            center.0 as i64 + (pv.distance as f64 * step.0).round() as i64,
            center.1 as i64 + (pv.distance as f64 * step.1).round() as i64,
        );
        if pv.idfp != dir || at != (pv.x as i64, pv.y as i64) {
            report.pivot_geometry.fail(format!("object {k}: pivot {} is off its half-line", pv.idfp));
        }
        let cheb = pv.x.abs_diff(center.0).max(pv.y.abs_diff(center.1));
        if cheb != pv.distance || cheb < p.min_pivot_dist || cheb > p.max_pivot_dist {
            report.pivot_geometry.fail(format!("object {k}: pivot {} at distance {cheb}", pv.idfp));
        }
        let kind = serde_json::to_value(pv.line_kind).ok().and_then(|v| v.as_str().map(str::to_owned));
        if kind.as_deref() != Some(line_kind_name(dir, p.pivots)) {
            report.pivot_geometry.fail(format!("object {k}: pivot {} has the wrong line kind", pv.idfp));
        }
        if !seen.insert((pv.x, pv.y)) {
            report.pivot_geometry.fail(format!("object {k}: pivot {} repeats a position", pv.idfp));
        }
        if !scope.contains(pv.x, pv.y) || !g.contains(pv.x, pv.y) {
            report.pivot_geometry.fail(format!("object {k}: pivot {} leaves its scope", pv.idfp));
            continue;
        }
        if !sel_set.contains(&g.sub_of(pv.x, pv.y)) {
            report.connectivity.fail(format!("object {k}: pivot {} is not on the selection", pv.idfp));
        }
    }
    if p.pivots == 8 && !upper {
        for kind in [crate::synth::LineKind::Row, crate::synth::LineKind::Col, crate::synth::LineKind::MainDiag, crate::synth::LineKind::SecDiag] {
            let n = pivots.iter().filter(|q| q.line_kind == kind).count();
            if n != 2 {
                report.pivot_geometry.fail(format!("object {k}: {n} pivots on {kind:?}"));
            }
        }
    }
    if *cyclic == upper {
        report.pivot_geometry.fail(format!("object {k}: unexpected contour cyclicity"));
    }

    // selection: connected, inside the guessable region, purely the object class
    let lat: Vec<(usize, usize)> = subs.iter().map(|&s| lattice(&g, s)).collect();
    if !lat.is_empty() {
        let mut reached = vec![false; lat.len()];
        reached[0] = true;
        let mut queue = VecDeque::from([0]);
        while let Some(i) = queue.pop_front() {
            for j in 0..lat.len() {
                if !reached[j] && touching(lat[i], lat[j], adjacency) {
                    reached[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if reached.iter().any(|r| !r) {
            report.connectivity.fail(format!("object {k}: selection is not connected"));
        }
    } else {
        report.connectivity.fail(format!("object {k}: empty selection"));
    }
    let center_lat = (center.0 / g.sub_dim, center.1 / g.sub_dim);
    let n = pivots.len();
    let pairs = if *cyclic { n } else { n.saturating_sub(1) };
    let rects: Vec<Rect> = (0..pairs)
        .map(|i| {
            let (a, b) = (&pivots[i], &pivots[(i + 1) % n]);
            let pad = p.padding;
            Rect::new(
                a.x.min(b.x).saturating_sub(pad).max(scope.x0),
                a.y.min(b.y).saturating_sub(pad).max(scope.y0),
                (a.x.max(b.x) + pad).min(scope.x1),
                (a.y.max(b.y) + pad).min(scope.y1),
            )
        })
        .collect();
    let mut selection_cells = Vec::new();
    for (&s, &l) in subs.iter().zip(&lat) {
        let cells = sub_cells(&g, s);
        let r = Rect::new(cells[0].0, cells[0].1, cells[cells.len() - 1].0, cells[cells.len() - 1].1);
        if l == center_lat {
            report.connectivity.fail(format!("object {k}: selection covers the center"));
        }
        if !rects.iter().any(|q| q.intersects(&r)) || !(scope.contains(r.x0, r.y0) && scope.contains(r.x1, r.y1)) {
            report.connectivity.fail(format!("object {k}: sub-block {s} outside the guessable region"));
        }
        if cells.iter().any(|&(x, y)| grid.get(x, y) != obj.class) {
            report.placement_safety.fail(format!("object {k}: selected sub-block {s} is not entirely {}", obj.class));
        }
        selection_cells.extend(cells);
    }

    let recomputed = row_band_cost(&lat, adjacency, column_penalty);
    if recomputed != *cost {
        report.soft_cost.fail(format!("object {k}: recorded cost {cost}, recomputed {recomputed}"));
    }

    // interior: flood from the center inside the selection's bounding box
    let mut region: Vec<(usize, usize)> = selection_cells.clone();
    if let Some(bx) = selection_cells.iter().fold(None::<Rect>, |acc, &(x, y)| {
        Some(match acc {
            None => Rect::new(x, y, x, y),
            Some(r) => Rect::new(r.x0.min(x), r.y0.min(y), r.x1.max(x), r.y1.max(y)),
        })
    }) {
        let on_sel: BTreeSet<(usize, usize)> = selection_cells.iter().copied().collect();
        let floor = row_limit.unwrap_or(bx.x1).min(bx.x1);
        let open = |x: usize, y: usize| {
            (x, y) != center
                && bx.contains(x, y)
                && x <= floor
                && !on_sel.contains(&(x, y))
                && (grid.get(x, y) == obj.class || obj.placement.contains(&grid.get(x, y)))
        };
        if !bx.contains(center.0, center.1) || on_sel.contains(&center) || !open_center(grid, obj, center) {
            report.contour_closure.fail(format!("object {k}: center is not strictly inside the contour"));
        } else {
            let mut inside = BTreeSet::from([center]);
            let mut queue = VecDeque::from([center]);
            let mut escaped = false;
            while let Some((x, y)) = queue.pop_front() {
                if x == bx.x0 || y == bx.y0 || y == bx.y1 || (row_limit.is_none() && x == bx.x1) {
                    escaped = true;
                    break;
                }
                for (nx, ny) in [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)] {
                    if open(nx, ny) && inside.insert((nx, ny)) {
                        queue.push_back((nx, ny));
                    }
                }
            }
            if escaped {
                report.contour_closure.fail(format!("object {k}: interior reaches the contour's bounding box"));
            } else {
                region.extend(inside);
            }
        }
        if let Some(limit) = row_limit {
            match extension {
                Some([y0, y1]) if *y0 == bx.y0 && *y1 == bx.y1 && *limit == center.0 => {
                    for x in (limit + 1)..g.height {
                        for y in *y0..=*y1 {
                            region.push((x, y));
                        }
                    }
                    let reaches = (*y0..=*y1).any(|y| grid.get(g.height - 1, y) == obj.class);
                    if !reaches {
                        report.containment.fail(format!("object {k}: does not reach the bottom border"));
                    }
                }
                _ => report.containment.fail(format!("object {k}: extension does not match the contour span")),
            }
        }
    }
    region.sort_unstable();
    region.dedup();
    Ok((region, recomputed))
}

fn open_center(grid: &CellGrid, obj: &ObjectRecord, c: (usize, usize)) -> bool {
    grid.get(c.0, c.1) == obj.class
}

/// Cells of the standard integer line from `a` to `b`.
fn line_cells(a: (usize, usize), b: (usize, usize)) -> Vec<(usize, usize)> {
    let (x0, y0, x1, y1) = (a.0 as i64, a.1 as i64, b.0 as i64, b.1 as i64);
    let dx = (x1 - x0).abs();
    let dy = (y1 - y0).abs();
    let sx = if x1 >= x0 { 1 } else { -1 };
    let sy = if y1 >= y0 { 1 } else { -1 };
    let mut err = dx - dy;
    let (mut x, mut y) = (x0, y0);
    let mut out = vec![(x as usize, y as usize)];
    while (x, y) != (x1, y1) {
        let e2 = 2 * err;
        if e2 >= -dy {
            err -= dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
        out.push((x as usize, y as usize));
    }
    out
}

fn check_rod(
    grid: &CellGrid,
    obj: &ObjectRecord,
    k: usize,
    entry: (usize, usize),
    tip: (usize, usize),
    half_width: usize,
    report: &mut VerificationReport,
) -> Result<Vec<(usize, usize)>, VerifyError> {
    let g = grid.geometry();
    if !g.contains(entry.0, entry.1) || !g.contains(tip.0, tip.1) {
        return Err(VerifyError::Metadata(format!("object {k}: rod leaves the grid")));
    }
    let (h, w) = (g.height, g.width);
    if !(entry.0 == 0 || entry.1 == 0 || entry.0 == h - 1 || entry.1 == w - 1) {
        report.pivot_geometry.fail(format!("object {k}: rod entry {entry:?} is not on the border"));
    }
    let len2 = entry.0.abs_diff(tip.0).pow(2) + entry.1.abs_diff(tip.1).pow(2);
    let (lo, hi) = (obj.params.min_length.pow(2), obj.params.max_length.pow(2));
    if len2 < lo || len2 > hi {
        report.pivot_geometry.fail(format!("object {k}: rod length² {len2} outside [{lo}, {hi}]"));
    }
    if half_width != obj.params.half_width {
        report.pivot_geometry.fail(format!("object {k}: half-width differs from its parameters"));
    }
    if (obj.center[0], obj.center[1]) != tip {
        report.pivot_geometry.fail(format!("object {k}: center is not the rod tip"));
    }
    let mut band = BTreeSet::new();
    for (x, y) in line_cells(entry, tip) {
        for bx in x.saturating_sub(half_width)..=(x + half_width).min(h - 1) {
            for by in y.saturating_sub(half_width)..=(y + half_width).min(w - 1) {
                band.insert((bx, by));
            }
        }
    }
    Ok(band.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::rod_segment;

    #[test]
    fn line_cells_agree_with_generator_segments() {
        for (a, b) in [((0, 0), (10, 3)), ((5, 9), (0, 0)), ((3, 3), (3, 3)), ((0, 7), (7, 0)), ((511, 200), (300, 260))] {
            assert_eq!(line_cells(a, b), rod_segment(a, b), "{a:?} -> {b:?}");
        }
        for x0 in (0..40).step_by(3) {
            for y1 in (0..40).step_by(7) {
                let (a, b) = ((x0, 5), (17, y1));
                assert_eq!(line_cells(a, b), rod_segment(a, b), "{a:?} -> {b:?}");
                assert_eq!(line_cells(b, a), rod_segment(b, a), "{b:?} -> {a:?}");
            }
        }
    }

    #[test]
    fn row_band_cost_examples() {
        assert_eq!(row_band_cost(&[(0, 0), (0, 1)], Adjacency::Eight, false), 0);
        assert_eq!(row_band_cost(&[(0, 0), (0, 2)], Adjacency::Eight, false), 1);
        assert_eq!(row_band_cost(&[(0, 0), (1, 0), (2, 0)], Adjacency::Eight, false), 0);
        assert_eq!(row_band_cost(&[(0, 0), (1, 0), (2, 0)], Adjacency::Eight, true), 1);
    }

    #[test]
    fn sub_cells_match_grid_module() {
        let g = GridGeometry::new(16, 16, 8, 2).unwrap();
        for s in g.all_subs() {
            let r = g.sub_rect(s);
            assert_eq!(sub_cells(&g, s), r.cells().collect::<Vec<_>>());
        }
    }
}
