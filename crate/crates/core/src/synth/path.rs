//! Connecting consecutive contour pivots through sub-blocks.
//!
//! For a pivot pair, the candidate ("guessable") sub-blocks are those meeting
//! the pair's bounding rectangle that consist purely of placement cells. A
//! path is any adjacency-connected subset of them containing both pivots'
//! sub-blocks; among paths we minimise [`path_cost`].
//!
//! The exact search enumerates connected sets grown from the first pivot's
//! sub-block with include/exclude branching on frontier vertices. Because
//! the cost never decreases when a sub-block is added, any set costing more
//! than the incumbent can be cut, and a set that already reaches the second
//! pivot need not be extended.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;

use super::{CostModel, PathSelection, SearchMode, Stage, SynthError};
use super::pivots::sub_guessable;
use crate::grid::{Adjacency, CellGrid, GridGeometry, Rect, SemClass, SubBlockRef};

/// Regions above this size are rejected by [`brute_force_min_cost`].
pub const ORACLE_LIMIT: usize = 20;

/// Largest region the bitmask search handles; larger ones fall back to a shortest path.
const MASK_BITS: usize = 128;

/// Axis-aligned rectangle spanned by two cells, dilated by `padding` and clipped to `clip`.
pub fn bounding_rect(p: (usize, usize), q: (usize, usize), padding: usize, clip: &Rect) -> Rect {
    let x0 = p.0.min(q.0).saturating_sub(padding).max(clip.x0);
    let y0 = p.1.min(q.1).saturating_sub(padding).max(clip.y0);
    let x1 = (p.0.max(q.0) + padding).min(clip.x1);
    let y1 = (p.1.max(q.1) + padding).min(clip.y1);
    Rect::new(x0, y0, x1, y1)
}

/// Number of unordered pairs of distinct, non-adjacent sub-blocks sharing a row
/// band (and, with `column_penalty`, a column band).
pub fn path_cost(g: &GridGeometry, selection: &[SubBlockRef], adjacency: Adjacency, model: CostModel) -> u64 {
    let pos: Vec<(usize, usize)> = selection.iter().map(|&s| g.sub_position(s)).collect();
    let mut cost = 0;
    for i in 0..pos.len() {
        for j in (i + 1)..pos.len() {
            if penalized(pos[i], pos[j], adjacency, model) {
                cost += 1;
            }
        }
    }
    cost
}

fn penalized(a: (usize, usize), b: (usize, usize), adjacency: Adjacency, model: CostModel) -> bool {
    if a == b {
        return false;
    }
    let (dr, dc) = (a.0.abs_diff(b.0), a.1.abs_diff(b.1));
    let adjacent = match adjacency {
        Adjacency::Eight => dr.max(dc) == 1,
        Adjacency::Four => dr + dc == 1,
    };
    !adjacent && (dr == 0 || (model.column_penalty && dc == 0))
}

/// Everything the pair search needs to know about one object.
#[derive(Debug, Clone)]
pub struct PathProblem<'a> {
    pub grid: &'a CellGrid,
    pub placement: &'a [SemClass],
    /// Paths may not leave this rectangle.
    pub scope: Rect,
    pub padding: usize,
    /// Sub-block that may never be selected (the one holding the center).
    pub excluded: Option<SubBlockRef>,
    pub adjacency: Adjacency,
    pub cost: CostModel,
    pub mode: SearchMode,
    pub exact_limit: usize,
    pub node_budget: usize,
}

/// Guessable sub-blocks for a pivot pair, in lattice (row, col) order.
pub fn guessable_region(problem: &PathProblem<'_>, p: (usize, usize), q: (usize, usize)) -> Vec<SubBlockRef> {
    let g = problem.grid.geometry();
    let rect = bounding_rect(p, q, problem.padding, &problem.scope);
    let sd = g.sub_dim;
    let mut out = Vec::new();
    for r in (rect.x0 / sd)..=(rect.x1 / sd) {
        for c in (rect.y0 / sd)..=(rect.y1 / sd) {
            let s = g.sub_at(r, c);
            if Some(s) != problem.excluded && sub_guessable(problem.grid, s, problem.placement, &problem.scope) {
                out.push(s);
            }
        }
    }
    out
}

/// Path found for one pivot pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSelection {
    /// Selected sub-blocks, lattice order.
    pub chosen: Vec<SubBlockRef>,
    pub cost: u64,
    /// Whether the search completed, making `cost` the region's minimum.
    pub exact: bool,
    /// Number of minimum-cost paths met during the search.
    pub ties: usize,
}

/// Minimum-cost connected selection between the sub-blocks of `p` and `q`.
pub fn connect_pair<R: Rng>(
    problem: &PathProblem<'_>,
    p: (usize, usize),
    q: (usize, usize),
    rng: &mut R,
) -> Result<PairSelection, SynthError> {
    let g = problem.grid.geometry();
    let region = guessable_region(problem, p, q);
    let (sa, sb) = (g.sub_of(p.0, p.1), g.sub_of(q.0, q.1));
    let (Some(a), Some(b)) = (region.iter().position(|&s| s == sa), region.iter().position(|&s| s == sb)) else {
        return Err(SynthError::infeasible(Stage::Path, format!("pivot sub-blocks {sa} / {sb} are not guessable")));
    };
    if a == b {
        return Ok(PairSelection { chosen: vec![sa], cost: 0, exact: true, ties: 1 });
    }
    let k = region.len();
    let pos: Vec<(usize, usize)> = region.iter().map(|&s| g.sub_position(s)).collect();
    let adj: Vec<Vec<usize>> = (0..k)
        .map(|i| (0..k).filter(|&j| j != i && g.are_adjacent(region[i], region[j], problem.adjacency)).collect())
        .collect();

    let dist = bfs_distances(&adj, b);
    if dist[a] == usize::MAX {
        return Err(SynthError::infeasible(Stage::Path, format!("no connected path between {sa} and {sb}")));
    }
    let shortest = shortest_path(&adj, &dist, a);
    let shortest_cost = {
        let subs: Vec<SubBlockRef> = shortest.iter().map(|&i| region[i]).collect();
        path_cost(g, &subs, problem.adjacency, problem.cost)
    };

    let exact = problem.mode == SearchMode::Exhaustive || k <= problem.exact_limit;
    if k > MASK_BITS {
        let chosen = sorted_subs(&region, shortest.iter().copied());
        return Ok(PairSelection { chosen, cost: shortest_cost, exact: false, ties: 1 });
    }

    let bit = |i: usize| 1u128 << i;
    let mut search = Search {
        adj: adj.iter().map(|n| n.iter().fold(0u128, |m, &j| m | bit(j))).collect(),
        pen: (0..k)
            .map(|i| {
                (0..k)
                    .filter(|&j| penalized(pos[i], pos[j], problem.adjacency, problem.cost))
                    .fold(0u128, |m, j| m | bit(j))
            })
            .collect(),
        dist,
        target: b,
        best_cost: shortest_cost,
        best_set: shortest.iter().fold(0u128, |m, &i| m | bit(i)),
        ties: 0,
        nodes: 0,
        budget: if exact { usize::MAX } else { problem.node_budget },
        truncated: false,
        rng,
    };
    let start = bit(a);
    search.dfs(start, search.adj[a], 0, 0);
    let complete = !search.truncated;
    let chosen = sorted_subs(&region, (0..k).filter(|&i| search.best_set & bit(i) != 0));
    Ok(PairSelection { chosen, cost: search.best_cost, exact: complete, ties: search.ties.max(1) })
}

fn sorted_subs(region: &[SubBlockRef], idx: impl Iterator<Item = usize>) -> Vec<SubBlockRef> {
    // region is already in lattice order
    let mut v: Vec<usize> = idx.collect();
    v.sort_unstable();
    v.into_iter().map(|i| region[i]).collect()
}

fn bfs_distances(adj: &[Vec<usize>], from: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[from] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Walks downhill on `dist` (distances to the target) from `from`.
fn shortest_path(adj: &[Vec<usize>], dist: &[usize], from: usize) -> Vec<usize> {
    let mut path = vec![from];
    let mut u = from;
    while dist[u] > 0 {
        u = *adj[u].iter().find(|&&v| dist[v] + 1 == dist[u]).expect("distance field is consistent");
        path.push(u);
    }
    path
}

struct Search<'r, R> {
    adj: Vec<u128>,
    pen: Vec<u128>,
    dist: Vec<usize>,
    target: usize,
    best_cost: u64,
    best_set: u128,
    ties: usize,
    nodes: usize,
    budget: usize,
    truncated: bool,
    rng: &'r mut R,
}

impl<R: Rng> Search<'_, R> {
    fn dfs(&mut self, set: u128, frontier: u128, banned: u128, cost: u64) {
        self.nodes += 1;
        if self.nodes > self.budget {
            self.truncated = true;
            return;
        }
        if cost > self.best_cost {
            return;
        }
        if set & (1 << self.target) != 0 {
            self.record(set, cost);
            return;
        }
        if frontier == 0 || !self.reaches_target(set, banned) {
            return;
        }
        let v = self.pick(frontier);
        let vb = 1u128 << v;
        let with = set | vb;
        let added = cost + u64::from((self.pen[v] & set).count_ones());
        if added <= self.best_cost {
            self.dfs(with, (frontier | self.adj[v]) & !with & !banned, banned, added);
        }
        if self.truncated {
            return;
        }
        self.dfs(set, frontier & !vb, banned | vb, cost);
    }

    fn record(&mut self, set: u128, cost: u64) {
        if cost < self.best_cost || self.ties == 0 {
            self.best_cost = cost;
            self.best_set = set;
            self.ties = 1;
        } else {
            self.ties += 1;
            if self.rng.random_range(0..self.ties) == 0 {
                self.best_set = set;
            }
        }
    }

    /// Frontier vertex closest to the target, lowest index on ties.
    fn pick(&self, frontier: u128) -> usize {
        let mut best = usize::MAX;
        let mut best_d = usize::MAX;
        let mut m = frontier;
        while m != 0 {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            if self.dist[i] < best_d {
                best_d = self.dist[i];
                best = i;
            }
        }
        best
    }

    fn reaches_target(&self, set: u128, banned: u128) -> bool {
        let goal = 1u128 << self.target;
        let mut reach = set;
        loop {
            if reach & goal != 0 {
                return true;
            }
            let mut next = reach;
            let mut m = reach;
            while m != 0 {
                let i = m.trailing_zeros() as usize;
                m &= m - 1;
                next |= self.adj[i];
            }
            next &= !banned;
            if next == reach {
                return false;
            }
            reach = next;
        }
    }
}

/// Connects each consecutive pivot pair (wrapping around when `cyclic`) and
/// returns the union of the pair paths.
pub fn connect_pivots<R: Rng>(
    problem: &PathProblem<'_>,
    pivots: &[(usize, usize)],
    cyclic: bool,
    rng: &mut R,
) -> Result<PathSelection, SynthError> {
    let n = pivots.len();
    let pairs = if cyclic { n } else { n.saturating_sub(1) };
    let mut union = BTreeSet::new();
    let mut pair_costs = Vec::with_capacity(pairs);
    for i in 0..pairs {
        let sel = connect_pair(problem, pivots[i], pivots[(i + 1) % n], rng)?;
        pair_costs.push(sel.cost);
        union.extend(sel.chosen);
    }
    let g = problem.grid.geometry();
    let mut chosen: Vec<SubBlockRef> = union.into_iter().collect();
    chosen.sort_by_key(|&s| g.sub_position(s));
    let cost = path_cost(g, &chosen, problem.adjacency, problem.cost);
    Ok(PathSelection { chosen, cost, pair_costs })
}

/// Minimum [`path_cost`] over every adjacency-connected subset of `region`
/// holding both pivots' sub-blocks, by plain subset enumeration. `None` when no
/// such subset exists.
pub fn brute_force_min_cost(
    g: &GridGeometry,
    pivots: ((usize, usize), (usize, usize)),
    region: &[SubBlockRef],
    adjacency: Adjacency,
    model: CostModel,
) -> Result<Option<u64>, SynthError> {
    if region.len() > ORACLE_LIMIT {
        return Err(SynthError::OracleBound { size: region.len(), limit: ORACLE_LIMIT });
    }
    let sa = g.sub_of(pivots.0 .0, pivots.0 .1);
    let sb = g.sub_of(pivots.1 .0, pivots.1 .1);
    let (Some(a), Some(b)) = (region.iter().position(|&s| s == sa), region.iter().position(|&s| s == sb)) else {
        return Ok(None);
    };
    let k = region.len();
    let mut best: Option<u64> = None;
    for mask in 0u32..(1u32 << k) {
        if mask & (1 << a) == 0 || mask & (1 << b) == 0 {
            continue;
        }
        let members: Vec<SubBlockRef> = (0..k).filter(|&i| mask & (1 << i) != 0).map(|i| region[i]).collect();
        if !is_connected(g, &members, adjacency) {
            continue;
        }
        let c = path_cost(g, &members, adjacency, model);
        best = Some(best.map_or(c, |b| b.min(c)));
    }
    Ok(best)
}

fn is_connected(g: &GridGeometry, members: &[SubBlockRef], adjacency: Adjacency) -> bool {
    let mut seen = vec![false; members.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..members.len() {
            if !seen[j] && g.are_adjacent(members[i], members[j], adjacency) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}
