// SPDX-License-Identifier: MIT OR Apache-2.0

//! Grid mazes: generation, paths, landmarks and the behavioral feature set.
//!
//! Coordinates are `(col, row)` with `(0, 0)` at the bottom-left of the 25×25
//! grid. The generated region of side `inner_size` sits centered in the grid
//! at offset `(25 - inner_size) / 2`; everything around it is wall.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

/// Side length of the game grid.
pub const GRID: usize = 25;
/// Side of the landmark block in the inner region's top-right corner.
pub const TR_BLOCK: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MazeError {
    #[error("inner size {0} must be odd and within 3..=25")]
    InvalidSize(usize),
    #[error("square {0} is not free")]
    NotFree(Coord),
    #[error("square {0} is outside the grid")]
    OutOfBounds(Coord),
    #[error("square {0} is not free")]
    TargetNotFree(Coord),
    #[error("edit violates the maze invariant `{0}`")]
    EditBreaksTreeInvariant(Invariant),
    #[error("maze has no decision square for this cheese")]
    NoDecisionSquare,
    #[error("maze has no cheese")]
    NoCheese,
    #[error("malformed maze: {0}")]
    Malformed(String),
}

/// Structural properties every non-synthetic maze satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariant {
    /// Cells outside the inner region are walls.
    Padding,
    /// Free cells form one component.
    Connected,
    /// Free cells contain no cycle.
    Acyclic,
    /// The agent stands on a free cell.
    AgentOnFree,
    /// The cheese, if any, lies on a free cell.
    CheeseOnFree,
}

impl Invariant {
    pub fn name(self) -> &'static str {
        match self {
            Invariant::Padding => "padding",
            Invariant::Connected => "connected",
            Invariant::Acyclic => "acyclic",
            Invariant::AgentOnFree => "agent_on_free",
            Invariant::CheeseOnFree => "cheese_on_free",
        }
    }
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Coord {
    pub col: usize,
    pub row: usize,
}

impl Coord {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }

    pub fn in_grid(self) -> bool {
        self.col < GRID && self.row < GRID
    }

    /// Neighbor one step in `action`'s direction, if it stays on the grid.
    pub fn step(self, action: Action) -> Option<Coord> {
        let (dc, dr) = action.delta();
        let col = self.col as isize + dc;
        let row = self.row as isize + dr;
        if (0..GRID as isize).contains(&col) && (0..GRID as isize).contains(&row) {
            Some(Coord::new(col as usize, row as usize))
        } else {
            None
        }
    }

    pub fn euclid(self, other: Coord) -> f64 {
        let dc = self.col as f64 - other.col as f64;
        let dr = self.row as f64 - other.row as f64;
        dc.hypot(dr)
    }

    pub fn chebyshev(self, other: Coord) -> usize {
        self.col.abs_diff(other.col).max(self.row.abs_diff(other.row))
    }

    fn index(self) -> usize {
        self.row * GRID + self.col
    }

    fn from_index(i: usize) -> Coord {
        Coord::new(i % GRID, i / GRID)
    }
}

impl From<[usize; 2]> for Coord {
    fn from([col, row]: [usize; 2]) -> Self {
        Coord::new(col, row)
    }
}

impl From<Coord> for [usize; 2] {
    fn from(c: Coord) -> Self {
        [c.col, c.row]
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.col, self.row)
    }
}

/// The five actions, in the canonical order used for distributions and
/// for breaking argmax ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Up,
    Right,
    Down,
    Left,
    Noop,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Up, Action::Right, Action::Down, Action::Left, Action::Noop];
    pub const MOVES: [Action; 4] = [Action::Up, Action::Right, Action::Down, Action::Left];

    pub fn index(self) -> usize {
        self as usize
    }

    /// `(dcol, drow)`; up increases the row.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (0, 1),
            Action::Right => (1, 0),
            Action::Down => (0, -1),
            Action::Left => (-1, 0),
            Action::Noop => (0, 0),
        }
    }

    fn between(a: Coord, b: Coord) -> Action {
        Action::ALL
            .into_iter()
            .find(|&act| a.step(act) == Some(b))
            .expect("squares are 4-adjacent")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Wall,
    Free,
}

/// A sequence of 4-adjacent free squares and the moves linking them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub squares: Vec<Coord>,
    pub actions: Vec<Action>,
}

impl Path {
    fn from_squares(squares: Vec<Coord>) -> Path {
        let actions = squares.windows(2).map(|w| Action::between(w[0], w[1])).collect();
        Path { squares, actions }
    }

    /// Number of moves.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// How to place cheese after generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CheesePlacement {
    /// Uniform over free squares other than the agent's, drawn from `seed`.
    Uniform { seed: u64 },
    /// A fixed square.
    Fixed { at: Coord },
    /// Uniform over the free squares of the top-right 5×5 block.
    TopRight { seed: u64 },
}

/// The world model: wall grid plus cheese and agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MazeState {
    grid: Vec<Cell>,
    inner_size: usize,
    pub cheese: Option<Coord>,
    pub agent: Coord,
    pub seed: u64,
    /// Set on states built only for contrast computations; they may contain
    /// cycles or free padding and are exempt from the tree invariants.
    pub synthetic: bool,
}

/// Offset of the inner region on both axes.
pub fn inner_offset(inner_size: usize) -> usize {
    (GRID - inner_size) / 2
}

/// Accepts odd inner sizes from 3 to the grid side.
pub fn check_size(inner_size: usize) -> Result<(), MazeError> {
    if inner_size % 2 == 1 && (3..=GRID).contains(&inner_size) {
        Ok(())
    } else {
        Err(MazeError::InvalidSize(inner_size))
    }
}

/// Randomized Kruskal over the node lattice of the inner region.
///
/// Nodes are the cells with even local coordinates; every edge of the node
/// lattice is shuffled with [`SplitMix64`] seeded by `seed`, then accepted
/// when it joins two components. Accepted edges open the cell between their
/// nodes.
pub fn generate_maze(seed: u64, inner_size: usize) -> Result<MazeState, MazeError> {
    check_size(inner_size)?;
    let k = inner_size.div_ceil(2);
    let off = inner_offset(inner_size);
    let mut grid = vec![Cell::Wall; GRID * GRID];
    let node = |i: usize, j: usize| Coord::new(off + 2 * i, off + 2 * j);
    for i in 0..k {
        for j in 0..k {
            grid[node(i, j).index()] = Cell::Free;
        }
    }

    // Edge (a, b) between node ids a = j*k + i; horizontal edges first.
    let mut edges = Vec::with_capacity(2 * k * (k - 1));
    for j in 0..k {
        for i in 0..k - 1 {
            edges.push((j * k + i, j * k + i + 1));
        }
    }
    for j in 0..k - 1 {
        for i in 0..k {
            edges.push((j * k + i, (j + 1) * k + i));
        }
    }
    let mut rng = SplitMix64::new(seed);
    rng.shuffle(&mut edges);

    let mut uf = UnionFind::new(k * k);
    for (a, b) in edges {
        if uf.union(a, b) {
            let (ai, aj) = (a % k, a / k);
            let (bi, bj) = (b % k, b / k);
            let between = Coord::new(off + ai + bi, off + aj + bj);
            grid[between.index()] = Cell::Free;
        }
    }

    let mut m = MazeState {
        grid,
        inner_size,
        cheese: None,
        agent: Coord::new(0, 0),
        seed,
        synthetic: false,
    };
    m.agent = m.start_square();
    Ok(m)
}

impl MazeState {
    /// An inner region with every cell open; useful for tests, not a tree.
    pub fn open(inner_size: usize) -> Result<MazeState, MazeError> {
        check_size(inner_size)?;
        let mut m = MazeState::walled(inner_size);
        let (lo, hi) = m.inner_range();
        for row in lo..hi {
            for col in lo..hi {
                m.grid[Coord::new(col, row).index()] = Cell::Free;
            }
        }
        m.agent = m.start_square();
        m.synthetic = true;
        Ok(m)
    }

    /// Every cell a wall, agent parked at the grid origin. Not a valid maze on
    /// its own; a base for hand-built layouts.
    pub fn walled(inner_size: usize) -> MazeState {
        MazeState {
            grid: vec![Cell::Wall; GRID * GRID],
            inner_size,
            cheese: None,
            agent: Coord::new(0, 0),
            seed: 0,
            synthetic: true,
        }
    }

    /// Build from explicit free cells; used for hand-made layouts.
    pub fn from_free_cells(
        inner_size: usize,
        free: impl IntoIterator<Item = Coord>,
        agent: Coord,
    ) -> Result<MazeState, MazeError> {
        check_size(inner_size)?;
        let mut m = MazeState::walled(inner_size);
        for c in free {
            if !c.in_grid() {
                return Err(MazeError::OutOfBounds(c));
            }
            m.grid[c.index()] = Cell::Free;
        }
        m.agent = agent;
        m.synthetic = false;
        m.check_invariants()
            .map_err(|inv| MazeError::Malformed(format!("invariant `{inv}` violated")))?;
        Ok(m)
    }

    pub fn inner_size(&self) -> usize {
        self.inner_size
    }

    /// Half-open `[lo, hi)` range of the inner region on either axis.
    pub fn inner_range(&self) -> (usize, usize) {
        let lo = inner_offset(self.inner_size);
        (lo, lo + self.inner_size)
    }

    pub fn in_inner(&self, c: Coord) -> bool {
        let (lo, hi) = self.inner_range();
        (lo..hi).contains(&c.col) && (lo..hi).contains(&c.row)
    }

    pub fn cell(&self, c: Coord) -> Cell {
        if c.in_grid() {
            self.grid[c.index()]
        } else {
            Cell::Wall
        }
    }

    pub fn is_free(&self, c: Coord) -> bool {
        self.cell(c) == Cell::Free
    }

    pub fn set_cell(&mut self, c: Coord, cell: Cell) {
        self.grid[c.index()] = cell;
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..GRID * GRID).filter(|&i| self.grid[i] == Cell::Free).map(Coord::from_index)
    }

    fn free_neighbors(&self, c: Coord) -> impl Iterator<Item = Coord> + '_ {
        Action::MOVES.into_iter().filter_map(move |a| c.step(a)).filter(|&n| self.is_free(n))
    }

    /// Bottom-left free cell of the inner region: lowest row, then lowest column.
    pub fn start_square(&self) -> Coord {
        let (lo, hi) = self.inner_range();
        (lo..hi)
            .flat_map(|row| (lo..hi).map(move |col| Coord::new(col, row)))
            .find(|&c| self.is_free(c))
            .unwrap_or(Coord::new(lo, lo))
    }

    pub fn with_cheese(&self, cheese: Option<Coord>) -> MazeState {
        MazeState { cheese, ..self.clone() }
    }

    pub fn with_agent(&self, agent: Coord) -> MazeState {
        MazeState { agent, ..self.clone() }
    }

    /// Place cheese per `placement`; errors when the chosen square is not free.
    pub fn place_cheese(&self, placement: CheesePlacement) -> Result<MazeState, MazeError> {
        let pick = |cands: Vec<Coord>, seed: u64| -> Result<Coord, MazeError> {
            if cands.is_empty() {
                return Err(MazeError::NoCheese);
            }
            let mut rng = SplitMix64::new(seed ^ 0xC4EE_5E00_C4EE_5E00);
            Ok(cands[rng.below(cands.len())])
        };
        let at = match placement {
            CheesePlacement::Fixed { at } => at,
            CheesePlacement::Uniform { seed } => {
                pick(self.free_cells().filter(|&c| c != self.agent).collect(), seed)?
            }
            CheesePlacement::TopRight { seed } => {
                let block = self.top_right_block();
                pick(block.into_iter().filter(|&c| c != self.agent).collect(), seed)?
            }
        };
        if !at.in_grid() {
            return Err(MazeError::OutOfBounds(at));
        }
        if !self.is_free(at) {
            return Err(MazeError::TargetNotFree(at));
        }
        Ok(self.with_cheese(Some(at)))
    }

    /// Free cells of the top-right 5×5 block of the inner region (the whole
    /// inner region when it is smaller than 5).
    pub fn top_right_block(&self) -> Vec<Coord> {
        let (lo, hi) = self.inner_range();
        let start = hi.saturating_sub(TR_BLOCK).max(lo);
        (start..hi)
            .flat_map(|row| (start..hi).map(move |col| Coord::new(col, row)))
            .filter(|&c| self.is_free(c))
            .collect()
    }

    pub fn in_top_right_block(&self, c: Coord) -> bool {
        let (lo, hi) = self.inner_range();
        let start = hi.saturating_sub(TR_BLOCK).max(lo);
        (start..hi).contains(&c.col) && (start..hi).contains(&c.row)
    }

    /// Breadth-first distances from `from` over free cells.
    pub fn distances_from(&self, from: Coord) -> Vec<Option<usize>> {
        self.multi_source_distances(std::iter::once(from))
    }

    fn multi_source_distances(&self, sources: impl IntoIterator<Item = Coord>) -> Vec<Option<usize>> {
        let mut dist = vec![None; GRID * GRID];
        let mut queue = VecDeque::new();
        for s in sources {
            if self.is_free(s) && dist[s.index()].is_none() {
                dist[s.index()] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(c) = queue.pop_front() {
            let d = dist[c.index()].unwrap_or(0);
            for n in self.free_neighbors(c) {
                if dist[n.index()].is_none() {
                    dist[n.index()] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// The shortest path from `a` to `b`; unique when the maze is a tree.
    pub fn shortest_path(&self, a: Coord, b: Coord) -> Result<Path, MazeError> {
        for c in [a, b] {
            if !c.in_grid() {
                return Err(MazeError::OutOfBounds(c));
            }
            if !self.is_free(c) {
                return Err(MazeError::NotFree(c));
            }
        }
        // Distances from b, then walk downhill from a; neighbor order fixes
        // the choice in synthetic mazes that contain cycles.
        let dist = self.distances_from(b);
        let mut here = a;
        let mut squares = vec![a];
        let Some(mut d) = dist[a.index()] else {
            return Err(MazeError::NotFree(b));
        };
        while d > 0 {
            here = self
                .free_neighbors(here)
                .find(|n| dist[n.index()] == Some(d - 1))
                .expect("a neighbor one step closer exists");
            squares.push(here);
            d -= 1;
        }
        Ok(Path::from_squares(squares))
    }

    pub fn path_distance(&self, a: Coord, b: Coord) -> Option<usize> {
        self.distances_from(a)[b.index()]
    }

    /// Free cell connected to the agent maximizing `col + row`; ties go to
    /// the larger row.
    pub fn reachable_top_right(&self) -> Coord {
        let dist = self.distances_from(self.agent);
        (0..GRID * GRID)
            .filter(|&i| dist[i].is_some())
            .map(Coord::from_index)
            .max_by_key(|c| (c.col + c.row, c.row))
            .unwrap_or(self.agent)
    }

    /// Last common square of the agent's paths to `cheese` and to the
    /// reachable top-right; `None` when one path is a prefix of the other.
    pub fn decision_square(&self, cheese: Coord) -> Result<Option<Coord>, MazeError> {
        if !self.is_free(cheese) {
            return Err(MazeError::NotFree(cheese));
        }
        let to_cheese = self.shortest_path(self.agent, cheese)?;
        let to_corner = self.shortest_path(self.agent, self.reachable_top_right())?;
        let common = to_cheese
            .squares
            .iter()
            .zip(&to_corner.squares)
            .take_while(|(x, y)| x == y)
            .count();
        if common == to_cheese.squares.len() || common == to_corner.squares.len() {
            Ok(None)
        } else {
            Ok(Some(to_cheese.squares[common - 1]))
        }
    }

    /// The eleven landmark features for `cheese`, with the agent's current
    /// square as the start.
    pub fn extract_features(&self, cheese: Coord) -> Result<FeatureRow, MazeError> {
        let decision = self.decision_square(cheese)?.ok_or(MazeError::NoDecisionSquare)?;
        let corner = self.reachable_top_right();
        let block = self.top_right_block();

        let d_cheese = self.distances_from(cheese);
        let d_decision = self.distances_from(decision);
        let to_block = |dist: &[Option<usize>], from: Coord| -> (f64, f64) {
            let d2 = block.iter().map(|&b| from.euclid(b)).fold(f64::INFINITY, f64::min);
            let dp = block.iter().filter_map(|&b| dist[b.index()]).min();
            (d2, dp.map_or(f64::INFINITY, |d| d as f64))
        };
        let to_point = |dist: &[Option<usize>], from: Coord, to: Coord| -> (f64, f64) {
            (from.euclid(to), dist[to.index()].map_or(f64::INFINITY, |d| d as f64))
        };

        let mut values = [0.0; FEATURE_COUNT];
        let pairs = [
            to_block(&d_cheese, cheese),
            to_block(&d_decision, decision),
            to_point(&d_cheese, cheese, decision),
            to_point(&d_cheese, cheese, corner),
            to_point(&d_decision, decision, corner),
        ];
        for (i, (d2, dp)) in pairs.into_iter().enumerate() {
            values[2 * i] = d2;
            values[2 * i + 1] = dp;
        }
        values[10] = (cheese.col as f64).hypot(cheese.row as f64);
        Ok(FeatureRow { values, reached_cheese: None, seed: self.seed })
    }

    /// For each free cell, the path distance to the nearest square on the
    /// start square's path to the reachable top-right.
    pub fn distance_from_top_right_path(&self) -> Vec<Vec<Option<usize>>> {
        let start = self.start_square();
        let origin = self.with_agent(start);
        let path = origin
            .shortest_path(start, origin.reachable_top_right())
            .map(|p| p.squares)
            .unwrap_or_default();
        let dist = self.multi_source_distances(path);
        (0..GRID)
            .map(|row| (0..GRID).map(|col| dist[Coord::new(col, row).index()]).collect())
            .collect()
    }

    /// Check the structural invariants; reports the first one violated.
    pub fn check_invariants(&self) -> Result<(), Invariant> {
        if self.grid.iter().enumerate().any(|(i, &c)| c == Cell::Free && !self.in_inner(Coord::from_index(i))) {
            return Err(Invariant::Padding);
        }
        if !self.is_free(self.agent) {
            return Err(Invariant::AgentOnFree);
        }
        if let Some(c) = self.cheese {
            if !self.is_free(c) {
                return Err(Invariant::CheeseOnFree);
            }
        }
        let free: Vec<Coord> = self.free_cells().collect();
        let mut uf = UnionFind::new(GRID * GRID);
        for &c in &free {
            for n in [c.step(Action::Right), c.step(Action::Up)].into_iter().flatten() {
                if self.is_free(n) && !uf.union(c.index(), n.index()) {
                    return Err(Invariant::Acyclic);
                }
            }
        }
        let root = uf.find(self.agent.index());
        if free.iter().any(|c| uf.find(c.index()) != root) {
            return Err(Invariant::Connected);
        }
        Ok(())
    }

    /// Apply one edit, returning the new state. Wall toggles must keep the
    /// free cells a tree inside the inner region.
    pub fn edit(&self, edit: MazeEdit) -> Result<MazeState, MazeError> {
        let target = match edit {
            MazeEdit::ToggleWall { at } | MazeEdit::PlaceCheese { at } | MazeEdit::MoveAgent { at } => Some(at),
            MazeEdit::ClearCheese => None,
        };
        if let Some(at) = target {
            if !at.in_grid() {
                return Err(MazeError::OutOfBounds(at));
            }
        }
        let mut next = self.clone();
        match edit {
            MazeEdit::ToggleWall { at } => {
                let flipped = match self.cell(at) {
                    Cell::Wall => Cell::Free,
                    Cell::Free => Cell::Wall,
                };
                next.grid[at.index()] = flipped;
                next.check_invariants().map_err(MazeError::EditBreaksTreeInvariant)?;
            }
            MazeEdit::PlaceCheese { at } => {
                if !self.is_free(at) {
                    return Err(MazeError::TargetNotFree(at));
                }
                next.cheese = Some(at);
            }
            MazeEdit::ClearCheese => next.cheese = None,
            MazeEdit::MoveAgent { at } => {
                if !self.is_free(at) {
                    return Err(MazeError::TargetNotFree(at));
                }
                next.agent = at;
            }
        }
        Ok(next)
    }

    /// Rows of `'#'`/`'.'`, top row first.
    pub fn grid_rows(&self) -> Vec<String> {
        (0..GRID)
            .rev()
            .map(|row| {
                (0..GRID)
                    .map(|col| if self.is_free(Coord::new(col, row)) { '.' } else { '#' })
                    .collect()
            })
            .collect()
    }
}

/// One maze edit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MazeEdit {
    ToggleWall { at: Coord },
    PlaceCheese { at: Coord },
    ClearCheese,
    MoveAgent { at: Coord },
}

/// Number of landmark features.
pub const FEATURE_COUNT: usize = 11;

/// Canonical feature names, in column order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "d2_cheese_tr5x5",
    "dpath_cheese_tr5x5",
    "d2_decision_tr5x5",
    "dpath_decision_tr5x5",
    "d2_cheese_decision",
    "dpath_cheese_decision",
    "d2_cheese_trsquare",
    "dpath_cheese_trsquare",
    "d2_decision_trsquare",
    "dpath_decision_trsquare",
    "cheese_coord_norm",
];

/// Landmark features for one maze plus the rollout label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub values: [f64; FEATURE_COUNT],
    pub reached_cheese: Option<bool>,
    pub seed: u64,
}

impl FeatureRow {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|&n| n == name).map(|i| self.values[i])
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

// --- JSON form ---------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MazeJson {
    seed: u64,
    inner_size: usize,
    grid: Vec<String>,
    cheese: Option<Coord>,
    agent: Coord,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    synthetic: bool,
}

impl Serialize for MazeState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MazeJson {
            seed: self.seed,
            inner_size: self.inner_size,
            grid: self.grid_rows(),
            cheese: self.cheese,
            agent: self.agent,
            synthetic: self.synthetic,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MazeState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let j = MazeJson::deserialize(d)?;
        let m = MazeState::from_json_parts(j).map_err(D::Error::custom)?;
        Ok(m)
    }
}

impl MazeState {
    fn from_json_parts(j: MazeJson) -> Result<MazeState, MazeError> {
        check_size(j.inner_size)?;
        if j.grid.len() != GRID {
            return Err(MazeError::Malformed(format!("expected {GRID} grid rows, got {}", j.grid.len())));
        }
        let mut grid = vec![Cell::Wall; GRID * GRID];
        for (k, line) in j.grid.iter().enumerate() {
            let row = GRID - 1 - k;
            let chars: Vec<char> = line.chars().collect();
            if chars.len() != GRID {
                return Err(MazeError::Malformed(format!("grid row {k} has {} cells", chars.len())));
            }
            for (col, ch) in chars.into_iter().enumerate() {
                grid[Coord::new(col, row).index()] = match ch {
                    '.' => Cell::Free,
                    '#' => Cell::Wall,
                    other => return Err(MazeError::Malformed(format!("unexpected grid character {other:?}"))),
                };
            }
        }
        for c in std::iter::once(j.agent).chain(j.cheese) {
            if !c.in_grid() {
                return Err(MazeError::OutOfBounds(c));
            }
        }
        let m = MazeState {
            grid,
            inner_size: j.inner_size,
            cheese: j.cheese,
            agent: j.agent,
            seed: j.seed,
            synthetic: j.synthetic,
        };
        if !m.synthetic {
            m.check_invariants()
                .map_err(|inv| MazeError::Malformed(format!("invariant `{inv}` violated")))?;
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_three_counts() {
        let m = generate_maze(0, 3).unwrap();
        let free: Vec<_> = m.free_cells().collect();
        // 4 nodes + 3 opened edge cells
        assert_eq!(free.len(), 7);
        assert!(m.check_invariants().is_ok());
        assert_eq!(m.agent, Coord::new(11, 11));
    }

    #[test]
    fn rejects_bad_sizes() {
        for n in [0, 1, 2, 4, 26, 27] {
            assert_eq!(generate_maze(0, n).unwrap_err(), MazeError::InvalidSize(n));
        }
    }

    #[test]
    fn json_round_trip() {
        let m = generate_maze(4, 9).unwrap().place_cheese(CheesePlacement::Uniform { seed: 1 }).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: MazeState = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn bottom_row_printed_last() {
        let m = generate_maze(2, 25).unwrap();
        let rows = m.grid_rows();
        assert_eq!(rows[24].chars().next(), Some('.'));
    }
}
