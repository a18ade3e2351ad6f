//! Occupancy-grid world model and deterministic grid planning.
//!
//! Maps live on a uniform grid with cell `(0, 0)` at the lower-left corner of
//! the world; the world position of that corner is the map origin (fixed at
//! `(0, 0)` by the text format). Cell indices grow rightward in x and upward
//! in y. The text serialization stores rows top-down:
//!
//! ```text
//! width height resolution
//! ....#
//! ....#
//! .....
//! ```
//!
//! where `.` is free and `#` is occupied, and the first character row is the
//! top of the map.

use crate::base::Vec3;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("grid dimensions must be at least 1x1, got {0}x{1}")]
    EmptyGrid(usize, usize),
    #[error("resolution must be finite and > 0, got {0}")]
    BadResolution(f64),
    #[error("map header must be `width height resolution`: {0}")]
    BadHeader(String),
    #[error("map row {row} has {got} cells, expected {want}")]
    BadRowLength { row: usize, got: usize, want: usize },
    #[error("map has {got} rows, expected {want}")]
    BadRowCount { got: usize, want: usize },
    #[error("unknown map cell character {0:?} at row {1}, column {2}")]
    BadCell(char, usize, usize),
    #[error("inflation radius must be finite and >= 0, got {0}")]
    BadRadius(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("{0} position ({1:.3}, {2:.3}) is outside the map")]
    OutOfBounds(&'static str, f64, f64),
    #[error("{0} cell ({1}, {2}) is occupied")]
    Occupied(&'static str, usize, usize),
    #[error("no 8-connected path between start and goal")]
    NoPath,
}

/// Pre-inflation occupancy retained so that repeated inflation does not
/// compound: inflating an already inflated map re-dilates the original cells.
#[derive(Debug, Clone, PartialEq)]
struct Inflation {
    base: Vec<bool>,
    radius: f64,
}

/// Uniform planar occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Vec3,
    occupancy: Vec<bool>,
    inflation: Option<Inflation>,
}

impl GridMap {
    /// All-free map with the origin at world `(0, 0)`.
    pub fn new(width: usize, height: usize, resolution: f64) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::EmptyGrid(width, height));
        }
        if !resolution.is_finite() || resolution <= 0.0 {
            return Err(MapError::BadResolution(resolution));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin: Vec3::zeros(),
            occupancy: vec![false; width * height],
            inflation: None,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// World position of the lower-left corner of cell `(0, 0)`.
    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn in_bounds(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height
    }

    fn idx(&self, x: usize, y: usize) -> usize {
        debug_assert!(self.in_bounds(x, y));
        y * self.width + x
    }

    pub fn is_occupied(&self, x: usize, y: usize) -> bool {
        self.occupancy[self.idx(x, y)]
    }

    /// Marks a cell; editing drops any recorded inflation provenance.
    pub fn set_occupied(&mut self, x: usize, y: usize, occupied: bool) {
        let i = self.idx(x, y);
        self.occupancy[i] = occupied;
        self.inflation = None;
    }

    /// World center of a cell.
    pub fn cell_center(&self, x: usize, y: usize) -> Vec3 {
        self.origin
            + Vec3::new(
                (x as f64 + 0.5) * self.resolution,
                (y as f64 + 0.5) * self.resolution,
                0.0,
            )
    }

    /// Cell containing a world position, or `None` outside the map.
    pub fn world_to_cell(&self, p: Vec3) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.resolution;
        let fy = (p.y - self.origin.y) / self.resolution;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (x, y) = (fx.floor() as usize, fy.floor() as usize);
        if self.in_bounds(x, y) {
            Some((x, y))
        } else {
            None
        }
    }

    /// Parses the `width height resolution` + rows text form. Row 0 of the
    /// text is the top of the map.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
        let header = lines.next().unwrap_or("");
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(MapError::BadHeader(header.to_string()));
        }
        let width: usize = fields[0]
            .parse()
            .map_err(|_| MapError::BadHeader(header.to_string()))?;
        let height: usize = fields[1]
            .parse()
            .map_err(|_| MapError::BadHeader(header.to_string()))?;
        let resolution: f64 = fields[2]
            .parse()
            .map_err(|_| MapError::BadHeader(header.to_string()))?;
        let mut map = Self::new(width, height, resolution)?;
        let rows: Vec<&str> = lines.filter(|l| !l.is_empty()).collect();
        if rows.len() != height {
            return Err(MapError::BadRowCount { got: rows.len(), want: height });
        }
        for (r, row) in rows.iter().enumerate() {
            let cells: Vec<char> = row.chars().collect();
            if cells.len() != width {
                return Err(MapError::BadRowLength { row: r, got: cells.len(), want: width });
            }
            let y = height - 1 - r;
            for (x, &c) in cells.iter().enumerate() {
                match c {
                    '.' => {}
                    '#' => map.occupancy[y * width + x] = true,
                    other => return Err(MapError::BadCell(other, r, x)),
                }
            }
        }
        Ok(map)
    }

    /// Inverse of [`GridMap::parse`].
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.width, self.height, self.resolution);
        for r in 0..self.height {
            let y = self.height - 1 - r;
            for x in 0..self.width {
                out.push(if self.is_occupied(x, y) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Centers of occupied cells that touch at least one free cell through
    /// 8-adjacency, ordered by `(y, x)`. Cells at the map edge count as
    /// interior on the out-of-map side.
    pub fn extract_obstacle_points(&self) -> Vec<Vec3> {
        let mut points = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.is_occupied(x, y) {
                    continue;
                }
                let boundary = NEIGHBORS.iter().any(|&(dx, dy)| {
                    let nx = x as isize + dx;
                    let ny = y as isize + dy;
                    nx >= 0
                        && ny >= 0
                        && self.in_bounds(nx as usize, ny as usize)
                        && !self.is_occupied(nx as usize, ny as usize)
                });
                if boundary {
                    points.push(self.cell_center(x, y));
                }
            }
        }
        points
    }

    /// Dilates the occupied set: every cell whose center lies within `radius`
    /// of an occupied cell center becomes occupied. Re-inflating an inflated
    /// map dilates the original occupancy again, so the operation is
    /// idempotent for a fixed radius.
    pub fn inflate_obstacles(&self, radius: f64) -> Result<Self, MapError> {
        if !radius.is_finite() || radius < 0.0 {
            return Err(MapError::BadRadius(radius));
        }
        let base: &Vec<bool> = match &self.inflation {
            Some(inf) => &inf.base,
            None => &self.occupancy,
        };
        let reach = (radius / self.resolution).floor() as isize;
        let r2 = (radius / self.resolution) * (radius / self.resolution);
        let mut occupancy = vec![false; self.width * self.height];
        for y in 0..self.height as isize {
            for x in 0..self.width as isize {
                if !base[y as usize * self.width + x as usize] {
                    continue;
                }
                for dy in -reach..=reach {
                    for dx in -reach..=reach {
                        if (dx * dx + dy * dy) as f64 > r2 + 1e-12 {
                            continue;
                        }
                        let (nx, ny) = (x + dx, y + dy);
                        if nx >= 0
                            && ny >= 0
                            && (nx as usize) < self.width
                            && (ny as usize) < self.height
                        {
                            occupancy[ny as usize * self.width + nx as usize] = true;
                        }
                    }
                }
            }
        }
        Ok(Self {
            width: self.width,
            height: self.height,
            resolution: self.resolution,
            origin: self.origin,
            occupancy,
            inflation: Some(Inflation { base: base.clone(), radius }),
        })
    }
}

/// Fixed neighbor order: cardinals then diagonals, each in `(dx, dy)`
/// lexicographic order, so relaxation order never depends on map content.
const NEIGHBORS: [(isize, isize); 8] = [
    (-1, 0),
    (0, -1),
    (0, 1),
    (1, 0),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
];

fn step_cost(dx: isize, dy: isize) -> f64 {
    if dx != 0 && dy != 0 {
        std::f64::consts::SQRT_2
    } else {
        1.0
    }
}

/// 8-connected grid path found by Dijkstra.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    /// Traversed cells from start to goal inclusive.
    pub cells: Vec<(usize, usize)>,
    /// Cell centers in world coordinates, parallel to `cells`.
    pub world_points: Vec<Vec3>,
    /// Path cost in world meters (cell cost scaled by the map resolution).
    pub cost: f64,
}

/// Heap entry ordered by cost, ties broken by lexicographic `(y, x)` so the
/// planner is deterministic across runs.
#[derive(Debug, PartialEq)]
struct HeapEntry {
    cost: f64,
    cell: (usize, usize),
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; reverse for smallest-first.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| (other.cell.1, other.cell.0).cmp(&(self.cell.1, self.cell.0)))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-cost 8-connected path between the cells containing `start` and
/// `goal`: unit cost per cardinal step, sqrt(2) per diagonal step. Cost ties
/// are resolved by lexicographic cell order, so equal-cost queries always
/// return the same path.
pub fn plan_dijkstra(map: &GridMap, start: Vec3, goal: Vec3) -> Result<DiscretePath, PlanError> {
    let s = map
        .world_to_cell(start)
        .ok_or(PlanError::OutOfBounds("start", start.x, start.y))?;
    let g = map
        .world_to_cell(goal)
        .ok_or(PlanError::OutOfBounds("goal", goal.x, goal.y))?;
    plan_dijkstra_cells(map, s, g)
}

/// Cell-level entry point used by [`plan_dijkstra`] and by tests that work in
/// grid coordinates directly.
pub fn plan_dijkstra_cells(
    map: &GridMap,
    start: (usize, usize),
    goal: (usize, usize),
) -> Result<DiscretePath, PlanError> {
    if map.is_occupied(start.0, start.1) {
        return Err(PlanError::Occupied("start", start.0, start.1));
    }
    if map.is_occupied(goal.0, goal.1) {
        return Err(PlanError::Occupied("goal", goal.0, goal.1));
    }

    let n = map.width * map.height;
    let mut dist = vec![f64::INFINITY; n];
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[map.idx(start.0, start.1)] = 0.0;
    heap.push(HeapEntry { cost: 0.0, cell: start });

    while let Some(HeapEntry { cost, cell }) = heap.pop() {
        let ci = map.idx(cell.0, cell.1);
        if done[ci] {
            continue;
        }
        done[ci] = true;
        if cell == goal {
            break;
        }
        for &(dx, dy) in &NEIGHBORS {
            let nx = cell.0 as isize + dx;
            let ny = cell.1 as isize + dy;
            if nx < 0 || ny < 0 {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if !map.in_bounds(nx, ny) || map.is_occupied(nx, ny) {
                continue;
            }
            let ni = map.idx(nx, ny);
            let next = cost + step_cost(dx, dy);
            if next < dist[ni] {
                dist[ni] = next;
                prev[ni] = Some(cell);
                heap.push(HeapEntry { cost: next, cell: (nx, ny) });
            }
        }
    }

    let gi = map.idx(goal.0, goal.1);
    if dist[gi].is_infinite() {
        return Err(PlanError::NoPath);
    }
    let mut cells = vec![goal];
    let mut cur = goal;
    while cur != start {
        cur = prev[map.idx(cur.0, cur.1)].expect("reached cell must have a predecessor");
        cells.push(cur);
    }
    cells.reverse();
    let world_points = cells.iter().map(|&(x, y)| map.cell_center(x, y)).collect();
    Ok(DiscretePath {
        cells,
        world_points,
        cost: dist[gi] * map.resolution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map_from(text: &str) -> GridMap {
        GridMap::parse(text).unwrap()
    }

    /// Brute-force oracle: enumerate every simple 8-connected path by DFS and
    /// return the minimum cost. Only usable on tiny grids.
    fn brute_force_cost(map: &GridMap, start: (usize, usize), goal: (usize, usize)) -> Option<f64> {
        fn dfs(
            map: &GridMap,
            cur: (usize, usize),
            goal: (usize, usize),
            visited: &mut Vec<bool>,
            cost: f64,
            best: &mut Option<f64>,
        ) {
            if cur == goal {
                *best = Some(best.map_or(cost, |b: f64| b.min(cost)));
                return;
            }
            for &(dx, dy) in &NEIGHBORS {
                let nx = cur.0 as isize + dx;
                let ny = cur.1 as isize + dy;
                if nx < 0 || ny < 0 {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if !map.in_bounds(nx, ny) || map.is_occupied(nx, ny) {
                    continue;
                }
                let i = ny * map.width() + nx;
                if visited[i] {
                    continue;
                }
                visited[i] = true;
                dfs(map, (nx, ny), goal, visited, cost + step_cost(dx, dy), best);
                visited[i] = false;
            }
        }
        if map.is_occupied(start.0, start.1) || map.is_occupied(goal.0, goal.1) {
            return None;
        }
        let mut visited = vec![false; map.width() * map.height()];
        visited[start.1 * map.width() + start.0] = true;
        let mut best = None;
        dfs(map, start, goal, &mut visited, 0.0, &mut best);
        best
    }

    #[test]
    fn empty_grid_goes_diagonally() {
        let map = GridMap::new(5, 5, 1.0).unwrap();
        let path = plan_dijkstra_cells(&map, (0, 0), (4, 4)).unwrap();
        assert_eq!(path.cells.len(), 5);
        assert!((path.cost - 4.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
        for (i, &(x, y)) in path.cells.iter().enumerate() {
            assert_eq!((x, y), (i, i));
        }
    }

    // Center column blocked in its two lower rows; the only way around is the
    // top row. Cost cross-checked against exhaustive path enumeration.
    #[test]
    fn blocked_column_routes_around() {
        let map = map_from("3 3 1.0\n.#.\n.#.\n...\n");
        assert!(map.is_occupied(1, 1) && map.is_occupied(1, 2));
        assert!(!map.is_occupied(1, 0));
        let path = plan_dijkstra_cells(&map, (0, 1), (2, 1)).unwrap();
        assert!(path.cells.iter().any(|&(_, y)| y == 0));
        let oracle = brute_force_cost(&map, (0, 1), (2, 1)).unwrap();
        assert!((path.cost - oracle).abs() < 1e-12);
        assert!((oracle - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn walled_goal_is_unreachable() {
        let map = map_from("4 3 0.5\n..#.\n..#.\n..#.\n");
        assert_eq!(plan_dijkstra_cells(&map, (0, 0), (3, 0)), Err(PlanError::NoPath));
    }

    #[test]
    fn world_positions_are_converted() {
        let map = GridMap::new(4, 4, 0.5).unwrap();
        let path = plan_dijkstra(&map, Vec3::new(0.1, 0.1, 0.0), Vec3::new(1.9, 0.1, 0.0)).unwrap();
        assert_eq!(path.cells.first(), Some(&(0, 0)));
        assert_eq!(path.cells.last(), Some(&(3, 0)));
        assert!(plan_dijkstra(&map, Vec3::new(-0.1, 0.0, 0.0), Vec3::zeros()).is_err());
    }

    #[test]
    fn occupied_endpoints_are_rejected() {
        let mut map = GridMap::new(3, 3, 1.0).unwrap();
        map.set_occupied(0, 0, true);
        assert_eq!(
            plan_dijkstra_cells(&map, (0, 0), (2, 2)),
            Err(PlanError::Occupied("start", 0, 0))
        );
        assert_eq!(
            plan_dijkstra_cells(&map, (2, 2), (0, 0)),
            Err(PlanError::Occupied("goal", 0, 0))
        );
    }

    #[test]
    fn dijkstra_matches_brute_force_on_random_small_maps() {
        use rand::Rng;
        let mut rng = crate::base::seeded_rng(42);
        for _ in 0..60 {
            let w = rng.gen_range(2..=4);
            let h = rng.gen_range(2..=4);
            let mut map = GridMap::new(w, h, 1.0).unwrap();
            for y in 0..h {
                for x in 0..w {
                    if rng.gen_bool(0.25) {
                        map.set_occupied(x, y, true);
                    }
                }
            }
            let free: Vec<(usize, usize)> = (0..h)
                .flat_map(|y| (0..w).map(move |x| (x, y)))
                .filter(|&(x, y)| !map.is_occupied(x, y))
                .collect();
            if free.len() < 2 {
                continue;
            }
            for &s in &free {
                for &g in &free {
                    let oracle = brute_force_cost(&map, s, g);
                    match plan_dijkstra_cells(&map, s, g) {
                        Ok(path) => {
                            let want = oracle.expect("oracle must also find a path");
                            assert!(
                                (path.cost - want).abs() < 1e-9,
                                "cost mismatch on {s:?}->{g:?}"
                            );
                        }
                        Err(PlanError::NoPath) => assert!(oracle.is_none()),
                        Err(e) => panic!("unexpected error {e}"),
                    }
                }
            }
        }
    }

    #[test]
    fn inflation_radius_one_cell_fills_cardinals() {
        let mut map = GridMap::new(5, 5, 1.0).unwrap();
        map.set_occupied(2, 2, true);
        let inflated = map.inflate_obstacles(1.0).unwrap();
        for (x, y, want) in [
            (2, 2, true),
            (1, 2, true),
            (3, 2, true),
            (2, 1, true),
            (2, 3, true),
            (1, 1, false),
            (3, 3, false),
        ] {
            assert_eq!(inflated.is_occupied(x, y), want, "cell ({x}, {y})");
        }
    }

    #[test]
    fn inflation_is_idempotent_and_zero_radius_is_identity() {
        let map = map_from("5 4 0.25\n.....\n..##.\n.....\n#....\n");
        let once = map.inflate_obstacles(0.5).unwrap();
        let twice = once.inflate_obstacles(0.5).unwrap();
        assert_eq!(once, twice);
        let zero = map.inflate_obstacles(0.0).unwrap();
        for y in 0..map.height() {
            for x in 0..map.width() {
                assert_eq!(zero.is_occupied(x, y), map.is_occupied(x, y));
            }
        }
    }

    #[test]
    fn single_cell_and_block_obstacle_points() {
        let mut map = GridMap::new(7, 7, 1.0).unwrap();
        map.set_occupied(3, 3, true);
        assert_eq!(map.extract_obstacle_points(), vec![map.cell_center(3, 3)]);

        // 3x3 block: the center cell has no free neighbor, the 8 ring cells do.
        let mut block = GridMap::new(7, 7, 1.0).unwrap();
        for y in 2..5 {
            for x in 2..5 {
                block.set_occupied(x, y, true);
            }
        }
        let points = block.extract_obstacle_points();
        assert_eq!(points.len(), 8);
        assert!(!points.contains(&block.cell_center(3, 3)));
    }

    #[test]
    fn parse_rejects_malformed_maps() {
        assert!(matches!(GridMap::parse("3 3\n...\n...\n...\n"), Err(MapError::BadHeader(_))));
        assert!(matches!(
            GridMap::parse("3 2 1.0\n...\n..\n"),
            Err(MapError::BadRowLength { row: 1, got: 2, want: 3 })
        ));
        assert!(matches!(
            GridMap::parse("3 3 1.0\n...\n...\n"),
            Err(MapError::BadRowCount { got: 2, want: 3 })
        ));
        assert!(matches!(
            GridMap::parse("2 1 1.0\n.x\n"),
            Err(MapError::BadCell('x', 0, 1))
        ));
        assert!(matches!(
            GridMap::parse("0 3 1.0\n"),
            Err(MapError::EmptyGrid(0, 3))
        ));
    }

    #[test]
    fn text_round_trip_preserves_rows_top_down() {
        let text = "4 3 0.5\n...#\n#...\n..#.\n";
        let map = map_from(text);
        // Row 0 of the text is the top row, i.e. cell y = 2.
        assert!(map.is_occupied(3, 2));
        assert!(map.is_occupied(0, 1));
        assert!(map.is_occupied(2, 0));
        assert_eq!(map.to_text(), text);
    }

    proptest! {
        #[test]
        fn world_cell_round_trip(x in 0usize..30, y in 0usize..30) {
            let map = GridMap::new(30, 30, 0.05).unwrap();
            prop_assert_eq!(map.world_to_cell(map.cell_center(x, y)), Some((x, y)));
        }

        // Any returned path visits only free cells, moves through 8-adjacent
        // pairs, and its cost is the sum of its step costs.
        #[test]
        fn paths_are_adjacent_free_and_cost_consistent(seed in 0u64..500) {
            use rand::Rng;
            let mut rng = crate::base::seeded_rng(seed);
            let w = rng.gen_range(3..=6);
            let h = rng.gen_range(3..=6);
            let mut map = GridMap::new(w, h, 0.5).unwrap();
            for y in 0..h {
                for x in 0..w {
                    if rng.gen_bool(0.2) {
                        map.set_occupied(x, y, true);
                    }
                }
            }
            map.set_occupied(0, 0, false);
            map.set_occupied(w - 1, h - 1, false);
            if let Ok(path) = plan_dijkstra_cells(&map, (0, 0), (w - 1, h - 1)) {
                let mut total = 0.0;
                for pair in path.cells.windows(2) {
                    let (ax, ay) = pair[0];
                    let (bx, by) = pair[1];
                    let dx = bx as isize - ax as isize;
                    let dy = by as isize - ay as isize;
                    prop_assert!(dx.abs() <= 1 && dy.abs() <= 1 && (dx, dy) != (0, 0));
                    total += step_cost(dx, dy);
                }
                for &(x, y) in &path.cells {
                    prop_assert!(!map.is_occupied(x, y));
                }
                prop_assert!((path.cost - total * map.resolution()).abs() < 1e-9);
                for (cell, point) in path.cells.iter().zip(&path.world_points) {
                    prop_assert_eq!(*point, map.cell_center(cell.0, cell.1));
                }
            }
        }

        // Growing the radius can only grow the occupied set.
        #[test]
        fn inflation_is_monotone(seed in 0u64..200, r1 in 0.0f64..2.0, r2 in 0.0f64..2.0) {
            use rand::Rng;
            let (small, large) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let mut rng = crate::base::seeded_rng(seed);
            let mut map = GridMap::new(8, 8, 1.0).unwrap();
            for y in 0..8 {
                for x in 0..8 {
                    if rng.gen_bool(0.1) {
                        map.set_occupied(x, y, true);
                    }
                }
            }
            let a = map.inflate_obstacles(small).unwrap();
            let b = map.inflate_obstacles(large).unwrap();
            for y in 0..8 {
                for x in 0..8 {
                    if a.is_occupied(x, y) {
                        prop_assert!(b.is_occupied(x, y));
                    }
                }
            }
        }
    }
}
