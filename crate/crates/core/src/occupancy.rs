//! 2D occupancy grids, dilation, nearest-free-cell queries and 8-connected
//! Dijkstra geodesics.
//!
//! Path costs are tracked as integer (axis steps, diagonal steps) pairs and
//! converted to meters only for comparison and output. Two searches that find
//! the same optimal step mix therefore report bit-identical distances.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAGIC: &str = "OCC1";

#[derive(Debug, Error)]
pub enum GridError {
    #[error("resolution must be > 0, got {0}")]
    InvalidResolution(f64),
    #[error("grid is {width}x{height} but has {len} cells")]
    SizeMismatch { width: usize, height: usize, len: usize },
    #[error("grid file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no free cell satisfies the query")]
    NoFreeCell,
    #[error("cell {0} is occupied")]
    OccupiedEndpoint(Cell),
    #[error("cell {0} is outside the grid")]
    OutOfBounds(Cell),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Grid cell index. Ordered by row, then column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Path cost expressed as a count of axis-aligned and diagonal moves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct StepMix {
    pub axis: u32,
    pub diagonal: u32,
}

impl StepMix {
    /// Cost in cell units.
    pub fn cells(self) -> f64 {
        self.axis as f64 + self.diagonal as f64 * SQRT_2
    }

    pub fn meters(self, resolution: f64) -> f64 {
        resolution * self.cells()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicResult {
    /// Meters, or `None` when the endpoints are disconnected.
    pub distance: Option<f64>,
    /// Cells from `a` to `b` inclusive; empty when unreachable.
    pub path: Vec<Cell>,
}

impl GeodesicResult {
    pub fn is_reachable(&self) -> bool {
        self.distance.is_some()
    }
}

/// Occupancy bitmap, row-major, row 0 at `origin.y`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    origin: [f64; 2],
    width: usize,
    height: usize,
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(
        resolution: f64,
        origin: [f64; 2],
        width: usize,
        height: usize,
        occupied: Vec<bool>,
    ) -> Result<Self, GridError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(GridError::InvalidResolution(resolution));
        }
        if width * height != occupied.len() {
            return Err(GridError::SizeMismatch { width, height, len: occupied.len() });
        }
        Ok(Self { resolution, origin, width, height, occupied })
    }

    pub fn free(resolution: f64, origin: [f64; 2], width: usize, height: usize) -> Result<Self, GridError> {
        Self::new(resolution, origin, width, height, vec![false; width * height])
    }

    /// Builds a grid from rows of `'0'`/`'1'` (or `'.'`/`'#'`) characters.
    pub fn from_rows(resolution: f64, origin: [f64; 2], rows: &[&str]) -> Result<Self, GridError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut occupied = Vec::with_capacity(width * height);
        for (i, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(GridError::Parse { line: i + 1, msg: "ragged row".into() });
            }
            for ch in row.chars() {
                occupied.push(match ch {
                    '1' | '#' => true,
                    '0' | '.' => false,
                    other => {
                        return Err(GridError::Parse { line: i + 1, msg: format!("bad cell character {other:?}") })
                    }
                });
            }
        }
        Self::new(resolution, origin, width, height, occupied)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }
    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    /// Out-of-bounds cells count as occupied.
    pub fn is_occupied(&self, cell: Cell) -> bool {
        !self.contains(cell) || self.occupied[self.index(cell)]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        !self.is_occupied(cell)
    }

    pub fn set(&mut self, cell: Cell, occupied: bool) {
        let i = self.index(cell);
        self.occupied[i] = occupied;
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |r| (0..self.width).map(move |c| Cell::new(r, c)))
    }

    pub fn free_count(&self) -> usize {
        self.occupied.iter().filter(|o| !**o).count()
    }

    /// World coordinates of the cell center.
    pub fn cell_center(&self, cell: Cell) -> [f64; 2] {
        [
            self.origin[0] + (cell.col as f64 + 0.5) * self.resolution,
            self.origin[1] + (cell.row as f64 + 0.5) * self.resolution,
        ]
    }

    /// Cell containing a world point, if inside the grid.
    pub fn cell_of(&self, point: [f64; 2]) -> Option<Cell> {
        let c = ((point[0] - self.origin[0]) / self.resolution).floor();
        let r = ((point[1] - self.origin[1]) / self.resolution).floor();
        if c < 0.0 || r < 0.0 {
            return None;
        }
        let cell = Cell::new(r as usize, c as usize);
        self.contains(cell).then_some(cell)
    }

    /// Marks every cell whose center lies within `radius` meters of an
    /// occupied cell center.
    pub fn dilate(&self, radius: f64) -> OccupancyGrid {
        if !(radius > 0.0) {
            return self.clone();
        }
        let reach = (radius / self.resolution).floor() as isize;
        let r2 = (radius / self.resolution).powi(2) + 1e-9;
        let offsets: Vec<(isize, isize)> = (-reach..=reach)
            .flat_map(|dr| (-reach..=reach).map(move |dc| (dr, dc)))
            .filter(|&(dr, dc)| ((dr * dr + dc * dc) as f64) <= r2)
            .collect();
        let mut out = self.clone();
        for cell in self.cells().filter(|&c| self.is_occupied(c)) {
            for &(dr, dc) in &offsets {
                let r = cell.row as isize + dr;
                let c = cell.col as isize + dc;
                if r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width {
                    out.set(Cell::new(r as usize, c as usize), true);
                }
            }
        }
        out
    }

    /// Free cell closest to `point` (Euclidean, cell centers) that satisfies
    /// `mask`. Ties go to the lower row, then the lower column.
    pub fn nearest_free(&self, point: [f64; 2], mask: Option<&dyn Fn(Cell) -> bool>) -> Result<Cell, GridError> {
        let mut best: Option<(f64, Cell)> = None;
        for cell in self.cells() {
            if self.is_occupied(cell) || mask.is_some_and(|m| !m(cell)) {
                continue;
            }
            let c = self.cell_center(cell);
            let d2 = (c[0] - point[0]).powi(2) + (c[1] - point[1]).powi(2);
            // row-major scan order already realizes the tie rule
            if best.is_none_or(|(bd, _)| d2 < bd - 1e-12) {
                best = Some((d2, cell));
            }
        }
        best.map(|(_, c)| c).ok_or(GridError::NoFreeCell)
    }

    fn neighbors(&self, cell: Cell) -> impl Iterator<Item = (Cell, bool)> + '_ {
        const DIRS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
        DIRS.iter().filter_map(move |&(dr, dc)| {
            let r = cell.row as isize + dr;
            let c = cell.col as isize + dc;
            if r < 0 || c < 0 {
                return None;
            }
            let next = Cell::new(r as usize, c as usize);
            if self.is_occupied(next) {
                return None;
            }
            let diagonal = dr != 0 && dc != 0;
            if diagonal {
                let side_a = Cell::new(r as usize, cell.col);
                let side_b = Cell::new(cell.row, c as usize);
                // no squeezing between two occupied corners
                if self.is_occupied(side_a) && self.is_occupied(side_b) {
                    return None;
                }
            }
            Some((next, diagonal))
        })
    }

    fn check_endpoint(&self, cell: Cell) -> Result<(), GridError> {
        if !self.contains(cell) {
            return Err(GridError::OutOfBounds(cell));
        }
        if self.is_occupied(cell) {
            return Err(GridError::OccupiedEndpoint(cell));
        }
        Ok(())
    }

    /// Runs Dijkstra from `source`, stopping early once `target` settles.
    fn dijkstra(&self, source: Cell, target: Option<Cell>) -> (Vec<Option<StepMix>>, Vec<usize>) {
        let n = self.width * self.height;
        let mut best: Vec<Option<StepMix>> = vec![None; n];
        let mut prev = vec![usize::MAX; n];
        let mut settled = vec![false; n];
        let mut heap = BinaryHeap::new();
        let s = self.index(source);
        best[s] = Some(StepMix::default());
        heap.push(Frontier { cost: 0.0, index: s });
        while let Some(Frontier { index, .. }) = heap.pop() {
            if settled[index] {
                continue;
            }
            settled[index] = true;
            let cell = self.cell_at(index);
            if Some(cell) == target {
                break;
            }
            let here = best[index].expect("settled cells have a cost");
            for (next, diagonal) in self.neighbors(cell) {
                let j = self.index(next);
                if settled[j] {
                    continue;
                }
                let mut cand = here;
                if diagonal {
                    cand.diagonal += 1;
                } else {
                    cand.axis += 1;
                }
                if best[j].is_none_or(|b| cand.cells() < b.cells()) {
                    best[j] = Some(cand);
                    prev[j] = index;
                    heap.push(Frontier { cost: cand.cells(), index: j });
                }
            }
        }
        (best, prev)
    }

    /// Shortest 8-connected path between two free cells.
    pub fn geodesic(&self, a: Cell, b: Cell) -> Result<GeodesicResult, GridError> {
        self.check_endpoint(a)?;
        self.check_endpoint(b)?;
        let (best, prev) = self.dijkstra(a, Some(b));
        let Some(mix) = best[self.index(b)] else {
            return Ok(GeodesicResult { distance: None, path: Vec::new() });
        };
        let mut path = vec![b];
        let mut at = self.index(b);
        while at != self.index(a) {
            at = prev[at];
            path.push(self.cell_at(at));
        }
        path.reverse();
        Ok(GeodesicResult { distance: Some(mix.meters(self.resolution)), path })
    }

    /// Distances from `source` to every cell.
    pub fn distance_field(&self, source: Cell) -> Result<DistanceField, GridError> {
        self.check_endpoint(source)?;
        let (best, _) = self.dijkstra(source, None);
        Ok(DistanceField { source, width: self.width, resolution: self.resolution, mixes: best })
    }

    /// Cost of a single move between two 8-adjacent cells.
    pub fn step_cost(&self, a: Cell, b: Cell) -> f64 {
        let diagonal = a.row != b.row && a.col != b.col;
        if diagonal {
            self.resolution * SQRT_2
        } else {
            self.resolution
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GridError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, GridError> {
        let mut lines = text.lines();
        let bad = |line: usize, msg: &str| GridError::Parse { line, msg: msg.to_string() };
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(bad(1, "expected OCC1 header"));
        }
        let header = lines.next().ok_or_else(|| bad(2, "missing geometry line"))?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 9 || tok[0] != "res" || tok[2] != "origin" || tok[5] != "w" || tok[7] != "h" {
            return Err(bad(2, "expected `res <f> origin <x> <y> w <int> h <int>`"));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|e| bad(2, &format!("{s:?}: {e}")));
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad(2, &format!("{s:?}: {e}")));
        let (res, ox, oy, w, h) = (float(tok[1])?, float(tok[3])?, float(tok[4])?, int(tok[6])?, int(tok[8])?);
        let mut occupied = Vec::with_capacity(w * h);
        for row in 0..h {
            let line_no = row + 3;
            let line = lines.next().ok_or_else(|| bad(line_no, "missing grid row"))?.trim_end();
            if line.len() != w {
                return Err(bad(line_no, &format!("expected {w} cells, found {}", line.len())));
            }
            for ch in line.chars() {
                occupied.push(match ch {
                    '0' => false,
                    '1' => true,
                    other => return Err(bad(line_no, &format!("bad cell character {other:?}"))),
                });
            }
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(bad(h + 3, "trailing content after grid rows"));
        }
        Self::new(res, [ox, oy], w, h, occupied)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{MAGIC}\nres {} origin {} {} w {} h {}\n",
            self.resolution, self.origin[0], self.origin[1], self.width, self.height
        );
        for row in self.occupied.chunks(self.width.max(1)).take(self.height) {
            s.extend(row.iter().map(|&o| if o { '1' } else { '0' }));
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GridError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Single-source Dijkstra result.
#[derive(Clone, Debug)]
pub struct DistanceField {
    source: Cell,
    width: usize,
    resolution: f64,
    mixes: Vec<Option<StepMix>>,
}

impl DistanceField {
    pub fn source(&self) -> Cell {
        self.source
    }

    /// Meters to `cell`, `None` if unreachable or out of bounds.
    pub fn distance(&self, cell: Cell) -> Option<f64> {
        if cell.col >= self.width {
            return None;
        }
        self.mixes
            .get(cell.row * self.width + cell.col)
            .copied()
            .flatten()
            .map(|m| m.meters(self.resolution))
    }
}

#[derive(PartialEq)]
struct Frontier {
    cost: f64,
    index: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&str]) -> OccupancyGrid {
        OccupancyGrid::from_rows(1.0, [0.0, 0.0], rows).unwrap()
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(matches!(
            OccupancyGrid::new(0.0, [0.0, 0.0], 1, 1, vec![false]),
            Err(GridError::InvalidResolution(_))
        ));
        assert!(matches!(
            OccupancyGrid::new(1.0, [0.0, 0.0], 2, 2, vec![false]),
            Err(GridError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn dilate_single_cell_makes_plus() {
        let g = grid(&["00000", "00000", "00100", "00000", "00000"]);
        let d = g.dilate(1.0);
        let expect = grid(&["00000", "00100", "01110", "00100", "00000"]);
        assert_eq!(d, expect);
    }

    #[test]
    fn dilate_zero_and_free_grid() {
        let g = grid(&["010", "000"]);
        assert_eq!(g.dilate(0.0), g);
        let f = grid(&["000", "000"]);
        assert_eq!(f.dilate(5.0), f);
    }

    #[test]
    fn nearest_free_on_free_cell_and_tie() {
        let g = grid(&["000", "000", "000"]);
        assert_eq!(g.nearest_free([1.5, 1.5], None).unwrap(), Cell::new(1, 1));
        // point on the boundary between rows 0 and 1 of column 0
        assert_eq!(g.nearest_free([0.5, 1.0], None).unwrap(), Cell::new(0, 0));
    }

    #[test]
    fn nearest_free_respects_mask_and_errors() {
        let g = grid(&["111", "101", "111"]);
        assert_eq!(g.nearest_free([0.1, 0.1], None).unwrap(), Cell::new(1, 1));
        let none = |_c: Cell| false;
        assert!(matches!(g.nearest_free([0.1, 0.1], Some(&none)), Err(GridError::NoFreeCell)));
    }

    #[test]
    fn geodesic_diagonal_and_identity() {
        let g = grid(&["000", "000", "000"]);
        let r = g.geodesic(Cell::new(0, 0), Cell::new(2, 2)).unwrap();
        assert!((r.distance.unwrap() - 2.0 * SQRT_2).abs() < 1e-12);
        assert_eq!(r.path.len(), 3);
        let same = g.geodesic(Cell::new(1, 1), Cell::new(1, 1)).unwrap();
        assert_eq!(same.distance, Some(0.0));
        assert_eq!(same.path, vec![Cell::new(1, 1)]);
    }

    #[test]
    fn geodesic_no_corner_cutting() {
        // the only link between the two free cells is a squeezed diagonal
        let g = grid(&["01", "10"]);
        let r = g.geodesic(Cell::new(0, 0), Cell::new(1, 1)).unwrap();
        assert_eq!(r.distance, None);
        // one open side is enough
        let g = grid(&["00", "10"]);
        let r = g.geodesic(Cell::new(0, 0), Cell::new(1, 1)).unwrap();
        assert!((r.distance.unwrap() - SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn geodesic_rejects_occupied_endpoint() {
        let g = grid(&["01"]);
        assert!(matches!(g.geodesic(Cell::new(0, 0), Cell::new(0, 1)), Err(GridError::OccupiedEndpoint(_))));
        assert!(matches!(g.geodesic(Cell::new(0, 0), Cell::new(3, 3)), Err(GridError::OutOfBounds(_))));
    }

    #[test]
    fn path_cost_matches_distance() {
        let g = grid(&["00000", "01110", "00010", "11010", "00000"]);
        let r = g.geodesic(Cell::new(2, 0), Cell::new(2, 2)).unwrap();
        let sum: f64 = r.path.windows(2).map(|w| g.step_cost(w[0], w[1])).sum();
        assert!((sum - r.distance.unwrap()).abs() < 1e-9);
        assert_eq!(r.path.first(), Some(&Cell::new(2, 0)));
        assert_eq!(r.path.last(), Some(&Cell::new(2, 2)));
    }

    #[test]
    fn field_agrees_with_pairwise() {
        let g = grid(&["0000", "0110", "0000"]);
        let f = g.distance_field(Cell::new(0, 0)).unwrap();
        for c in g.cells().filter(|&c| g.is_free(c)) {
            assert_eq!(f.distance(c), g.geodesic(Cell::new(0, 0), c).unwrap().distance);
        }
    }

    #[test]
    fn text_round_trip_and_errors() {
        let g = OccupancyGrid::from_rows(0.25, [-1.5, 2.0], &["010", "001"]).unwrap();
        let text = g.to_text();
        assert!(text.starts_with("OCC1\nres 0.25 origin -1.5 2 w 3 h 2\n"));
        assert_eq!(OccupancyGrid::parse(&text).unwrap(), g);
        let err = OccupancyGrid::parse("OCC1\nres 1 origin 0 0 w 2 h 1\n0x\n").unwrap_err();
        assert!(matches!(err, GridError::Parse { line: 3, .. }));
        assert!(OccupancyGrid::parse("P1\n").is_err());
    }

    #[test]
    fn cell_lookup() {
        let g = OccupancyGrid::free(0.5, [1.0, 1.0], 4, 2).unwrap();
        assert_eq!(g.cell_of([1.1, 1.6]), Some(Cell::new(1, 0)));
        assert_eq!(g.cell_of([0.9, 1.6]), None);
        assert_eq!(g.cell_center(Cell::new(1, 3)), [2.75, 1.75]);
    }
}
