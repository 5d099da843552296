//! Zone grid, Manhattan distances and path weights.
//!
//! The operating area is a `rows x cols` grid of square cells. Zone ids are
//! assigned in row-major order and every location inside a cell is identified
//! with the cell centroid, so all distances are whole multiples of the cell
//! edge. Travel time is distance over a uniform fleet speed.

use std::collections::VecDeque;

use crate::error::{config, domain, Result};
use crate::num::Real;

pub type ZoneId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Edge weights between zones, in km.
pub trait Metric<R> {
    /// Distance between two valid zones. Callers guarantee validity.
    fn weight(&self, a: ZoneId, b: ZoneId) -> R;

    /// `w(a1, ..., an)`: sum of consecutive weights.
    fn path(&self, zones: &[ZoneId]) -> R
    where
        R: Real,
    {
        zones.windows(2).map(|w| self.weight(w[0], w[1])).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid<R> {
    rows: usize,
    cols: usize,
    cell_size: R,
}

impl<R: Real> Grid<R> {
    pub fn new(rows: usize, cols: usize, cell_size: R) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(config(format!("grid dimensions must be >= 1, got {rows}x{cols}")));
        }
        if !(cell_size > R::zero()) || !cell_size.is_finite() {
            return Err(config(format!("cell_size must be > 0, got {cell_size}")));
        }
        Ok(Self { rows, cols, cell_size })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> R {
        self.cell_size
    }

    pub fn zone_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, zone: ZoneId) -> bool {
        zone < self.zone_count()
    }

    pub fn zone(&self, cell: Cell) -> Result<ZoneId> {
        if cell.row >= self.rows || cell.col >= self.cols {
            return Err(domain(format!("cell ({}, {}) outside {}x{} grid", cell.row, cell.col, self.rows, self.cols)));
        }
        Ok(cell.row * self.cols + cell.col)
    }

    pub fn zone_at(&self, row: usize, col: usize) -> Result<ZoneId> {
        self.zone(Cell::new(row, col))
    }

    pub fn cell(&self, zone: ZoneId) -> Result<Cell> {
        if !self.contains(zone) {
            return Err(domain(format!("zone {zone} outside grid of {} zones", self.zone_count())));
        }
        Ok(self.cell_unchecked(zone))
    }

    pub(crate) fn cell_unchecked(&self, zone: ZoneId) -> Cell {
        Cell::new(zone / self.cols, zone % self.cols)
    }

    /// Manhattan distance in whole cells.
    pub fn cells_apart(&self, a: ZoneId, b: ZoneId) -> usize {
        let (ca, cb) = (self.cell_unchecked(a), self.cell_unchecked(b));
        ca.row.abs_diff(cb.row) + ca.col.abs_diff(cb.col)
    }

    /// Chebyshev distance in whole cells.
    pub fn chebyshev(&self, a: ZoneId, b: ZoneId) -> usize {
        let (ca, cb) = (self.cell_unchecked(a), self.cell_unchecked(b));
        ca.row.abs_diff(cb.row).max(ca.col.abs_diff(cb.col))
    }

    pub fn distance(&self, a: ZoneId, b: ZoneId) -> Result<R> {
        self.cell(a)?;
        self.cell(b)?;
        Ok(self.weight(a, b))
    }

    /// Minutes to drive from `a` to `b` at `speed_kmh`.
    pub fn travel_time(&self, a: ZoneId, b: ZoneId, speed_kmh: R) -> Result<R> {
        check_speed(speed_kmh)?;
        Ok(minutes(self.distance(a, b)?, speed_kmh))
    }

    pub fn path_weight(&self, stops: &[ZoneId]) -> Result<R> {
        if stops.is_empty() {
            return Err(domain("path_weight of an empty stop sequence"));
        }
        for &z in stops {
            self.cell(z)?;
        }
        Ok(self.path(stops))
    }

    /// Zone reached by moving `(drow, dcol)` cells, clamped to the grid.
    pub fn offset(&self, zone: ZoneId, drow: i64, dcol: i64) -> ZoneId {
        let c = self.cell_unchecked(zone);
        let row = (c.row as i64 + drow).clamp(0, self.rows as i64 - 1) as usize;
        let col = (c.col as i64 + dcol).clamp(0, self.cols as i64 - 1) as usize;
        row * self.cols + col
    }

    /// Next zone on the canonical shortest path from `from` to `to`: rows
    /// first, then columns.
    pub fn step_toward(&self, from: ZoneId, to: ZoneId) -> ZoneId {
        let (a, b) = (self.cell_unchecked(from), self.cell_unchecked(to));
        if a.row != b.row {
            let row = if b.row > a.row { a.row + 1 } else { a.row - 1 };
            row * self.cols + a.col
        } else if a.col != b.col {
            let col = if b.col > a.col { a.col + 1 } else { a.col - 1 };
            a.row * self.cols + col
        } else {
            from
        }
    }

    /// Snaps fractional cell coordinates to the nearest zone. The flag is set
    /// when the point lay outside the grid and was clamped to the boundary.
    pub fn snap(&self, row: f64, col: f64) -> (ZoneId, bool) {
        let clamp = |v: f64, n: usize| -> (usize, bool) {
            let r = v.round();
            if !r.is_finite() || r < 0.0 {
                (0, true)
            } else if r > (n - 1) as f64 {
                (n - 1, true)
            } else {
                (r as usize, false)
            }
        };
        let (r, fr) = clamp(row, self.rows);
        let (c, fc) = clamp(col, self.cols);
        (r * self.cols + c, fr || fc)
    }
}

impl<R: Real> Metric<R> for Grid<R> {
    fn weight(&self, a: ZoneId, b: ZoneId) -> R {
        R::of_count(self.cells_apart(a, b)) * self.cell_size
    }
}

pub(crate) fn check_speed<R: Real>(speed_kmh: R) -> Result<()> {
    if !(speed_kmh > R::zero()) || !speed_kmh.is_finite() {
        return Err(config(format!("speed must be > 0 km/h, got {speed_kmh}")));
    }
    Ok(())
}

/// Minutes needed to cover `km` at `speed_kmh`.
pub fn minutes<R: Real>(km: R, speed_kmh: R) -> R {
    km / speed_kmh * R::of(60.0)
}

/// Dense all-pairs table of shortest-path weights over the 4-neighbour grid
/// graph, built by breadth-first search from every zone.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightTable<R> {
    zones: usize,
    weights: Vec<R>,
}

impl<R: Real> WeightTable<R> {
    pub fn from_grid(grid: &Grid<R>) -> Self {
        let n = grid.zone_count();
        let mut weights = vec![R::zero(); n * n];
        let mut hops = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        for src in 0..n {
            hops.fill(usize::MAX);
            hops[src] = 0;
            queue.push_back(src);
            while let Some(z) = queue.pop_front() {
                let c = grid.cell_unchecked(z);
                let mut visit = |nz: ZoneId| {
                    if hops[nz] == usize::MAX {
                        hops[nz] = hops[z] + 1;
                        queue.push_back(nz);
                    }
                };
                if c.row > 0 {
                    visit(z - grid.cols);
                }
                if c.row + 1 < grid.rows {
                    visit(z + grid.cols);
                }
                if c.col > 0 {
                    visit(z - 1);
                }
                if c.col + 1 < grid.cols {
                    visit(z + 1);
                }
            }
            for (dst, &h) in hops.iter().enumerate() {
                weights[src * n + dst] = R::of_count(h) * grid.cell_size;
            }
        }
        Self { zones: n, weights }
    }

    pub fn zone_count(&self) -> usize {
        self.zones
    }
}

impl<R: Real> Metric<R> for WeightTable<R> {
    fn weight(&self, a: ZoneId, b: ZoneId) -> R {
        self.weights[a * self.zones + b]
    }
}
