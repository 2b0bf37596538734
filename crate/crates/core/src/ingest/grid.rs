//! Equal-size square grid over a projected bounding box.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_CELL_SIZE: f64 = 2000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BoundingBox {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub cell_id: usize,
    pub row: usize,
    pub col: usize,
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
    pub city_id: Option<String>,
    pub city_population: Option<f64>,
}

impl CellRecord {
    /// Closed counterclockwise ring of the cell square (5 positions).
    pub fn ring(&self) -> [[f64; 2]; 5] {
        [
            [self.min_x, self.min_y],
            [self.max_x, self.min_y],
            [self.max_x, self.max_y],
            [self.min_x, self.max_y],
            [self.min_x, self.min_y],
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub cell_size: f64,
    pub bbox: BoundingBox,
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<CellRecord>,
}

/// Tiles `bbox` row-major with `cell_size` squares. Partial edge cells are
/// kept, so each dimension is the ceiling of extent / cell size.
pub fn build_grid(bbox: BoundingBox, cell_size: f64) -> Result<GridSpec> {
    if !(cell_size > 0.0) || !cell_size.is_finite() {
        return Err(Error::invalid(format!("cell size must be positive, got {cell_size}")));
    }
    let (w, h) = (bbox.width(), bbox.height());
    if !(w > 0.0 && h > 0.0) || !w.is_finite() || !h.is_finite() {
        return Err(Error::invalid(format!("degenerate bounding box {bbox:?}")));
    }
    let cols = cells_along(w, cell_size);
    let rows = cells_along(h, cell_size);
    let mut cells = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let min_x = bbox.min_x + c as f64 * cell_size;
            let min_y = bbox.min_y + r as f64 * cell_size;
            cells.push(CellRecord {
                cell_id: r * cols + c,
                row: r,
                col: c,
                min_x,
                min_y,
                max_x: min_x + cell_size,
                max_y: min_y + cell_size,
                city_id: None,
                city_population: None,
            });
        }
    }
    Ok(GridSpec {
        cell_size,
        bbox,
        rows,
        cols,
        cells,
    })
}

fn cells_along(extent: f64, size: f64) -> usize {
    let ratio = extent / size;
    // absorb representation error in exact multiples
    let n = if (ratio - ratio.round()).abs() < 1e-9 {
        ratio.round()
    } else {
        ratio.ceil()
    };
    (n as usize).max(1)
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Checks id density/uniqueness and that each polygon is the square
    /// implied by its row, column and the cell size.
    pub fn validate(&self, source: &str) -> Result<()> {
        let m = self.cells.len();
        if self.rows * self.cols < m {
            return Err(Error::schema(
                source,
                format!("{} cells do not fit a {}x{} grid", m, self.rows, self.cols),
            ));
        }
        let mut seen = vec![false; m];
        let tol = 1e-6 * self.cell_size.max(1.0);
        for cell in &self.cells {
            if cell.cell_id >= m || std::mem::replace(&mut seen[cell.cell_id], true) {
                return Err(Error::schema(
                    source,
                    format!("cell id {} is out of range or duplicated", cell.cell_id),
                ));
            }
            if cell.row >= self.rows || cell.col >= self.cols {
                return Err(Error::schema(source, format!("cell {} outside grid", cell.cell_id)));
            }
            let ex = self.bbox.min_x + cell.col as f64 * self.cell_size;
            let ey = self.bbox.min_y + cell.row as f64 * self.cell_size;
            let ok = (cell.min_x - ex).abs() <= tol
                && (cell.min_y - ey).abs() <= tol
                && (cell.max_x - ex - self.cell_size).abs() <= tol
                && (cell.max_y - ey - self.cell_size).abs() <= tol;
            if !ok {
                return Err(Error::schema(
                    source,
                    format!("cell {} polygon is not the square implied by its row/col", cell.cell_id),
                ));
            }
        }
        Ok(())
    }

    /// Reconstructs grid geometry from cell records (e.g. read from CSV).
    pub fn from_cells(mut cells: Vec<CellRecord>, source: &str) -> Result<Self> {
        let first = cells
            .first()
            .ok_or_else(|| Error::schema(source, "no cells"))?
            .clone();
        cells.sort_by_key(|c| c.cell_id);
        let cell_size = first.max_x - first.min_x;
        if !(cell_size > 0.0) {
            return Err(Error::schema(source, "nonpositive cell size"));
        }
        let rows = cells.iter().map(|c| c.row).max().unwrap_or(0) + 1;
        let cols = cells.iter().map(|c| c.col).max().unwrap_or(0) + 1;
        let bbox = BoundingBox::new(
            first.min_x - first.col as f64 * cell_size,
            first.min_y - first.row as f64 * cell_size,
            first.min_x + (cols - first.col) as f64 * cell_size,
            first.min_y + (rows - first.row) as f64 * cell_size,
        );
        let grid = GridSpec {
            cell_size,
            bbox,
            rows,
            cols,
            cells,
        };
        grid.validate(source)?;
        Ok(grid)
    }

    /// Binary rook (edge-sharing) contiguity weights over the grid cells.
    pub fn rook_adjacency(&self) -> Matrix {
        let m = self.cells.len();
        let mut at = vec![None; self.rows * self.cols];
        for c in &self.cells {
            at[c.row * self.cols + c.col] = Some(c.cell_id);
        }
        let mut w = Matrix::zeros(m, m);
        for c in &self.cells {
            let mut link = |r: usize, col: usize| {
                if let Some(j) = at[r * self.cols + col] {
                    w.set_unchecked(c.cell_id, j, 1.0);
                }
            };
            if c.row > 0 {
                link(c.row - 1, c.col);
            }
            if c.row + 1 < self.rows {
                link(c.row + 1, c.col);
            }
            if c.col > 0 {
                link(c.row, c.col - 1);
            }
            if c.col + 1 < self.cols {
                link(c.row, c.col + 1);
            }
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_tiling() {
        let g = build_grid(BoundingBox::new(0.0, 0.0, 4000.0, 4000.0), 2000.0).unwrap();
        assert_eq!((g.cols, g.rows, g.len()), (2, 2, 4));
        assert_eq!(g.cells[3].min_x, 2000.0);
        assert_eq!(g.cells[3].max_y, 4000.0);
    }

    #[test]
    fn partial_last_column_kept() {
        let g = build_grid(BoundingBox::new(0.0, 0.0, 5000.0, 4000.0), 2000.0).unwrap();
        assert_eq!((g.cols, g.rows), (3, 2));
        assert_eq!(g.cells[2].max_x, 6000.0);
        g.validate("t").unwrap();
    }

    #[test]
    fn rejects_bad_inputs() {
        let bbox = BoundingBox::new(0.0, 0.0, 4000.0, 4000.0);
        assert!(build_grid(bbox, 0.0).is_err());
        assert!(build_grid(BoundingBox::new(0.0, 0.0, 0.0, 10.0), 1.0).is_err());
    }

    #[test]
    fn ring_is_closed_and_counterclockwise() {
        let g = build_grid(BoundingBox::new(0.0, 0.0, 2000.0, 2000.0), 2000.0).unwrap();
        let ring = g.cells[0].ring();
        assert_eq!(ring[0], ring[4]);
        let area2: f64 = ring.windows(2).map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1]).sum();
        assert!(area2 > 0.0);
    }

    #[test]
    fn rook_adjacency_on_2x2() {
        let g = build_grid(BoundingBox::new(0.0, 0.0, 4000.0, 4000.0), 2000.0).unwrap();
        let w = g.rook_adjacency();
        assert_eq!(w.row(0), &[0.0, 1.0, 1.0, 0.0]);
        assert!(w.is_symmetric());
        assert_eq!(w.sum(), 8.0);
    }

    #[test]
    fn from_cells_recovers_geometry() {
        let g = build_grid(BoundingBox::new(100.0, 50.0, 6100.0, 4050.0), 2000.0).unwrap();
        let back = GridSpec::from_cells(g.cells.clone(), "t").unwrap();
        assert_eq!(back, g);
    }
}
