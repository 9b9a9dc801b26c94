use serde::{Deserialize, Serialize};

use super::{Result, RouteError};
use crate::gridio::GeoGrid;

/// Closed ring of `[lat, lon]` vertices; the closing edge is implicit.
pub type Polygon = Vec<[f64; 2]>;

/// Avoidance zones rasterised onto a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintField {
    pub polygons: Vec<Polygon>,
    /// `true` where the cell centre is inside some polygon.
    pub blocked: Vec<bool>,
}

impl ConstraintField {
    pub fn none(grid: &GeoGrid) -> Self {
        Self {
            polygons: Vec::new(),
            blocked: vec![false; grid.ncells()],
        }
    }

    pub fn is_blocked(&self, cell: usize) -> bool {
        self.blocked.get(cell).copied().unwrap_or(false)
    }

    pub fn n_blocked(&self) -> usize {
        self.blocked.iter().filter(|&&b| b).count()
    }
}

/// Even-odd point-in-polygon test, `[lat, lon]` vertices.
fn inside(poly: &[[f64; 2]], lat: f64, lon: f64) -> bool {
    let mut odd = false;
    let n = poly.len();
    let mut k = n - 1;
    for i in 0..n {
        let ([ya, xa], [yb, xb]) = (poly[i], poly[k]);
        if (ya > lat) != (yb > lat) {
            let x_cross = xa + (lat - ya) * (xb - xa) / (yb - ya);
            if lon < x_cross {
                odd = !odd;
            }
        }
        k = i;
    }
    odd
}

pub fn rasterize_constraints(grid: &GeoGrid, polygons: &[Polygon]) -> Result<ConstraintField> {
    for p in polygons {
        if p.len() < 3 {
            return Err(RouteError::DegeneratePolygon(p.len()));
        }
    }
    let blocked = (0..grid.ncells())
        .map(|cell| {
            let (lat, lon) = grid.cell_latlon(cell);
            polygons.iter().any(|p| inside(p, lat, lon))
        })
        .collect();
    Ok(ConstraintField {
        polygons: polygons.to_vec(),
        blocked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GeoGrid {
        GeoGrid::ocean(0.0, 9.0, 0.0, 9.0, 10, 10).unwrap()
    }

    #[test]
    fn no_polygons_block_nothing() {
        assert_eq!(rasterize_constraints(&grid(), &[]).unwrap().n_blocked(), 0);
    }

    #[test]
    fn rectangle_blocks_exactly_nine_cells() {
        let g = grid();
        let rect = vec![[1.5, 1.5], [1.5, 4.5], [4.5, 4.5], [4.5, 1.5]];
        let c = rasterize_constraints(&g, &[rect]).unwrap();
        assert_eq!(c.n_blocked(), 9);
        for i in 2..=4 {
            for j in 2..=4 {
                assert!(c.is_blocked(g.idx(i, j)));
            }
        }
    }

    #[test]
    fn overlapping_polygons_form_a_union() {
        let g = grid();
        let a = vec![[0.5, 0.5], [0.5, 2.5], [2.5, 2.5], [2.5, 0.5]];
        let b = vec![[1.5, 1.5], [1.5, 3.5], [3.5, 3.5], [3.5, 1.5]];
        assert_eq!(rasterize_constraints(&g, &[a, b]).unwrap().n_blocked(), 4 + 4 - 1);
    }

    #[test]
    fn ring_with_slit_leaves_hole_open() {
        let g = grid();
        let ring = vec![
            [0.5, 0.5],
            [4.5, 0.5],
            [4.5, 4.5],
            [0.5, 4.5],
            [0.5, 0.5],
            [1.5, 1.5],
            [1.5, 3.5],
            [3.5, 3.5],
            [3.5, 1.5],
            [1.5, 1.5],
        ];
        let c = rasterize_constraints(&g, &[ring]).unwrap();
        assert_eq!(c.n_blocked(), 12);
        for (i, j) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
            assert!(!c.is_blocked(g.idx(i, j)));
        }
    }

    #[test]
    fn degenerate_polygon_rejected() {
        assert!(matches!(
            rasterize_constraints(&grid(), &[vec![[0.0, 0.0], [1.0, 1.0]]]),
            Err(RouteError::DegeneratePolygon(2))
        ));
    }
}
