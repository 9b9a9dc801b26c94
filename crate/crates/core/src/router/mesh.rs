use serde::{Deserialize, Serialize};

use super::{Result, RouteError};
use crate::geo::{haversine_nm, initial_bearing_deg};
use crate::gridio::GeoGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub to: usize,
    pub distance_nm: f64,
    pub heading_deg: f64,
    /// Cell whose waves are charged to this edge.
    pub mid_cell: usize,
}

/// Ocean-node graph in compressed adjacency form; nodes are cell indices.
#[derive(Debug, Clone, PartialEq)]
pub struct NavMesh {
    pub grid: GeoGrid,
    pub connectivity: u8,
    offsets: Vec<usize>,
    edges: Vec<Edge>,
}

const KING: [(i64, i64); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
const KNIGHT: [(i64, i64); 8] = [(-2, -1), (-2, 1), (-1, -2), (-1, 2), (1, -2), (1, 2), (2, -1), (2, 1)];

/// Connect each ocean node to its ocean neighbours. With connectivity 16,
/// knight moves are added when both cells they brush past are ocean.
pub fn build_mesh(grid: &GeoGrid, connectivity: u8) -> Result<NavMesh> {
    if connectivity != 8 && connectivity != 16 {
        return Err(RouteError::BadConnectivity(connectivity));
    }
    if grid.n_ocean() == 0 {
        return Err(RouteError::NoOcean);
    }
    let (nlat, nlon) = (grid.nlat as i64, grid.nlon as i64);
    let ocean_at = |i: i64, j: i64| i >= 0 && j >= 0 && i < nlat && j < nlon && grid.mask[(i * nlon + j) as usize];
    let mut offsets = Vec::with_capacity(grid.ncells() + 1);
    let mut edges = Vec::new();
    offsets.push(0);
    for cell in 0..grid.ncells() {
        if grid.mask[cell] {
            let (i, j) = grid.ij(cell);
            let (i, j) = (i as i64, j as i64);
            let knights: &[(i64, i64)] = if connectivity == 16 { &KNIGHT } else { &[] };
            for &(di, dj) in KING.iter().chain(knights) {
                let (ti, tj) = (i + di, j + dj);
                if !ocean_at(ti, tj) {
                    continue;
                }
                if di.abs() + dj.abs() == 3 {
                    // the two cells the segment passes between
                    let (a, b) = if di.abs() == 2 {
                        ((i + di / 2, j), (i + di / 2, j + dj))
                    } else {
                        ((i, j + dj / 2), (i + di, j + dj / 2))
                    };
                    if !ocean_at(a.0, a.1) || !ocean_at(b.0, b.1) {
                        continue;
                    }
                }
                let to = (ti * nlon + tj) as usize;
                let (lat1, lon1) = grid.cell_latlon(cell);
                let (lat2, lon2) = grid.cell_latlon(to);
                let mid = ((i + di / 2) * nlon + (j + dj / 2)) as usize;
                edges.push(Edge {
                    to,
                    distance_nm: haversine_nm(lat1, lon1, lat2, lon2),
                    heading_deg: initial_bearing_deg(lat1, lon1, lat2, lon2),
                    mid_cell: mid,
                });
            }
        }
        offsets.push(edges.len());
    }
    Ok(NavMesh {
        grid: grid.clone(),
        connectivity,
        offsets,
        edges,
    })
}

impl NavMesh {
    pub fn edges_from(&self, node: usize) -> &[Edge] {
        &self.edges[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.grid.ncells()).filter(|&c| self.grid.mask[c])
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<&Edge> {
        self.edges_from(from).iter().find(|e| e.to == to)
    }
}
