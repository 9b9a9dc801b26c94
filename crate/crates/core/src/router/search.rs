use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::route::{Leg, Route, RouteKind};
use super::{ConstraintField, Edge, NavMesh, Result, RouteError, Ship, SpeedModel, WaveHeightSpeedLoss, WaveSample};
use crate::geo::haversine_nm;
use crate::gridio::{Channel, FieldStack, GeoGrid};

/// Maximum search radius, in cells, when snapping an endpoint to ocean.
pub const SNAP_RADIUS_CELLS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteQuery {
    /// `[lat, lon]`
    pub origin: [f64; 2],
    pub destination: [f64; 2],
    /// Epoch seconds.
    pub departure: f64,
}

/// Nearest ocean node to a position, searching up to
/// [`SNAP_RADIUS_CELLS`] cells around the nearest grid node.
pub fn snap_to_ocean(grid: &GeoGrid, lat: f64, lon: f64, is_origin: bool) -> Result<usize> {
    let which = if is_origin { "origin" } else { "destination" };
    let on_land = || if is_origin { RouteError::OriginOnLand } else { RouteError::DestinationOnLand };
    let Some(near) = grid.snap(lat, lon) else {
        return Err(RouteError::OutsideGrid { which, lat, lon });
    };
    if grid.mask[near] {
        return Ok(near);
    }
    let (ci, cj) = grid.ij(near);
    let r = SNAP_RADIUS_CELLS;
    let mut best: Option<(f64, usize)> = None;
    for i in ci.saturating_sub(r)..=(ci + r).min(grid.nlat - 1) {
        for j in cj.saturating_sub(r)..=(cj + r).min(grid.nlon - 1) {
            let cell = grid.idx(i, j);
            if !grid.mask[cell] {
                continue;
            }
            let (clat, clon) = grid.cell_latlon(cell);
            let d = haversine_nm(lat, lon, clat, clon);
            if best.is_none_or(|(bd, bc)| d < bd || (d == bd && cell < bc)) {
                best = Some((d, cell));
            }
        }
    }
    best.map(|(_, c)| c).ok_or_else(on_land)
}

/// Sea state charged to an edge leaving at `t`: nearest frame in time,
/// edge midpoint cell in space.
pub(crate) fn sample_wave(fields: &FieldStack, cell: usize, t: f64) -> WaveSample {
    let frame = &fields.frames[fields.nearest_frame(t)];
    WaveSample {
        height: frame.get(Channel::Vhm0, cell),
        direction_deg: frame.direction_deg(cell).unwrap_or(f64::NAN),
        period: frame.get(Channel::Vtpk, cell),
    }
}

/// A sample without a usable direction is charged as a head sea.
fn leg_speed(model: &dyn SpeedModel, ship: &Ship, wave: &WaveSample, heading: f64) -> f64 {
    let dir = if wave.direction_deg.is_finite() { wave.direction_deg } else { heading };
    model.effective_speed(
        ship,
        &WaveSample {
            direction_deg: dir,
            ..*wave
        },
        heading,
    )
}

fn travel_seconds(distance_nm: f64, knots: f64) -> f64 {
    distance_nm / knots * 3600.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    f: f64,
    h: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // reversed: BinaryHeap pops the smallest (f, h, node)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Label-setting A* over elapsed seconds. `cost(from, edge, elapsed)`
/// returns the edge traversal time in seconds.
fn astar(
    mesh: &NavMesh,
    start: usize,
    goal: usize,
    v_design: f64,
    blocked: &dyn Fn(usize) -> bool,
    mut cost: impl FnMut(usize, &Edge, f64) -> f64,
) -> Option<Vec<usize>> {
    let grid = &mesh.grid;
    let n = grid.ncells();
    let (glat, glon) = grid.cell_latlon(goal);
    let heuristic = |node: usize| {
        let (lat, lon) = grid.cell_latlon(node);
        travel_seconds(haversine_nm(lat, lon, glat, glon), v_design)
    };
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    g[start] = 0.0;
    let h0 = heuristic(start);
    heap.push(Entry { f: h0, h: h0, node: start });
    while let Some(Entry { node, .. }) = heap.pop() {
        if closed[node] {
            continue;
        }
        closed[node] = true;
        if node == goal {
            let mut path = vec![goal];
            let mut cur = goal;
            while cur != start {
                cur = parent[cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        for e in mesh.edges_from(node) {
            if closed[e.to] || blocked(e.to) {
                continue;
            }
            let cand = g[node] + cost(node, e, g[node]);
            if cand < g[e.to] {
                g[e.to] = cand;
                parent[e.to] = node;
                let h = heuristic(e.to);
                heap.push(Entry { f: cand + h, h, node: e.to });
            }
        }
    }
    None
}

fn check_inputs(mesh: &NavMesh, fields: &FieldStack, ship: &Ship, q: &RouteQuery) -> Result<()> {
    ship.validate()?;
    let (a, b) = (&mesh.grid, &fields.grid);
    if a.nlat != b.nlat || a.nlon != b.nlon || a.mask != b.mask {
        return Err(RouteError::GridMismatch);
    }
    let (t0, tl) = (fields.t0(), fields.t_last());
    if !(q.departure >= t0 as f64 && q.departure <= tl as f64) {
        return Err(RouteError::DepartureOutsideWindow {
            departure: q.departure,
            t0,
            t_last: tl,
        });
    }
    Ok(())
}

fn endpoints(mesh: &NavMesh, q: &RouteQuery, constraint: Option<&ConstraintField>) -> Result<(usize, usize)> {
    let start = snap_to_ocean(&mesh.grid, q.origin[0], q.origin[1], true)?;
    let goal = snap_to_ocean(&mesh.grid, q.destination[0], q.destination[1], false)?;
    if let Some(c) = constraint {
        if c.is_blocked(start) || c.is_blocked(goal) {
            return Err(RouteError::Unreachable);
        }
    }
    Ok((start, goal))
}

/// Sail `nodes` from `departure` under the wave fields, producing legs.
pub fn evaluate_path(
    mesh: &NavMesh,
    fields: &FieldStack,
    ship: &Ship,
    nodes: &[usize],
    departure: f64,
    model: &dyn SpeedModel,
) -> Result<Vec<Leg>> {
    let grid = &mesh.grid;
    let mut legs = Vec::with_capacity(nodes.len().saturating_sub(1));
    let mut t = departure;
    for w in nodes.windows(2) {
        let e = mesh.edge(w[0], w[1]).ok_or(RouteError::Unreachable)?;
        let wave = sample_wave(fields, e.mid_cell, t);
        let v = leg_speed(model, ship, &wave, e.heading_deg);
        let arrive = t + travel_seconds(e.distance_nm, v);
        let (lat, lon) = grid.cell_latlon(w[0]);
        let (to_lat, to_lon) = grid.cell_latlon(w[1]);
        legs.push(Leg {
            node: w[0],
            to: w[1],
            lat,
            lon,
            to_lat,
            to_lon,
            departure_time: t,
            arrival_time: arrive,
            heading: e.heading_deg,
            distance_nm: e.distance_nm,
            v_eff_knots: v,
            wave_height: wave.height,
            wave_direction: if wave.direction_deg.is_finite() { wave.direction_deg } else { e.heading_deg },
            wave_period: wave.period,
        });
        t = arrive;
    }
    Ok(legs)
}

fn assemble(kind: RouteKind, q: &RouteQuery, start: usize, goal: usize, legs: Vec<Leg>) -> Route {
    let mut r = Route {
        kind,
        origin: q.origin,
        destination: q.destination,
        origin_node: start,
        destination_node: goal,
        departure: q.departure,
        legs,
        total_hours: 0.0,
        total_nm: 0.0,
    };
    r.finish();
    r
}

/// Time-optimal route under the wave fields with the default speed model.
pub fn optimize_route(
    mesh: &NavMesh,
    fields: &FieldStack,
    ship: &Ship,
    query: &RouteQuery,
    constraint: Option<&ConstraintField>,
) -> Result<Route> {
    optimize_route_with(mesh, fields, ship, query, constraint, &WaveHeightSpeedLoss)
}

pub fn optimize_route_with(
    mesh: &NavMesh,
    fields: &FieldStack,
    ship: &Ship,
    query: &RouteQuery,
    constraint: Option<&ConstraintField>,
    model: &dyn SpeedModel,
) -> Result<Route> {
    check_inputs(mesh, fields, ship, query)?;
    let (start, goal) = endpoints(mesh, query, constraint)?;
    let blocked = |c: usize| constraint.is_some_and(|k| k.is_blocked(c));
    let path = astar(mesh, start, goal, ship.v_design, &blocked, |_, e, elapsed| {
        let wave = sample_wave(fields, e.mid_cell, query.departure + elapsed);
        travel_seconds(e.distance_nm, leg_speed(model, ship, &wave, e.heading_deg))
    })
    .ok_or(RouteError::Unreachable)?;
    let legs = evaluate_path(mesh, fields, ship, &path, query.departure, model)?;
    let kind = if constraint.is_some_and(|c| c.n_blocked() > 0) {
        RouteKind::Rehearsal
    } else {
        RouteKind::Optimized
    };
    Ok(assemble(kind, query, start, goal, legs))
}

/// Shortest-distance path ignoring waves, then sailed through them.
pub fn min_distance_route(
    mesh: &NavMesh,
    fields: &FieldStack,
    ship: &Ship,
    query: &RouteQuery,
    constraint: Option<&ConstraintField>,
) -> Result<Route> {
    check_inputs(mesh, fields, ship, query)?;
    let (start, goal) = endpoints(mesh, query, constraint)?;
    let blocked = |c: usize| constraint.is_some_and(|k| k.is_blocked(c));
    let path = astar(mesh, start, goal, ship.v_design, &blocked, |_, e, _| {
        travel_seconds(e.distance_nm, ship.v_design)
    })
    .ok_or(RouteError::Unreachable)?;
    let legs = evaluate_path(mesh, fields, ship, &path, query.departure, &WaveHeightSpeedLoss)?;
    Ok(assemble(RouteKind::MinimumDistance, query, start, goal, legs))
}
