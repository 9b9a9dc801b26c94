use super::{FieldStack, GeoGrid, GridError, Result, WaveFrame, NCHAN};

/// Resample a stack onto `target_nlat x target_nlon` nodes over the same
/// bounding box.
///
/// Channels use bilinear interpolation restricted to ocean source nodes
/// (weights renormalised), the mask uses the nearest source node, and the
/// direction components are rescaled to unit length afterwards.
pub fn regrid(stack: &FieldStack, target_nlat: usize, target_nlon: usize) -> Result<FieldStack> {
    if target_nlat < 2 || target_nlon < 2 {
        return Err(GridError::Invariant("regrid targets must be >= 2".into()));
    }
    let src = &stack.grid;
    if target_nlat == src.nlat && target_nlon == src.nlon {
        return Ok(stack.clone());
    }
    let ri = (src.nlat - 1) as f64 / (target_nlat - 1) as f64;
    let rj = (src.nlon - 1) as f64 / (target_nlon - 1) as f64;

    // Per target node: nearest source node and up to 4 weighted ocean sources.
    let mut mask = Vec::with_capacity(target_nlat * target_nlon);
    let mut stencils: Vec<Vec<(usize, f64)>> = Vec::with_capacity(target_nlat * target_nlon);
    for ti in 0..target_nlat {
        let fi = (ti as f64 * ri).min((src.nlat - 1) as f64);
        let i0 = (fi.floor() as usize).min(src.nlat - 2);
        let ai = fi - i0 as f64;
        for tj in 0..target_nlon {
            let fj = (tj as f64 * rj).min((src.nlon - 1) as f64);
            let j0 = (fj.floor() as usize).min(src.nlon - 2);
            let aj = fj - j0 as f64;
            let near = src.idx(fi.round() as usize, fj.round() as usize);
            let ocean = src.mask[near];
            mask.push(ocean);
            if !ocean {
                stencils.push(Vec::new());
                continue;
            }
            let corners = [
                (src.idx(i0, j0), (1.0 - ai) * (1.0 - aj)),
                (src.idx(i0, j0 + 1), (1.0 - ai) * aj),
                (src.idx(i0 + 1, j0), ai * (1.0 - aj)),
                (src.idx(i0 + 1, j0 + 1), ai * aj),
            ];
            let mut st: Vec<(usize, f64)> = corners
                .into_iter()
                .filter(|&(c, w)| src.mask[c] && w > 0.0)
                .collect();
            let total: f64 = st.iter().map(|&(_, w)| w).sum();
            if total > 0.0 {
                st.iter_mut().for_each(|(_, w)| *w /= total);
            } else {
                st = vec![(near, 1.0)];
            }
            stencils.push(st);
        }
    }
    let grid = GeoGrid::new(src.lat_min, src.lat_max, src.lon_min, src.lon_max, target_nlat, target_nlon, mask)?;
    let (ns, nt) = (src.ncells(), grid.ncells());
    let frames = stack
        .frames
        .iter()
        .map(|f| {
            let mut out = WaveFrame::zeros(f.timestamp, nt);
            for c in 0..NCHAN {
                let sp = &f.data[c * ns..(c + 1) * ns];
                for (cell, st) in stencils.iter().enumerate() {
                    out.data[c * nt + cell] = st.iter().map(|&(s, w)| w * sp[s]).sum();
                }
            }
            out.renormalize_directions(&grid.mask);
            out
        })
        .collect();
    Ok(FieldStack {
        grid,
        frames,
        step_seconds: stack.step_seconds,
    })
}
