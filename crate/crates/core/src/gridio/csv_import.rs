use std::collections::BTreeMap;
use std::path::Path;

use super::{encode_direction, Channel, FieldStack, GeoGrid, GridError, Result, WaveFrame};

/// Import point samples (`lat,lon,time,vhm0,vmdr_deg,vtpk`) onto `grid`.
///
/// Samples snap to the nearest node. Multiple samples per node and time are
/// averaged (directions as vectors). A node becomes land unless it has a
/// sample in every frame; the grid's own mask is intersected with that.
pub fn import_csv(path: impl AsRef<Path>, grid: &GeoGrid, step_seconds: u32) -> Result<FieldStack> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, grid, step_seconds)
}

pub(crate) fn parse_csv(text: &str, grid: &GeoGrid, step_seconds: u32) -> Result<FieldStack> {
    grid.validate()?;
    if step_seconds == 0 {
        return Err(GridError::Invariant("step_seconds must be positive".into()));
    }
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| GridError::Csv("empty file".into()))?;
    let cols: Vec<String> = header.split(',').map(|s| s.trim().to_ascii_lowercase()).collect();
    if cols != ["lat", "lon", "time", "vhm0", "vmdr_deg", "vtpk"] {
        return Err(GridError::Csv(format!("unexpected header {header:?}")));
    }
    // (time, cell) -> (count, sum h, sum dx, sum dy, sum t)
    let mut acc: BTreeMap<(i64, usize), (u32, [f64; 4])> = BTreeMap::new();
    for (lineno, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(GridError::Csv(format!("line {}: expected 6 fields", lineno + 2)));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| GridError::Csv(format!("line {}: {e}", lineno + 2)))
        };
        let (lat, lon) = (num(f[0])?, num(f[1])?);
        let time = f[2]
            .parse::<i64>()
            .map_err(|e| GridError::Csv(format!("line {}: {e}", lineno + 2)))?;
        let (h, dir, tp) = (num(f[3])?, num(f[4])?, num(f[5])?);
        let Some(cell) = grid.snap(lat, lon) else {
            log::warn!("csv line {}: ({lat}, {lon}) outside grid, skipped", lineno + 2);
            continue;
        };
        let (dx, dy) = encode_direction(dir);
        let e = acc.entry((time, cell)).or_insert((0, [0.0; 4]));
        e.0 += 1;
        for (s, v) in e.1.iter_mut().zip([h, dx, dy, tp]) {
            *s += v;
        }
    }
    let times: Vec<i64> = {
        let mut t: Vec<i64> = acc.keys().map(|&(t, _)| t).collect();
        t.dedup();
        t
    };
    let (&t0, &tl) = match (times.first(), times.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(GridError::Csv("no samples inside the grid".into())),
    };
    if (tl - t0) % step_seconds as i64 != 0 || times.iter().any(|t| (t - t0) % step_seconds as i64 != 0) {
        return Err(GridError::Csv("sample times are not on the step_seconds lattice".into()));
    }
    let nframes = ((tl - t0) / step_seconds as i64) as usize + 1;
    let n = grid.ncells();
    let mut mask = grid.mask.clone();
    let mut frames: Vec<WaveFrame> = (0..nframes)
        .map(|k| WaveFrame::zeros(t0 + k as i64 * step_seconds as i64, n))
        .collect();
    let mut seen = vec![0usize; n];
    for (&(t, cell), &(count, sums)) in &acc {
        let k = ((t - t0) / step_seconds as i64) as usize;
        let c = count as f64;
        let f = &mut frames[k];
        f.set(Channel::Vhm0, cell, sums[0] / c);
        f.set(Channel::Vmdrx, cell, sums[1] / c);
        f.set(Channel::Vmdry, cell, sums[2] / c);
        f.set(Channel::Vtpk, cell, sums[3] / c);
        seen[cell] += 1;
    }
    for cell in 0..n {
        if seen[cell] != nframes {
            mask[cell] = false;
        }
    }
    let grid = GeoGrid { mask, ..grid.clone() };
    for f in frames.iter_mut() {
        f.renormalize_directions(&grid.mask);
        f.apply_land_sentinel(&grid.mask);
    }
    let stack = FieldStack {
        grid,
        frames,
        step_seconds,
    };
    stack.validate()?;
    Ok(stack)
}
