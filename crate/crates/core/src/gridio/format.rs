//! `.wgrid` flat binary layout, little-endian throughout:
//!
//! ```text
//! magic "SWRV" | version u16 | nlat u32 | nlon u32 | nchan u32 | ntime u32
//! | lat_min f64 | lat_max f64 | lon_min f64 | lon_max f64 | step_seconds u32
//! | t0 i64 | 4 x (u8 length + UTF-8 channel name) | mask nlat*nlon bytes
//! | payload f32 x ntime*nchan*nlat*nlon in [time][chan][lat][lon] order
//! ```

use std::io::Write;
use std::path::Path;

use super::{Channel, FieldStack, GeoGrid, GridError, Result, WaveFrame, NCHAN};

pub const MAGIC: &[u8; 4] = b"SWRV";
pub const FORMAT_VERSION: u16 = 1;

pub fn write_field_stack(stack: &FieldStack, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(stack)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.flush()?;
    Ok(())
}

pub fn read_field_stack(path: impl AsRef<Path>) -> Result<FieldStack> {
    let bytes = std::fs::read(path)?;
    decode(&bytes)
}

pub fn encode(stack: &FieldStack) -> Result<Vec<u8>> {
    stack.validate()?;
    let g = &stack.grid;
    let n = g.ncells();
    let mut out = Vec::with_capacity(128 + n + 4 * NCHAN * n * stack.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [g.nlat, g.nlon, NCHAN, stack.len()] {
        let v = u32::try_from(v).map_err(|_| GridError::Invariant("dimension exceeds u32".into()))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [g.lat_min, g.lat_max, g.lon_min, g.lon_max] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&stack.step_seconds.to_le_bytes());
    out.extend_from_slice(&stack.t0().to_le_bytes());
    for c in Channel::ALL {
        let name = c.name().as_bytes();
        out.push(name.len() as u8);
        out.extend_from_slice(name);
    }
    out.extend(g.mask.iter().map(|&m| m as u8));
    for frame in &stack.frames {
        for &v in &frame.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(GridError::TruncatedPayload)?;
        if end > self.buf.len() {
            return Err(GridError::TruncatedPayload);
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

pub fn decode(bytes: &[u8]) -> Result<FieldStack> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(GridError::BadMagic);
    }
    r.take(4)?;
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(GridError::VersionMismatch(version));
    }
    let nlat = r.u32()? as usize;
    let nlon = r.u32()? as usize;
    let nchan = r.u32()? as usize;
    let ntime = r.u32()? as usize;
    if nchan != NCHAN {
        return Err(GridError::Invariant(format!("expected {NCHAN} channels, found {nchan}")));
    }
    let (lat_min, lat_max, lon_min, lon_max) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let step_seconds = r.u32()?;
    let t0 = r.i64()?;
    for c in Channel::ALL {
        let len = r.take(1)?[0] as usize;
        let name = r.take(len)?;
        if name != c.name().as_bytes() {
            return Err(GridError::Invariant(format!(
                "channel name {:?}, expected {}",
                String::from_utf8_lossy(name),
                c.name()
            )));
        }
    }
    let n = nlat
        .checked_mul(nlon)
        .ok_or_else(|| GridError::Invariant("grid too large".into()))?;
    let mask: Vec<bool> = r.take(n)?.iter().map(|&b| b != 0).collect();
    let grid = GeoGrid::new(lat_min, lat_max, lon_min, lon_max, nlat, nlon, mask)?;

    let frame_len = NCHAN * n;
    let mut frames = Vec::with_capacity(ntime);
    for k in 0..ntime {
        let raw = r.take(4 * frame_len)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("chunk of 4")) as f64)
            .collect();
        for c in 0..NCHAN {
            for cell in 0..n {
                if grid.mask[cell] && data[c * n + cell].is_nan() {
                    return Err(GridError::NanInOcean {
                        time: k,
                        channel: c,
                        cell,
                    });
                }
            }
        }
        frames.push(WaveFrame {
            timestamp: t0 + k as i64 * step_seconds as i64,
            data,
        });
    }
    if r.pos != bytes.len() {
        return Err(GridError::Invariant(format!(
            "{} trailing bytes after payload",
            bytes.len() - r.pos
        )));
    }
    let stack = FieldStack {
        grid,
        frames,
        step_seconds,
    };
    stack.validate()?;
    Ok(stack)
}
