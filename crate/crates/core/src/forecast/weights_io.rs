//! `.wgts` layout, little-endian:
//!
//! ```text
//! magic "SWRW" | version u16 | kmax u32 | width u32
//! | per group: u8 name length + name | u64 count | count x f32 (real)
//! |            or count x (f32 re, f32 im) (complex)
//! ```
//!
//! Groups follow [`GROUP_NAMES`], then a trailing real group `activation`
//! with one value (0 = GELU, 1 = identity).

use std::io::Write;
use std::path::Path;

use super::network::{group_is_complex, Activation, Params, SurrogateWeights, GROUP_NAMES};
use super::{ForecastError, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"SWRW";
pub const WEIGHTS_VERSION: u16 = 1;
const ACTIVATION_GROUP: &str = "activation";

pub fn encode_weights(w: &SurrogateWeights) -> Result<Vec<u8>> {
    w.validate()?;
    let mut out = Vec::with_capacity(32 + 4 * w.params.n_params());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(w.kmax as u32).to_le_bytes());
    out.extend_from_slice(&(w.width as u32).to_le_bytes());
    let mut put_group = |name: &str, values: &[f64], complex: bool| {
        out.push(name.len() as u8);
        out.extend_from_slice(name.as_bytes());
        let count = if complex { values.len() / 2 } else { values.len() };
        out.extend_from_slice(&(count as u64).to_le_bytes());
        for &v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    };
    for (i, (name, g)) in GROUP_NAMES.iter().zip(w.params.groups()).enumerate() {
        put_group(name, g, group_is_complex(i));
    }
    let act = match w.activation {
        Activation::Gelu => 0.0,
        Activation::Identity => 1.0,
    };
    put_group(ACTIVATION_GROUP, &[act], false);
    Ok(out)
}

pub fn decode_weights(bytes: &[u8]) -> Result<SurrogateWeights> {
    let fmt = |m: String| ForecastError::Format(m);
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| fmt("truncated".into()))?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    if take(4)? != WEIGHTS_MAGIC {
        return Err(fmt("bad magic".into()));
    }
    let version = u16::from_le_bytes(take(2)?.try_into().expect("2 bytes"));
    if version != WEIGHTS_VERSION {
        return Err(fmt(format!("unsupported version {version}")));
    }
    let kmax = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
    let width = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
    if kmax == 0 || width == 0 || kmax > 1 << 12 || width > 1 << 12 {
        return Err(fmt(format!("implausible kmax {kmax} / width {width}")));
    }
    let mut params = Params::zeros(kmax, width);
    let mut read_group = |expect: &str, complex: bool, dest: &mut Vec<f64>| -> Result<()> {
        let len = take(1)?[0] as usize;
        let name = take(len)?;
        if name != expect.as_bytes() {
            return Err(fmt(format!(
                "group {:?}, expected {expect}",
                String::from_utf8_lossy(name)
            )));
        }
        let count = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let values = if complex { 2 * count } else { count };
        if values != dest.len() {
            return Err(fmt(format!("group {expect} has {values} values, expected {}", dest.len())));
        }
        let raw = take(4 * values)?;
        for (d, b) in dest.iter_mut().zip(raw.chunks_exact(4)) {
            *d = f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64;
        }
        Ok(())
    };
    for (i, (name, g)) in GROUP_NAMES.iter().zip(params.groups_mut()).enumerate() {
        read_group(name, group_is_complex(i), g)?;
    }
    let mut act = vec![0.0];
    read_group(ACTIVATION_GROUP, false, &mut act)?;
    let activation = match act[0] {
        v if v == 0.0 => Activation::Gelu,
        v if v == 1.0 => Activation::Identity,
        v => return Err(fmt(format!("unknown activation code {v}"))),
    };
    if pos != bytes.len() {
        return Err(fmt(format!("{} trailing bytes", bytes.len() - pos)));
    }
    let w = SurrogateWeights {
        kmax,
        width,
        activation,
        params,
    };
    w.validate()?;
    Ok(w)
}

pub fn write_weights(w: &SurrogateWeights, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_weights(w)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<SurrogateWeights> {
    decode_weights(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quantized(mut w: SurrogateWeights) -> SurrogateWeights {
        for g in w.params.groups_mut() {
            g.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        w
    }

    #[test]
    fn round_trip_matches_f32_quantization() {
        let mut w = SurrogateWeights::init(2, 3, [2.0, 1.0, 1.0, 9.0], 11);
        w.activation = Activation::Identity;
        let back = decode_weights(&encode_weights(&w).unwrap()).unwrap();
        assert_eq!(back, quantized(w));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.wgts");
        let w = quantized(SurrogateWeights::init(3, 2, [1.0; 4], 5));
        write_weights(&w, &path).unwrap();
        assert_eq!(read_weights(&path).unwrap(), w);
    }

    #[test]
    fn header_layout() {
        let w = SurrogateWeights::zeros(1, 1);
        let b = encode_weights(&w).unwrap();
        assert_eq!(&b[..4], b"SWRW");
        assert_eq!(&b[4..6], &1u16.to_le_bytes());
        assert_eq!(&b[6..10], &1u32.to_le_bytes());
        assert_eq!(&b[10..14], &1u32.to_le_bytes());
        // first group: "lift_w", 4 reals
        assert_eq!(b[14], 6);
        assert_eq!(&b[15..21], b"lift_w");
        assert_eq!(&b[21..29], &4u64.to_le_bytes());
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let b = encode_weights(&SurrogateWeights::zeros(1, 2)).unwrap();
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode_weights(&bad).is_err());
        assert!(decode_weights(&b[..b.len() - 1]).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(decode_weights(&extra).is_err());
    }
}
