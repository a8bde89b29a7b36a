//! Grayscale portable float map (`Pf`) reading and writing.
//!
//! Layout: `Pf\n`, `W H\n`, a scale line whose sign gives the byte order
//! (negative is little-endian), then `W·H` 32-bit floats, bottom row first.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::maps::{DepthKind, DepthMap, Resolution, ScalarMap, UncertaintyMap};

/// Encodes a map as little-endian PFM bytes. Values are stored as `f32`.
pub fn encode(map: &ScalarMap) -> Result<Vec<u8>> {
    if let Some(bad) = map.data.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("cannot export non-finite value {bad}")));
    }
    let mut out = format!("Pf\n{} {}\n-1.0\n", map.width, map.height).into_bytes();
    out.reserve(map.width * map.height * 4);
    for y in (0..map.height).rev() {
        for x in 0..map.width {
            out.extend_from_slice(&(map.get(x, y) as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Reads one `\n`-terminated header line starting at `*pos`.
fn header_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<(usize, &'a str)> {
    let start = *pos;
    let end = bytes[start..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|i| start + i)
        .ok_or_else(|| Error::Parse {
            offset: start,
            message: "unterminated header line".into(),
        })?;
    let line = std::str::from_utf8(&bytes[start..end]).map_err(|e| Error::Parse {
        offset: start + e.valid_up_to(),
        message: "header is not valid text".into(),
    })?;
    *pos = end + 1;
    Ok((start, line.trim_end_matches('\r')))
}

pub fn decode(bytes: &[u8]) -> Result<ScalarMap> {
    let mut pos = 0;
    let (at, magic) = header_line(bytes, &mut pos)?;
    if magic.trim() != "Pf" {
        return Err(Error::Parse {
            offset: at,
            message: format!("expected grayscale magic \"Pf\", found {magic:?}"),
        });
    }
    let (at, dims) = header_line(bytes, &mut pos)?;
    let parts: Vec<&str> = dims.split_whitespace().collect();
    let parse_dim = |s: &str| s.parse::<usize>().ok().filter(|&v| v > 0);
    let (width, height) = match parts.as_slice() {
        [w, h] => match (parse_dim(w), parse_dim(h)) {
            (Some(w), Some(h)) => (w, h),
            _ => {
                return Err(Error::Parse {
                    offset: at,
                    message: format!("invalid dimensions {dims:?}"),
                })
            }
        },
        _ => {
            return Err(Error::Parse {
                offset: at,
                message: format!("expected \"W H\", found {dims:?}"),
            })
        }
    };
    let (at, scale) = header_line(bytes, &mut pos)?;
    let scale: f64 = scale
        .trim()
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| Error::Parse {
            offset: at,
            message: format!("invalid scale {scale:?}"),
        })?;
    let little = scale < 0.0;
    let needed = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Parse {
            offset: at,
            message: "dimensions overflow".into(),
        })?;
    let payload = &bytes[pos..];
    if payload.len() != needed {
        return Err(Error::Parse {
            offset: pos + payload.len().min(needed),
            message: format!("expected {needed} payload bytes, found {}", payload.len()),
        });
    }
    let mut data = vec![0.0; width * height];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().expect("chunk of four");
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (x, row) = (i % width, i / width);
        data[(height - 1 - row) * width + x] = v as f64;
    }
    ScalarMap::new(width, height, data)
}

pub fn export_pfm(map: &ScalarMap, path: &Path) -> Result<()> {
    let bytes = encode(map)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn import_pfm(path: &Path) -> Result<ScalarMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn export_depth(map: &DepthMap, path: &Path) -> Result<()> {
    export_pfm(&map.values, path)
}

pub fn export_uncertainty(map: &UncertaintyMap, path: &Path) -> Result<()> {
    export_pfm(&map.values, path)
}

pub fn import_depth(path: &Path, kind: DepthKind) -> Result<DepthMap> {
    DepthMap::new(import_pfm(path)?, Resolution::Full, kind)
}
