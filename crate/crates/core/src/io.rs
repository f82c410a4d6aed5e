//! Binary trajectory files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `UTRJ` |
//! | 4 | 4 | format version (u32) |
//! | 8 | 1 | system code (0 lorenz, 1 ks, 2 ns) |
//! | 9 | 1 | scheme code (0 euler, 1 bdf1, 2 heun) |
//! | 10 | 1 | ndim |
//! | 11 | 8·ndim | dims (u64), time first |
//! | … | 8 | dt (f64) |
//! | … | 16 | reserved, zero |
//! | … | 8·∏dims | values (f64), row-major |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, SystemKind, Trajectory};
use crate::systems::Scheme;

pub const MAGIC: &[u8; 4] = b"UTRJ";
pub const FORMAT_VERSION: u32 = 1;
const RESERVED: usize = 16;

/// Decoded file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub trajectory: Trajectory,
    pub scheme: Scheme,
}

pub fn encode(t: &Trajectory, scheme: Scheme) -> Vec<u8> {
    let grid = t.grid();
    let dims = grid.dims();
    let mut out = Vec::with_capacity(11 + 8 * dims.len() + 8 + RESERVED + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(grid.kind.code());
    out.push(scheme.code());
    out.push(dims.len() as u8);
    for d in &dims {
        out.extend_from_slice(&(*d as u64).to_le_bytes());
    }
    out.extend_from_slice(&grid.dt.to_le_bytes());
    out.extend_from_slice(&[0u8; RESERVED]);
    for v in t.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(parse_err(
                format!("truncated {field}: need {n} bytes, {} available", self.bytes.len() - self.pos),
                self.pos,
            )),
        }
    }

    fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }
}

fn parse_err(message: impl Into<String>, offset: usize) -> Error {
    Error::Parse {
        message: message.into(),
        offset: offset as u64,
    }
}

pub fn decode(bytes: &[u8]) -> Result<TrajectoryFile> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(parse_err("bad magic", 0));
    }
    let version = c.u32("format version")?;
    if version == 0 || version > FORMAT_VERSION {
        return Err(parse_err(format!("unsupported format version {version}"), 4));
    }
    let kind_code = c.u8("system code")?;
    let kind = SystemKind::from_code(kind_code).ok_or_else(|| parse_err(format!("unknown system code {kind_code}"), 8))?;
    let scheme_code = c.u8("scheme code")?;
    let scheme = Scheme::from_code(scheme_code).ok_or_else(|| parse_err(format!("unknown scheme code {scheme_code}"), 9))?;
    let ndim = c.u8("ndim")? as usize;
    let mut dims = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let at = c.pos;
        let d = c.u64(&format!("dims[{i}]"))?;
        let d = usize::try_from(d).map_err(|_| parse_err(format!("dims[{i}] = {d} is too large"), at))?;
        dims.push(d);
    }
    let dt_at = c.pos;
    let dt = c.f64("dt")?;
    let reserved_at = c.pos;
    if c.take(RESERVED, "reserved bytes")?.iter().any(|b| *b != 0) {
        return Err(parse_err("reserved bytes are not zero", reserved_at));
    }
    let grid = grid_from_dims(kind, &dims, dt).map_err(|e| parse_err(format!("dims: {e}"), 11))?;
    grid.validate().map_err(|e| parse_err(format!("header: {e}"), dt_at))?;
    let count = dims.iter().try_fold(1usize, |a, d| a.checked_mul(*d));
    let expected = count.and_then(|n| n.checked_mul(8));
    let payload_at = c.pos;
    let actual = bytes.len() - payload_at;
    if expected != Some(actual) {
        let expected = expected.map_or_else(|| "overflowing".to_string(), |e| e.to_string());
        return Err(parse_err(
            format!("payload size mismatch: expected {expected} bytes, found {actual}"),
            payload_at,
        ));
    }
    let values: Vec<f64> = bytes[payload_at..]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(parse_err("payload contains a non-finite value", payload_at + 8 * i));
    }
    Ok(TrajectoryFile {
        trajectory: Trajectory::new(grid, values)?,
        scheme,
    })
}

fn grid_from_dims(kind: SystemKind, dims: &[usize], dt: f64) -> Result<GridSpec> {
    match (kind, dims) {
        (SystemKind::Lorenz, [t, 3]) => Ok(GridSpec::lorenz(*t, dt)),
        (SystemKind::Ks, [t, nx]) => Ok(GridSpec::ks(*nx, *t, dt)),
        (SystemKind::Ns, [t, nx, ny]) => Ok(GridSpec::ns(*nx, *ny, *t, dt)),
        _ => Err(Error::shape(format!("{dims:?} is not a valid {kind} layout"))),
    }
}

pub fn write_trajectory(path: impl AsRef<Path>, t: &Trajectory, scheme: Scheme) -> Result<()> {
    fs::write(path, encode(t, scheme))?;
    Ok(())
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<TrajectoryFile> {
    decode(&fs::read(path)?)
}

/// CSV with one row per frame: `t` then the frame values.
pub fn to_csv(t: &Trajectory) -> String {
    let grid = t.grid();
    let mut out = String::from("t");
    let labels: Vec<String> = match grid.kind {
        SystemKind::Lorenz => vec!["x".into(), "y".into(), "z".into()],
        SystemKind::Ks => (0..grid.resolutions[0]).map(|i| format!("u{i}")).collect(),
        SystemKind::Ns => {
            let ny = grid.resolutions[1];
            (0..grid.spatial_size()).map(|i| format!("w{}_{}", i / ny, i % ny)).collect()
        }
    };
    for l in labels {
        out.push(',');
        out.push_str(&l);
    }
    out.push('\n');
    for (i, frame) in t.frames().enumerate() {
        out.push_str(&format!("{}", i as f64 * grid.dt));
        for v in frame {
            out.push(',');
            out.push_str(&format!("{v:e}"));
        }
        out.push('\n');
    }
    out
}
