//! CSV and binary export of nodal fields.
//!
//! Binary layout, little endian: magic `DLAB`, `u32` format version (1),
//! `u32` dimension, `f64` h, `f64` τ (0 for spatial fields), `u64` shape in
//! each of three axes, `u64` number of levels, then for every level the value
//! of every node in node order (`i` fastest), exterior nodes as 0.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::geometry::{Grid, NodeKind};

const MAGIC: &[u8; 4] = b"DLAB";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryHeader {
    pub dim: u32,
    pub h: f64,
    pub tau: f64,
    pub shape: [u64; 3],
    pub levels: u64,
}

/// One line per non-exterior node: coordinates then value (per level, prefixed by `t`).
pub fn write_csv(
    out: &mut impl Write,
    grid: &Grid,
    levels: &[(Option<f64>, &[f64])],
) -> Result<()> {
    let dim = grid.dim();
    let axes = ["x1", "x2", "x3"];
    let timed = levels.iter().any(|(t, _)| t.is_some());
    let mut header: Vec<&str> = Vec::new();
    if timed {
        header.push("t");
    }
    header.extend(&axes[..dim]);
    header.push("value");
    writeln!(out, "{}", header.join(","))?;
    for (t, values) in levels {
        for id in 0..grid.len() {
            if grid.kind(id) == NodeKind::Exterior {
                continue;
            }
            let x = grid.position(id);
            let mut cols: Vec<String> = Vec::new();
            if let Some(t) = t {
                cols.push(format!("{t}"));
            }
            cols.extend(x[..dim].iter().map(|v| format!("{v}")));
            cols.push(format!("{}", values[id]));
            writeln!(out, "{}", cols.join(","))?;
        }
    }
    Ok(())
}

pub fn write_binary(out: &mut impl Write, grid: &Grid, tau: f64, levels: &[&[f64]]) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(grid.dim() as u32).to_le_bytes())?;
    out.write_all(&grid.h().to_le_bytes())?;
    out.write_all(&tau.to_le_bytes())?;
    for s in grid.shape() {
        out.write_all(&(s as u64).to_le_bytes())?;
    }
    out.write_all(&(levels.len() as u64).to_le_bytes())?;
    for level in levels {
        if level.len() != grid.len() {
            return Err(Error::GridMismatch(
                "level length differs from node count".into(),
            ));
        }
        for (id, v) in level.iter().enumerate() {
            let v = if grid.kind(id) == NodeKind::Exterior {
                0.0
            } else {
                *v
            };
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_binary(r: &mut impl Read) -> Result<(BinaryHeader, Vec<Vec<f64>>)> {
    if &read_array::<4>(r)? != MAGIC {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::InvalidData,
            "bad magic",
        )));
    }
    let version = u32::from_le_bytes(read_array(r)?);
    if version != VERSION {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unsupported version {version}"),
        )));
    }
    let dim = u32::from_le_bytes(read_array(r)?);
    let h = f64::from_le_bytes(read_array(r)?);
    let tau = f64::from_le_bytes(read_array(r)?);
    let mut shape = [0u64; 3];
    for s in shape.iter_mut() {
        *s = u64::from_le_bytes(read_array(r)?);
    }
    let levels = u64::from_le_bytes(read_array(r)?);
    let count = shape.iter().product::<u64>() as usize;
    let mut data = Vec::with_capacity(levels as usize);
    for _ in 0..levels {
        let mut level = Vec::with_capacity(count);
        for _ in 0..count {
            level.push(f64::from_le_bytes(read_array(r)?));
        }
        data.push(level);
    }
    Ok((
        BinaryHeader {
            dim,
            h,
            tau,
            shape,
            levels,
        },
        data,
    ))
}
