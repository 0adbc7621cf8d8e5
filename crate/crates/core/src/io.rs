//! Snapshot export: CSV and a little-endian binary block format.
//!
//! Block layout: `b"NSFL"`, `u32` version, `u64` dims `(n1, n2, 4)`, `f64` dt,
//! `u64` count, then `count · n1 · n2 · 4` row-major `f64`.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::StateField;
use crate::grid::Grid;
use crate::harness::ConvergenceStudy;

pub const MAGIC: &[u8; 4] = b"NSFL";
pub const VERSION: u32 = 1;

/// Round-trip decimal formatting (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn snapshot_csv(grid: &Grid, field: &StateField) -> Result<String> {
    if !field.matches(grid) {
        return Err(Error::GridMismatch("snapshot does not match the grid".into()));
    }
    let mut s = String::from("x1,x2,u0,u1,u2,u3\n");
    for (i, &x1) in grid.x1().iter().enumerate() {
        for (j, &x2) in grid.x2().iter().enumerate() {
            let u = field.at(i, j);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                fmt_f64(x1),
                fmt_f64(x2),
                fmt_f64(u[0]),
                fmt_f64(u[1]),
                fmt_f64(u[2]),
                fmt_f64(u[3])
            );
        }
    }
    Ok(s)
}

pub fn study_csv(study: &ConvergenceStudy) -> String {
    let mut s = String::from("epsilon,err_rho,err_v1,err_v2,err_theta\n");
    for (e, row) in study.epsilons.iter().zip(&study.errors) {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_f64(*e),
            fmt_f64(row[0]),
            fmt_f64(row[1]),
            fmt_f64(row[2]),
            fmt_f64(row[3])
        );
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotBlock {
    pub n1: usize,
    pub n2: usize,
    pub dt: f64,
    pub fields: Vec<StateField>,
}

fn io_err(e: std::io::Error) -> Error {
    Error::InvalidInput(format!("i/o: {e}"))
}

pub fn write_block(out: &mut impl Write, dt: f64, fields: &[StateField]) -> Result<()> {
    let (n1, n2) = fields.first().map_or((0, 0), |f| (f.n1(), f.n2()));
    if fields.iter().any(|f| f.n1() != n1 || f.n2() != n2) {
        return Err(Error::GridMismatch("snapshots differ in shape".into()));
    }
    let mut buf = Vec::with_capacity(48 + fields.len() * n1 * n2 * 32);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for d in [n1 as u64, n2 as u64, 4] {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    buf.extend_from_slice(&dt.to_le_bytes());
    buf.extend_from_slice(&(fields.len() as u64).to_le_bytes());
    for f in fields {
        for u in f.data() {
            for v in u {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out.write_all(&buf).map_err(io_err)
}

pub fn read_block(input: &mut impl Read) -> Result<SnapshotBlock> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(io_err)?;
    let bad = |m: &str| Error::InvalidInput(format!("snapshot block: {m}"));
    if bytes.len() < 48 || &bytes[..4] != MAGIC {
        return Err(bad("missing header"));
    }
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let (n1, n2, nc) = (u64_at(8) as usize, u64_at(16) as usize, u64_at(24));
    let dt = f64::from_bits(u64_at(32));
    let count = u64_at(40) as usize;
    if nc != 4 || bytes.len() != 48 + count * n1 * n2 * 32 {
        return Err(bad("payload size does not match the header"));
    }
    let mut fields = Vec::with_capacity(count);
    let mut o = 48;
    for _ in 0..count {
        let mut data = Vec::with_capacity(n1 * n2);
        for _ in 0..n1 * n2 {
            let mut u = [0.0; 4];
            for v in &mut u {
                *v = f64::from_bits(u64_at(o));
                o += 8;
            }
            data.push(u);
        }
        fields.push(StateField::from_data(n1, n2, data));
    }
    Ok(SnapshotBlock { n1, n2, dt, fields })
}
