//! Section-tagged binary dump of the basis as sparse triplets.
//!
//! Layout (little endian): magic `MLKBASIS`, then sections of
//! `[u8; 4]` tag, `u64` count, and `count` records. `WROW` and `LROW`
//! records are `(u64 row, u64 col, f64 value)` with columns in dataset
//! order; `LEVL` records are `(i64 level, u64 first_row, u64 rows)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::MultiLevelBasis;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MLKBASIS";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BasisDump {
    pub w: Vec<(u64, u64, f64)>,
    pub l: Vec<(u64, u64, f64)>,
    pub levels: Vec<(i64, u64, u64)>,
}

pub fn write_dump(basis: &MultiLevelBasis, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;

    let mut w = Vec::with_capacity(basis.nnz_w());
    for g in basis.groups() {
        for c in 0..g.count() {
            for (local, pos) in g.range.clone().enumerate() {
                let v = g.vectors[(local, c)];
                if v != 0.0 {
                    w.push(((g.first_row + c) as u64, basis.order()[pos] as u64, v));
                }
            }
        }
    }
    write_triplets(&mut out, b"WROW", &w)?;

    let lv = basis.l_vectors();
    let mut l = Vec::new();
    for j in 0..lv.ncols() {
        for pos in 0..lv.nrows() {
            l.push((j as u64, basis.order()[pos] as u64, lv[(pos, j)]));
        }
    }
    write_triplets(&mut out, b"LROW", &l)?;

    let stats = basis.level_stats();
    out.write_all(b"LEVL")?;
    out.write_all(&(stats.len() as u64).to_le_bytes())?;
    for s in stats {
        let first = basis.level_rows(s.level).start;
        out.write_all(&(s.level as i64).to_le_bytes())?;
        out.write_all(&(first as u64).to_le_bytes())?;
        out.write_all(&(s.rows as u64).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn write_triplets<W: Write>(out: &mut W, tag: &[u8; 4], t: &[(u64, u64, f64)]) -> Result<()> {
    out.write_all(tag)?;
    out.write_all(&(t.len() as u64).to_le_bytes())?;
    for (r, c, v) in t {
        out.write_all(&r.to_le_bytes())?;
        out.write_all(&c.to_le_bytes())?;
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<BasisDump> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::Parse("not a basis dump".into()));
    }
    let mut pos = 8;
    let take8 = |pos: &mut usize| -> Result<[u8; 8]> {
        let s = bytes
            .get(*pos..*pos + 8)
            .ok_or_else(|| Error::Parse("basis dump truncated".into()))?;
        *pos += 8;
        Ok(s.try_into().unwrap())
    };
    let mut dump = BasisDump::default();
    while pos < bytes.len() {
        let tag: [u8; 4] = bytes
            .get(pos..pos + 4)
            .ok_or_else(|| Error::Parse("basis dump truncated".into()))?
            .try_into()
            .unwrap();
        pos += 4;
        let count = u64::from_le_bytes(take8(&mut pos)?);
        for _ in 0..count {
            let a = take8(&mut pos)?;
            let b = u64::from_le_bytes(take8(&mut pos)?);
            let c = take8(&mut pos)?;
            match &tag {
                b"WROW" => dump.w.push((u64::from_le_bytes(a), b, f64::from_le_bytes(c))),
                b"LROW" => dump.l.push((u64::from_le_bytes(a), b, f64::from_le_bytes(c))),
                b"LEVL" => dump.levels.push((i64::from_le_bytes(a), b, u64::from_le_bytes(c))),
                other => return Err(Error::Parse(format!("unknown section {:?}", String::from_utf8_lossy(other)))),
            }
        }
    }
    Ok(dump)
}
