use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::SpatialDataset;
use crate::error::{Error, Result};

/// Reads `x,y[,z][,value]` CSV. The header decides dimension and whether
/// values are present.
pub fn read_csv(path: &Path) -> Result<SpatialDataset> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let headers = reader.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    let (dim, has_values) = match names.as_slice() {
        ["x", "y"] => (2, false),
        ["x", "y", "value"] => (2, true),
        ["x", "y", "z"] => (3, false),
        ["x", "y", "z", "value"] => (3, true),
        _ => return Err(Error::Parse(format!("unexpected CSV header {names:?}"))),
    };
    let mut locations = Vec::new();
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let field = |k: usize| -> Result<f64> {
            record
                .get(k)
                .ok_or_else(|| Error::Parse(format!("row {}: missing column {k}", line + 2)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))
        };
        let mut p = [0.0; 3];
        for (k, slot) in p.iter_mut().enumerate().take(dim) {
            *slot = field(k)?;
        }
        locations.push(p);
        if has_values {
            values.push(field(dim)?);
        }
    }
    SpatialDataset::new(dim, locations, has_values.then_some(values))
}

pub fn write_csv(data: &SpatialDataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let axes = ["x", "y", "z"];
    let mut header: Vec<&str> = axes[..data.dim()].to_vec();
    if data.values().is_some() {
        header.push("value");
    }
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.len() {
        let p = data.point(i);
        let mut fields: Vec<String> = p[..data.dim()].iter().map(|v| format!("{v:?}")).collect();
        if let Some(v) = data.values() {
            fields.push(format!("{:?}", v[i]));
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Little-endian binary: `u64 n`, `u32 d`, `n*d` coordinates, then optionally `n` values.
pub fn read_binary(path: &Path) -> Result<SpatialDataset> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() < 12 {
        return Err(Error::Parse("binary dataset header truncated".into()));
    }
    let n = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    let coords = n * dim;
    let has_values = if body.len() == coords * 8 {
        false
    } else if body.len() == (coords + n) * 8 {
        true
    } else {
        return Err(Error::Parse(format!(
            "binary dataset body has {} bytes; expected {} or {}",
            body.len(),
            coords * 8,
            (coords + n) * 8
        )));
    };
    let floats: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let values = has_values.then(|| floats[coords..].to_vec());
    SpatialDataset::from_flat(dim, &floats[..coords], values)
}

pub fn write_binary(data: &SpatialDataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&(data.len() as u64).to_le_bytes())?;
    out.write_all(&(data.dim() as u32).to_le_bytes())?;
    for p in data.locations() {
        for v in &p[..data.dim()] {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    if let Some(values) = data.values() {
        for v in values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Dispatches on extension: `.csv` or anything else as binary.
pub fn read_dataset(path: &Path) -> Result<SpatialDataset> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_csv(path),
        _ => read_binary(path),
    }
}
