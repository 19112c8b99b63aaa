//! File formats: gaze JSON-lines, fixation CSV, `TSAL` binary maps, PGM/PPM previews.
//!
//! `TSAL` layout (little-endian): `b"TSAL" | u32 width | u32 height |
//! u8 normalization code | f32 * width * height` row-major.

use std::io::{BufRead, Write};
use std::path::Path;

use thiserror::Error;

use super::{Fixation, GazeError, GazeSample, Normalization, SaliencyMap, SignedMap};
use crate::io::write_atomic;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column {0}")]
    MissingColumn(&'static str),
    #[error("row {row}: bad {column} value {value:?}")]
    Field {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("not a TSAL file")]
    BadMagic,
    #[error("truncated TSAL payload")]
    Truncated,
    #[error("unknown normalization code {0}")]
    Normalization(u8),
    #[error(transparent)]
    Map(#[from] GazeError),
}

pub fn read_gaze_jsonl(reader: impl BufRead) -> Result<Vec<GazeSample>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| FormatError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_gaze_jsonl(mut w: impl Write, samples: &[GazeSample]) -> Result<(), FormatError> {
    for s in samples {
        serde_json::to_writer(&mut w, s).map_err(|source| FormatError::Json { line: 0, source })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads `image_id,observer_id,order_index,x,y[,t_ms]`; extra columns are ignored
/// and an empty `t_ms` cell means "not yet recovered".
pub fn read_fixations_csv(reader: impl std::io::Read) -> Result<Vec<Fixation>, FormatError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &'static str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &'static str| col(name).ok_or(FormatError::MissingColumn(name));
    let (ci, co, cn, cx, cy) = (
        need("image_id")?,
        need("observer_id")?,
        need("order_index")?,
        need("x")?,
        need("y")?,
    );
    let ct = col("t_ms");
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |idx: usize| rec.get(idx).unwrap_or("").trim();
        let parse = |idx: usize, column: &'static str| -> Result<f64, FormatError> {
            field(idx).parse().map_err(|_| FormatError::Field {
                row: row + 1,
                column,
                value: field(idx).to_string(),
            })
        };
        let order_index = field(cn).parse().map_err(|_| FormatError::Field {
            row: row + 1,
            column: "order_index",
            value: field(cn).to_string(),
        })?;
        let t_ms = match ct {
            Some(idx) if !field(idx).is_empty() => Some(parse(idx, "t_ms")?),
            _ => None,
        };
        out.push(Fixation {
            image_id: field(ci).to_string(),
            observer_id: field(co).to_string(),
            order_index,
            x: parse(cx, "x")?,
            y: parse(cy, "y")?,
            t_ms,
        });
    }
    Ok(out)
}

/// Writes fixations; the `t_ms` column is emitted when any fixation has a timestamp.
/// `extra` adds one trailing column with a per-row value.
pub fn write_fixations_csv(
    w: impl Write,
    fixations: &[Fixation],
    extra: Option<(&str, &[String])>,
) -> Result<(), FormatError> {
    let with_t = fixations.iter().any(|f| f.t_ms.is_some());
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["image_id", "observer_id", "order_index", "x", "y"];
    if with_t {
        header.push("t_ms");
    }
    if let Some((name, _)) = extra {
        header.push(name);
    }
    wtr.write_record(&header)?;
    for (i, f) in fixations.iter().enumerate() {
        let mut rec = vec![
            f.image_id.clone(),
            f.observer_id.clone(),
            f.order_index.to_string(),
            f.x.to_string(),
            f.y.to_string(),
        ];
        if with_t {
            rec.push(f.t_ms.map(|t| t.to_string()).unwrap_or_default());
        }
        if let Some((_, values)) = extra {
            rec.push(values[i].clone());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn tsal_bytes(map: &SaliencyMap) -> Vec<u8> {
    let mut buf = Vec::with_capacity(13 + 4 * map.values().len());
    buf.extend_from_slice(b"TSAL");
    buf.extend((map.width() as u32).to_le_bytes());
    buf.extend((map.height() as u32).to_le_bytes());
    buf.push(map.normalization().code());
    for &v in map.values() {
        buf.extend((v as f32).to_le_bytes());
    }
    buf
}

pub fn parse_tsal(bytes: &[u8]) -> Result<SaliencyMap, FormatError> {
    if bytes.len() < 13 || &bytes[..4] != b"TSAL" {
        return Err(FormatError::BadMagic);
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let norm = Normalization::from_code(bytes[12]).ok_or(FormatError::Normalization(bytes[12]))?;
    let payload = &bytes[13..];
    if payload.len() != 4 * width * height {
        return Err(FormatError::Truncated);
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(SaliencyMap::new(width, height, values, norm)?)
}

pub fn write_tsal(path: impl AsRef<Path>, map: &SaliencyMap) -> Result<(), FormatError> {
    write_atomic(path.as_ref(), &tsal_bytes(map))?;
    Ok(())
}

pub fn read_tsal(path: impl AsRef<Path>) -> Result<SaliencyMap, FormatError> {
    parse_tsal(&std::fs::read(path)?)
}

/// 16-bit binary PGM, scaled so the map maximum is 65535.
pub fn write_pgm16(path: impl AsRef<Path>, map: &SaliencyMap) -> Result<(), FormatError> {
    let max = map.max();
    let mut buf = format!("P5\n{} {}\n65535\n", map.width(), map.height()).into_bytes();
    for &v in map.values() {
        let level = if max > 0.0 { (v / max * 65535.0).round() as u16 } else { 0 };
        buf.extend(level.to_be_bytes());
    }
    write_atomic(path.as_ref(), &buf)?;
    Ok(())
}

/// 8-bit PPM on a diverging ramp: white at zero, red for positive, blue for
/// negative, saturating at the largest magnitude.
pub fn write_ppm_diverging(path: impl AsRef<Path>, map: &SignedMap) -> Result<(), FormatError> {
    let scale = map.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut buf = format!("P6\n{} {}\n255\n", map.width, map.height).into_bytes();
    for &v in &map.values {
        let a = if scale > 0.0 { (v.abs() / scale).min(1.0) } else { 0.0 };
        let fade = (255.0 * (1.0 - a)).round() as u8;
        let rgb = if v >= 0.0 { [255, fade, fade] } else { [fade, fade, 255] };
        buf.extend(rgb);
    }
    write_atomic(path.as_ref(), &buf)?;
    Ok(())
}
