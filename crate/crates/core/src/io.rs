//! Flat binary field files: a small text header (kind, dims, extents,
//! points, boundary, time) followed by row-major little-endian 64-bit
//! floats; complex fields interleave re, im. Used for sampled potentials,
//! kernels, file-based initial data and retained snapshots.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{BoundaryKind, Field, Grid, RealField};

const MAGIC: &str = "lightcone-field v1";

fn write_header<W: Write>(w: &mut W, grid: &Grid, kind: &str, time: f64) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "kind {kind}")?;
    writeln!(w, "dim {}", grid.dim())?;
    writeln!(
        w,
        "boundary {}",
        match grid.boundary() {
            BoundaryKind::Periodic => "periodic",
            BoundaryKind::Dirichlet => "dirichlet",
        }
    )?;
    for &(lo, hi) in grid.extents() {
        writeln!(w, "extent {lo} {hi}")?;
    }
    let pts: Vec<String> = grid.points().iter().map(|p| p.to_string()).collect();
    writeln!(w, "points {}", pts.join(" "))?;
    writeln!(w, "time {time}")?;
    writeln!(w, "data")?;
    Ok(())
}

struct Header {
    kind: String,
    dim: usize,
    boundary: BoundaryKind,
    extents: Vec<(f64, f64)>,
    points: Vec<usize>,
    time: f64,
}

fn parse_header(text: &str) -> Result<Header> {
    let bad = |msg: &str| Error::BadFieldFile(msg.to_string());
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("missing magic line"));
    }
    let mut kind = None;
    let mut dim = None;
    let mut boundary = None;
    let mut extents = Vec::new();
    let mut points = Vec::new();
    let mut time = 0.0;
    for line in lines {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("kind") => kind = it.next().map(str::to_string),
            Some("dim") => {
                dim = Some(
                    it.next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad("bad dim line"))?,
                )
            }
            Some("boundary") => {
                boundary = match it.next() {
                    Some("periodic") => Some(BoundaryKind::Periodic),
                    Some("dirichlet") => Some(BoundaryKind::Dirichlet),
                    _ => return Err(bad("bad boundary line")),
                }
            }
            Some("extent") => {
                let lo = it.next().and_then(|s| s.parse().ok());
                let hi = it.next().and_then(|s| s.parse().ok());
                match (lo, hi) {
                    (Some(lo), Some(hi)) => extents.push((lo, hi)),
                    _ => return Err(bad("bad extent line")),
                }
            }
            Some("points") => {
                for tok in it {
                    points.push(tok.parse().map_err(|_| bad("bad points line"))?);
                }
            }
            Some("time") => {
                time = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad time line"))?
            }
            Some("data") => break,
            _ => return Err(bad("unknown header line")),
        }
    }
    Ok(Header {
        kind: kind.ok_or_else(|| bad("missing kind"))?,
        dim: dim.ok_or_else(|| bad("missing dim"))?,
        boundary: boundary.ok_or_else(|| bad("missing boundary"))?,
        extents,
        points,
        time,
    })
}

fn check_grid(header: &Header, grid: &Grid) -> Result<()> {
    let mismatch = |what: &str| {
        Err(Error::BadFieldFile(format!("file {what} does not match the expected grid")))
    };
    if header.dim != grid.dim() || header.boundary != grid.boundary() {
        return mismatch("geometry");
    }
    if header.points != grid.points() {
        return mismatch("point counts");
    }
    if header.extents.len() != grid.extents().len() {
        return mismatch("extents");
    }
    for (a, b) in header.extents.iter().zip(grid.extents()) {
        if (a.0 - b.0).abs() > 1e-12 * (1.0 + b.0.abs())
            || (a.1 - b.1).abs() > 1e-12 * (1.0 + b.1.abs())
        {
            return mismatch("extents");
        }
    }
    Ok(())
}

fn split_file(raw: &[u8]) -> Result<(&str, &[u8])> {
    // header is ASCII up to and including the "data\n" line
    let needle = b"\ndata\n";
    let pos = raw
        .windows(needle.len())
        .position(|w| w == needle)
        .ok_or_else(|| Error::BadFieldFile("missing data marker".into()))?;
    let header = std::str::from_utf8(&raw[..pos + needle.len()])
        .map_err(|_| Error::BadFieldFile("non-utf8 header".into()))?;
    Ok((header, &raw[pos + needle.len()..]))
}

fn read_f64s(bytes: &[u8], expect: usize) -> Result<Vec<f64>> {
    if bytes.len() != expect * 8 {
        return Err(Error::BadFieldFile(format!(
            "payload holds {} bytes, expected {}",
            bytes.len(),
            expect * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk size is 8")))
        .collect())
}

pub fn write_real_field(path: &Path, field: &RealField) -> Result<()> {
    let mut buf = Vec::new();
    write_header(&mut buf, field.grid(), "real", 0.0)?;
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_real_field(path: &Path, grid: &Arc<Grid>) -> Result<RealField> {
    let raw = std::fs::read(path)?;
    let (header_text, payload) = split_file(&raw)?;
    let header = parse_header(header_text)?;
    if header.kind != "real" {
        return Err(Error::BadFieldFile(format!("expected a real field, got {}", header.kind)));
    }
    check_grid(&header, grid)?;
    RealField::new(grid.clone(), read_f64s(payload, grid.len())?)
}

pub fn write_complex_field(path: &Path, field: &Field) -> Result<()> {
    let mut buf = Vec::new();
    write_header(&mut buf, field.grid(), "complex", field.time())?;
    for v in field.values() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_complex_field(path: &Path, grid: &Arc<Grid>) -> Result<Field> {
    let raw = std::fs::read(path)?;
    let (header_text, payload) = split_file(&raw)?;
    let header = parse_header(header_text)?;
    if header.kind != "complex" {
        return Err(Error::BadFieldFile(format!("expected a complex field, got {}", header.kind)));
    }
    check_grid(&header, grid)?;
    let flat = read_f64s(payload, 2 * grid.len())?;
    let values = flat.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    Field::new(grid.clone(), values, header.time)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.field");
        let g = Grid::periodic(&[(-3.0, 3.0)], &[64]).unwrap();
        let f = RealField::from_fn(g.clone(), |x| (x[0] * 1.7).cos()).unwrap();
        write_real_field(&path, &f).unwrap();
        let back = read_real_field(&path, &g).unwrap();
        assert_eq!(f.values(), back.values());
    }

    #[test]
    fn complex_field_round_trip_2d() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.field");
        let g = Grid::dirichlet(&[(0.0, 1.0), (0.0, 2.0)], &[8, 16]).unwrap();
        let mut f = Field::from_fn(g.clone(), 0.0, |x| Complex64::new(x[0], -x[1])).unwrap();
        f.set_time(2.5);
        write_complex_field(&path, &f).unwrap();
        let back = read_complex_field(&path, &g).unwrap();
        assert_eq!(f.values(), back.values());
        assert_eq!(back.time(), 2.5);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.field");
        let g = Grid::periodic(&[(-3.0, 3.0)], &[64]).unwrap();
        let f = RealField::from_fn(g.clone(), |_| 1.0).unwrap();
        write_real_field(&path, &f).unwrap();
        let other = Grid::periodic(&[(-3.0, 3.0)], &[128]).unwrap();
        assert!(read_real_field(&path, &other).is_err());
        let kind = Grid::dirichlet(&[(-3.0, 3.0)], &[64]).unwrap();
        assert!(read_real_field(&path, &kind).is_err());
    }

    #[test]
    fn junk_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.field");
        std::fs::write(&path, b"not a field file").unwrap();
        let g = Grid::periodic(&[(-3.0, 3.0)], &[64]).unwrap();
        assert!(matches!(read_real_field(&path, &g), Err(Error::BadFieldFile(_))));
    }
}
