//! File formats: landmark CSV, pose JSON, `SDGRID` distance/soft-mask grids
//! and binary PGM masks.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::geometry::{LandmarkSet, Point, Pose};
use crate::raster::{BinaryMask, GridRole, GridSpec, ScalarGrid};

const GRID_MAGIC: &str = "SDGRID 1";

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct LandmarkRow {
    ring: String,
    index: usize,
    x_px: f64,
    y_px: f64,
}

pub fn write_landmarks_csv<W: Write>(p: &LandmarkSet, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let rows = p
        .endo()
        .iter()
        .enumerate()
        .map(|(i, q)| ("endo", i, q))
        .chain(p.epi().iter().enumerate().map(|(i, q)| ("epi", i, q)));
    for (ring, index, q) in rows {
        out.serialize(LandmarkRow {
            ring: ring.to_string(),
            index,
            x_px: q.x,
            y_px: q.y,
        })
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Rows may come in any order; each ring must have contiguous indices from 0.
pub fn read_landmarks_csv<R: Read>(r: R) -> Result<LandmarkSet> {
    let mut endo: Vec<Option<Point>> = Vec::new();
    let mut epi: Vec<Option<Point>> = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize::<LandmarkRow>() {
        let row = row.map_err(csv_error)?;
        let ring = match row.ring.trim() {
            "endo" => &mut endo,
            "epi" => &mut epi,
            other => return Err(Error::Format(format!("unknown ring '{other}'"))),
        };
        if ring.len() <= row.index {
            ring.resize(row.index + 1, None);
        }
        if ring[row.index].replace(Point::new(row.x_px, row.y_px)).is_some() {
            return Err(Error::Format(format!("duplicate {} landmark {}", row.ring, row.index)));
        }
    }
    let collect = |ring: Vec<Option<Point>>, name: &str| -> Result<Vec<Point>> {
        ring.into_iter()
            .enumerate()
            .map(|(i, q)| q.ok_or_else(|| Error::Format(format!("missing {name} landmark {i}"))))
            .collect()
    };
    LandmarkSet::new(collect(endo, "endo")?, collect(epi, "epi")?)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("landmark CSV: {e}"))
}

pub fn pose_to_json(pose: &Pose) -> Result<String> {
    Ok(serde_json::to_string_pretty(pose)?)
}

pub fn pose_from_json(text: &str) -> Result<Pose> {
    let pose: Pose = serde_json::from_str(text)?;
    pose.validate()?;
    Ok(pose)
}

/// Values are stored as 32-bit floats.
pub fn write_grid<W: Write>(grid: &ScalarGrid, mut w: W) -> Result<()> {
    writeln!(w, "{GRID_MAGIC}")?;
    writeln!(
        w,
        "{} {} {} {}",
        grid.width(),
        grid.height(),
        grid.spec.pixel_size_mm,
        grid.role
    )?;
    let mut buf = Vec::with_capacity(grid.values.len() * 4);
    for v in &grid.values {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_grid<R: Read>(r: R) -> Result<ScalarGrid> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != GRID_MAGIC {
        return Err(Error::Format("missing SDGRID header".into()));
    }
    line.clear();
    r.read_line(&mut line)?;
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(Error::Format("grid header needs width, height, pixel size and role".into()));
    }
    let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::Format(format!("grid header: {e}")));
    let width = parse_usize(fields[0])?;
    let height = parse_usize(fields[1])?;
    let pixel_size_mm: f64 = fields[2]
        .parse()
        .map_err(|e| Error::Format(format!("grid header: {e}")))?;
    let role: GridRole = fields[3].parse()?;
    let spec = GridSpec::new(width, height, pixel_size_mm);
    spec.validate()?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != spec.pixel_count() * 4 {
        return Err(Error::Format(format!(
            "grid payload has {} bytes, expected {}",
            bytes.len(),
            spec.pixel_count() * 4
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    ScalarGrid::new(spec, role, values)
}

pub fn write_pgm<W: Write>(m: &BinaryMask, mut w: W) -> Result<()> {
    write!(w, "P5\n{} {}\n255\n", m.width, m.height)?;
    let data: Vec<u8> = m.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    w.write_all(&data)?;
    Ok(())
}

/// Reads an 8-bit binary PGM; any nonzero value is foreground.
pub fn read_pgm<R: Read>(mut r: R) -> Result<BinaryMask> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if tokens[0] != "P5" {
        return Err(Error::Format("only binary PGM (P5) masks are supported".into()));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| Error::Format(format!("PGM header: {e}")));
    let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format("PGM maxval must be in 1..=255".into()));
    }
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() != width * height {
        return Err(Error::Format(format!(
            "PGM raster has {} bytes, expected {}",
            data.len(),
            width * height
        )));
    }
    BinaryMask::new(width, height, data.iter().map(|&v| v > 0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::radial_ring;

    #[test]
    fn landmark_csv_round_trip() {
        let c = Point::new(40.3, 51.7);
        let p = LandmarkSet::new(radial_ring(c, 0.3, 18, |_| 10.1), radial_ring(c, 0.3, 18, |_| 15.2)).unwrap();
        let mut buf = Vec::new();
        write_landmarks_csv(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("ring,index,x_px,y_px\nendo,0,"));
        assert_eq!(read_landmarks_csv(&buf[..]).unwrap(), p);
    }

    #[test]
    fn grid_round_trip_is_bit_exact_for_f32_values() {
        let spec = GridSpec::new(5, 3, 2.0);
        let values = (0..15).map(|i| ((i as f32) * 0.37 - 2.0) as f64).collect();
        let g = ScalarGrid::new(spec, GridRole::DistanceMap, values).unwrap();
        let mut buf = Vec::new();
        write_grid(&g, &mut buf).unwrap();
        assert_eq!(read_grid(&buf[..]).unwrap(), g);
        assert!(read_grid(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let m = BinaryMask::from_fn(7, 4, |x, y| (x + y) % 3 == 0);
        let mut buf = Vec::new();
        write_pgm(&m, &mut buf).unwrap();
        assert_eq!(read_pgm(&buf[..]).unwrap(), m);
        let with_comment = b"P5\n# made by hand\n2 1\n255\n\x00\xff";
        let m = read_pgm(&with_comment[..]).unwrap();
        assert_eq!(m.bits, vec![false, true]);
    }

    #[test]
    fn pose_json_field_names() {
        let p = Pose::new(0.5, Point::new(1.0, 2.0));
        let text = pose_to_json(&p).unwrap();
        assert!(text.contains("theta_rad") && text.contains("cx_px") && text.contains("cy_px"));
        assert_eq!(pose_from_json(&text).unwrap(), p);
    }
}
