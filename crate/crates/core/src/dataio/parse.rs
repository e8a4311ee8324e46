//! Line-oriented parsers and writers.
//!
//! ICDAR ground truth: `x1,y1,x2,y2,x3,y3,x4,y4,transcription`, one
//! region per line, "###" marking ignore regions. TD500 ground truth:
//! `index difficulty x y w h theta` with theta in radians rotating the
//! axis-aligned box about its center. Detections:
//! `x1,y1,...,y4,score` with integer pixels and a 4-decimal score.
//!
//! All parsers are total over [`DataError`]: no input line panics.
//! Files are read as UTF-8 with BOM tolerance; CRLF and LF both work;
//! blank lines are skipped.

use super::{Annotation, DataError};
use crate::geometry::{Point2, Quad};
use crate::nms::Detection;
use std::io::{BufRead, Write};

fn parse_num(field: &str, what: &str) -> Result<f64, DataError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| DataError::malformed(format!("{what}: expected a number, got {field:?}")))?;
    if !v.is_finite() {
        return Err(DataError::malformed(format!("{what}: non-finite value")));
    }
    Ok(v)
}

/// Parse one ICDAR ground-truth line. Commas inside the transcription
/// are preserved; `ignore` is set exactly for "###".
pub fn parse_icdar_line(line: &str) -> Result<Annotation, DataError> {
    let parts: Vec<&str> = line.splitn(9, ',').collect();
    if parts.len() < 9 {
        return Err(DataError::malformed(format!(
            "expected 8 coordinates and a transcription, found {} fields",
            parts.len()
        )));
    }
    let mut xy = [0.0f64; 8];
    for (k, slot) in xy.iter_mut().enumerate() {
        *slot = parse_num(parts[k], &format!("coordinate {}", k + 1))?;
    }
    let text = parts[8].to_string();
    Ok(Annotation {
        quad: Quad::from_xy(xy),
        ignore: text == "###",
        text,
    })
}

/// Parse one TD500 ground-truth line. The stored box is axis-aligned
/// (x, y, w, h) rotated by theta about its center; the quad keeps the
/// conventional top-left, top-right, bottom-right, bottom-left order.
pub fn parse_td500_line(line: &str) -> Result<Annotation, DataError> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 7 {
        return Err(DataError::malformed(format!(
            "expected 7 whitespace-separated fields, found {}",
            parts.len()
        )));
    }
    let difficulty = parse_num(parts[1], "difficulty")?;
    let x = parse_num(parts[2], "x")?;
    let y = parse_num(parts[3], "y")?;
    let w = parse_num(parts[4], "w")?;
    let h = parse_num(parts[5], "h")?;
    let theta = parse_num(parts[6], "theta")?;
    if w <= 0.0 || h <= 0.0 {
        return Err(DataError::malformed(format!(
            "box dimensions must be positive: w={w}, h={h}"
        )));
    }
    let c = Point2::new(x + w / 2.0, y + h / 2.0);
    let half = Point2::new(w / 2.0, h / 2.0);
    let offsets = [
        Point2::new(-half.x, -half.y),
        Point2::new(half.x, -half.y),
        Point2::new(half.x, half.y),
        Point2::new(-half.x, half.y),
    ];
    let quad = Quad::new(offsets.map(|o| o.rotated(theta) + c));
    Ok(Annotation {
        quad,
        text: String::new(),
        ignore: difficulty == 1.0,
    })
}

/// Parse one detections line: 8 coordinates plus a score.
pub fn parse_detections_line(line: &str) -> Result<Detection, DataError> {
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() != 9 {
        return Err(DataError::malformed(format!(
            "expected 9 comma-separated fields, found {}",
            parts.len()
        )));
    }
    let mut xy = [0.0f64; 8];
    for (k, slot) in xy.iter_mut().enumerate() {
        *slot = parse_num(parts[k], &format!("coordinate {}", k + 1))?;
    }
    let score = parse_num(parts[8], "score")?;
    if score <= 0.0 {
        return Err(DataError::malformed(format!("score must be positive: {score}")));
    }
    Ok(Detection {
        quad: Quad::from_xy(xy),
        score,
        vertical: None,
        source: None,
    })
}

fn read_lines<R: BufRead, T>(
    reader: R,
    mut parse: impl FnMut(&str) -> Result<T, DataError>,
) -> Result<Vec<T>, DataError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let raw = line?;
        let mut s = raw.as_str();
        if line_no == 1 {
            s = s.strip_prefix('\u{feff}').unwrap_or(s);
        }
        let s = s.strip_suffix('\r').unwrap_or(s);
        if s.trim().is_empty() {
            continue;
        }
        out.push(parse(s).map_err(|e| e.at_line(line_no))?);
    }
    Ok(out)
}

pub fn parse_icdar_file<R: BufRead>(reader: R) -> Result<Vec<Annotation>, DataError> {
    read_lines(reader, parse_icdar_line)
}

pub fn parse_td500_file<R: BufRead>(reader: R) -> Result<Vec<Annotation>, DataError> {
    read_lines(reader, parse_td500_line)
}

pub fn parse_detections_file<R: BufRead>(reader: R) -> Result<Vec<Detection>, DataError> {
    read_lines(reader, parse_detections_line)
}

fn provenance_key(d: &Detection) -> (std::cmp::Reverse<usize>, usize, usize) {
    match d.source {
        Some(s) => (std::cmp::Reverse(s.grid_size), s.i, s.j),
        None => (std::cmp::Reverse(0), 0, 0),
    }
}

/// Write detections, one line each, coordinates rounded to the nearest
/// integer pixel and scores with 4 decimals. Ordering is descending
/// score, then raster provenance (stable for sourceless detections).
pub fn write_detections<W: Write>(dets: &[Detection], sink: &mut W) -> std::io::Result<()> {
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| match (a.source, b.source) {
                (Some(_), Some(_)) => provenance_key(a).cmp(&provenance_key(b)),
                _ => std::cmp::Ordering::Equal,
            })
    });
    for d in order {
        let c = d.quad.corners;
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{},{:.4}",
            c[0].x.round() as i64,
            c[0].y.round() as i64,
            c[1].x.round() as i64,
            c[1].y.round() as i64,
            c[2].x.round() as i64,
            c[2].y.round() as i64,
            c[3].x.round() as i64,
            c[3].y.round() as i64,
            d.score
        )?;
    }
    Ok(())
}

/// Write annotations back out in the ICDAR line format (integer
/// pixels). Ignore regions get the "###" transcription.
pub fn write_icdar_file<W: Write>(annotations: &[Annotation], sink: &mut W) -> std::io::Result<()> {
    for a in annotations {
        let c = a.quad.corners;
        let text = if a.ignore { "###" } else { a.text.as_str() };
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{},{}",
            c[0].x.round() as i64,
            c[0].y.round() as i64,
            c[1].x.round() as i64,
            c[1].y.round() as i64,
            c[2].x.round() as i64,
            c[2].y.round() as i64,
            c[3].x.round() as i64,
            c[3].y.round() as i64,
            text
        )?;
    }
    Ok(())
}
